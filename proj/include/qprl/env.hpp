#pragma once

#include <deque>
#include <optional>

#include "qprl/media.hpp"
#include "qprl/stats.hpp"
#include "qprl/tasks.hpp"

namespace qprl::env {

/// Coarse real-valued delta-QP grid emitted by the agent.
using ActionGrid = Grid<double>;

struct EnvConfig {
    double target_bitrate = 60000.0;  // bits/second
    double fps = 30.0;
    double lambda = 20.0;  // task-reward weight
    int delta_max = 8;     // delta-QP clamp, in [1, 25]
    int coarsen = 2;       // action-grid coarsening factor
    int gop = 30;
    int lookahead = 10;
    double propagate_beta = 0.5;
    int motion_radius = 4;
    int initial_qp = 30;
    double pi_kp = 4.0, pi_ki = 0.4;
    int pi_window = 30;
    tasks::TaskKind task = tasks::TaskKind::Roi;
    double detect_threshold = 0.88;
    double iou_thresh = 0.5;

    void validate() const;
};

struct StepInfo {
    int64_t frame_bits = 0;
    int64_t cumulative_bits = 0;
    int frame_qp = 0;
    double task_score = 0;
    double bitrate_error = 0;  // ln(measured average / target)
};

struct StepResult {
    codec::EncoderStats next_state;
    double reward = 0;
    Grid<double> block_rewards;
    bool done = false;
    StepInfo info;
};

/// Cell-center bilinear upsampling of the coarse grid, before rounding.
Grid<double> upsample_bilinear(const Grid<double>& coarse, int rows, int cols);

/// Full pipeline: clamp to [-delta_max, delta_max], bilinear upsample, round
/// to nearest integer, clamp again.
Grid<int> upsample_action(const ActionGrid& coarse, int rows, int cols, int delta_max);

/// Exactly -|ln(current / target)|.
double bitrate_reward(double current_avg, double target);

double combine_reward(double r_bitrate, double r_task, double lambda);

/// Proportional-integral frame-QP controller tracking a windowed average
/// bit-rate against the target.
class RateController {
public:
    RateController(int initial_qp, double target_bitrate, double fps, double kp, double ki,
                   int window);

    /// Feeds the bits of the frame just encoded and updates the planned QP.
    void update(int64_t frame_bits);

    int qp() const { return qp_; }

private:
    int qp_;
    double target_, fps_, kp_, ki_;
    int window_;
    double integral_ = 0.0;
    std::deque<int64_t> recent_;
};

class Environment {
public:
    Environment(io::StreamPtr stream, EnvConfig config);

    codec::EncoderStats reset();
    StepResult step(const ActionGrid& action);

    bool done() const { return done_; }
    int mb_rows() const { return mb_rows_; }
    int mb_cols() const { return mb_cols_; }
    int action_rows() const { return action_rows_; }
    int action_cols() const { return action_cols_; }
    const EnvConfig& config() const { return cfg_; }
    const io::LoadedStream& stream() const { return *stream_; }

    /// Valid after the first step of an episode.
    const Frame& last_reconstruction() const { return last_recon_; }
    const codec::QpMap& last_qp_map() const { return last_qp_map_; }

private:
    codec::EncoderStats current_stats() const;
    tasks::TaskResult evaluate_task(const Frame& raw, const Frame& recon);

    io::StreamPtr stream_;
    EnvConfig cfg_;
    int mb_rows_, mb_cols_, action_rows_, action_cols_;
    bool started_ = false, done_ = true;
    int next_frame_ = 0;
    RateController controller_;
    codec::EncodeProgress progress_;
    Frame last_recon_;
    codec::QpMap last_qp_map_;
    std::vector<std::optional<std::vector<tasks::Detection>>> raw_detections_;
};

}  // namespace qprl::env
