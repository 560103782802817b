#pragma once

#include "qprl/ppo.hpp"
#include "qprl/rdcurve.hpp"

namespace qprl::eval {

/// Desk-scale benchmark: synthetic worlds, training seeds, held-out seeds,
/// the target-bitrate ladder, and the env/train parameter sets.
struct BenchmarkSpec {
    io::WorldKind world = io::WorldKind::RoiWorld;
    int width = 128, height = 128, frames = 300;
    double fps = 30.0;
    std::vector<uint64_t> train_seeds;
    std::vector<uint64_t> heldout_seeds;
    std::vector<double> targets;
    env::EnvConfig env;
    rl::TrainConfig train;
    Metric task_metric = Metric::SaliencyPsnr;
};

BenchmarkSpec roi_benchmark();
BenchmarkSpec detect_benchmark();

enum class Arm { Full, NoRewardInfo, GammaZero };
std::string arm_name(Arm arm);

/// Arms differ from the full configuration only in the documented bits:
/// no_reward_info sets aux_coef = 0, gamma_zero sets gamma = 0.
rl::TrainConfig arm_config(const BenchmarkSpec& bench, Arm arm);

std::vector<io::StreamPtr> train_streams(const BenchmarkSpec& bench);
std::vector<io::StreamPtr> heldout_streams(const BenchmarkSpec& bench);

rl::NetShape net_shape(const BenchmarkSpec& bench, int coarsen_override = 0);

/// Episodes cycle deterministically over (stream, target) combinations.
rl::EnvFactory make_env_factory(const BenchmarkSpec& bench,
                                std::vector<io::StreamPtr> streams,
                                const rl::TrainConfig& tc, int coarsen_override = 0);

rl::TrainResult train_arm(const BenchmarkSpec& bench, Arm arm, const std::string& outdir = "",
                          int coarsen_override = 0);

struct BdSummary {
    Metric metric = Metric::Psnr;
    std::vector<double> per_stream;
    double mean = 0;
    double stderr_ = 0;
    bool all_valid = true;
};

/// BD-rate of the policy arm against the zero-action baseline over the
/// held-out streams.
BdSummary evaluate_bd(const BenchmarkSpec& bench, const rl::PolicyNet& policy, Metric metric,
                      int coarsen_override = 0);

struct AblationRow {
    Arm arm;
    BdSummary bd;
};

/// Trains every arm with identical seeds and reports per-arm BD-rate against
/// the baseline. A pretrained full-arm net may be supplied to avoid retraining.
std::vector<AblationRow> run_ablation(const BenchmarkSpec& bench, const std::string& outdir,
                                      const rl::PolicyNet* full_net = nullptr);

/// Mean QP-map KL divergence against the ground-truth saliency (block means)
/// over held-out streams; policy == nullptr evaluates the baseline arm.
double mean_qp_kl(const BenchmarkSpec& bench, const rl::PolicyNet* policy, double target);

}  // namespace qprl::eval
