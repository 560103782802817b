#include "qprl/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qprl/metrics.hpp"

namespace qprl::env {

void EnvConfig::validate() const {
    if (target_bitrate <= 0) throw std::invalid_argument("EnvConfig: target_bitrate must be > 0");
    if (fps <= 0) throw std::invalid_argument("EnvConfig: fps must be > 0");
    if (lambda < 0) throw std::invalid_argument("EnvConfig: lambda must be >= 0");
    if (delta_max < 1 || delta_max > 25)
        throw std::invalid_argument("EnvConfig: delta_max must be in [1, 25]");
    if (coarsen < 1) throw std::invalid_argument("EnvConfig: coarsen must be >= 1");
    if (gop < 1) throw std::invalid_argument("EnvConfig: gop must be >= 1");
}

Grid<double> upsample_bilinear(const Grid<double>& coarse, int rows, int cols) {
    if (coarse.rows() < 1 || coarse.cols() < 1 || rows < coarse.rows() || cols < coarse.cols())
        throw std::invalid_argument("upsample_bilinear: incompatible shapes");
    Grid<double> out(rows, cols);
    const double ry = static_cast<double>(coarse.rows()) / rows;
    const double rx = static_cast<double>(coarse.cols()) / cols;
    for (int y = 0; y < rows; ++y) {
        double u = std::clamp((y + 0.5) * ry - 0.5, 0.0, coarse.rows() - 1.0);
        int u0 = static_cast<int>(u);
        int u1 = std::min(u0 + 1, coarse.rows() - 1);
        double fu = u - u0;
        for (int x = 0; x < cols; ++x) {
            double v = std::clamp((x + 0.5) * rx - 0.5, 0.0, coarse.cols() - 1.0);
            int v0 = static_cast<int>(v);
            int v1 = std::min(v0 + 1, coarse.cols() - 1);
            double fv = v - v0;
            out.at(y, x) = (1 - fu) * ((1 - fv) * coarse.at(u0, v0) + fv * coarse.at(u0, v1)) +
                           fu * ((1 - fv) * coarse.at(u1, v0) + fv * coarse.at(u1, v1));
        }
    }
    return out;
}

Grid<int> upsample_action(const ActionGrid& coarse, int rows, int cols, int delta_max) {
    Grid<double> clamped(coarse.rows(), coarse.cols());
    for (size_t i = 0; i < coarse.size(); ++i) {
        if (!std::isfinite(coarse[i])) throw std::invalid_argument("upsample_action: non-finite value");
        clamped[i] = std::clamp(coarse[i], -static_cast<double>(delta_max),
                                static_cast<double>(delta_max));
    }
    Grid<double> dense = upsample_bilinear(clamped, rows, cols);
    Grid<int> out(rows, cols);
    for (size_t i = 0; i < dense.size(); ++i)
        out[i] = static_cast<int>(
            std::clamp<long>(std::lround(dense[i]), -delta_max, delta_max));
    return out;
}

double bitrate_reward(double current_avg, double target) {
    if (current_avg <= 0 || target <= 0)
        throw std::domain_error("bitrate_reward: rates must be positive");
    return -std::abs(std::log(current_avg / target));
}

double combine_reward(double r_bitrate, double r_task, double lambda) {
    if (lambda < 0) throw std::domain_error("combine_reward: lambda must be >= 0");
    return r_bitrate + lambda * r_task;
}

RateController::RateController(int initial_qp, double target_bitrate, double fps, double kp,
                               double ki, int window)
    : qp_(std::clamp(initial_qp, codec::kQpMin, codec::kQpMax)),
      target_(target_bitrate),
      fps_(fps),
      kp_(kp),
      ki_(ki),
      window_(window) {}

void RateController::update(int64_t frame_bits) {
    recent_.push_back(frame_bits);
    if (static_cast<int>(recent_.size()) > window_) recent_.pop_front();
    double sum = 0;
    for (int64_t b : recent_) sum += static_cast<double>(b);
    double rate = sum * fps_ / static_cast<double>(recent_.size());
    double e = std::log(std::max(rate, 1e-9) / target_);
    integral_ = std::clamp(integral_ + e, -100.0, 100.0);
    qp_ = std::clamp(qp_ + static_cast<int>(std::lround(kp_ * e + ki_ * integral_)),
                     codec::kQpMin, codec::kQpMax);
}

Environment::Environment(io::StreamPtr stream, EnvConfig config)
    : stream_(std::move(stream)),
      cfg_(config),
      controller_(config.initial_qp, config.target_bitrate, config.fps, config.pi_kp,
                  config.pi_ki, config.pi_window) {
    cfg_.validate();
    if (!stream_ || stream_->frames.size() < 2)
        throw std::invalid_argument("Environment: stream needs at least 2 frames");
    const Frame& f0 = stream_->frames[0];
    mb_rows_ = f0.mb_rows();
    mb_cols_ = f0.mb_cols();
    action_rows_ = (mb_rows_ + cfg_.coarsen - 1) / cfg_.coarsen;
    action_cols_ = (mb_cols_ + cfg_.coarsen - 1) / cfg_.coarsen;
    if (cfg_.lambda != 0.0) {
        if (cfg_.task == tasks::TaskKind::Roi && stream_->saliency.size() != stream_->frames.size())
            throw std::invalid_argument("Environment: ROI task needs per-frame saliency");
        if (cfg_.task == tasks::TaskKind::Detect && stream_->templates.empty())
            throw std::invalid_argument("Environment: detect task needs a template bank");
    }
    raw_detections_.assign(stream_->frames.size(), std::nullopt);
}

codec::EncoderStats Environment::current_stats() const {
    const auto& frames = stream_->frames;
    const int t = next_frame_;
    const Frame& frame = frames[std::min<size_t>(t, frames.size() - 1)];
    std::span<const Frame> look;
    if (t + 1 < static_cast<int>(frames.size())) {
        size_t count = std::min<size_t>(cfg_.lookahead, frames.size() - t - 1);
        look = std::span<const Frame>(&frames[t + 1], count);
    }
    codec::StatsParams sp{cfg_.lookahead, cfg_.propagate_beta};
    return codec::compute_stats(frame, look, progress_, sp);
}

codec::EncoderStats Environment::reset() {
    next_frame_ = 0;
    started_ = true;
    done_ = false;
    controller_ = RateController(cfg_.initial_qp, cfg_.target_bitrate, cfg_.fps, cfg_.pi_kp,
                                 cfg_.pi_ki, cfg_.pi_window);
    progress_ = codec::EncodeProgress{};
    progress_.stream_length = static_cast<int>(stream_->frames.size());
    progress_.next_frame_qp = controller_.qp();
    progress_.last_frame_qp = controller_.qp();
    progress_.next_is_intra = true;
    progress_.fps = cfg_.fps;
    progress_.target_bitrate = cfg_.target_bitrate;
    return current_stats();
}

tasks::TaskResult Environment::evaluate_task(const Frame& raw, const Frame& recon) {
    if (cfg_.task == tasks::TaskKind::Roi)
        return tasks::task_reward_roi(raw, recon, stream_->saliency[raw.index]);
    auto& cached = raw_detections_[raw.index];
    if (!cached)
        cached = tasks::detect(raw, stream_->templates, cfg_.detect_threshold);
    return tasks::task_reward_detect_cached(*cached, recon, stream_->templates,
                                            cfg_.detect_threshold, cfg_.iou_thresh);
}

StepResult Environment::step(const ActionGrid& action) {
    if (!started_ || done_) throw std::logic_error("Environment::step called after done or before reset");
    if (action.rows() != action_rows_ || action.cols() != action_cols_)
        throw std::invalid_argument("Environment::step: action grid shape mismatch");

    const int t = next_frame_;
    const Frame& raw = stream_->frames[t];
    const bool intra = (t % cfg_.gop) == 0;
    const int frame_qp = controller_.qp();

    Grid<int> delta = upsample_action(action, mb_rows_, mb_cols_, cfg_.delta_max);
    codec::QpMap qp_map(mb_rows_, mb_cols_);
    for (size_t i = 0; i < qp_map.size(); ++i)
        qp_map[i] = std::clamp(frame_qp + delta[i], codec::kQpMin, codec::kQpMax);

    codec::CodecParams cp;
    cp.motion_radius = cfg_.motion_radius;
    codec::EncodedFrame enc =
        codec::encode_frame(raw, intra ? codec::FrameType::I : codec::FrameType::P,
                            intra ? nullptr : &last_recon_, qp_map, cp);

    // with lambda = 0 the environment is a task-agnostic ABR encoder
    tasks::TaskResult task;
    if (cfg_.lambda != 0.0) task = evaluate_task(raw, enc.reconstruction);
    else task.block_rewards = Grid<double>(mb_rows_, mb_cols_);

    progress_.frames_encoded += 1;
    progress_.cumulative_bits += enc.total_bits;
    progress_.last_frame_qp = frame_qp;
    progress_.qp_sum += frame_qp;
    int n_i = 0, n_p = 0, n_s = 0;
    for (auto m : enc.modes) {
        if (m == codec::BlockMode::Intra) ++n_i;
        else if (m == codec::BlockMode::Inter) ++n_p;
        else ++n_s;
    }
    const double n_blocks = static_cast<double>(enc.modes.size());
    progress_.frac_intra = n_i / n_blocks;
    progress_.frac_inter = n_p / n_blocks;
    progress_.frac_skip = n_s / n_blocks;
    progress_.last_psnr = psnr(raw, enc.reconstruction);
    progress_.last_ssim = ssim_proxy(raw, enc.reconstruction);
    const double payload = static_cast<double>(enc.total_bits - enc.header_bits);
    progress_.motion_bits_frac = payload > 0 ? enc.motion_bits / payload : 0.0;
    progress_.coeff_bits_frac = payload > 0 ? enc.coeff_bits / payload : 0.0;

    controller_.update(enc.total_bits);
    next_frame_ = t + 1;
    done_ = next_frame_ >= static_cast<int>(stream_->frames.size());
    progress_.next_frame_index = next_frame_;
    progress_.next_frame_qp = controller_.qp();
    progress_.next_is_intra = !done_ && (next_frame_ % cfg_.gop) == 0;

    const double avg_rate = static_cast<double>(progress_.cumulative_bits) * cfg_.fps /
                            progress_.frames_encoded;
    const double r_bit = bitrate_reward(avg_rate, cfg_.target_bitrate);

    StepResult res;
    res.reward = combine_reward(r_bit, task.global_score, cfg_.lambda);
    res.block_rewards = std::move(task.block_rewards);
    res.done = done_;
    res.info = StepInfo{enc.total_bits, progress_.cumulative_bits, frame_qp, task.global_score,
                        std::log(avg_rate / cfg_.target_bitrate)};
    last_recon_ = std::move(enc.reconstruction);
    last_qp_map_ = std::move(qp_map);
    res.next_state = current_stats();
    return res;
}

}  // namespace qprl::env
