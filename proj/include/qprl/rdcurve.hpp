#pragma once

#include <span>

#include "qprl/bdrate.hpp"
#include "qprl/env.hpp"
#include "qprl/metrics.hpp"
#include "qprl/net.hpp"

namespace qprl::eval {

/// 10*log10(255^2/MSE), the plain rate-distortion metric.
using qprl::psnr;

struct EpisodeMetrics {
    double measured_rate = 0;  // bits/second actually produced
    double mean_psnr = 0;
    double mean_sal_psnr = 0;           // 0 when the stream has no saliency
    int tp = 0, n_pred = 0, n_gt = 0;   // detection counts summed over frames
    double precision = 1, recall = 1;   // micro-averaged
    double mean_abs_bitrate_error = 0;  // mean |ln(measured avg / target)|
    std::vector<codec::QpMap> qp_maps;  // filled when keep_qp_maps is set
};

/// Encodes the whole stream once: actions are the policy mean when a policy
/// is given, zero otherwise (the task-agnostic ABR baseline arm).
EpisodeMetrics run_episode(const io::StreamPtr& stream, env::EnvConfig cfg,
                           const rl::PolicyNet* policy, bool keep_qp_maps = false);

/// One full-stream encode per target; returns curves for every metric the
/// stream supports (PSNR always, saliency PSNR with saliency, precision and
/// recall with a template bank).
std::vector<RdCurve> rd_sweep(const io::StreamPtr& stream, const env::EnvConfig& base,
                              std::span<const double> targets, const rl::PolicyNet* policy,
                              const std::string& arm_id);

/// Single-metric convenience wrapper over rd_sweep.
RdCurve rd_curve(const io::StreamPtr& stream, const env::EnvConfig& base,
                 std::span<const double> targets, Metric metric, const rl::PolicyNet* policy,
                 const std::string& arm_id);

/// Block-mean downsampling of a pixel map to the macroblock grid.
Grid<double> downsample_to_blocks(const tasks::SaliencyMap& map);

}  // namespace qprl::eval
