#pragma once

#include <span>
#include <utility>
#include <vector>

#include "qprl/frame.hpp"
#include "qprl/grid.hpp"

namespace qprl::tasks {

enum class TaskKind { Roi, Detect };

/// Per-pixel nonnegative weights, same raster as the frame.
using SaliencyMap = Grid<float>;

/// Grayscale intensity patch used by the matched-filter detector.
using Template = Grid<float>;

struct Box {
    double x = 0, y = 0, w = 0, h = 0;
    double area() const { return w * h; }
};

struct Detection {
    Box box;
    double score = 0;
};

/// Task score plus its per-macroblock decomposition.
struct TaskResult {
    double global_score = 0;
    Grid<double> block_rewards;
};

/// Saliency-weighted MSE between raw and reconstruction, with exact per-block
/// decomposition: the global value is the sum of the block contributions.
std::pair<double, Grid<double>> saliency_weighted_mse(const Frame& raw, const Frame& recon,
                                                      const SaliencyMap& sal);

/// 10*log10(255^2 / weighted MSE), capped at 100 dB.
double saliency_weighted_psnr(const Frame& raw, const Frame& recon, const SaliencyMap& sal);

/// Matched-filter detector: slides each template at stride 4, scores windows
/// by zero-normalized cross-correlation mapped to [0,1] (zero-variance
/// windows score 0), keeps local maxima above threshold, then greedy NMS at
/// IoU 0.5. Output ordered by descending score, then raster position.
std::vector<Detection> detect(const Frame& frame, std::span<const Template> templates,
                              double threshold, int stride = 4);

double iou(const Box& a, const Box& b);

struct MatchStats {
    double precision = 0, recall = 0;
    Grid<double> tp_map;  // matched-box centers get 1/max(|pred|,1)
    int true_positives = 0;
    int n_pred = 0, n_gt = 0;
};

/// Greedy matching in descending prediction-score order; each ground-truth
/// box is consumed at most once. Empty-set conventions: precision 1 when both
/// sides empty, 0 when only predictions are empty; recall 1 when no GT.
MatchStats precision_recall(std::span<const Detection> pred, std::span<const Detection> pseudo_gt,
                            double iou_thresh, int mb_rows, int mb_cols);

/// ROI task reward: negated weighted MSE normalized by 255^2, decomposed
/// exactly over blocks.
TaskResult task_reward_roi(const Frame& raw, const Frame& recon, const SaliencyMap& sal);

/// Detection task reward: precision of detections on the reconstruction
/// against pseudo-ground-truth detections on the raw frame; block rewards are
/// the TP map minus a uniform share of the false positives.
TaskResult task_reward_detect(const Frame& raw, const Frame& recon,
                              std::span<const Template> templates, double threshold,
                              double iou_thresh = 0.5);

/// Same, with the pseudo-ground-truth detections precomputed on the raw frame.
TaskResult task_reward_detect_cached(std::span<const Detection> raw_detections,
                                     const Frame& recon, std::span<const Template> templates,
                                     double threshold, double iou_thresh = 0.5);

}  // namespace qprl::tasks
