#include "qprl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qprl::tasks {

std::pair<double, Grid<double>> saliency_weighted_mse(const Frame& raw, const Frame& recon,
                                                      const SaliencyMap& sal) {
    if (!raw.same_shape(recon) || sal.rows() != raw.height || sal.cols() != raw.width)
        throw std::invalid_argument("saliency_weighted_mse: shape mismatch");
    double total_w = 0.0;
    for (float w : sal) {
        if (w < 0) throw std::domain_error("saliency_weighted_mse: negative weight");
        total_w += w;
    }
    if (total_w <= 0.0) throw std::domain_error("saliency_weighted_mse: zero total saliency");

    const int mbr = raw.mb_rows(), mbc = raw.mb_cols();
    Grid<double> contrib(mbr, mbc);
    double global = 0.0;
    for (int br = 0; br < mbr; ++br) {
        for (int bc = 0; bc < mbc; ++bc) {
            double num = 0.0;
            for (int y = br * kMbSize; y < (br + 1) * kMbSize; ++y)
                for (int x = bc * kMbSize; x < (bc + 1) * kMbSize; ++x) {
                    double e = static_cast<double>(raw.at(y, x)) - recon.at(y, x);
                    num += sal.at(y, x) * e * e;
                }
            double c = num / total_w;
            contrib.at(br, bc) = c;
            global += c;  // global is the exact sum of block contributions
        }
    }
    return {global, std::move(contrib)};
}

double saliency_weighted_psnr(const Frame& raw, const Frame& recon, const SaliencyMap& sal) {
    double wmse = saliency_weighted_mse(raw, recon, sal).first;
    if (wmse < 255.0 * 255.0 * 1e-10) return 100.0;
    return 10.0 * std::log10(255.0 * 255.0 / wmse);
}

namespace {

struct Candidate {
    int y, x, t;
    double score;
};

bool raster_before(const Candidate& a, const Candidate& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.t < b.t;
}

}  // namespace

std::vector<Detection> detect(const Frame& frame, std::span<const Template> templates,
                              double threshold, int stride) {
    if (templates.empty()) throw std::invalid_argument("detect: empty template bank");
    if (threshold <= 0.0 || threshold >= 1.0) throw std::domain_error("detect: threshold not in (0,1)");

    std::vector<Candidate> candidates;
    for (size_t t = 0; t < templates.size(); ++t) {
        const Template& tpl = templates[t];
        const int th = tpl.rows(), tw = tpl.cols();
        if (th > frame.height || tw > frame.width)
            throw std::invalid_argument("detect: template larger than frame");
        const double n = static_cast<double>(th) * tw;
        double ts = 0, ts2 = 0;
        for (float v : tpl) {
            ts += v;
            ts2 += static_cast<double>(v) * v;
        }
        const double t_mean = ts / n;
        const double t_var = std::max(0.0, ts2 / n - t_mean * t_mean);
        const double t_sig = std::sqrt(t_var);

        const int gy = (frame.height - th) / stride + 1;
        const int gx = (frame.width - tw) / stride + 1;
        Grid<double> score(gy, gx);
        for (int iy = 0; iy < gy; ++iy) {
            for (int ix = 0; ix < gx; ++ix) {
                const int y0 = iy * stride, x0 = ix * stride;
                double ws = 0, ws2 = 0, wt = 0;
                for (int y = 0; y < th; ++y) {
                    const float* row = &frame.at(y0 + y, x0);
                    const float* trow = &tpl.at(y, 0);
                    for (int x = 0; x < tw; ++x) {
                        double v = row[x];
                        ws += v;
                        ws2 += v * v;
                        wt += v * trow[x];
                    }
                }
                double w_mean = ws / n;
                double w_var = std::max(0.0, ws2 / n - w_mean * w_mean);
                double denom = std::sqrt(w_var) * t_sig * n;
                double s = 0.0;
                if (denom > 1e-12) {
                    double ncc = (wt - n * w_mean * t_mean) / denom;
                    s = 0.5 * (std::clamp(ncc, -1.0, 1.0) + 1.0);
                }
                score.at(iy, ix) = s;
            }
        }
        for (int iy = 0; iy < gy; ++iy) {
            for (int ix = 0; ix < gx; ++ix) {
                double s = score.at(iy, ix);
                if (s < threshold) continue;
                bool is_max = true;
                for (int dy = -1; dy <= 1 && is_max; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        int ny = iy + dy, nx = ix + dx;
                        if (ny < 0 || ny >= gy || nx < 0 || nx >= gx) continue;
                        double ns = score.at(ny, nx);
                        // plateaus break toward the earlier raster position
                        if (ns > s || (ns == s && (ny < iy || (ny == iy && nx < ix)))) {
                            is_max = false;
                            break;
                        }
                    }
                if (is_max)
                    candidates.push_back({iy * stride, ix * stride, static_cast<int>(t), s});
            }
        }
    }

    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return raster_before(a, b);
    });

    std::vector<Detection> kept;
    for (const Candidate& c : candidates) {
        Box box{static_cast<double>(c.x), static_cast<double>(c.y),
                static_cast<double>(templates[c.t].cols()), static_cast<double>(templates[c.t].rows())};
        bool suppressed = false;
        for (const Detection& d : kept)
            if (iou(box, d.box) >= 0.5) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back({box, c.score});
    }
    return kept;
}

double iou(const Box& a, const Box& b) {
    double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

MatchStats precision_recall(std::span<const Detection> pred, std::span<const Detection> pseudo_gt,
                            double iou_thresh, int mb_rows, int mb_cols) {
    MatchStats out;
    out.n_pred = static_cast<int>(pred.size());
    out.n_gt = static_cast<int>(pseudo_gt.size());
    out.tp_map = Grid<double>(mb_rows, mb_cols);

    std::vector<int> order(pred.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return pred[a].score > pred[b].score; });

    std::vector<bool> gt_used(pseudo_gt.size(), false);
    const double share = 1.0 / std::max(out.n_pred, 1);
    for (int pi : order) {
        double best_iou = 0.0;
        int best_gt = -1;
        for (size_t gi = 0; gi < pseudo_gt.size(); ++gi) {
            if (gt_used[gi]) continue;
            double v = iou(pred[pi].box, pseudo_gt[gi].box);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0 && best_iou >= iou_thresh) {
            gt_used[best_gt] = true;
            ++out.true_positives;
            int cy = static_cast<int>((pred[pi].box.y + pred[pi].box.h / 2) / kMbSize);
            int cx = static_cast<int>((pred[pi].box.x + pred[pi].box.w / 2) / kMbSize);
            cy = std::clamp(cy, 0, mb_rows - 1);
            cx = std::clamp(cx, 0, mb_cols - 1);
            out.tp_map.at(cy, cx) += share;
        }
    }
    if (out.n_pred == 0)
        out.precision = out.n_gt == 0 ? 1.0 : 0.0;
    else
        out.precision = static_cast<double>(out.true_positives) / out.n_pred;
    out.recall = out.n_gt == 0 ? 1.0 : static_cast<double>(out.true_positives) / out.n_gt;
    return out;
}

TaskResult task_reward_roi(const Frame& raw, const Frame& recon, const SaliencyMap& sal) {
    auto [wmse, contrib] = saliency_weighted_mse(raw, recon, sal);
    const double norm = 255.0 * 255.0;
    TaskResult out;
    out.block_rewards = Grid<double>(contrib.rows(), contrib.cols());
    double total = 0.0;
    for (size_t i = 0; i < contrib.size(); ++i) {
        out.block_rewards[i] = -contrib[i] / norm;
        total += out.block_rewards[i];
    }
    out.global_score = total;  // exact sum of block rewards
    return out;
}

TaskResult task_reward_detect(const Frame& raw, const Frame& recon,
                              std::span<const Template> templates, double threshold,
                              double iou_thresh) {
    auto raw_det = detect(raw, templates, threshold);
    return task_reward_detect_cached(raw_det, recon, templates, threshold, iou_thresh);
}

TaskResult task_reward_detect_cached(std::span<const Detection> raw_detections,
                                     const Frame& recon, std::span<const Template> templates,
                                     double threshold, double iou_thresh) {
    auto pred = detect(recon, templates, threshold);
    MatchStats m =
        precision_recall(pred, raw_detections, iou_thresh, recon.mb_rows(), recon.mb_cols());
    TaskResult out;
    out.global_score = m.precision;
    out.block_rewards = std::move(m.tp_map);
    int fp = m.n_pred - m.true_positives;
    double fp_share = static_cast<double>(fp) / std::max(m.n_pred, 1) /
                      static_cast<double>(out.block_rewards.size());
    for (auto& v : out.block_rewards) v -= fp_share;
    return out;
}

}  // namespace qprl::tasks
