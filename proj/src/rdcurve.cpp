#include "qprl/rdcurve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qprl/metrics.hpp"

namespace qprl::eval {

EpisodeMetrics run_episode(const io::StreamPtr& stream, env::EnvConfig cfg,
                           const rl::PolicyNet* policy, bool keep_qp_maps) {
    cfg.lambda = 0.0;  // metrics are computed here, not through the reward
    env::Environment e(stream, cfg);
    codec::EncoderStats state = e.reset();

    const bool has_sal = !stream->saliency.empty();
    const bool has_templates = !stream->templates.empty();
    std::vector<std::vector<tasks::Detection>> raw_dets;
    if (has_templates) {
        raw_dets.reserve(stream->frames.size());
        for (const Frame& f : stream->frames)
            raw_dets.push_back(tasks::detect(f, stream->templates, cfg.detect_threshold));
    }

    EpisodeMetrics out;
    double sum_psnr = 0, sum_sal = 0, sum_be = 0;
    int frames = 0;
    env::ActionGrid zeros(e.action_rows(), e.action_cols(), 0.0);
    while (!e.done()) {
        env::ActionGrid action = zeros;
        if (policy) {
            rl::NetOutput o = policy->forward(rl::featurize(state));
            std::copy(o.mean.begin(), o.mean.end(), action.begin());
        }
        env::StepResult res = e.step(action);
        const Frame& raw = stream->frames[frames];
        const Frame& recon = e.last_reconstruction();
        sum_psnr += psnr(raw, recon);
        if (has_sal) sum_sal += tasks::saliency_weighted_psnr(raw, recon, stream->saliency[frames]);
        if (has_templates) {
            auto pred = tasks::detect(recon, stream->templates, cfg.detect_threshold);
            auto m = tasks::precision_recall(pred, raw_dets[frames], cfg.iou_thresh, e.mb_rows(),
                                             e.mb_cols());
            out.tp += m.true_positives;
            out.n_pred += m.n_pred;
            out.n_gt += m.n_gt;
        }
        if (keep_qp_maps) out.qp_maps.push_back(e.last_qp_map());
        sum_be += std::abs(res.info.bitrate_error);
        ++frames;
        if (res.done) out.measured_rate = static_cast<double>(res.info.cumulative_bits) *
                                          cfg.fps / static_cast<double>(frames);
        state = std::move(res.next_state);
    }
    out.mean_psnr = sum_psnr / frames;
    out.mean_sal_psnr = has_sal ? sum_sal / frames : 0.0;
    out.mean_abs_bitrate_error = sum_be / frames;
    if (has_templates) {
        out.precision = out.n_pred == 0 ? (out.n_gt == 0 ? 1.0 : 0.0)
                                        : static_cast<double>(out.tp) / out.n_pred;
        out.recall = out.n_gt == 0 ? 1.0 : static_cast<double>(out.tp) / out.n_gt;
    }
    return out;
}

std::vector<RdCurve> rd_sweep(const io::StreamPtr& stream, const env::EnvConfig& base,
                              std::span<const double> targets, const rl::PolicyNet* policy,
                              const std::string& arm_id) {
    if (targets.empty()) throw std::invalid_argument("rd_sweep: no target bitrates");
    const bool has_sal = !stream->saliency.empty();
    const bool has_templates = !stream->templates.empty();

    std::vector<Metric> metrics{Metric::Psnr};
    if (has_sal) metrics.push_back(Metric::SaliencyPsnr);
    if (has_templates) {
        metrics.push_back(Metric::Precision);
        metrics.push_back(Metric::Recall);
    }
    std::vector<RdCurve> curves;
    for (Metric m : metrics) {
        RdCurve c;
        c.metric = m;
        c.stream_id = stream->id;
        c.arm_id = arm_id;
        curves.push_back(std::move(c));
    }

    for (double target : targets) {
        env::EnvConfig cfg = base;
        cfg.target_bitrate = target;
        EpisodeMetrics em = run_episode(stream, cfg, policy);
        for (auto& c : curves) {
            double q = 0;
            switch (c.metric) {
                case Metric::Psnr: q = em.mean_psnr; break;
                case Metric::SaliencyPsnr: q = em.mean_sal_psnr; break;
                case Metric::Precision: q = em.precision; break;
                case Metric::Recall: q = em.recall; break;
            }
            c.points.push_back({em.measured_rate, q});
            c.targets.push_back(target);
        }
    }
    // keep points ordered by measured rate
    for (auto& c : curves) {
        std::vector<size_t> order(c.points.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return c.points[a].rate < c.points[b].rate; });
        RdCurve sorted = c;
        for (size_t i = 0; i < order.size(); ++i) {
            sorted.points[i] = c.points[order[i]];
            sorted.targets[i] = c.targets[order[i]];
        }
        c = std::move(sorted);
    }
    return curves;
}

RdCurve rd_curve(const io::StreamPtr& stream, const env::EnvConfig& base,
                 std::span<const double> targets, Metric metric, const rl::PolicyNet* policy,
                 const std::string& arm_id) {
    for (auto& c : rd_sweep(stream, base, targets, policy, arm_id))
        if (c.metric == metric) return c;
    throw std::invalid_argument("rd_curve: stream does not support metric " + metric_name(metric));
}

Grid<double> downsample_to_blocks(const tasks::SaliencyMap& map) {
    const int mbr = map.rows() / kMbSize, mbc = map.cols() / kMbSize;
    Grid<double> out(mbr, mbc);
    for (int br = 0; br < mbr; ++br)
        for (int bc = 0; bc < mbc; ++bc) {
            double sum = 0;
            for (int y = br * kMbSize; y < (br + 1) * kMbSize; ++y)
                for (int x = bc * kMbSize; x < (bc + 1) * kMbSize; ++x) sum += map.at(y, x);
            out.at(br, bc) = sum / (kMbSize * kMbSize);
        }
    return out;
}

}  // namespace qprl::eval
