#include "qprl/bdrate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qprl/pchip.hpp"

namespace qprl::eval {

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Psnr: return "psnr";
        case Metric::SaliencyPsnr: return "saliency_psnr";
        case Metric::Precision: return "precision";
        case Metric::Recall: return "recall";
    }
    return "unknown";
}

namespace {

/// (quality, log10 rate) knots sorted by quality, duplicates averaged.
struct FitInput {
    std::vector<double> q, logr;
    bool repaired = false;
};

FitInput prepare(const RdCurve& curve) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curve.points) {
        if (p.rate <= 0) throw std::invalid_argument("bd_rate: nonpositive rate");
        pts.push_back({p.quality, std::log10(p.rate)});
    }
    FitInput out;
    std::vector<std::pair<double, double>> sorted = pts;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    out.repaired = sorted != pts;
    for (size_t i = 0; i < sorted.size();) {
        size_t j = i;
        double sum = 0;
        while (j < sorted.size() && sorted[j].first == sorted[i].first) sum += sorted[j++].second;
        if (j - i > 1) out.repaired = true;
        out.q.push_back(sorted[i].first);
        out.logr.push_back(sum / static_cast<double>(j - i));
        i = j;
    }
    return out;
}

}  // namespace

BdResult bd_rate(const RdCurve& reference, const RdCurve& test) {
    BdResult res;
    if (reference.metric != test.metric)
        throw std::invalid_argument("bd_rate: metric mismatch");
    FitInput r = prepare(reference), t = prepare(test);
    res.warning = r.repaired || t.repaired;
    if (r.q.size() < 4 || t.q.size() < 4) return res;  // valid = false

    const double lo = std::max(r.q.front(), t.q.front());
    const double hi = std::min(r.q.back(), t.q.back());
    if (!(hi > lo)) return res;  // no quality overlap

    Pchip fit_r(r.q, r.logr), fit_t(t.q, t.logr);
    const double mean_diff = (fit_t.integrate(lo, hi) - fit_r.integrate(lo, hi)) / (hi - lo);
    res.bd_rate_percent = 100.0 * (std::pow(10.0, mean_diff) - 1.0);
    res.quality_lo = lo;
    res.quality_hi = hi;
    res.valid = true;
    return res;
}

double qp_map_kl(const codec::QpMap& qp_map, const Grid<double>& importance) {
    if (qp_map.rows() != importance.rows() || qp_map.cols() != importance.cols())
        throw std::invalid_argument("qp_map_kl: shape mismatch");
    const double eps = 1e-6;
    double imp_total = 0, mass_total = 0;
    for (double v : importance) {
        if (v < 0) throw std::domain_error("qp_map_kl: negative importance");
        imp_total += v;
    }
    if (imp_total <= 0) throw std::domain_error("qp_map_kl: importance all zero");
    imp_total += eps * static_cast<double>(importance.size());
    for (int qp : qp_map) mass_total += codec::kQpMax - qp + eps;

    double kl = 0;
    for (size_t i = 0; i < importance.size(); ++i) {
        double p = (importance[i] + eps) / imp_total;
        double q = (codec::kQpMax - qp_map[i] + eps) / mass_total;
        kl += p * std::log(p / q);
    }
    return kl;
}

}  // namespace qprl::eval
