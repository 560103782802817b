#pragma once

#include <string>
#include <vector>

#include "qprl/codec.hpp"
#include "qprl/grid.hpp"

namespace qprl::eval {

enum class Metric { Psnr, SaliencyPsnr, Precision, Recall };

std::string metric_name(Metric m);

struct RdPoint {
    double rate = 0;     // measured average bits/second
    double quality = 0;  // metric value
};

struct RdCurve {
    Metric metric = Metric::Psnr;
    std::string stream_id, arm_id;
    std::vector<RdPoint> points;     // ascending rate
    std::vector<double> targets;     // aligned target bitrates
};

struct BdResult {
    double bd_rate_percent = 0;
    bool valid = false;
    double quality_lo = 0, quality_hi = 0;  // overlap interval used
    bool warning = false;                   // non-monotone input was repaired
};

/// Bjontegaard delta rate: fits log10(rate) against quality per curve with a
/// monotone cubic Hermite interpolant, integrates the difference over the
/// overlapping quality interval, and converts the mean log offset to percent.
/// Negative values mean the test curve needs fewer bits.
BdResult bd_rate(const RdCurve& reference, const RdCurve& test);

/// KL divergence between the normalized importance map p and the bit-mass
/// proxy q = normalize(qp_max - qp + eps). Zero iff they coincide.
double qp_map_kl(const codec::QpMap& qp_map, const Grid<double>& importance);

}  // namespace qprl::eval
