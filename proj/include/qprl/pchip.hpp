#pragma once

#include <vector>

namespace qprl::eval {

/// Monotone-preserving piecewise-cubic Hermite interpolant (Fritsch-Carlson
/// tangents). Inputs must have strictly increasing x. Evaluation clamps to
/// the knot range; integration uses the closed-form segment antiderivative.
class Pchip {
public:
    Pchip(std::vector<double> x, std::vector<double> y);

    double operator()(double x) const;
    double integrate(double a, double b) const;

    double x_min() const { return x_.front(); }
    double x_max() const { return x_.back(); }

private:
    double segment_integral(size_t i, double t0, double t1) const;

    std::vector<double> x_, y_, m_;
};

}  // namespace qprl::eval
