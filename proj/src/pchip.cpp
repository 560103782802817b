#include "qprl/pchip.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qprl::eval {

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw std::invalid_argument("Pchip: need >= 2 aligned points");
    for (size_t i = 1; i < n; ++i)
        if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("Pchip: x must be strictly increasing");

    std::vector<double> h(n - 1), d(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        d[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    m_.assign(n, 0.0);
    if (n == 2) {
        m_[0] = m_[1] = d[0];
        return;
    }
    for (size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] * d[i] <= 0.0) {
            m_[i] = 0.0;
        } else {
            double w1 = 2 * h[i] + h[i - 1];
            double w2 = h[i] + 2 * h[i - 1];
            m_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    auto endpoint = [](double h0, double h1, double d0, double d1) {
        double m = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (m * d0 <= 0.0) return 0.0;
        if (d0 * d1 < 0.0 && std::abs(m) > 3 * std::abs(d0)) return 3 * d0;
        return m;
    };
    m_[0] = endpoint(h[0], h[1], d[0], d[1]);
    m_[n - 1] = endpoint(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
}

double Pchip::operator()(double x) const {
    x = std::clamp(x, x_.front(), x_.back());
    size_t i = std::upper_bound(x_.begin(), x_.end(), x) - x_.begin();
    i = std::clamp<size_t>(i, 1, x_.size() - 1) - 1;
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * m_[i] +
           (-2 * t3 + 3 * t2) * y_[i + 1] + (t3 - t2) * h * m_[i + 1];
}

double Pchip::segment_integral(size_t i, double t0, double t1) const {
    const double h = x_[i + 1] - x_[i];
    auto anti = [&](double t) {
        const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
        double i00 = t4 / 2 - t3 + t;
        double i10 = t4 / 4 - 2 * t3 / 3 + t2 / 2;
        double i01 = -t4 / 2 + t3;
        double i11 = t4 / 4 - t3 / 3;
        return i00 * y_[i] + i10 * h * m_[i] + i01 * y_[i + 1] + i11 * h * m_[i + 1];
    };
    return h * (anti(t1) - anti(t0));
}

double Pchip::integrate(double a, double b) const {
    if (b < a) return -integrate(b, a);
    a = std::clamp(a, x_.front(), x_.back());
    b = std::clamp(b, x_.front(), x_.back());
    double total = 0.0;
    for (size_t i = 0; i + 1 < x_.size(); ++i) {
        double lo = std::max(a, x_[i]), hi = std::min(b, x_[i + 1]);
        if (hi <= lo) continue;
        double h = x_[i + 1] - x_[i];
        total += segment_integral(i, (lo - x_[i]) / h, (hi - x_[i]) / h);
    }
    return total;
}

}  // namespace qprl::eval
