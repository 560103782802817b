#include "qprl/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qprl/rng.hpp"

namespace qprl::rl {

StateInput featurize(const codec::EncoderStats& stats) {
    StateInput in;
    const int h = stats.mb_rows(), w = stats.mb_cols();
    in.planes.resize(static_cast<size_t>(codec::kBlockPlaneCount) * h * w);
    size_t k = 0;
    for (const auto& plane : stats.per_block)
        for (double v : plane) in.planes[k++] = v;

    const auto& g = stats.global;
    in.globals = {
        g[codec::kNextQp] / 51.0,
        g[codec::kFrameNumber] / 1000.0,
        std::log1p(std::max(0.0, g[codec::kBitstreamSize])) / 20.0,
        g[codec::kCurrentQp] / 51.0,
        g[codec::kAverageQp] / 51.0,
        g[codec::kFracIntra],
        g[codec::kFracInter],
        g[codec::kFracSkip],
        g[codec::kPsnr] / 100.0,
        g[codec::kSsimProxy],
        g[codec::kMotionBitsFrac],
        g[codec::kCoeffBitsFrac],
        g[codec::kProgress],
        std::clamp(g[codec::kBitrateError], -4.0, 4.0) / 4.0,
        g[codec::kNextFrameType],
        std::min(g[codec::kNextFrameComplexity] / 32.0, 2.0),
    };
    return in;
}

namespace {

void conv3x3_forward(const double* in, int in_ch, int h, int w, const double* wt, const double* b,
                     int out_ch, double* out) {
    for (int oc = 0; oc < out_ch; ++oc) {
        double* o = out + static_cast<size_t>(oc) * h * w;
        const double* wk = wt + static_cast<size_t>(oc) * in_ch * 9;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = b[oc];
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* ip = in + static_cast<size_t>(ic) * h * w;
                    const double* k = wk + ic * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        int iy = y + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        const double* row = ip + static_cast<size_t>(iy) * w;
                        for (int kx = 0; kx < 3; ++kx) {
                            int ix = x + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            s += k[ky * 3 + kx] * row[ix];
                        }
                    }
                }
                o[static_cast<size_t>(y) * w + x] = std::tanh(s);
            }
        }
    }
}

/// d_post is the gradient at the post-tanh activation `a`.
void conv3x3_backward(const double* in, const double* a, const double* d_post, int in_ch, int h,
                      int w, const double* wt, int out_ch, double* d_w, double* d_b,
                      double* d_in) {
    for (int oc = 0; oc < out_ch; ++oc) {
        const double* av = a + static_cast<size_t>(oc) * h * w;
        const double* dv = d_post + static_cast<size_t>(oc) * h * w;
        const double* wk = wt + static_cast<size_t>(oc) * in_ch * 9;
        double* dwk = d_w + static_cast<size_t>(oc) * in_ch * 9;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double av_yx = av[static_cast<size_t>(y) * w + x];
                double dp = dv[static_cast<size_t>(y) * w + x] * (1.0 - av_yx * av_yx);
                if (dp == 0.0) continue;
                d_b[oc] += dp;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* ip = in + static_cast<size_t>(ic) * h * w;
                    double* dip = d_in ? d_in + static_cast<size_t>(ic) * h * w : nullptr;
                    const double* k = wk + ic * 9;
                    double* dk = dwk + ic * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        int iy = y + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            int ix = x + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            size_t ii = static_cast<size_t>(iy) * w + ix;
                            dk[ky * 3 + kx] += dp * ip[ii];
                            if (dip) dip[ii] += dp * k[ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

void dense_forward(const double* in, int n_in, const double* wt, const double* b, int n_out,
                   double* out) {
    for (int o = 0; o < n_out; ++o) {
        const double* row = wt + static_cast<size_t>(o) * n_in;
        double s = b[o];
        for (int i = 0; i < n_in; ++i) s += row[i] * in[i];
        out[o] = s;
    }
}

void dense_backward(const double* in, int n_in, const double* wt, int n_out, const double* d_out,
                    double* d_w, double* d_b, double* d_in) {
    for (int o = 0; o < n_out; ++o) {
        double g = d_out[o];
        if (g == 0.0) continue;
        d_b[o] += g;
        const double* row = wt + static_cast<size_t>(o) * n_in;
        double* drow = d_w + static_cast<size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) {
            drow[i] += g * in[i];
            if (d_in) d_in[i] += g * row[i];
        }
    }
}

}  // namespace

size_t PolicyNet::add_tensor(const std::string& name, std::vector<int> dims) {
    size_t count = 1;
    for (int d : dims) count *= static_cast<size_t>(d);
    size_t offset = params_.size();
    params_.resize(offset + count, 0.0);
    tensors_.push_back({name, std::move(dims), offset, count});
    return offset;
}

PolicyNet::PolicyNet(NetShape shape, uint64_t seed) : shape_(shape) {
    if (shape.mb_rows < 1 || shape.mb_cols < 1 || shape.act_rows < 1 || shape.act_cols < 1)
        throw std::invalid_argument("PolicyNet: invalid shape");
    const int c = shape.channels, p = shape.planes;
    conv1_w_ = add_tensor("conv1.w", {c, p, 3, 3});
    conv1_b_ = add_tensor("conv1.b", {c});
    conv2_w_ = add_tensor("conv2.w", {c, c, 3, 3});
    conv2_b_ = add_tensor("conv2.b", {c});
    conv3_w_ = add_tensor("conv3.w", {c, c, 3, 3});
    conv3_b_ = add_tensor("conv3.b", {c});
    fc_w_ = add_tensor("fc.w", {shape.latent, shape.fc_in_dims()});
    fc_b_ = add_tensor("fc.b", {shape.latent});
    actor_w_ = add_tensor("actor.w", {shape.action_dims(), shape.latent});
    actor_b_ = add_tensor("actor.b", {shape.action_dims()});
    critic_w_ = add_tensor("critic.w", {1, shape.latent});
    critic_b_ = add_tensor("critic.b", {1});
    aux_w_ = add_tensor("aux.w", {shape.block_dims(), shape.latent});
    aux_b_ = add_tensor("aux.b", {shape.block_dims()});
    log_std_ = add_tensor("log_std", {shape.action_dims()});

    Rng rng(seed);
    auto xavier = [&](size_t offset, size_t count, int fan_in, int fan_out, double scale) {
        double a = std::sqrt(6.0 / (fan_in + fan_out)) * scale;
        for (size_t i = 0; i < count; ++i) params_[offset + i] = rng.uniform(-a, a);
    };
    xavier(conv1_w_, static_cast<size_t>(c) * p * 9, p * 9, c * 9, 1.0);
    xavier(conv2_w_, static_cast<size_t>(c) * c * 9, c * 9, c * 9, 1.0);
    xavier(conv3_w_, static_cast<size_t>(c) * c * 9, c * 9, c * 9, 1.0);
    xavier(fc_w_, static_cast<size_t>(shape.latent) * shape.fc_in_dims(), shape.fc_in_dims(),
           shape.latent, 1.0);
    // small actor head keeps the initial policy near the baseline
    xavier(actor_w_, static_cast<size_t>(shape.action_dims()) * shape.latent, shape.latent,
           shape.action_dims(), 0.01);
    xavier(critic_w_, static_cast<size_t>(shape.latent), shape.latent, 1, 1.0);
    xavier(aux_w_, static_cast<size_t>(shape.block_dims()) * shape.latent, shape.latent,
           shape.block_dims(), 0.1);
    for (int d = 0; d < shape.action_dims(); ++d) params_[log_std_ + d] = shape.init_log_std;
}

std::span<double> PolicyNet::tensor_data(const std::string& name) {
    for (const auto& t : tensors_)
        if (t.name == name) return {params_.data() + t.offset, t.count};
    throw std::invalid_argument("PolicyNet: no tensor named " + name);
}

std::span<const double> PolicyNet::log_std() const {
    return {params_.data() + log_std_, static_cast<size_t>(shape_.action_dims())};
}

std::span<double> PolicyNet::log_std() {
    return {params_.data() + log_std_, static_cast<size_t>(shape_.action_dims())};
}

void PolicyNet::forward(const StateInput& in, Cache& cache) const {
    const int h = shape_.mb_rows, w = shape_.mb_cols, c = shape_.channels;
    if (in.planes.size() != static_cast<size_t>(shape_.planes) * h * w ||
        in.globals.size() != static_cast<size_t>(shape_.globals))
        throw std::invalid_argument("PolicyNet::forward: state shape mismatch");

    cache.input = &in;
    const size_t hw = static_cast<size_t>(h) * w;
    cache.a1.resize(c * hw);
    cache.a2.resize(c * hw);
    cache.a3.resize(c * hw);
    conv3x3_forward(in.planes.data(), shape_.planes, h, w, p(conv1_w_), p(conv1_b_), c,
                    cache.a1.data());
    conv3x3_forward(cache.a1.data(), c, h, w, p(conv2_w_), p(conv2_b_), c, cache.a2.data());
    conv3x3_forward(cache.a2.data(), c, h, w, p(conv3_w_), p(conv3_b_), c, cache.a3.data());

    cache.z.resize(shape_.fc_in_dims());
    std::copy(cache.a3.begin(), cache.a3.end(), cache.z.begin());
    std::copy(in.globals.begin(), in.globals.end(), cache.z.begin() + cache.a3.size());

    cache.h.resize(shape_.latent);
    dense_forward(cache.z.data(), shape_.fc_in_dims(), p(fc_w_), p(fc_b_), shape_.latent,
                  cache.h.data());
    for (auto& v : cache.h) v = std::tanh(v);

    cache.out.mean.resize(shape_.action_dims());
    dense_forward(cache.h.data(), shape_.latent, p(actor_w_), p(actor_b_), shape_.action_dims(),
                  cache.out.mean.data());
    double v;
    dense_forward(cache.h.data(), shape_.latent, p(critic_w_), p(critic_b_), 1, &v);
    cache.out.value = v;
    cache.out.block_pred.resize(shape_.block_dims());
    dense_forward(cache.h.data(), shape_.latent, p(aux_w_), p(aux_b_), shape_.block_dims(),
                  cache.out.block_pred.data());
}

NetOutput PolicyNet::forward(const StateInput& in) const {
    Cache cache;
    forward(in, cache);
    return std::move(cache.out);
}

void PolicyNet::backward(const Cache& cache, const OutputGrad& g, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("backward: grad size mismatch");
    const int h = shape_.mb_rows, w = shape_.mb_cols, c = shape_.channels;
    const int latent = shape_.latent;
    double* gr = grad.data();

    // heads -> latent
    std::vector<double> d_h(latent, 0.0);
    if (!g.d_mean.empty())
        dense_backward(cache.h.data(), latent, p(actor_w_), shape_.action_dims(), g.d_mean.data(),
                       gr + actor_w_, gr + actor_b_, d_h.data());
    if (g.d_value != 0.0)
        dense_backward(cache.h.data(), latent, p(critic_w_), 1, &g.d_value, gr + critic_w_,
                       gr + critic_b_, d_h.data());
    if (!g.d_block_pred.empty())
        dense_backward(cache.h.data(), latent, p(aux_w_), shape_.block_dims(),
                       g.d_block_pred.data(), gr + aux_w_, gr + aux_b_, d_h.data());

    // latent tanh + fc
    for (int i = 0; i < latent; ++i) d_h[i] *= 1.0 - cache.h[i] * cache.h[i];
    std::vector<double> d_z(shape_.fc_in_dims(), 0.0);
    dense_backward(cache.z.data(), shape_.fc_in_dims(), p(fc_w_), latent, d_h.data(), gr + fc_w_,
                   gr + fc_b_, d_z.data());

    // conv stack (the globals part of d_z stops at the input)
    const size_t hw = static_cast<size_t>(h) * w;
    std::vector<double> d_a2(c * hw, 0.0), d_a1(c * hw, 0.0);
    conv3x3_backward(cache.a2.data(), cache.a3.data(), d_z.data(), c, h, w, p(conv3_w_), c,
                     gr + conv3_w_, gr + conv3_b_, d_a2.data());
    conv3x3_backward(cache.a1.data(), cache.a2.data(), d_a2.data(), c, h, w, p(conv2_w_), c,
                     gr + conv2_w_, gr + conv2_b_, d_a1.data());
    conv3x3_backward(cache.input->planes.data(), cache.a1.data(), d_a1.data(), shape_.planes, h, w,
                     p(conv1_w_), c, gr + conv1_w_, gr + conv1_b_, nullptr);
}

}  // namespace qprl::rl
