#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "qprl/stats.hpp"

namespace qprl::rl {

struct NetShape {
    int mb_rows = 0, mb_cols = 0;    // per-block plane grid
    int act_rows = 0, act_cols = 0;  // coarse actor output grid
    int planes = codec::kBlockPlaneCount;
    int globals = codec::kGlobalStatCount;
    int channels = 8;
    int latent = 64;
    double init_log_std = 0.6931471805599453;  // ln 2

    int action_dims() const { return act_rows * act_cols; }
    int block_dims() const { return mb_rows * mb_cols; }
    int flat_dims() const { return channels * mb_rows * mb_cols; }
    int fc_in_dims() const { return flat_dims() + globals; }
};

/// Network input: the 4 feature planes plus globals squashed to stable ranges
/// by fixed per-field transforms.
struct StateInput {
    std::vector<double> planes;  // planes * H * W, channel-major
    std::vector<double> globals;
};

StateInput featurize(const codec::EncoderStats& stats);

struct NetOutput {
    std::vector<double> mean;        // action grid, row-major
    double value = 0;
    std::vector<double> block_pred;  // macroblock grid, row-major
};

struct TensorInfo {
    std::string name;
    std::vector<int> dims;
    size_t offset = 0, count = 0;
};

/// Conv trunk (3x 3x3 conv + tanh) over the feature planes, flattened and
/// fused with the global stats into a 64-d latent, with actor / critic /
/// block-reward heads and a state-independent log-std vector.
class PolicyNet {
public:
    PolicyNet(NetShape shape, uint64_t seed);

    const NetShape& shape() const { return shape_; }
    size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<TensorInfo>& tensors() const { return tensors_; }

    std::span<double> tensor_data(const std::string& name);
    std::span<const double> log_std() const;
    std::span<double> log_std();

    struct Cache {
        const StateInput* input = nullptr;
        std::vector<double> a1, a2, a3;  // post-tanh conv activations
        std::vector<double> z;           // fc input (flatten + globals)
        std::vector<double> h;           // latent, post-tanh
        NetOutput out;
    };

    NetOutput forward(const StateInput& in) const;
    void forward(const StateInput& in, Cache& cache) const;

    struct OutputGrad {
        std::vector<double> d_mean;
        double d_value = 0;
        std::vector<double> d_block_pred;
    };

    /// Accumulates parameter gradients for one sample into `grad`
    /// (size param_count). Gradients w.r.t. log_std are the caller's business
    /// since the distribution parameters enter the loss directly.
    void backward(const Cache& cache, const OutputGrad& g, std::span<double> grad) const;

private:
    size_t add_tensor(const std::string& name, std::vector<int> dims);
    const double* p(size_t offset) const { return params_.data() + offset; }

    NetShape shape_;
    std::vector<double> params_;
    std::vector<TensorInfo> tensors_;
    // tensor offsets in registration order
    size_t conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
    size_t fc_w_, fc_b_, actor_w_, actor_b_, critic_w_, critic_b_, aux_w_, aux_b_, log_std_;
};

}  // namespace qprl::rl
