#pragma once

#include <functional>
#include <string>

#include "qprl/env.hpp"
#include "qprl/net.hpp"
#include "qprl/rng.hpp"

namespace qprl::rl {

struct TrainConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    int epochs = 10;
    int minibatch = 64;
    double lr = 3e-4;
    double entropy_coef = 0.0;
    double value_coef = 0.5;
    double aux_coef = 0.1;  // block reward-prediction MSE weight
    int64_t total_frames = 0;
    int n_envs = 8;
    int horizon = 256;
    uint64_t seed = 0;
    double max_grad_norm = 0.5;
    int checkpoint_every = 25;  // iterations; 0 disables periodic checkpoints
};

std::string train_config_to_text(const TrainConfig& cfg);
TrainConfig train_config_from_text(const std::string& text);

/// Diagonal Gaussian policy helpers.
double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> action);
double gaussian_entropy(std::span<const double> log_std);
void gaussian_sample(std::span<const double> mean, std::span<const double> log_std, Rng& rng,
                     std::span<double> action);

struct GaeResult {
    std::vector<double> advantages, returns;
};

/// values must hold one bootstrap entry beyond the rewards (v_t for t=0..T).
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const uint8_t> dones, double gamma, double lambda);

/// Flattened rollout data for one update.
struct TrainBatch {
    std::vector<StateInput> states;
    std::vector<std::vector<double>> actions;
    std::vector<double> logp_old;
    std::vector<double> advantages;  // raw; ppo_update normalizes per batch
    std::vector<double> returns;
    std::vector<std::vector<double>> block_targets;
    size_t size() const { return states.size(); }
};

struct LossReport {
    double policy = 0, value = 0, entropy = 0, aux = 0, total = 0;
};

/// Composite clipped-surrogate loss over `indices`, averaged per sample.
/// `advantages` overrides batch.advantages (normalization happens upstream).
/// When `grad` is non-empty it receives the accumulated parameter gradient.
LossReport compute_loss(const PolicyNet& net, const TrainBatch& batch,
                        std::span<const double> advantages, std::span<const int> indices,
                        const TrainConfig& cfg, std::span<double> grad);

class Adam {
public:
    Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::span<double> params, std::span<const double> grad);
    int64_t steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<double> m_, v_;
};

/// One PPO update: normalizes advantages over the batch, then runs
/// epochs x shuffled minibatches of Adam steps. Returns losses averaged over
/// all minibatch updates. Throws on non-finite loss.
LossReport ppo_update(PolicyNet& net, const TrainBatch& batch, const TrainConfig& cfg, Adam& opt,
                      Rng& shuffle_rng);

/// Central finite differences against the analytic gradient of an arbitrary
/// loss; returns the max hybrid relative error over `probes` sampled
/// parameters. `fn(net, grad)` returns the loss and, when grad is non-empty,
/// must accumulate the analytic gradient into it.
using LossFn = std::function<double(const PolicyNet&, std::span<double>)>;
double gradient_check(PolicyNet& net, const LossFn& fn, int probes = 200, double h = 1e-4,
                      uint64_t seed = 0);

struct MetricsRow {
    int iteration = 0;
    int64_t frames = 0;
    double mean_reward = 0, mean_bitrate_error = 0, mean_task_score = 0;
    LossReport losses;
};

/// Builds the environment for slot `env_idx`, episode `episode`. Must be
/// deterministic in its arguments.
using EnvFactory = std::function<env::Environment(int env_idx, int64_t episode)>;

struct TrainHooks {
    std::string metrics_csv;      // per-iteration CSV log, empty disables
    std::string checkpoint_dir;   // periodic + final checkpoints, empty disables
    std::function<void(const MetricsRow&)> on_iteration;
};

struct TrainResult {
    PolicyNet net;
    std::vector<MetricsRow> log;
};

/// PPO training loop: collects fixed-horizon rollouts from n_envs
/// environments (episodes cycle through the factory), computes GAE, and
/// updates. Fully reproducible for a fixed seed.
TrainResult train(const NetShape& shape, const EnvFactory& factory, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

}  // namespace qprl::rl
