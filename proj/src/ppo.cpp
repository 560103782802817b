#include "qprl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "qprl/checkpoint.hpp"
#include "qprl/parallel.hpp"

namespace qprl::rl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kLossChunks = 16;  // fixed so accumulation order never varies
}  // namespace

std::string train_config_to_text(const TrainConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "gamma = " << c.gamma << "\ngae_lambda = " << c.gae_lambda << "\nclip = " << c.clip
       << "\nepochs = " << c.epochs << "\nminibatch = " << c.minibatch << "\nlr = " << c.lr
       << "\nentropy_coef = " << c.entropy_coef << "\nvalue_coef = " << c.value_coef
       << "\naux_coef = " << c.aux_coef << "\ntotal_frames = " << c.total_frames
       << "\nn_envs = " << c.n_envs << "\nhorizon = " << c.horizon << "\nseed = " << c.seed
       << "\nmax_grad_norm = " << c.max_grad_norm << "\ncheckpoint_every = " << c.checkpoint_every
       << "\n";
    return os.str();
}

TrainConfig train_config_from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    TrainConfig c;
    auto d = [&](const char* k, double& out) { if (kv.count(k)) out = std::stod(kv[k]); };
    auto i = [&](const char* k, auto& out) { if (kv.count(k)) out = std::stoll(kv[k]); };
    d("gamma", c.gamma);
    d("gae_lambda", c.gae_lambda);
    d("clip", c.clip);
    i("epochs", c.epochs);
    i("minibatch", c.minibatch);
    d("lr", c.lr);
    d("entropy_coef", c.entropy_coef);
    d("value_coef", c.value_coef);
    d("aux_coef", c.aux_coef);
    i("total_frames", c.total_frames);
    i("n_envs", c.n_envs);
    i("horizon", c.horizon);
    i("seed", c.seed);
    d("max_grad_norm", c.max_grad_norm);
    i("checkpoint_every", c.checkpoint_every);
    return c;
}

double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> action) {
    double lp = 0.0;
    for (size_t d = 0; d < mean.size(); ++d) {
        double sigma = std::exp(log_std[d]);
        double z = (action[d] - mean[d]) / sigma;
        lp += -0.5 * z * z - log_std[d] - 0.5 * kLog2Pi;
    }
    return lp;
}

double gaussian_entropy(std::span<const double> log_std) {
    double h = 0.0;
    for (double ls : log_std) h += 0.5 * (kLog2Pi + 1.0) + ls;
    return h;
}

void gaussian_sample(std::span<const double> mean, std::span<const double> log_std, Rng& rng,
                     std::span<double> action) {
    for (size_t d = 0; d < mean.size(); ++d)
        action[d] = mean[d] + std::exp(log_std[d]) * rng.normal();
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const uint8_t> dones, double gamma, double lambda) {
    const size_t n = rewards.size();
    if (values.size() != n + 1 || dones.size() != n)
        throw std::invalid_argument("gae: sequence lengths misaligned");
    GaeResult out;
    out.advantages.resize(n);
    out.returns.resize(n);
    double acc = 0.0;
    for (size_t t = n; t-- > 0;) {
        double mask = dones[t] ? 0.0 : 1.0;
        double delta = rewards[t] + gamma * values[t + 1] * mask - values[t];
        acc = delta + gamma * lambda * mask * acc;
        out.advantages[t] = acc;
        out.returns[t] = acc + values[t];
    }
    return out;
}

LossReport compute_loss(const PolicyNet& net, const TrainBatch& batch,
                        std::span<const double> advantages, std::span<const int> indices,
                        const TrainConfig& cfg, std::span<double> grad) {
    const size_t m = indices.size();
    if (m == 0) return {};
    const bool want_grad = !grad.empty();
    const auto log_std = net.log_std();
    const int adim = net.shape().action_dims();
    const int bdim = net.shape().block_dims();
    const double inv_m = 1.0 / static_cast<double>(m);

    struct ChunkAcc {
        double policy = 0, value = 0, aux = 0;
        std::vector<double> grad;
        std::vector<double> d_log_std;
    };
    const int n_chunks = std::min<int>(kLossChunks, static_cast<int>(m));
    std::vector<ChunkAcc> acc(n_chunks);
    if (want_grad)
        for (auto& a : acc) {
            a.grad.assign(net.param_count(), 0.0);
            a.d_log_std.assign(adim, 0.0);
        }

    parallel_for(n_chunks, [&](int chunk) {
        ChunkAcc& a = acc[chunk];
        PolicyNet::Cache cache;
        PolicyNet::OutputGrad og;
        const size_t lo = m * chunk / n_chunks, hi = m * (chunk + 1) / n_chunks;
        for (size_t s = lo; s < hi; ++s) {
            const int i = indices[s];
            net.forward(batch.states[i], cache);
            const auto& out = cache.out;
            const auto& action = batch.actions[i];

            double logp = gaussian_log_prob(out.mean, log_std, action);
            double rho = std::exp(logp - batch.logp_old[i]);
            double adv = advantages[i];
            double s1 = rho * adv;
            double clipped = std::clamp(rho, 1.0 - cfg.clip, 1.0 + cfg.clip);
            double s2 = clipped * adv;
            a.policy += -std::min(s1, s2);
            double verr = out.value - batch.returns[i];
            a.value += verr * verr;
            const auto& tgt = batch.block_targets[i];
            double aux = 0.0;
            for (int b = 0; b < bdim; ++b) {
                double e = out.block_pred[b] - tgt[b];
                aux += e * e;
            }
            aux /= bdim;
            a.aux += aux;

            if (!want_grad) continue;
            double dl_drho;
            if (s1 <= s2) dl_drho = -adv;
            else dl_drho = (rho > 1.0 - cfg.clip && rho < 1.0 + cfg.clip) ? -adv : 0.0;
            double dl_dlogp = dl_drho * rho * inv_m;

            og.d_mean.assign(adim, 0.0);
            og.d_block_pred.assign(bdim, 0.0);
            for (int d = 0; d < adim; ++d) {
                double sigma = std::exp(log_std[d]);
                double z = (action[d] - out.mean[d]) / sigma;
                og.d_mean[d] = dl_dlogp * z / sigma;          // dlogp/dmu = z/sigma
                a.d_log_std[d] += dl_dlogp * (z * z - 1.0);   // dlogp/dlogstd = z^2-1
            }
            og.d_value = cfg.value_coef * 2.0 * verr * inv_m;
            const double aux_scale = cfg.aux_coef * 2.0 * inv_m / bdim;
            for (int b = 0; b < bdim; ++b)
                og.d_block_pred[b] = aux_scale * (out.block_pred[b] - tgt[b]);
            net.backward(cache, og, a.grad);
        }
    });

    LossReport rep;
    for (const auto& a : acc) {
        rep.policy += a.policy;
        rep.value += a.value;
        rep.aux += a.aux;
    }
    rep.policy *= inv_m;
    rep.value *= inv_m;
    rep.aux *= inv_m;
    rep.entropy = gaussian_entropy(log_std);
    rep.total = rep.policy + cfg.value_coef * rep.value - cfg.entropy_coef * rep.entropy +
                cfg.aux_coef * rep.aux;

    if (want_grad) {
        for (const auto& a : acc)
            for (size_t k = 0; k < grad.size(); ++k) grad[k] += a.grad[k];
        // log_std gradient: policy term plus the entropy bonus (dH/dlogstd = 1)
        const size_t ls_off = grad.size() - adim;
        for (int d = 0; d < adim; ++d) {
            double g = -cfg.entropy_coef;
            for (const auto& a : acc) g += a.d_log_std[d];
            grad[ls_off + d] += g;
        }
    }
    return rep;
}

Adam::Adam(size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw std::invalid_argument("Adam::step: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < m_.size(); ++i) {
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
        params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
}

LossReport ppo_update(PolicyNet& net, const TrainBatch& batch, const TrainConfig& cfg, Adam& opt,
                      Rng& shuffle_rng) {
    const size_t n = batch.size();
    if (n == 0) return {};

    std::vector<double> adv(batch.advantages.begin(), batch.advantages.end());
    if (n >= 2) {
        double mean = 0;
        for (double a : adv) mean += a;
        mean /= static_cast<double>(n);
        double var = 0;
        for (double a : adv) var += (a - mean) * (a - mean);
        double sd = std::sqrt(var / static_cast<double>(n));
        for (double& a : adv) a = (a - mean) / (sd + 1e-8);
    }

    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    std::vector<double> grad(net.param_count());

    LossReport mean_rep;
    int updates = 0;
    const int mb = std::max(1, cfg.minibatch);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < n; start += mb) {
            size_t stop = std::min(n, start + mb);
            std::span<const int> slice(order.data() + start, stop - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            LossReport rep = compute_loss(net, batch, adv, slice, cfg, grad);
            if (!std::isfinite(rep.total))
                throw std::runtime_error("ppo_update: non-finite loss (policy=" +
                                         std::to_string(rep.policy) +
                                         ", value=" + std::to_string(rep.value) + ")");
            if (cfg.max_grad_norm > 0) {
                double norm2 = 0;
                for (double g : grad) norm2 += g * g;
                double norm = std::sqrt(norm2);
                if (norm > cfg.max_grad_norm) {
                    double scale = cfg.max_grad_norm / norm;
                    for (double& g : grad) g *= scale;
                }
            }
            opt.step(net.params(), grad);
            mean_rep.policy += rep.policy;
            mean_rep.value += rep.value;
            mean_rep.entropy += rep.entropy;
            mean_rep.aux += rep.aux;
            mean_rep.total += rep.total;
            ++updates;
        }
    }
    if (updates > 0) {
        mean_rep.policy /= updates;
        mean_rep.value /= updates;
        mean_rep.entropy /= updates;
        mean_rep.aux /= updates;
        mean_rep.total /= updates;
    }
    return mean_rep;
}

double gradient_check(PolicyNet& net, const LossFn& fn, int probes, double h, uint64_t seed) {
    std::vector<double> grad(net.param_count(), 0.0);
    fn(net, grad);

    std::vector<size_t> idx(net.param_count());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed ^ 0xabcdef12345ull);
    rng.shuffle(idx);
    const size_t n_probe = std::min<size_t>(std::max(probes, 1), idx.size());

    double worst = 0.0;
    for (size_t k = 0; k < n_probe; ++k) {
        size_t i = idx[k];
        double saved = net.params()[i];
        net.params()[i] = saved + h;
        double up = fn(net, {});
        net.params()[i] = saved - h;
        double down = fn(net, {});
        net.params()[i] = saved;
        double numeric = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-4});
        worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
    }
    return worst;
}

namespace {

struct EnvSlot {
    std::unique_ptr<env::Environment> env;
    StateInput feat;
    int64_t episode = 0;
    Rng rng{0};

    // per-iteration trajectory storage
    std::vector<StateInput> states;
    std::vector<std::vector<double>> actions;
    std::vector<double> logp, rewards, values;
    std::vector<uint8_t> dones;
    std::vector<std::vector<double>> block_targets;
    std::vector<double> step_bitrate_err, step_task;
    double bootstrap = 0.0;
};

void write_metrics_header(std::ofstream& os) {
    os << "iteration,frames,mean_reward,mean_bitrate_error,mean_task_score,"
          "loss_policy,loss_value,loss_entropy,loss_aux,loss_total\n";
}

void write_metrics_row(std::ofstream& os, const MetricsRow& r) {
    os.precision(17);
    os << r.iteration << ',' << r.frames << ',' << r.mean_reward << ',' << r.mean_bitrate_error
       << ',' << r.mean_task_score << ',' << r.losses.policy << ',' << r.losses.value << ','
       << r.losses.entropy << ',' << r.losses.aux << ',' << r.losses.total << '\n';
    os.flush();
}

}  // namespace

TrainResult train(const NetShape& shape, const EnvFactory& factory, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
    PolicyNet net(shape, cfg.seed);
    std::vector<MetricsRow> log;

    const int64_t frames_per_iter = static_cast<int64_t>(cfg.n_envs) * cfg.horizon;
    const int64_t n_iters =
        cfg.total_frames <= 0 ? 0 : (cfg.total_frames + frames_per_iter - 1) / frames_per_iter;

    std::ofstream metrics;
    if (!hooks.metrics_csv.empty()) {
        metrics.open(hooks.metrics_csv);
        if (!metrics) throw std::runtime_error("train: cannot open metrics log " + hooks.metrics_csv);
        write_metrics_header(metrics);
    }

    Rng master(cfg.seed);
    Rng shuffle_rng = master.derive(7771);
    std::vector<EnvSlot> slots(cfg.n_envs);
    for (int e = 0; e < cfg.n_envs; ++e) {
        slots[e].rng = master.derive(1000 + static_cast<uint64_t>(e));
        if (n_iters > 0) {
            slots[e].env = std::make_unique<env::Environment>(factory(e, 0));
            slots[e].feat = featurize(slots[e].env->reset());
        }
    }

    Adam opt(net.param_count(), cfg.lr);
    int64_t frames_done = 0;

    for (int64_t iter = 0; iter < n_iters; ++iter) {
        parallel_for(cfg.n_envs, [&](int e) {
            EnvSlot& slot = slots[e];
            const int adim = shape.action_dims();
            slot.states.clear();
            slot.actions.clear();
            slot.logp.clear();
            slot.rewards.clear();
            slot.values.clear();
            slot.dones.clear();
            slot.block_targets.clear();
            slot.step_bitrate_err.clear();
            slot.step_task.clear();
            PolicyNet::Cache cache;
            for (int t = 0; t < cfg.horizon; ++t) {
                net.forward(slot.feat, cache);
                std::vector<double> action(adim);
                gaussian_sample(cache.out.mean, net.log_std(), slot.rng, action);
                double lp = gaussian_log_prob(cache.out.mean, net.log_std(), action);

                env::ActionGrid grid(shape.act_rows, shape.act_cols);
                std::copy(action.begin(), action.end(), grid.begin());
                env::StepResult res = slot.env->step(grid);

                slot.states.push_back(slot.feat);
                slot.actions.push_back(std::move(action));
                slot.logp.push_back(lp);
                slot.values.push_back(cache.out.value);
                slot.rewards.push_back(res.reward);
                slot.dones.push_back(res.done ? 1 : 0);
                slot.block_targets.emplace_back(res.block_rewards.begin(),
                                                res.block_rewards.end());
                slot.step_bitrate_err.push_back(std::abs(res.info.bitrate_error));
                slot.step_task.push_back(res.info.task_score);

                if (res.done) {
                    slot.episode += 1;
                    slot.env = std::make_unique<env::Environment>(
                        factory(e, slot.episode));
                    slot.feat = featurize(slot.env->reset());
                } else {
                    slot.feat = featurize(res.next_state);
                }
            }
            net.forward(slot.feat, cache);
            slot.bootstrap = cache.out.value;
        });

        TrainBatch batch;
        double sum_reward = 0, sum_be = 0, sum_task = 0;
        for (auto& slot : slots) {
            std::vector<double> values = slot.values;
            values.push_back(slot.bootstrap);
            GaeResult g = gae(slot.rewards, values, slot.dones, cfg.gamma, cfg.gae_lambda);
            for (int t = 0; t < cfg.horizon; ++t) {
                batch.states.push_back(std::move(slot.states[t]));
                batch.actions.push_back(std::move(slot.actions[t]));
                batch.logp_old.push_back(slot.logp[t]);
                batch.advantages.push_back(g.advantages[t]);
                batch.returns.push_back(g.returns[t]);
                batch.block_targets.push_back(std::move(slot.block_targets[t]));
                sum_reward += slot.rewards[t];
                sum_be += slot.step_bitrate_err[t];
                sum_task += slot.step_task[t];
            }
        }
        frames_done += frames_per_iter;

        LossReport rep = ppo_update(net, batch, cfg, opt, shuffle_rng);

        MetricsRow row;
        row.iteration = static_cast<int>(iter);
        row.frames = frames_done;
        const double inv = 1.0 / static_cast<double>(frames_per_iter);
        row.mean_reward = sum_reward * inv;
        row.mean_bitrate_error = sum_be * inv;
        row.mean_task_score = sum_task * inv;
        row.losses = rep;
        log.push_back(row);
        if (metrics.is_open()) write_metrics_row(metrics, row);
        if (hooks.on_iteration) hooks.on_iteration(row);
        if (!hooks.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
            (iter + 1) % cfg.checkpoint_every == 0)
            io::save_checkpoint(hooks.checkpoint_dir + "/ckpt_" + std::to_string(iter + 1) + ".qprl",
                                net, cfg);
    }

    if (!hooks.checkpoint_dir.empty())
        io::save_checkpoint(hooks.checkpoint_dir + "/ckpt_final.qprl", net, cfg);
    return TrainResult{std::move(net), std::move(log)};
}

}  // namespace qprl::rl
