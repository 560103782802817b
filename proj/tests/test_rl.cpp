#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qprl/checkpoint.hpp"
#include "qprl/media.hpp"
#include "qprl/ppo.hpp"

using namespace qprl;
using namespace qprl::rl;

namespace {

NetShape small_shape() {
    NetShape s;
    s.mb_rows = 4;
    s.mb_cols = 4;
    s.act_rows = 2;
    s.act_cols = 2;
    s.channels = 4;
    return s;
}

StateInput random_state(Rng& rng, const NetShape& s) {
    StateInput in;
    in.planes.resize(static_cast<size_t>(s.planes) * s.mb_rows * s.mb_cols);
    for (auto& v : in.planes) v = rng.uniform();
    in.globals.resize(s.globals);
    for (auto& v : in.globals) v = rng.uniform(-1, 1);
    return in;
}

TrainBatch random_batch(Rng& rng, const PolicyNet& net, int n, double logp_noise = 0.3) {
    const NetShape& s = net.shape();
    TrainBatch b;
    for (int i = 0; i < n; ++i) {
        b.states.push_back(random_state(rng, s));
        std::vector<double> action(s.action_dims());
        auto out = net.forward(b.states.back());
        gaussian_sample(out.mean, net.log_std(), rng, action);
        double lp = gaussian_log_prob(out.mean, net.log_std(), action);
        b.actions.push_back(std::move(action));
        b.logp_old.push_back(lp + logp_noise * rng.normal());
        b.advantages.push_back(rng.normal());
        b.returns.push_back(rng.normal());
        std::vector<double> tgt(s.block_dims());
        for (auto& v : tgt) v = rng.normal() * 0.1;
        b.block_targets.push_back(std::move(tgt));
    }
    return b;
}

LossFn full_loss_fn(const TrainBatch& batch, const TrainConfig& cfg,
                    const std::vector<double>& adv, const std::vector<int>& idx) {
    return [&](const PolicyNet& net, std::span<double> grad) {
        return compute_loss(net, batch, adv, idx, cfg, grad).total;
    };
}

}  // namespace

TEST_CASE("forward: zeroed final layers give zero outputs; determinism; fusion") {
    NetShape s = small_shape();
    PolicyNet net(s, 5);
    Rng rng(1);
    StateInput in = random_state(rng, s);

    PolicyNet zeroed(s, 5);
    for (const char* t : {"actor.w", "actor.b", "critic.w", "critic.b"})
        for (auto& v : zeroed.tensor_data(t)) v = 0.0;
    auto out0 = zeroed.forward(in);
    for (double v : out0.mean) CHECK(v == 0.0);
    CHECK(out0.value == 0.0);

    auto a = net.forward(in);
    auto b = net.forward(in);
    CHECK(a.mean == b.mean);
    CHECK(a.value == b.value);
    CHECK(a.block_pred == b.block_pred);

    // perturbing one global stat must reach the latent
    StateInput in2 = in;
    in2.globals[3] += 0.25;
    auto c = net.forward(in2);
    double diff = std::abs(c.value - a.value);
    for (size_t i = 0; i < a.mean.size(); ++i) diff += std::abs(c.mean[i] - a.mean[i]);
    CHECK(diff > 1e-9);
}

TEST_CASE("gaussian log-prob and entropy closed forms") {
    const int dims = 6;
    std::vector<double> mean(dims, 0.0), log_std(dims, 0.0), action(dims, 0.0);
    CHECK(gaussian_log_prob(mean, log_std, action) ==
          doctest::Approx(-dims * 0.5 * std::log(2 * 3.14159265358979323846)).epsilon(1e-12));

    double h1 = gaussian_entropy(log_std);
    std::vector<double> doubled(dims, std::log(2.0));
    CHECK(gaussian_entropy(doubled) - h1 == doctest::Approx(dims * std::log(2.0)).epsilon(1e-12));

    // numeric check against an independent high-precision evaluation
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> m(dims), ls(dims), a(dims);
        for (int d = 0; d < dims; ++d) {
            m[d] = rng.uniform(-3, 3);
            ls[d] = rng.uniform(-1.5, 1.0);
            a[d] = rng.uniform(-5, 5);
        }
        long double ref = 0;
        for (int d = 0; d < dims; ++d) {
            long double sig = std::exp((long double)ls[d]);
            long double z = ((long double)a[d] - m[d]) / sig;
            ref += -0.5L * z * z - std::log(sig) - 0.5L * std::log(2.0L * 3.141592653589793238462643L);
        }
        CHECK(gaussian_log_prob(m, ls, a) == doctest::Approx((double)ref).epsilon(1e-10));
    }
}

TEST_CASE("1-D density integrates to one by quadrature") {
    std::vector<double> mean{0.3}, log_std{std::log(0.7)};
    const double sigma = 0.7;
    const double lo = mean[0] - 10 * sigma, hi = mean[0] + 10 * sigma;
    const int n = 20000;  // Simpson, even interval count
    const double dx = (hi - lo) / n;
    double integral = 0;
    for (int i = 0; i <= n; ++i) {
        std::vector<double> x{lo + i * dx};
        double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        integral += w * std::exp(gaussian_log_prob(mean, log_std, x));
    }
    integral *= dx / 3.0;
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gae reductions and geometric series") {
    const int n = 200;
    std::vector<double> rewards(n, 1.0), values(n + 1, 0.0);
    std::vector<uint8_t> dones(n, 0);

    // gamma=0: A_t = r_t - v_t regardless of lambda
    for (double lam : {0.0, 0.5, 0.95}) {
        std::vector<double> v2(n + 1);
        Rng rng(4);
        for (auto& v : v2) v = rng.normal();
        auto g = gae(rewards, v2, dones, 0.0, lam);
        for (int t = 0; t < n; ++t) CHECK(g.advantages[t] == rewards[t] - v2[t]);
    }

    // lambda=0: A_t = delta_t
    {
        std::vector<double> v2(n + 1);
        Rng rng(9);
        for (auto& v : v2) v = rng.normal();
        auto g = gae(rewards, v2, dones, 0.9, 0.0);
        for (int t = 0; t < n; ++t)
            CHECK(g.advantages[t] ==
                  doctest::Approx(rewards[t] + 0.9 * v2[t + 1] - v2[t]).epsilon(1e-12));
    }

    // constant reward, v=0, gamma=0.9, lambda=1: A_0 -> 10 over 200 steps
    auto g = gae(rewards, values, dones, 0.9, 1.0);
    CHECK(g.advantages[0] == doctest::Approx(10.0).epsilon(1e-6));

    // done masks the bootstrap
    std::vector<uint8_t> d2(n, 0);
    d2[5] = 1;
    std::vector<double> v3(n + 1, 3.0);
    auto g2 = gae(rewards, v3, d2, 0.9, 0.95);
    CHECK(g2.advantages[5] == doctest::Approx(rewards[5] - v3[5]).epsilon(1e-12));
}

TEST_CASE("first update on fresh data has zero policy loss") {
    NetShape s = small_shape();
    PolicyNet net(s, 11);
    Rng rng(12);
    TrainBatch b = random_batch(rng, net, 32, /*logp_noise=*/0.0);  // rho = 1 exactly

    // normalize advantages as ppo_update would
    std::vector<double> adv = b.advantages;
    double mean = 0;
    for (double a : adv) mean += a;
    mean /= adv.size();
    double var = 0;
    for (double a : adv) var += (a - mean) * (a - mean);
    double sd = std::sqrt(var / adv.size());
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);

    std::vector<int> idx(b.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    TrainConfig cfg;
    auto rep = compute_loss(net, b, adv, idx, cfg, {});
    CHECK(std::abs(rep.policy) < 1e-10);
}

TEST_CASE("clip epsilon -> 0 kills the policy gradient once the ratio saturates") {
    NetShape s = small_shape();
    PolicyNet net(s, 21);
    Rng rng(22);
    TrainBatch b = random_batch(rng, net, 16, /*logp_noise=*/0.0);
    // rho = e^0.4 > 1 with positive advantages: every sample sits on the
    // saturated side of the clip
    for (double& lp : b.logp_old) lp -= 0.4;
    for (double& a : b.advantages) a = std::abs(a) + 0.1;
    std::vector<int> idx(b.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    TrainConfig cfg;
    cfg.clip = 1e-12;
    std::vector<double> grad(net.param_count(), 0.0);
    compute_loss(net, b, b.advantages, idx, cfg, grad);
    // actor head gradients flow only from the (saturated) policy term
    const auto& tensors = net.tensors();
    for (const auto& t : tensors)
        if (t.name == "actor.w" || t.name == "actor.b" || t.name == "log_std")
            for (size_t k = 0; k < t.count; ++k) CHECK(grad[t.offset + k] == 0.0);
}

TEST_CASE("aux coefficient 0 leaves the aux head untouched (no-RI arm)") {
    NetShape s = small_shape();
    PolicyNet net(s, 31);
    Rng rng(32);
    TrainBatch b = random_batch(rng, net, 24);
    TrainConfig cfg;
    cfg.aux_coef = 0.0;
    cfg.epochs = 3;
    cfg.minibatch = 8;
    std::vector<double> before(net.tensor_data("aux.w").begin(), net.tensor_data("aux.w").end());
    Adam opt(net.param_count(), cfg.lr);
    Rng shuffle(1);
    ppo_update(net, b, cfg, opt, shuffle);
    auto after = net.tensor_data("aux.w");
    for (size_t i = 0; i < before.size(); ++i) CHECK(after[i] == before[i]);
}

TEST_CASE("advantage shift invariance of the update") {
    NetShape s = small_shape();
    Rng rng(41);
    PolicyNet net_a(s, 42), net_b(s, 42);
    TrainBatch batch = random_batch(rng, net_a, 24);
    TrainBatch shifted = batch;
    for (double& a : shifted.advantages) a += 123.25;

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.minibatch = 12;
    Adam oa(net_a.param_count(), cfg.lr), ob(net_b.param_count(), cfg.lr);
    Rng sa(7), sb(7);
    auto ra = ppo_update(net_a, batch, cfg, oa, sa);
    auto rb = ppo_update(net_b, shifted, cfg, ob, sb);
    CHECK(ra.policy == doctest::Approx(rb.policy).epsilon(1e-9));
    for (size_t i = 0; i < net_a.param_count(); ++i)
        CHECK(net_a.params()[i] == doctest::Approx(net_b.params()[i]).epsilon(1e-9));
}

TEST_CASE("gradient_check: linear loss is exact") {
    NetShape s = small_shape();
    PolicyNet net(s, 51);
    // L = sum_i c_i p_i with fixed pseudo-random coefficients
    LossFn linear = [](const PolicyNet& n, std::span<double> grad) {
        double loss = 0;
        Rng c(99);
        for (size_t i = 0; i < n.param_count(); ++i) {
            double ci = c.uniform(-1, 1);
            loss += ci * n.params()[i];
            if (!grad.empty()) grad[i] += ci;
        }
        return loss;
    };
    CHECK(gradient_check(net, linear, 200, 1e-4, 1) < 1e-9);
}

TEST_CASE("gradient_check: full three-head loss under 1e-4") {
    NetShape s = small_shape();
    PolicyNet net(s, 61);
    Rng rng(62);
    TrainBatch b = random_batch(rng, net, 8);
    std::vector<int> idx(b.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    TrainConfig cfg;
    cfg.entropy_coef = 0.01;  // exercise the entropy path too
    auto fn = full_loss_fn(b, cfg, b.advantages, idx);
    double err = gradient_check(net, fn, 300, 1e-4, 2);
    CHECK(err < 1e-4);
}

TEST_CASE("gradient_check detects an injected fault") {
    NetShape s;
    s.mb_rows = 2;
    s.mb_cols = 2;
    s.act_rows = 1;
    s.act_cols = 1;
    s.channels = 2;
    PolicyNet net(s, 71);
    Rng rng(72);
    TrainBatch b = random_batch(rng, net, 4);
    std::vector<int> idx(b.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    TrainConfig cfg;

    // find the strongest gradient entry, then corrupt it
    std::vector<double> g(net.param_count(), 0.0);
    compute_loss(net, b, b.advantages, idx, cfg, g);
    size_t worst = 0;
    for (size_t i = 0; i < g.size(); ++i)
        if (std::abs(g[i]) > std::abs(g[worst])) worst = i;
    REQUIRE(std::abs(g[worst]) > 1e-3);

    LossFn corrupted = [&](const PolicyNet& n, std::span<double> grad) {
        double loss = compute_loss(n, b, b.advantages, idx, cfg, grad).total;
        if (!grad.empty()) grad[worst] *= 2.0;
        return loss;
    };
    CHECK(gradient_check(net, corrupted, static_cast<int>(net.param_count()), 1e-4, 3) > 0.1);
}

TEST_CASE("checkpoint round trip, truncation, version refusal") {
    namespace fs = std::filesystem;
    NetShape s = small_shape();
    PolicyNet net(s, 81);
    TrainConfig cfg;
    cfg.seed = 81;
    cfg.total_frames = 12345;
    const std::string path = (fs::temp_directory_path() / "qprl_test_ckpt.bin").string();
    io::save_checkpoint(path, net, cfg);

    auto loaded = io::load_checkpoint(path);
    CHECK(loaded.config.total_frames == 12345);
    CHECK(loaded.net.params() == net.params());
    Rng rng(82);
    StateInput in = random_state(rng, s);
    auto a = net.forward(in), b = loaded.net.forward(in);
    CHECK(a.mean == b.mean);
    CHECK(a.value == b.value);
    CHECK(a.block_pred == b.block_pred);

    // truncation
    {
        std::ifstream f(path, std::ios::binary);
        std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        std::ofstream out(path + ".trunc", std::ios::binary);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size() / 2));
    }
    CHECK_THROWS_WITH_AS(io::load_checkpoint(path + ".trunc"),
                         doctest::Contains("checksum"), std::runtime_error);

    // version bump (byte after 8-byte magic), checksum rewritten to match
    {
        std::ifstream f(path, std::ios::binary);
        std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        buf[8] = 2;
        // recompute trailing fnv1a
        std::string payload = buf.substr(0, buf.size() - 8);
        uint64_t h = 1469598103934665603ull;
        for (unsigned char c : payload) {
            h ^= c;
            h *= 1099511628211ull;
        }
        std::memcpy(buf.data() + buf.size() - 8, &h, 8);
        std::ofstream out(path + ".v2", std::ios::binary);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    try {
        io::load_checkpoint(path + ".v2");
        CHECK(false);
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("1") != std::string::npos);
    }
    fs::remove(path);
    fs::remove(path + ".trunc");
    fs::remove(path + ".v2");
}

TEST_CASE("train: zero frames returns the untouched initial net") {
    auto stream = io::synth_scene(io::WorldKind::RoiWorld, 3, 10, 64, 64);
    env::EnvConfig ec;
    ec.target_bitrate = 20000;
    ec.gop = 8;
    EnvFactory factory = [&](int, int64_t) { return env::Environment(stream, ec); };
    NetShape s;
    s.mb_rows = 4;
    s.mb_cols = 4;
    s.act_rows = 2;
    s.act_cols = 2;
    s.channels = 4;
    TrainConfig cfg;
    cfg.total_frames = 0;
    cfg.seed = 99;
    auto result = train(s, factory, cfg);
    PolicyNet fresh(s, 99);
    CHECK(result.net.params() == fresh.params());
    CHECK(result.log.empty());
}

TEST_CASE("train: fixed seed reproduces bit-identical nets and logs") {
    std::vector<io::StreamPtr> streams{io::synth_scene(io::WorldKind::RoiWorld, 5, 24, 64, 64),
                                       io::synth_scene(io::WorldKind::RoiWorld, 6, 24, 64, 64)};
    env::EnvConfig ec;
    ec.target_bitrate = 40000;
    ec.gop = 12;
    ec.coarsen = 2;
    EnvFactory factory = [streams, ec](int e, int64_t ep) {
        return env::Environment(streams[(e + ep) % streams.size()], ec);
    };
    NetShape s;
    s.mb_rows = 4;
    s.mb_cols = 4;
    s.act_rows = 2;
    s.act_cols = 2;
    s.channels = 4;
    TrainConfig cfg;
    cfg.n_envs = 2;
    cfg.horizon = 16;
    cfg.total_frames = 64;  // 2 iterations
    cfg.minibatch = 16;
    cfg.epochs = 2;
    cfg.seed = 7;

    auto r1 = train(s, factory, cfg);
    auto r2 = train(s, factory, cfg);
    CHECK(r1.net.params() == r2.net.params());
    REQUIRE(r1.log.size() == r2.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].mean_reward == r2.log[i].mean_reward);
        CHECK(r1.log[i].losses.total == r2.log[i].losses.total);
    }
}
