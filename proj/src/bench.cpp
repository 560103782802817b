#include "qprl/bench.hpp"

#include <cmath>
#include <stdexcept>

namespace qprl::eval {

BenchmarkSpec roi_benchmark() {
    BenchmarkSpec b;
    b.world = io::WorldKind::RoiWorld;
    b.train_seeds = {1, 2, 3, 4, 5, 6, 7, 8};
    b.heldout_seeds = {101, 102, 103, 104};
    b.targets = {60000, 100000, 160000, 260000};
    b.env.task = tasks::TaskKind::Roi;
    b.env.lambda = 20.0;
    b.env.coarsen = 2;
    b.train.n_envs = 8;
    b.train.horizon = 128;
    b.train.minibatch = 256;
    b.train.total_frames = 160000;
    b.train.seed = 17;
    b.task_metric = Metric::SaliencyPsnr;
    return b;
}

BenchmarkSpec detect_benchmark() {
    BenchmarkSpec b = roi_benchmark();
    b.world = io::WorldKind::CarWorld;
    b.env.task = tasks::TaskKind::Detect;
    b.env.lambda = 20.0;
    b.train.seed = 23;
    b.task_metric = Metric::Precision;
    return b;
}

std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::Full: return "full";
        case Arm::NoRewardInfo: return "no_reward_info";
        case Arm::GammaZero: return "gamma_zero";
    }
    return "unknown";
}

rl::TrainConfig arm_config(const BenchmarkSpec& bench, Arm arm) {
    rl::TrainConfig c = bench.train;
    if (arm == Arm::NoRewardInfo) c.aux_coef = 0.0;
    if (arm == Arm::GammaZero) c.gamma = 0.0;
    return c;
}

namespace {

std::vector<io::StreamPtr> make_streams(const BenchmarkSpec& b,
                                        const std::vector<uint64_t>& seeds) {
    std::vector<io::StreamPtr> out;
    out.reserve(seeds.size());
    for (uint64_t s : seeds)
        out.push_back(io::synth_scene(b.world, s, b.frames, b.width, b.height, b.fps));
    return out;
}

}  // namespace

std::vector<io::StreamPtr> train_streams(const BenchmarkSpec& b) {
    return make_streams(b, b.train_seeds);
}

std::vector<io::StreamPtr> heldout_streams(const BenchmarkSpec& b) {
    return make_streams(b, b.heldout_seeds);
}

rl::NetShape net_shape(const BenchmarkSpec& b, int coarsen_override) {
    const int coarsen = coarsen_override > 0 ? coarsen_override : b.env.coarsen;
    rl::NetShape s;
    s.mb_rows = b.height / kMbSize;
    s.mb_cols = b.width / kMbSize;
    s.act_rows = (s.mb_rows + coarsen - 1) / coarsen;
    s.act_cols = (s.mb_cols + coarsen - 1) / coarsen;
    return s;
}

rl::EnvFactory make_env_factory(const BenchmarkSpec& bench, std::vector<io::StreamPtr> streams,
                                const rl::TrainConfig& tc, int coarsen_override) {
    if (streams.empty()) throw std::invalid_argument("make_env_factory: no streams");
    env::EnvConfig base = bench.env;
    if (coarsen_override > 0) base.coarsen = coarsen_override;
    std::vector<double> targets = bench.targets;
    const uint64_t mix = tc.seed * 0x9e3779b97f4a7c15ull;
    const int n_envs = tc.n_envs;
    return [streams = std::move(streams), targets, base, mix, n_envs](int env_idx,
                                                                      int64_t episode) {
        uint64_t combo = static_cast<uint64_t>(env_idx) +
                         static_cast<uint64_t>(episode) * static_cast<uint64_t>(n_envs);
        uint64_t x = combo ^ mix;
        uint64_t h = Rng::splitmix64(x);
        env::EnvConfig cfg = base;
        cfg.target_bitrate = targets[(h >> 32) % targets.size()];
        return env::Environment(streams[h % streams.size()], cfg);
    };
}

rl::TrainResult train_arm(const BenchmarkSpec& bench, Arm arm, const std::string& outdir,
                          int coarsen_override) {
    rl::TrainConfig tc = arm_config(bench, arm);
    rl::EnvFactory factory =
        make_env_factory(bench, train_streams(bench), tc, coarsen_override);
    rl::TrainHooks hooks;
    if (!outdir.empty()) {
        hooks.metrics_csv = outdir + "/metrics_" + arm_name(arm) + ".csv";
        hooks.checkpoint_dir = outdir;
    }
    return rl::train(net_shape(bench, coarsen_override), factory, tc, hooks);
}

BdSummary evaluate_bd(const BenchmarkSpec& bench, const rl::PolicyNet& policy, Metric metric,
                      int coarsen_override) {
    env::EnvConfig cfg = bench.env;
    if (coarsen_override > 0) cfg.coarsen = coarsen_override;
    BdSummary out;
    out.metric = metric;
    for (const auto& stream : heldout_streams(bench)) {
        RdCurve ref = rd_curve(stream, cfg, bench.targets, metric, nullptr, "baseline");
        RdCurve test = rd_curve(stream, cfg, bench.targets, metric, &policy, "agent");
        BdResult bd = bd_rate(ref, test);
        if (!bd.valid) out.all_valid = false;
        out.per_stream.push_back(bd.bd_rate_percent);
    }
    const size_t n = out.per_stream.size();
    for (double v : out.per_stream) out.mean += v;
    out.mean /= static_cast<double>(n);
    if (n > 1) {
        double ss = 0;
        for (double v : out.per_stream) ss += (v - out.mean) * (v - out.mean);
        out.stderr_ = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    }
    return out;
}

std::vector<AblationRow> run_ablation(const BenchmarkSpec& bench, const std::string& outdir,
                                      const rl::PolicyNet* full_net) {
    std::vector<AblationRow> rows;
    for (Arm arm : {Arm::Full, Arm::NoRewardInfo, Arm::GammaZero}) {
        if (arm == Arm::Full && full_net) {
            rows.push_back({arm, evaluate_bd(bench, *full_net, bench.task_metric)});
            continue;
        }
        rl::TrainResult r = train_arm(bench, arm, outdir);
        rows.push_back({arm, evaluate_bd(bench, r.net, bench.task_metric)});
    }
    return rows;
}

double mean_qp_kl(const BenchmarkSpec& bench, const rl::PolicyNet* policy, double target) {
    env::EnvConfig cfg = bench.env;
    cfg.target_bitrate = target;
    double sum = 0;
    int64_t count = 0;
    for (const auto& stream : heldout_streams(bench)) {
        if (stream->saliency.empty())
            throw std::invalid_argument("mean_qp_kl: benchmark world has no saliency");
        EpisodeMetrics em = run_episode(stream, cfg, policy, /*keep_qp_maps=*/true);
        for (size_t t = 0; t < em.qp_maps.size(); ++t) {
            sum += qp_map_kl(em.qp_maps[t], downsample_to_blocks(stream->saliency[t]));
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

}  // namespace qprl::eval
