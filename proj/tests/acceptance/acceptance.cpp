// Acceptance suite: one PASS/FAIL line per criterion with the measured
// values next to their limits. Exit status is 0 only when every criterion
// passes, unless --exit-zero is given.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdra/pipeline.hpp"
#include "cdra/ranking.hpp"
#include "cdra/synthetic.hpp"
#include "checks.hpp"
#include "cli/config.hpp"
#include "cli/stages.hpp"
#include "temp_dir.hpp"

using namespace cdra;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientSeconds = 10.0;
constexpr std::size_t kMetricInstances = 500;
constexpr std::size_t kMetricMaxCandidates = 12;
constexpr double kMetricSeconds = 5.0;
constexpr double kIdentityTolerance = 1e-10;
constexpr double kEndToEndMinHr = 0.10;
constexpr double kEndToEndRandomMultiple = 10.0;
constexpr double kEndToEndSeconds = 300.0;
constexpr double kRobustnessNoise = 0.1;
constexpr double kRobustnessSeconds = 900.0;
constexpr double kCascadeRandomMultiple = 5.0;
constexpr double kCascadeSeconds = 300.0;
constexpr double kPipelineSeconds = 300.0;
constexpr std::uint64_t kSeeds[] = {1, 2, 3};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Scenario {
    SyntheticConfig synth;
    PrepareOptions prepare;
    BprHyper bpr;
    AdapterHyper adapter;
    EmcdrHyper emcdr;
};

// The synthetic setting shared by criteria 4 to 7: 1000 users and 500 items
// per domain, half the users shared. 500 items cannot supply 999 negatives
// beside a user's positives, so the negative count is clamped to the pool.
Scenario scenario(std::uint64_t seed, double noise_std = 0.0, std::size_t domains = 2) {
    Scenario s;
    s.synth.num_domains = domains;
    s.synth.noise_std = noise_std;
    s.prepare.clamp_negatives = true;
    s.prepare.seed = seed;
    s.bpr.dim = 16;
    s.bpr.seed = seed;
    s.adapter.optim.min_steps_per_epoch = 50;
    s.adapter.optim.seed = seed;
    s.emcdr.optim.min_steps_per_epoch = 50;
    s.emcdr.optim.seed = seed;
    return s;
}

double random_hr10(std::size_t negatives) { return 10.0 / static_cast<double>(negatives + 1); }

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t instances = 0;
    auto record = [&](double e) {
        worst = std::max(worst, e);
        ++instances;
    };
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        record(testing::bpr_gradient_error(seed));
        record(testing::contrastive_gradient_error(seed));
        record(testing::scale_gradient_error(seed));
        record(testing::reconstruction_gradient_error(seed));
        record(testing::emcdr_gradient_error(seed));
        record(testing::adapter_gradient_error(seed, {1.0, 1.0, 1.0}));
    }
    const double took = seconds_since(t0);
    return {worst < kGradientTolerance && took < kGradientSeconds,
            "BPR, L1, L2, L3, EMCDR and full adapter at d=4, 5 seeds each: max relative error " + fmt("%.2e", worst) +
                " over " + std::to_string(instances) + " instances (limit " + fmt("%.0e", kGradientTolerance) +
                "); " + fmt("%.2f", took) + " s (limit " + fmt("%.0f", kGradientSeconds) + " s)"};
}

Outcome metric_oracle() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    std::size_t mismatches = 0;
    for (std::size_t trial = 0; trial < kMetricInstances; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(kMetricMaxCandidates - 1);
        Matrix items(static_cast<Eigen::Index>(n), 2);
        for (Eigen::Index i = 0; i < items.rows(); ++i)
            for (Eigen::Index c = 0; c < 2; ++c) items(i, c) = static_cast<double>(rng.uniform_index(3));
        const EmbeddingTable table("T", Matrix::Ones(1, 2), items);
        std::vector<Index> candidates(n);
        for (std::size_t i = 0; i < n; ++i) candidates[i] = static_cast<Index>(i);
        rng.shuffle(candidates);
        const Index positive = candidates[rng.uniform_index(n)];
        Vector u(2);
        for (Eigen::Index c = 0; c < 2; ++c) u(c) = static_cast<double>(rng.uniform_index(4)) - 1.0;
        std::vector<double> scores;
        std::vector<Index> negatives;
        for (Index c : candidates) {
            scores.push_back((items.row(c) * u)(0));
            if (c != positive) negatives.push_back(c);
        }
        const auto expected = testing::naive_rank(scores, candidates, positive);
        const auto rank = positive_rank(u, table, positive, negatives);
        bool same = rank == expected && rank_of(rank_candidates(u, table, candidates, std::nullopt), positive) == expected;
        for (std::size_t k : {1, 5, 10})
            same = same && hr_at_k(rank, k) == testing::naive_hr(expected, k) &&
                   ndcg_at_k(rank, k) == testing::naive_ndcg(expected, k);
        same = same && mrr(rank) == testing::naive_mrr(expected);
        if (!same) ++mismatches;
    }
    const double took = seconds_since(t0);
    return {mismatches == 0 && took < kMetricSeconds,
            std::to_string(mismatches) + " mismatches against the full-sort reference over " +
                std::to_string(kMetricInstances) + " instances with <= " + std::to_string(kMetricMaxCandidates) +
                " candidates (exact equality required); " + fmt("%.2f", took) + " s (limit " +
                fmt("%.0f", kMetricSeconds) + " s)"};
}

Outcome loss_identities() {
    Rng rng(7);
    const Matrix x = testing::random_matrix(rng, 6, 4), y = testing::random_matrix(rng, 6, 4);

    // Identity networks round-trip exactly.
    auto id = identity_adapter(4, 8, 0.2, {0.0, 0.0, 1.0});
    const double l3 = adapter_loss(id, {x, y, Matrix(0, 4), Matrix(0, 4)}).l3;

    // F1 = (A, b) and F2 = its inverse, with y = F1(x) exactly up to rounding.
    AffineMap f1 = AffineMap::identity(4);
    f1.alpha += 0.3 * testing::random_matrix(rng, 4, 4);
    f1.beta = testing::random_vector(rng, 4);
    AffineMap f2 = AffineMap::identity(4);
    f2.alpha = f1.alpha.inverse();
    f2.beta = -(f2.alpha * f1.beta);
    const double l2 = scale_alignment_loss(x, apply(f1, x), f1, f2);

    // Positive per-row rescaling leaves the cosine-based loss unchanged.
    Vector scales(6);
    for (Eigen::Index i = 0; i < 6; ++i) scales(i) = std::exp(2.0 * rng.normal());
    const Matrix xs = scales.asDiagonal() * x;
    const double l1_shift = std::abs(contrastive_loss(xs, y, 0.2) - contrastive_loss(x, y, 0.2));

    // Weighted total equals the weighted sum of the unweighted components.
    const auto p = testing::random_adapter(4, 9);
    const AdapterBatch batch{x, y, testing::random_matrix(rng, 2, 4), testing::random_matrix(rng, 2, 4)};
    double linear_gap = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto q = p;
        q.lambdas = {3.0 * rng.uniform01(), 3.0 * rng.uniform01(), 3.0 * rng.uniform01()};
        const auto b = adapter_loss(q, batch);
        const double expected = q.lambdas.l1 * b.l1 + q.lambdas.l2 * b.l2 + q.lambdas.l3 * b.l3;
        linear_gap = std::max(linear_gap, std::abs(b.total - expected));
    }
    const bool pass = l3 == 0.0 && l2 < kIdentityTolerance && l1_shift < kIdentityTolerance &&
                      linear_gap < kIdentityTolerance;
    return {pass, "L3 at identity round trip = " + fmt("%.1e", l3) + " (exact 0); L2 at inverse affine pair = " +
                      fmt("%.1e", l2) + "; L1 change under row rescaling = " + fmt("%.1e", l1_shift) +
                      "; total-loss linearity gap = " + fmt("%.1e", linear_gap) + " (limit " +
                      fmt("%.0e", kIdentityTolerance) + ")"};
}

struct PairRun {
    double adapter_hr10 = 0.0;
    double emcdr_hr10 = 0.0;
    double adapter_distance = 0.0;
    double emcdr_distance = 0.0;
    double adapter_kl = 0.0;
    double emcdr_kl = 0.0;
    std::size_t negatives = 0;
    bool frozen_intact = false;
    double seconds = 0.0;
};

PairRun pair_run(std::uint64_t seed) {
    const auto t0 = Clock::now();
    const auto s = scenario(seed);
    const auto synth = generate_synthetic(s.synth, seed);
    const auto data = prepare_pair(synth.datasets[0], synth.datasets[1], s.prepare);
    const auto tables = pretrain_pair(data, s.bpr);
    const auto hx = content_hash(tables.x), hy = content_hash(tables.y);
    const auto adapter = train_adapter(tables.x, tables.y, data.split, s.adapter);
    const auto emcdr = train_emcdr_pair(tables, data.split, s.emcdr);
    PairRun r;
    r.frozen_intact = content_hash(tables.x) == hx && content_hash(tables.y) == hy;
    r.negatives = data.split.num_negatives;
    const auto ta = adapter_transfer_fn(adapter);
    const auto te = emcdr_transfer_fn(emcdr.xy, emcdr.yx);
    r.adapter_hr10 = evaluate_cold_start(ta, tables.x, tables.y, data.split).macro.hr.at(10);
    r.emcdr_hr10 = evaluate_cold_start(te, tables.x, tables.y, data.split).macro.hr.at(10);
    const auto targets = oracle_targets(data, tables, s.bpr);
    const auto aa = analyze_method("adapter", ta, adapter_shared_fn(adapter), data, tables, targets);
    const auto ae = analyze_method("emcdr", te, emcdr_shared_fn(emcdr), data, tables, targets);
    r.adapter_distance = aa.avg_distance;
    r.emcdr_distance = ae.avg_distance;
    r.adapter_kl = aa.kl.value;
    r.emcdr_kl = ae.kl.value;
    r.seconds = seconds_since(t0);
    return r;
}

Outcome end_to_end(const PairRun& r) {
    const double random = random_hr10(r.negatives);
    const double need = std::max(kEndToEndMinHr, kEndToEndRandomMultiple * random);
    const bool hr_ok = r.adapter_hr10 >= need;
    const bool dist_ok = r.adapter_distance < r.emcdr_distance;
    const bool time_ok = r.seconds < kEndToEndSeconds;
    return {hr_ok && dist_ok && time_ok,
            "seed 1, " + std::to_string(r.negatives) + " negatives (random HR@10 " + fmt("%.4f", random) +
                "): adapter HR@10 " + fmt("%.3f", r.adapter_hr10) + " vs required " + fmt("%.3f", need) +
                (hr_ok ? " [ok]" : " [short]") + "; avg latent distance adapter " + fmt("%.3f", r.adapter_distance) +
                " vs EMCDR " + fmt("%.3f", r.emcdr_distance) + (dist_ok ? " [ok]" : " [not smaller]") + "; " +
                fmt("%.1f", r.seconds) + " s (limit " + fmt("%.0f", kEndToEndSeconds) + " s)"};
}

Outcome overlap_robustness() {
    const auto t0 = Clock::now();
    std::size_t wins = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        const auto s = scenario(seed, kRobustnessNoise);
        const auto synth = generate_synthetic(s.synth, seed);
        const auto data = prepare_pair(synth.datasets[0], synth.datasets[1], s.prepare);
        const auto tables = pretrain_pair(data, s.bpr);
        const std::vector<double> etas{0.05, 1.0};
        const auto rows = overlap_sweep(data, tables, etas, s.adapter, s.emcdr);
        auto hr = [&](const char* method, double eta) {
            for (const auto& r : rows)
                if (r.method == method && r.eta == eta) return r.report.macro.hr.at(10);
            return 0.0;
        };
        auto drop = [&](const char* method) {
            const double top = hr(method, 1.0);
            return top > 0.0 ? (top - hr(method, 0.05)) / top : 0.0;
        };
        const double da = drop("adapter"), de = drop("emcdr");
        if (da < de) ++wins;
        detail += "seed " + std::to_string(seed) + ": adapter " + fmt("%.3f", da) + " vs EMCDR " + fmt("%.3f", de) +
                  (da < de ? " [ok]" : " [not smaller]") + "; ";
    }
    const double took = seconds_since(t0);
    return {wins * 2 > std::size(kSeeds) && took < kRobustnessSeconds,
            "noise_std " + fmt("%.2f", kRobustnessNoise) + ", relative HR@10 drop from eta 1.0 to 0.05: " + detail +
                std::to_string(wins) + "/3 seeds favour the adapter (majority needed); " + fmt("%.1f", took) +
                " s (limit " + fmt("%.0f", kRobustnessSeconds) + " s)"};
}

Outcome disentanglement(const std::vector<PairRun>& runs) {
    std::size_t wins = 0;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const bool ok = runs[i].adapter_kl > runs[i].emcdr_kl;
        if (ok) ++wins;
        detail += "seed " + std::to_string(kSeeds[i]) + ": adapter " + fmt("%.2f", runs[i].adapter_kl) + " vs EMCDR " +
                  fmt("%.2f", runs[i].emcdr_kl) + (ok ? " [ok]" : " [not larger]") + "; ";
    }
    return {wins * 2 > runs.size(), "symmetrized diagonal-Gaussian KL, " + detail + std::to_string(wins) + "/" +
                                        std::to_string(runs.size()) + " seeds (majority needed)"};
}

Outcome cascade_criterion() {
    const auto t0 = Clock::now();
    const std::uint64_t seed = 1;
    const auto s = scenario(seed, 0.0, 3);
    const auto synth = generate_synthetic(s.synth, seed);
    CascadeOptions o{s.prepare, s.bpr, s.adapter};
    const auto r = cascade_chain(synth.datasets[0], synth.datasets[1], synth.datasets[2], o);
    const double random = random_hr10(r.num_negatives);
    const double need = kCascadeRandomMultiple * random;
    const double hr = r.report.xy.hr.at(10);
    const double took = seconds_since(t0);
    return {hr >= need && took < kCascadeSeconds,
            "A->C through A<->B and B<->C adapters (" + std::to_string(r.bridge_ab_pairs) + " and " +
                std::to_string(r.bridge_bc_pairs) + " bridge pairs): HR@10 " + fmt("%.3f", hr) + " vs required " +
                fmt("%.3f", need) + " (5x random " + fmt("%.4f", random) + " at " + std::to_string(r.num_negatives) +
                " negatives); C->A " + fmt("%.3f", r.report.yx.hr.at(10)) + "; " + fmt("%.1f", took) + " s (limit " +
                fmt("%.0f", kCascadeSeconds) + " s)"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome contracts(const PairRun& r, const fs::path& config_path) {
    testing::TempDir a, b;
    auto cfg = cli::load_config(config_path);
    double chain_seconds = 0.0;
    for (const auto* dir : {&a, &b}) {
        cfg.out = dir->path();
        const auto t0 = Clock::now();
        cli::cmd_synth(cfg);
        cli::cmd_prepare(cfg);
        cli::cmd_pretrain(cfg);
        cli::cmd_train(cfg, cli::Method::Adapter);
        cli::cmd_evaluate(cfg, cli::Method::Adapter);
        chain_seconds = std::max(chain_seconds, seconds_since(t0));
        cli::cmd_train(cfg, cli::Method::Emcdr);
        cli::cmd_evaluate(cfg, cli::Method::Emcdr);
        cli::cmd_sweep(cfg);
        cli::cmd_analyze(cfg);
    }
    std::size_t files = 0, differing = 0;
    std::vector<std::string> stages_seen;
    for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a.path());
        ++files;
        if (!fs::exists(b.path() / rel) || slurp(entry.path()) != slurp(b.path() / rel)) ++differing;
        const auto stage = rel.begin()->string();
        if (std::find(stages_seen.begin(), stages_seen.end(), stage) == stages_seen.end()) stages_seen.push_back(stage);
    }
    const bool pass = r.frozen_intact && differing == 0 && files > 0 && stages_seen.size() == 7 &&
                      chain_seconds < kPipelineSeconds;
    return {pass, std::string("frozen backbone hashes ") + (r.frozen_intact ? "unchanged" : "CHANGED") +
                      " through training; CLI rerun of all " + std::to_string(stages_seen.size()) + " stages: " +
                      std::to_string(differing) + " of " + std::to_string(files) +
                      " files differ; synth->prepare->pretrain->train->evaluate " + fmt("%.1f", chain_seconds) + " s (limit " +
                      fmt("%.0f", kPipelineSeconds) + " s)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    bool exit_zero = false;
    std::string config = std::string(CDRA_SOURCE_DIR) + "/configs/synthetic.json";
    std::vector<int> only;
    app.add_flag("--exit-zero", exit_zero, "exit 0 even when criteria fail");
    app.add_option("--config", config, "config used for the CLI rerun check")->check(CLI::ExistingFile);
    app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
    std::vector<PairRun> runs;
    const auto need_runs = [&](std::size_t n) {
        while (runs.size() < n) runs.push_back(pair_run(kSeeds[runs.size()]));
    };

    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, gradient_suite},
        {2, metric_oracle},
        {3, loss_identities},
        {4, [&] { need_runs(1); return end_to_end(runs[0]); }},
        {5, overlap_robustness},
        {6, [&] { need_runs(3); return disentanglement(runs); }},
        {7, cascade_criterion},
        {8, [&] { need_runs(1); return contracts(runs[0], config); }},
    };
    const char* names[] = {"", "gradient suite", "metric oracle", "loss identities", "synthetic end-to-end",
                           "overlap robustness", "disentanglement direction", "cascade", "contracts"};

    std::size_t passed = 0, run = 0;
    for (const auto& [id, check] : criteria) {
        if (!wanted(id)) continue;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        ++run;
        if (o.pass) ++passed;
        std::printf("criterion %d %-26s %s  %s\n", id, names[id], o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("summary: %zu/%zu criteria passed\n", passed, run);
    return (passed == run || exit_zero) ? 0 : 1;
}
