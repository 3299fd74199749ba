#include <benchmark/benchmark.h>

#include <numeric>

#include "cdra/adapter.hpp"
#include "cdra/baseline.hpp"
#include "cdra/bpr.hpp"
#include "cdra/pipeline.hpp"
#include "cdra/ranking.hpp"
#include "cdra/synthetic.hpp"

using namespace cdra;

namespace {

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

const PreparedPair& fixture() {
    static const PreparedPair data = [] {
        SyntheticConfig cfg;
        const auto synth = generate_synthetic(cfg, 1);
        PrepareOptions o;
        o.clamp_negatives = true;
        o.seed = 1;
        return prepare_pair(synth.datasets[0], synth.datasets[1], o);
    }();
    return data;
}

void BM_PositiveRank(benchmark::State& state) {
    Rng rng(1);
    const auto dim = static_cast<Eigen::Index>(state.range(0));
    const EmbeddingTable table("T", gaussian(rng, 1, dim), gaussian(rng, 1000, dim));
    std::vector<Index> negatives(999);
    std::iota(negatives.begin(), negatives.end(), 1);
    const Vector u = gaussian(rng, dim, 1);
    for (auto _ : state) benchmark::DoNotOptimize(positive_rank(u, table, 0, negatives));
}
BENCHMARK(BM_PositiveRank)->Arg(16)->Arg(64);

void BM_RankCandidates(benchmark::State& state) {
    Rng rng(2);
    const EmbeddingTable table("T", gaussian(rng, 1, 64), gaussian(rng, 1000, 64));
    std::vector<Index> candidates(1000);
    std::iota(candidates.begin(), candidates.end(), 0);
    const Vector u = gaussian(rng, 64, 1);
    for (auto _ : state) benchmark::DoNotOptimize(rank_candidates(u, table, candidates));
}
BENCHMARK(BM_RankCandidates);

void BM_AdapterLoss(benchmark::State& state) {
    Rng rng(3);
    const auto dim = static_cast<std::size_t>(state.range(0));
    const auto rows = static_cast<Eigen::Index>(state.range(1));
    AdapterHyper hyper;
    hyper.optim.seed = 3;
    const auto p = init_adapter(dim, hyper);
    const auto d = static_cast<Eigen::Index>(dim);
    const AdapterBatch batch{gaussian(rng, rows, d), gaussian(rng, rows, d), gaussian(rng, rows, d),
                             gaussian(rng, rows, d)};
    auto grad = zeros_like(p);
    for (auto _ : state) benchmark::DoNotOptimize(adapter_loss(p, batch, &grad).total);
}
BENCHMARK(BM_AdapterLoss)->Args({16, 128})->Args({64, 128});

void BM_TransferVector(benchmark::State& state) {
    Rng rng(4);
    AdapterHyper hyper;
    const auto p = init_adapter(64, hyper);
    const Vector u = gaussian(rng, 64, 1);
    for (auto _ : state) benchmark::DoNotOptimize(transfer_vector(p, u, Direction::XtoY));
}
BENCHMARK(BM_TransferVector);

void BM_BprEpoch(benchmark::State& state) {
    const auto& data = fixture();
    BprHyper hyper;
    hyper.dim = static_cast<std::size_t>(state.range(0));
    hyper.epochs = 1;
    for (auto _ : state) benchmark::DoNotOptimize(train_bpr(data.x, hyper));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.x.num_interactions()));
}
BENCHMARK(BM_BprEpoch)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ColdStartEvaluation(benchmark::State& state) {
    const auto& data = fixture();
    BprHyper hyper;
    hyper.dim = 16;
    hyper.epochs = 1;
    const auto tables = pretrain_pair(data, hyper);
    AdapterHyper ah;
    const auto p = init_adapter(16, ah);
    const auto transfer = adapter_transfer_fn(p);
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_cold_start(transfer, tables.x, tables.y, data.split));
}
BENCHMARK(BM_ColdStartEvaluation)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
