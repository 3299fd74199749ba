#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdra/embedding.hpp"
#include "cdra/ranking.hpp"
#include "cdra/split.hpp"
#include "cdra/training.hpp"

namespace cdra {

inline constexpr std::size_t kDefaultKs[] = {10, 20};

struct ColdStartReport {
    RankingMetrics xy;
    RankingMetrics yx;
    RankingMetrics macro;
};

// Leave-one-out ranking of each cohort user's held-out positive against the
// stored negatives, using the transferred representation as the query.
// Per-user ranks are computed on `threads` workers (0 = hardware
// concurrency) and merged in record order, so results do not depend on the
// thread count.
ColdStartReport evaluate_cold_start(const TransferFn& transfer, const EmbeddingTable& table_x,
                                    const EmbeddingTable& table_y, const CdrSplit& split,
                                    std::span<const std::size_t> ks = kDefaultKs, Cohort cohort = Cohort::Test,
                                    std::size_t threads = 1);

// Same evaluation with the query vectors supplied directly; row r of each
// matrix is the query for record r of that direction.
ColdStartReport evaluate_queries(const Matrix& queries_xy, const Matrix& queries_yx, const EmbeddingTable& table_x,
                                 const EmbeddingTable& table_y, const CdrSplit& split,
                                 std::span<const std::size_t> ks = kDefaultKs, Cohort cohort = Cohort::Test,
                                 std::size_t threads = 1);

// Transferred representations of the records' source users, one row each.
Matrix transfer_queries(const TransferFn& transfer, const EmbeddingTable& source,
                        const std::vector<ColdStartRecord>& records, Direction direction);

// Ranks of the held-out positives, in record order.
std::vector<std::size_t> cold_start_ranks(const Matrix& queries, const EmbeddingTable& target,
                                          const std::vector<ColdStartRecord>& records, std::size_t threads = 1);

// Mean Euclidean distance between paired rows.
double avg_latent_distance(const Matrix& inferred, const Matrix& ground_truth);

struct KlResult {
    double value = 0.0;
    std::size_t floored_dims = 0;  // dimensions whose variance was raised to the floor
};

// Fits a diagonal Gaussian (population variance) to each row set and returns
// the per-dimension Gaussian KL summed over dimensions, averaged over
// KL(specific || shared) and KL(shared || specific).
KlResult kl_disentanglement(const Matrix& specific, const Matrix& shared, double variance_floor = 1e-8);

}  // namespace cdra
