#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cdra/embedding.hpp"

namespace cdra {

inline constexpr std::size_t kLeaveOneOutCandidates = 1000;

// Candidates sorted by descending u_hat . v, ties by ascending item index.
// When expected_size is set the candidate count must match it exactly.
std::vector<Index> rank_candidates(const Vector& u_hat, const EmbeddingTable& table,
                                   std::span<const Index> candidates,
                                   std::optional<std::size_t> expected_size = kLeaveOneOutCandidates);

// 1-based position of `item` in a ranked list.
std::size_t rank_of(std::span<const Index> ranked, Index item);

// 1-based rank of the positive among {positive} + negatives under the same
// ordering as rank_candidates, without sorting.
std::size_t positive_rank(const Vector& u_hat, const EmbeddingTable& table, Index positive,
                          std::span<const Index> negatives);

double hr_at_k(std::size_t rank, std::size_t k);
double ndcg_at_k(std::size_t rank, std::size_t k);
double mrr(std::size_t rank);

struct RankingMetrics {
    std::map<std::size_t, double> hr;
    std::map<std::size_t, double> ndcg;
    double mrr = 0.0;
    std::size_t n_users = 0;
};

// Means of the per-user metrics over the given ranks.
RankingMetrics aggregate_ranks(std::span<const std::size_t> ranks, std::span<const std::size_t> ks);

// Mean of two cohorts' metrics, each cohort weighted equally.
RankingMetrics macro_average(const RankingMetrics& a, const RankingMetrics& b);

}  // namespace cdra
