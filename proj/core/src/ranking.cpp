#include "cdra/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cdra/error.hpp"

namespace cdra {

namespace {

void check_item(const EmbeddingTable& table, Index i) {
    if (i < 0 || static_cast<std::size_t>(i) >= table.num_items())
        throw Error(ErrorCode::OutOfRange, "candidate item " + std::to_string(i));
}

void check_query(const Vector& u_hat, const EmbeddingTable& table) {
    if (static_cast<std::size_t>(u_hat.size()) != table.dim())
        throw Error(ErrorCode::DimensionMismatch, "query has dim " + std::to_string(u_hat.size()) + ", table has " +
                                                      std::to_string(table.dim()));
}

}  // namespace

std::vector<Index> rank_candidates(const Vector& u_hat, const EmbeddingTable& table,
                                   std::span<const Index> candidates, std::optional<std::size_t> expected_size) {
    check_query(u_hat, table);
    if (expected_size && candidates.size() != *expected_size)
        throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(*expected_size) + " candidates, got " +
                                                    std::to_string(candidates.size()));
    std::vector<std::pair<double, Index>> scored;
    scored.reserve(candidates.size());
    std::unordered_set<Index> seen;
    for (Index i : candidates) {
        check_item(table, i);
        if (!seen.insert(i).second)
            throw Error(ErrorCode::InvalidArgument, "duplicate candidate " + std::to_string(i));
        scored.emplace_back(table.items().row(i).dot(u_hat.transpose()), i);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    std::vector<Index> ranked;
    ranked.reserve(scored.size());
    for (const auto& s : scored) ranked.push_back(s.second);
    return ranked;
}

std::size_t rank_of(std::span<const Index> ranked, Index item) {
    auto it = std::find(ranked.begin(), ranked.end(), item);
    if (it == ranked.end()) throw Error(ErrorCode::InvalidArgument, "item not in ranked list");
    return static_cast<std::size_t>(it - ranked.begin()) + 1;
}

std::size_t positive_rank(const Vector& u_hat, const EmbeddingTable& table, Index positive,
                          std::span<const Index> negatives) {
    check_query(u_hat, table);
    check_item(table, positive);
    const double pos_score = table.items().row(positive).dot(u_hat.transpose());
    std::size_t rank = 1;
    for (Index j : negatives) {
        check_item(table, j);
        if (j == positive) throw Error(ErrorCode::InvalidArgument, "positive item listed among negatives");
        const double s = table.items().row(j).dot(u_hat.transpose());
        if (s > pos_score || (s == pos_score && j < positive)) ++rank;
    }
    return rank;
}

double hr_at_k(std::size_t rank, std::size_t k) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "K must be at least 1");
    if (rank < 1) throw Error(ErrorCode::InvalidArgument, "rank must be at least 1");
    return rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(std::size_t rank, std::size_t k) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "K must be at least 1");
    if (rank < 1) throw Error(ErrorCode::InvalidArgument, "rank must be at least 1");
    return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double mrr(std::size_t rank) {
    if (rank < 1) throw Error(ErrorCode::InvalidArgument, "rank must be at least 1");
    return 1.0 / static_cast<double>(rank);
}

RankingMetrics aggregate_ranks(std::span<const std::size_t> ranks, std::span<const std::size_t> ks) {
    if (ranks.empty()) throw Error(ErrorCode::InvalidArgument, "empty evaluation cohort");
    RankingMetrics m;
    m.n_users = ranks.size();
    const double n = static_cast<double>(ranks.size());
    for (std::size_t k : ks) {
        double hr = 0.0;
        double ndcg = 0.0;
        for (std::size_t r : ranks) {
            hr += hr_at_k(r, k);
            ndcg += ndcg_at_k(r, k);
        }
        m.hr[k] = hr / n;
        m.ndcg[k] = ndcg / n;
    }
    double rr = 0.0;
    for (std::size_t r : ranks) rr += mrr(r);
    m.mrr = rr / n;
    return m;
}

RankingMetrics macro_average(const RankingMetrics& a, const RankingMetrics& b) {
    RankingMetrics m;
    m.n_users = a.n_users + b.n_users;
    for (const auto& [k, v] : a.hr) m.hr[k] = 0.5 * (v + b.hr.at(k));
    for (const auto& [k, v] : a.ndcg) m.ndcg[k] = 0.5 * (v + b.ndcg.at(k));
    m.mrr = 0.5 * (a.mrr + b.mrr);
    return m;
}

}  // namespace cdra
