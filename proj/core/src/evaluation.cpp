#include "cdra/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "cdra/error.hpp"
#include "cdra/losses.hpp"

namespace cdra {

Matrix transfer_queries(const TransferFn& transfer, const EmbeddingTable& source,
                        const std::vector<ColdStartRecord>& records, Direction direction) {
    Matrix out(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(source.dim()));
    for (std::size_t r = 0; r < records.size(); ++r) {
        const Vector q = transfer(direction, source.user(records[r].source_user));
        if (q.size() != out.cols()) throw Error(ErrorCode::DimensionMismatch, "transfer changed dimension");
        out.row(static_cast<Eigen::Index>(r)) = q.transpose();
    }
    return out;
}

std::vector<std::size_t> cold_start_ranks(const Matrix& queries, const EmbeddingTable& target,
                                          const std::vector<ColdStartRecord>& records, std::size_t threads) {
    if (static_cast<std::size_t>(queries.rows()) != records.size())
        throw Error(ErrorCode::DimensionMismatch, "one query row per record required");
    std::vector<std::size_t> ranks(records.size(), 0);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const auto& rec = records[r];
            if (rec.negatives.empty())
                throw Error(ErrorCode::InvalidArgument, "cold-start record without negatives");
            const Vector q = queries.row(static_cast<Eigen::Index>(r)).transpose();
            ranks[r] = positive_rank(q, target, rec.positive, rec.negatives);
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(1, records.size()));
    if (threads <= 1) {
        work(0, records.size());
        return ranks;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (records.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = std::min(records.size(), t * chunk);
        const std::size_t end = std::min(records.size(), begin + chunk);
        pool.emplace_back([&, t, begin, end] {
            try {
                work(begin, end);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return ranks;
}

ColdStartReport evaluate_queries(const Matrix& queries_xy, const Matrix& queries_yx, const EmbeddingTable& table_x,
                                 const EmbeddingTable& table_y, const CdrSplit& split,
                                 std::span<const std::size_t> ks, Cohort cohort, std::size_t threads) {
    const auto& xy = split.records(cohort, Direction::XtoY);
    const auto& yx = split.records(cohort, Direction::YtoX);
    if (xy.empty() && yx.empty()) throw Error(ErrorCode::InvalidArgument, "empty test cohort");
    ColdStartReport report;
    const auto ranks_xy = cold_start_ranks(queries_xy, table_y, xy, threads);
    const auto ranks_yx = cold_start_ranks(queries_yx, table_x, yx, threads);
    if (!xy.empty()) report.xy = aggregate_ranks(ranks_xy, ks);
    if (!yx.empty()) report.yx = aggregate_ranks(ranks_yx, ks);
    if (xy.empty()) report.macro = report.yx;
    else if (yx.empty()) report.macro = report.xy;
    else report.macro = macro_average(report.xy, report.yx);
    return report;
}

ColdStartReport evaluate_cold_start(const TransferFn& transfer, const EmbeddingTable& table_x,
                                    const EmbeddingTable& table_y, const CdrSplit& split,
                                    std::span<const std::size_t> ks, Cohort cohort, std::size_t threads) {
    const auto& xy = split.records(cohort, Direction::XtoY);
    const auto& yx = split.records(cohort, Direction::YtoX);
    return evaluate_queries(transfer_queries(transfer, table_x, xy, Direction::XtoY),
                            transfer_queries(transfer, table_y, yx, Direction::YtoX), table_x, table_y, split, ks,
                            cohort, threads);
}

double avg_latent_distance(const Matrix& inferred, const Matrix& ground_truth) {
    if (inferred.rows() != ground_truth.rows() || inferred.cols() != ground_truth.cols())
        throw Error(ErrorCode::DimensionMismatch, "inferred and ground-truth matrices differ in shape");
    return mean_row_distance(ground_truth, inferred);
}

KlResult kl_disentanglement(const Matrix& specific, const Matrix& shared, double variance_floor) {
    if (specific.cols() != shared.cols())
        throw Error(ErrorCode::DimensionMismatch, "representation sets differ in width");
    if (specific.rows() < 2 || shared.rows() < 2)
        throw Error(ErrorCode::InvalidArgument, "each set needs at least two rows");

    KlResult result;
    auto moments = [&](const Matrix& m, Vector& mean, Vector& var) {
        mean = m.colwise().mean().transpose();
        var = (m.rowwise() - mean.transpose()).cwiseAbs2().colwise().mean().transpose();
        for (Eigen::Index c = 0; c < var.size(); ++c) {
            if (var(c) < variance_floor) {
                var(c) = variance_floor;
                ++result.floored_dims;
            }
        }
    };
    Vector mu_a, var_a, mu_b, var_b;
    moments(specific, mu_a, var_a);
    moments(shared, mu_b, var_b);

    // KL(N(m1, v1) || N(m2, v2)) per dimension
    auto kl = [](const Vector& m1, const Vector& v1, const Vector& m2, const Vector& v2) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m1.size(); ++c) {
            const double d = m1(c) - m2(c);
            sum += 0.5 * (std::log(v2(c) / v1(c)) + (v1(c) + d * d) / v2(c) - 1.0);
        }
        return sum;
    };
    result.value = 0.5 * (kl(mu_a, var_a, mu_b, var_b) + kl(mu_b, var_b, mu_a, var_a));
    return result;
}

}  // namespace cdra
