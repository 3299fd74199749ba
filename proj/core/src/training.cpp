#include "cdra/training.hpp"

#include "cdra/error.hpp"
#include "cdra/ranking.hpp"

namespace cdra {

void OptimHyper::validate() const {
    if (batch_size < 2) throw Error(ErrorCode::InvalidArgument, "batch_size must be at least 2");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lr_decay must lie in (0, 1]");
    if (max_epochs < 1) throw Error(ErrorCode::InvalidArgument, "max_epochs must be positive");
    if (min_steps_per_epoch < 1) throw Error(ErrorCode::InvalidArgument, "min_steps_per_epoch must be positive");
}

std::optional<ValidationScore> validation_score(const TransferFn& transfer, const EmbeddingTable& table_x,
                                                const EmbeddingTable& table_y, const CdrSplit& split,
                                                std::optional<Direction> only) {
    double hr = 0.0;
    double rr = 0.0;
    std::size_t n = 0;
    for (auto direction : {Direction::XtoY, Direction::YtoX}) {
        if (only && *only != direction) continue;
        const auto& source = source_of(direction) == Domain::X ? table_x : table_y;
        const auto& target = source_of(direction) == Domain::X ? table_y : table_x;
        for (const auto& rec : split.records(Cohort::Validation, direction)) {
            if (rec.negatives.empty()) return std::nullopt;
            const Vector u_hat = transfer(direction, source.user(rec.source_user));
            const auto rank = positive_rank(u_hat, target, rec.positive, rec.negatives);
            hr += hr_at_k(rank, 10);
            rr += mrr(rank);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return ValidationScore{hr / static_cast<double>(n), rr / static_cast<double>(n)};
}

Matrix gather_users(const EmbeddingTable& table, std::span<const Index> users) {
    Matrix out(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(table.dim()));
    for (std::size_t r = 0; r < users.size(); ++r) {
        const Index u = users[r];
        if (u < 0 || static_cast<std::size_t>(u) >= table.num_users())
            throw Error(ErrorCode::UnknownUser, "user index " + std::to_string(u) + " in '" + table.domain_id() + "'");
        out.row(static_cast<Eigen::Index>(r)) = table.users().row(u);
    }
    return out;
}

}  // namespace cdra
