#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cdra/embedding.hpp"
#include "cdra/error.hpp"
#include "cdra/losses.hpp"
#include "cdra/rng.hpp"
#include "cdra/split.hpp"

namespace cdra {

// Optimizer settings shared by the adapter and the mapping baseline.
struct OptimHyper {
    std::size_t hidden = 0;  // 0 selects 2 * dim
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;  // epochs without validation gain; 0 disables early stopping
    std::size_t min_steps_per_epoch = 1;
    double lr_decay = 1.0;  // learning rate of epoch e is learning_rate * lr_decay^(e-1)
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t hidden_for(std::size_t dim) const { return hidden == 0 ? 2 * dim : hidden; }
    double learning_rate_at(std::size_t epoch) const {
        return learning_rate * std::pow(lr_decay, static_cast<double>(epoch - 1));
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown loss;  // mean over the epoch's steps
    std::optional<double> validation_hr10;
    std::optional<double> validation_mrr;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
    std::vector<std::string> warnings;
    std::size_t best_epoch = 0;
    bool early_stopped = false;
};

// Maps a source-domain user embedding to an estimate in the target space.
using TransferFn = std::function<Vector(Direction, const Vector&)>;

struct ValidationScore {
    double hr10 = 0.0;
    double mrr = 0.0;
    bool operator>(const ValidationScore& o) const { return hr10 > o.hr10 || (hr10 == o.hr10 && mrr > o.mrr); }
};

// HR@10 and MRR over the validation cohort (both directions unless `only`
// is given); nullopt when the cohort is empty or has no negatives.
std::optional<ValidationScore> validation_score(const TransferFn& transfer, const EmbeddingTable& table_x,
                                                const EmbeddingTable& table_y, const CdrSplit& split,
                                                std::optional<Direction> only = std::nullopt);

// Stacks the selected user rows of a table.
Matrix gather_users(const EmbeddingTable& table, std::span<const Index> users);

// Endless pass-wise iteration over a shuffled list. A batch never spans two
// passes, so the last batch of a pass may be short.
template <typename T>
class BatchCycler {
public:
    BatchCycler(std::vector<T> items, std::uint64_t seed) : items_(std::move(items)), rng_(seed) {
        rng_.shuffle(items_);
    }

    std::vector<T> next(std::size_t n) {
        if (items_.empty()) return {};
        if (cursor_ == items_.size()) {
            rng_.shuffle(items_);
            cursor_ = 0;
        }
        const std::size_t take = std::min(n, items_.size() - cursor_);
        std::vector<T> out(items_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                           items_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
        cursor_ += take;
        return out;
    }

    std::size_t size() const { return items_.size(); }

private:
    std::vector<T> items_;
    Rng rng_;
    std::size_t cursor_ = 0;
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Epoch loop with validation-driven early stopping. `run_epoch(params, epoch)`
// performs one epoch of updates and returns its mean loss; `transfer_of`
// wraps parameters as a TransferFn for validation scoring. Returns the
// parameters of the best validation epoch, or the last ones when no
// validation cohort is available or patience is 0.
template <typename Params, typename EpochFn, typename TransferOf>
Params train_with_early_stopping(Params params, const OptimHyper& optim, const EmbeddingTable& table_x,
                                 const EmbeddingTable& table_y, const CdrSplit& split, EpochFn run_epoch,
                                 TransferOf transfer_of, TrainingLog* log, const std::string& what,
                                 std::optional<Direction> only = std::nullopt) {
    TrainingLog local;
    TrainingLog& out = log ? *log : local;
    std::optional<ValidationScore> best;
    Params best_params = params;
    std::size_t since_best = 0;
    bool use_validation = optim.patience > 0;
    for (std::size_t epoch = 1; epoch <= optim.max_epochs; ++epoch) {
        const LossBreakdown loss = run_epoch(params, epoch);
        if (!std::isfinite(loss.total))
            throw Error(ErrorCode::Divergence, what + " diverged at epoch " + std::to_string(epoch));
        EpochRecord rec{epoch, loss, std::nullopt, std::nullopt};
        bool stop = false;
        if (use_validation) {
            const auto score = validation_score(transfer_of(params), table_x, table_y, split, only);
            if (!score) {
                out.warnings.push_back(what + ": no scored validation cohort, early stopping disabled");
                use_validation = false;
            } else {
                rec.validation_hr10 = score->hr10;
                rec.validation_mrr = score->mrr;
                if (!best || *score > *best) {
                    best = score;
                    best_params = params;
                    out.best_epoch = epoch;
                    since_best = 0;
                } else if (++since_best >= optim.patience) {
                    stop = true;
                }
            }
        }
        out.epochs.push_back(rec);
        if (stop) {
            out.early_stopped = true;
            break;
        }
    }
    if (!best) {
        out.best_epoch = out.epochs.empty() ? 0 : out.epochs.back().epoch;
        return params;
    }
    return best_params;
}

}  // namespace cdra
