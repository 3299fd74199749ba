#include "cdra/bpr.hpp"

#include <algorithm>
#include <cmath>

#include "cdra/error.hpp"
#include "cdra/rng.hpp"

namespace cdra {

void BprHyper::validate() const {
    if (dim < 2) throw Error(ErrorCode::InvalidArgument, "bpr dim must be at least 2");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "bpr learning_rate must be positive");
    if (!(l2_reg > 0.0)) throw Error(ErrorCode::InvalidArgument, "bpr l2_reg must be positive");
    if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "bpr epochs must be positive");
    if (negatives_per_positive < 1) throw Error(ErrorCode::InvalidArgument, "bpr negatives_per_positive must be positive");
    if (!(init_std > 0.0)) throw Error(ErrorCode::InvalidArgument, "bpr init_std must be positive");
}

namespace {

// -ln sigmoid(x)
double neg_log_sigmoid(double x) { return x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Uniform item the user has not interacted with, or -1 when none exists.
Index sample_negative(Rng& rng, std::span<const Index> positives, std::size_t num_items) {
    if (positives.size() >= num_items) return -1;
    while (true) {
        const auto j = static_cast<Index>(rng.uniform_index(num_items));
        if (!std::binary_search(positives.begin(), positives.end(), j)) return j;
    }
}

void run_epochs(Matrix& users, Matrix& items, const InteractionDataset& ds, const BprHyper& hyper, Rng& rng,
                std::vector<double>* epoch_losses) {
    auto pairs = ds.interactions();
    const double lr = hyper.learning_rate;
    const double reg = hyper.l2_reg;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        rng.shuffle(pairs);
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& [u, i] : pairs) {
            const auto positives = ds.items_of(u);
            for (std::size_t s = 0; s < hyper.negatives_per_positive; ++s) {
                const Index j = sample_negative(rng, positives, ds.num_items());
                if (j < 0) continue;
                const Vector pu = users.row(u).transpose();
                const Vector vi = items.row(i).transpose();
                const Vector vj = items.row(j).transpose();
                const double x = pu.dot(vi - vj);
                total += neg_log_sigmoid(x);
                ++count;
                const double g = sigmoid(-x);
                users.row(u) += lr * (g * (vi - vj) - reg * pu).transpose();
                items.row(i) += lr * (g * pu - reg * vi).transpose();
                items.row(j) += lr * (-g * pu - reg * vj).transpose();
            }
        }
        const double mean = count > 0 ? total / static_cast<double>(count) : 0.0;
        if (!std::isfinite(mean) || !users.allFinite() || !items.allFinite())
            throw Error(ErrorCode::Divergence, "bpr training on '" + ds.domain_id() + "' diverged at epoch " +
                                                   std::to_string(epoch + 1));
        if (epoch_losses) epoch_losses->push_back(mean);
    }
}

Matrix gaussian_block(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = stddev * rng.normal();
    return m;
}

Matrix round_to_float(const Matrix& m) { return m.cast<float>().cast<double>(); }

}  // namespace

double bpr_triple_loss(const Vector& user, const Vector& pos, const Vector& neg, double reg) {
    const double x = user.dot(pos - neg);
    return neg_log_sigmoid(x) + 0.5 * reg * (user.squaredNorm() + pos.squaredNorm() + neg.squaredNorm());
}

BprGradient bpr_triple_gradient(const Vector& user, const Vector& pos, const Vector& neg, double reg) {
    const double x = user.dot(pos - neg);
    const double g = sigmoid(-x);  // d/dx of -ln sigmoid(x) is -g
    return {-g * (pos - neg) + reg * user, -g * user + reg * pos, g * user + reg * neg};
}

EmbeddingTable init_bpr_table(const InteractionDataset& ds, const BprHyper& hyper) {
    hyper.validate();
    Rng rng(derive_seed(hyper.seed, 0xb9));
    Matrix users = gaussian_block(rng, ds.num_users(), hyper.dim, hyper.init_std);
    Matrix items = gaussian_block(rng, ds.num_items(), hyper.dim, hyper.init_std);
    return EmbeddingTable(ds.domain_id(), std::move(users), std::move(items));
}

EmbeddingTable train_bpr(const InteractionDataset& ds, const BprHyper& hyper, std::vector<double>* epoch_losses) {
    if (ds.num_users() == 0 || ds.num_items() < 2 || ds.num_interactions() == 0)
        throw Error(ErrorCode::DegenerateDataset, "cannot train bpr on '" + ds.domain_id() + "'");
    auto table = init_bpr_table(ds, hyper);
    continue_bpr(table, ds, hyper, epoch_losses);
    return table;
}

void continue_bpr(EmbeddingTable& table, const InteractionDataset& ds, const BprHyper& hyper,
                  std::vector<double>* epoch_losses) {
    hyper.validate();
    Matrix& users = table.mutable_users();
    Matrix& items = table.mutable_items();
    if (static_cast<std::size_t>(users.rows()) != ds.num_users() ||
        static_cast<std::size_t>(items.rows()) != ds.num_items())
        throw Error(ErrorCode::DimensionMismatch, "table shape does not match dataset '" + ds.domain_id() + "'");
    Rng rng(derive_seed(hyper.seed, 0xb7));
    run_epochs(users, items, ds, hyper, rng, epoch_losses);
    users = round_to_float(users);
    items = round_to_float(items);
}

double mean_bpr_loss(const EmbeddingTable& table, const InteractionDataset& ds, std::uint64_t seed) {
    Rng rng(seed);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& [u, i] : ds.interactions()) {
        const Index j = sample_negative(rng, ds.items_of(u), ds.num_items());
        if (j < 0) continue;
        total += neg_log_sigmoid(table.users().row(u).dot(table.items().row(i) - table.items().row(j)));
        ++count;
    }
    return count > 0 ? total / static_cast<double>(count) : 0.0;
}

Vector fit_user_embedding(const EmbeddingTable& table, std::span<const Index> positives, const BprHyper& hyper,
                          std::uint64_t seed) {
    hyper.validate();
    std::vector<Index> sorted(positives.begin(), positives.end());
    std::sort(sorted.begin(), sorted.end());
    for (Index i : sorted) {
        if (i < 0 || static_cast<std::size_t>(i) >= table.num_items())
            throw Error(ErrorCode::OutOfRange, "item index " + std::to_string(i));
    }
    Rng rng(seed);
    Vector u(static_cast<Eigen::Index>(table.dim()));
    for (Eigen::Index c = 0; c < u.size(); ++c) u(c) = hyper.init_std * rng.normal();
    if (sorted.empty()) return u;
    std::vector<Index> order = sorted;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        rng.shuffle(order);
        for (Index i : order) {
            for (std::size_t s = 0; s < hyper.negatives_per_positive; ++s) {
                const Index j = sample_negative(rng, sorted, table.num_items());
                if (j < 0) continue;
                const Vector diff = (table.items().row(i) - table.items().row(j)).transpose();
                const double g = sigmoid(-u.dot(diff));
                u += hyper.learning_rate * (g * diff - hyper.l2_reg * u);
            }
        }
    }
    if (!u.allFinite()) throw Error(ErrorCode::Divergence, "user fit diverged");
    return u;
}

}  // namespace cdra
