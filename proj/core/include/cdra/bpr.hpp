#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdra/dataset.hpp"
#include "cdra/embedding.hpp"

namespace cdra {

struct BprHyper {
    std::size_t dim = 64;
    double learning_rate = 0.05;
    double l2_reg = 1e-4;
    std::size_t epochs = 50;
    std::size_t negatives_per_positive = 1;
    double init_std = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-triple loss minimized by SGD:
//   -ln sigmoid(u.(v_pos - v_neg)) + reg/2 (|u|^2 + |v_pos|^2 + |v_neg|^2)
double bpr_triple_loss(const Vector& user, const Vector& pos, const Vector& neg, double reg);

struct BprGradient {
    Vector user;
    Vector pos;
    Vector neg;
};

BprGradient bpr_triple_gradient(const Vector& user, const Vector& pos, const Vector& neg, double reg);

// Gaussian(0, init_std) table sized for `ds`.
EmbeddingTable init_bpr_table(const InteractionDataset& ds, const BprHyper& hyper);

// Trains a fresh table. Per-epoch mean ranking loss (without the reg term)
// is appended to `epoch_losses` when given. Entries are rounded to float32
// precision on return so the binary file round-trips exactly.
EmbeddingTable train_bpr(const InteractionDataset& ds, const BprHyper& hyper,
                         std::vector<double>* epoch_losses = nullptr);

// Continues training an existing table in place. Rejects frozen tables.
void continue_bpr(EmbeddingTable& table, const InteractionDataset& ds, const BprHyper& hyper,
                  std::vector<double>* epoch_losses = nullptr);

// Mean -ln sigmoid(u.(v_pos - v_neg)) over one sampled negative per positive.
double mean_bpr_loss(const EmbeddingTable& table, const InteractionDataset& ds, std::uint64_t seed);

// Fits one user vector against the table's fixed item embeddings from the
// given positives, by the same SGD as train_bpr. The table is read-only.
Vector fit_user_embedding(const EmbeddingTable& table, std::span<const Index> positives, const BprHyper& hyper,
                          std::uint64_t seed);

}  // namespace cdra
