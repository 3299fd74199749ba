#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cdra/adapter.hpp"
#include "cdra/baseline.hpp"
#include "cdra/bpr.hpp"
#include "cdra/dataset.hpp"
#include "cdra/evaluation.hpp"
#include "cdra/split.hpp"

namespace cdra {

// In-memory composition of the stages: filter + split + negatives, frozen
// backbones, method training, evaluation and latent-space analyses.

struct PrepareOptions {
    std::size_t min_item = 10;
    std::size_t min_user = 5;
    double coldstart_frac = 0.2;
    double eta = 1.0;
    std::size_t negatives = 999;
    // Shrinks the negative count to the smallest candidate pool instead of
    // failing when a domain has too few items.
    bool clamp_negatives = false;
    std::uint64_t seed = 0;
};

struct PreparedPair {
    InteractionDataset x;
    InteractionDataset y;
    CdrSplit split;
};

// Filters each domain, detects overlap, splits and samples negatives.
PreparedPair prepare_pair(const InteractionDataset& raw_x, const InteractionDataset& raw_y,
                          const PrepareOptions& options);

struct Backbones {
    EmbeddingTable x;
    EmbeddingTable y;
};

// Trains BPR on each domain's training view and freezes both tables.
Backbones pretrain_pair(const PreparedPair& data, const BprHyper& hyper, std::vector<double>* losses_x = nullptr,
                        std::vector<double>* losses_y = nullptr);

struct EmcdrPair {
    MappingParams xy;
    MappingParams yx;
};

EmcdrPair train_emcdr_pair(const Backbones& tables, const CdrSplit& split, const EmcdrHyper& hyper,
                           TrainingLog* log_xy = nullptr, TrainingLog* log_yx = nullptr);

struct SweepRow {
    std::string method;
    double eta = 0.0;
    ColdStartReport report;
};

// Retrains the adapter and the mapping baseline for each eta on the same
// backbones and holdout; rows are ordered by eta, adapter before baseline.
std::vector<SweepRow> overlap_sweep(const PreparedPair& data, const Backbones& tables, std::span<const double> etas,
                                    const AdapterHyper& adapter_hyper, const EmcdrHyper& emcdr_hyper,
                                    std::span<const std::size_t> ks = kDefaultKs);

// Reference target-space embedding of each test user: a user vector fitted
// against the frozen target item embeddings from all of the user's true
// target-domain interactions. Rows follow the test records.
struct OracleTargets {
    Matrix xy;
    Matrix yx;
};

OracleTargets oracle_targets(const PreparedPair& data, const Backbones& tables, const BprHyper& hyper);

struct MethodAnalysis {
    std::string method;
    double avg_distance = 0.0;
    KlResult kl;
};

// `shared(direction, u)` returns the method's cross-domain representation of
// a source-domain embedding (adapter: prior output; baseline: mapped vector).
using SharedFn = std::function<Vector(Direction, const Vector&)>;

MethodAnalysis analyze_method(const std::string& method, const TransferFn& transfer, const SharedFn& shared,
                              const PreparedPair& data, const Backbones& tables, const OracleTargets& targets);

SharedFn adapter_shared_fn(const AdapterParams& p);
SharedFn emcdr_shared_fn(const EmcdrPair& m);

// Three-domain chain A <-> B <-> C evaluated on A <-> C cold-start users
// through two composed adapters; no adapter ever sees an A-C pair. The
// A-C holdout users are also excluded from both bridge trainings.
struct CascadeOptions {
    PrepareOptions prepare;
    BprHyper bpr;
    AdapterHyper adapter;
};

struct CascadeResult {
    ColdStartReport report;  // XtoY = A -> C (forward route), YtoX = C -> A (backward route)
    std::size_t num_negatives = 0;
    std::size_t bridge_ab_pairs = 0;
    std::size_t bridge_bc_pairs = 0;
};

CascadeResult cascade_chain(const InteractionDataset& raw_a, const InteractionDataset& raw_b,
                            const InteractionDataset& raw_c, const CascadeOptions& options,
                            std::span<const std::size_t> ks = kDefaultKs);

}  // namespace cdra
