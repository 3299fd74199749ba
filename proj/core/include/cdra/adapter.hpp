#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdra/embedding.hpp"
#include "cdra/losses.hpp"
#include "cdra/network.hpp"
#include "cdra/split.hpp"
#include "cdra/training.hpp"

namespace cdra {

struct AdapterHyper {
    OptimHyper optim;
    double tau = 0.2;
    Lambdas lambdas;
    bool diagonal_scale = false;
    // Adds each domain's non-paired training users to the reconstruction term.
    bool reconstruct_domain_users = true;

    void validate() const;
};

// Per-domain priors into the aligned space, per-domain decoders back into
// each backbone's space, and the two affine scale maps used by the scale
// alignment term. All maps are d -> d.
struct AdapterParams {
    FeedForward prior_x;
    FeedForward prior_y;
    FeedForward decoder_x;
    FeedForward decoder_y;
    AffineMap f1;  // aligned X -> aligned Y
    AffineMap f2;  // aligned Y -> aligned X
    double tau = 0.2;
    Lambdas lambdas;

    std::size_t dim() const { return prior_x.input_dim(); }
    const FeedForward& prior(Domain d) const { return d == Domain::X ? prior_x : prior_y; }
    const FeedForward& decoder(Domain d) const { return d == Domain::X ? decoder_x : decoder_y; }

    friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

AdapterParams init_adapter(std::size_t dim, const AdapterHyper& hyper);

// Identity priors and decoders (activation disabled), identity scale maps.
AdapterParams identity_adapter(std::size_t dim, std::size_t hidden, double tau = 0.2, Lambdas lambdas = {});

AdapterParams zeros_like(const AdapterParams& p);

// Trainable blocks in a fixed order; tau and lambdas are excluded.
std::vector<ParamBlock> parameter_blocks(AdapterParams& p);

// Throws when shapes disagree, tau <= 0, a lambda is negative or any
// weight is non-finite.
void check_adapter(const AdapterParams& p);

Vector prior_forward(const AdapterParams& p, Domain domain, const Vector& u);
Vector decoder_forward(const AdapterParams& p, Domain domain, const Vector& u_prime);

// One optimization batch. Rows of x and y are the same overlapping users;
// x_extra / y_extra (possibly empty) only enter the reconstruction term.
struct AdapterBatch {
    Matrix x;
    Matrix y;
    Matrix x_extra;
    Matrix y_extra;
};

// Weighted objective on a batch; accumulates parameter gradients of the
// total into `grad` when given (it must have the shapes of `p`).
LossBreakdown adapter_loss(const AdapterParams& p, const AdapterBatch& batch, AdapterParams* grad = nullptr);

// Trains only the adapter; both tables must be frozen and are never
// modified. Returns the parameters of the best validation epoch.
AdapterParams train_adapter(const EmbeddingTable& table_x, const EmbeddingTable& table_y, const CdrSplit& split,
                            const AdapterHyper& hyper, TrainingLog* log = nullptr);

// decoder_target(prior_source(u))
Vector transfer_vector(const AdapterParams& p, const Vector& u, Direction direction);

Vector transfer(const AdapterParams& p, const EmbeddingTable& table_x, const EmbeddingTable& table_y, Index user,
                Domain source, Domain target);

TransferFn adapter_transfer_fn(const AdapterParams& p);

// Chains two adapters trained on A<->B and B<->C. Forward runs A->B->C;
// Backward runs C->B->A.
enum class CascadeRoute { Forward, Backward };

Vector cascade(const AdapterParams& p_ab, const AdapterParams& p_bc, const Vector& u,
               CascadeRoute route = CascadeRoute::Forward);

// "CDAP" container: u32 version, u32 dim, f64 tau, 3 x f64 lambdas, then the
// prior/decoder networks (X, Y order) and the two scale maps.
std::vector<std::uint8_t> serialize(const AdapterParams& p);
AdapterParams deserialize_adapter(std::span<const std::uint8_t> bytes);
void save_adapter(const AdapterParams& p, const std::filesystem::path& path);
AdapterParams load_adapter(const std::filesystem::path& path);

}  // namespace cdra
