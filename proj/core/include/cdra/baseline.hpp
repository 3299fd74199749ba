#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdra/embedding.hpp"
#include "cdra/network.hpp"
#include "cdra/split.hpp"
#include "cdra/training.hpp"

namespace cdra {

// Embedding-and-mapping baseline: one feed-forward map from source user
// embeddings to target user embeddings, fitted on overlapping users.
struct MappingParams {
    FeedForward map;
    Direction direction = Direction::XtoY;

    std::size_t dim() const { return map.input_dim(); }
    friend bool operator==(const MappingParams&, const MappingParams&) = default;
};

struct EmcdrHyper {
    OptimHyper optim;
    void validate() const { optim.validate(); }
};

MappingParams init_mapping(std::size_t dim, Direction direction, const EmcdrHyper& hyper);

// Mean over rows of |map(src_i) - tgt_i|^2; accumulates into `grad` when given.
double mapping_loss(const MappingParams& m, const Matrix& source, const Matrix& target,
                    MappingParams* grad = nullptr);

MappingParams train_emcdr(const EmbeddingTable& table_x, const EmbeddingTable& table_y, const CdrSplit& split,
                          Direction direction, const EmcdrHyper& hyper, TrainingLog* log = nullptr);

// Forward pass on the source embedding of `user`. The requested direction
// must match the one the map was trained for.
Vector emcdr_transfer(const MappingParams& m, const EmbeddingTable& table_x, const EmbeddingTable& table_y,
                      Index user, Direction direction);

Vector emcdr_transfer_vector(const MappingParams& m, const Vector& u);

// Bi-directional transfer from the two single-direction maps.
TransferFn emcdr_transfer_fn(const MappingParams& xy, const MappingParams& yx);

// "CDMP" container: u32 version, u8 direction, then the network block.
std::vector<std::uint8_t> serialize(const MappingParams& m);
MappingParams deserialize_mapping(std::span<const std::uint8_t> bytes);
void save_mapping(const MappingParams& m, const std::filesystem::path& path);
MappingParams load_mapping(const std::filesystem::path& path);

}  // namespace cdra
