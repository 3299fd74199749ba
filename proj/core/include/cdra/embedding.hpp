#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdra/dataset.hpp"
#include "cdra/linalg.hpp"

namespace cdra {

// Per-domain user and item embeddings produced by a backbone. Once frozen,
// the mutable accessors refuse to hand out references.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::string domain_id, Matrix users, Matrix items, bool frozen = false);

    const std::string& domain_id() const { return domain_id_; }
    std::size_t num_users() const { return static_cast<std::size_t>(users_.rows()); }
    std::size_t num_items() const { return static_cast<std::size_t>(items_.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(users_.cols()); }
    bool frozen() const { return frozen_; }

    const Matrix& users() const { return users_; }
    const Matrix& items() const { return items_; }
    Vector user(Index u) const;
    Vector item(Index i) const;

    Matrix& mutable_users();
    Matrix& mutable_items();

    void freeze() { frozen_ = true; }

    friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

private:
    void check_mutable() const;

    std::string domain_id_;
    Matrix users_;
    Matrix items_;
    bool frozen_ = false;
};

EmbeddingTable freeze(EmbeddingTable table);

// Dot product of a user's and an item's embeddings.
double score(const EmbeddingTable& table, Index user, Index item);

// Binary layout (little-endian): "CDEM", u32 version, string domain_id,
// u64 num_users, u64 num_items, u32 dim, u8 frozen, then users and items as
// row-major float32.
std::vector<std::uint8_t> serialize(const EmbeddingTable& table);
EmbeddingTable deserialize_embedding(std::span<const std::uint8_t> bytes);
void save_embedding(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embedding(const std::filesystem::path& path);

// SHA-256 over the full-precision contents and the frozen flag.
std::string content_hash(const EmbeddingTable& table);

}  // namespace cdra
