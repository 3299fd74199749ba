#include "cdra/embedding.hpp"

#include "cdra/binary_io.hpp"
#include "cdra/error.hpp"
#include "cdra/hash.hpp"

namespace cdra {

namespace {
constexpr char kMagic[5] = "CDEM";
constexpr std::uint32_t kVersion = 1;
}  // namespace

EmbeddingTable::EmbeddingTable(std::string domain_id, Matrix users, Matrix items, bool frozen)
    : domain_id_(std::move(domain_id)), users_(std::move(users)), items_(std::move(items)), frozen_(frozen) {
    if (users_.cols() != items_.cols())
        throw Error(ErrorCode::DimensionMismatch, "user and item embeddings differ in width");
    if (!users_.allFinite() || !items_.allFinite())
        throw Error(ErrorCode::InvalidArgument, "embedding table contains non-finite entries");
}

Vector EmbeddingTable::user(Index u) const {
    if (u < 0 || u >= users_.rows()) throw Error(ErrorCode::OutOfRange, "user index " + std::to_string(u));
    return users_.row(u).transpose();
}

Vector EmbeddingTable::item(Index i) const {
    if (i < 0 || i >= items_.rows()) throw Error(ErrorCode::OutOfRange, "item index " + std::to_string(i));
    return items_.row(i).transpose();
}

void EmbeddingTable::check_mutable() const {
    if (frozen_) throw Error(ErrorCode::FrozenViolation, "embedding table '" + domain_id_ + "' is frozen");
}

Matrix& EmbeddingTable::mutable_users() {
    check_mutable();
    return users_;
}

Matrix& EmbeddingTable::mutable_items() {
    check_mutable();
    return items_;
}

EmbeddingTable freeze(EmbeddingTable table) {
    table.freeze();
    return table;
}

double score(const EmbeddingTable& table, Index user, Index item) {
    if (user < 0 || static_cast<std::size_t>(user) >= table.num_users())
        throw Error(ErrorCode::OutOfRange, "user index " + std::to_string(user));
    if (item < 0 || static_cast<std::size_t>(item) >= table.num_items())
        throw Error(ErrorCode::OutOfRange, "item index " + std::to_string(item));
    return table.users().row(user).dot(table.items().row(item));
}

std::vector<std::uint8_t> serialize(const EmbeddingTable& table) {
    ByteWriter w;
    w.put_magic(kMagic);
    w.put_u32(kVersion);
    w.put_string(table.domain_id());
    w.put_u64(table.num_users());
    w.put_u64(table.num_items());
    w.put_u32(static_cast<std::uint32_t>(table.dim()));
    w.put_u8(table.frozen() ? 1 : 0);
    for (const Matrix* m : {&table.users(), &table.items()}) {
        for (Eigen::Index r = 0; r < m->rows(); ++r)
            for (Eigen::Index c = 0; c < m->cols(); ++c) w.put_f32(static_cast<float>((*m)(r, c)));
    }
    return w.take();
}

EmbeddingTable deserialize_embedding(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kMagic);
    if (const auto v = r.get_u32(); v != kVersion)
        throw Error(ErrorCode::Format, "unsupported embedding version " + std::to_string(v));
    auto domain = r.get_string();
    const auto n_users = r.get_u64();
    const auto n_items = r.get_u64();
    const auto dim = r.get_u32();
    const bool frozen = r.get_u8() != 0;
    auto read_block = [&](std::uint64_t rows) {
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = static_cast<double>(r.get_f32());
        return m;
    };
    Matrix users = read_block(n_users);
    Matrix items = read_block(n_items);
    r.expect_end();
    return EmbeddingTable(std::move(domain), std::move(users), std::move(items), frozen);
}

void save_embedding(const EmbeddingTable& table, const std::filesystem::path& path) {
    write_file(path, serialize(table));
}

EmbeddingTable load_embedding(const std::filesystem::path& path) { return deserialize_embedding(read_file(path)); }

std::string content_hash(const EmbeddingTable& table) {
    ByteWriter w;
    w.put_string(table.domain_id());
    w.put_u64(table.num_users());
    w.put_u64(table.num_items());
    w.put_u64(table.dim());
    w.put_u8(table.frozen() ? 1 : 0);
    for (const Matrix* m : {&table.users(), &table.items()}) {
        for (Eigen::Index r = 0; r < m->rows(); ++r)
            for (Eigen::Index c = 0; c < m->cols(); ++c) w.put_f64((*m)(r, c));
    }
    return sha256_hex(w.bytes());
}

}  // namespace cdra
