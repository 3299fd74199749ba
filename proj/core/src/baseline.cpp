#include "cdra/baseline.hpp"

#include <algorithm>

#include "cdra/binary_io.hpp"
#include "cdra/error.hpp"
#include "cdra/rng.hpp"

namespace cdra {

MappingParams init_mapping(std::size_t dim, Direction direction, const EmcdrHyper& hyper) {
    hyper.validate();
    Rng rng(derive_seed(hyper.optim.seed, 0xe3c + static_cast<std::uint64_t>(direction)));
    return {FeedForward::glorot(dim, hyper.optim.hidden_for(dim), dim, rng), direction};
}

double mapping_loss(const MappingParams& m, const Matrix& source, const Matrix& target, MappingParams* grad) {
    if (source.rows() != target.rows() || source.cols() != target.cols())
        throw Error(ErrorCode::DimensionMismatch, "mapping batch blocks differ in shape");
    if (source.rows() < 1) throw Error(ErrorCode::InvalidArgument, "empty mapping batch");
    FeedForwardCache cache;
    const Matrix residual = forward(m.map, source, grad ? &cache : nullptr) - target;
    const auto n = static_cast<double>(source.rows());
    if (grad) backward(m.map, cache, (2.0 / n) * residual, grad->map);
    return residual.squaredNorm() / n;
}

MappingParams train_emcdr(const EmbeddingTable& table_x, const EmbeddingTable& table_y, const CdrSplit& split,
                          Direction direction, const EmcdrHyper& hyper, TrainingLog* log) {
    hyper.validate();
    if (!table_x.frozen() || !table_y.frozen())
        throw Error(ErrorCode::InvalidArgument, "mapping training requires frozen backbone tables");
    if (table_x.dim() != table_y.dim()) throw Error(ErrorCode::DimensionMismatch, "backbone tables differ in dim");
    const auto& pairs = split.train_overlap_users;
    if (pairs.empty()) throw Error(ErrorCode::TrainingInfeasible, "no overlapping users selected for training");

    const auto& optim = hyper.optim;
    const bool xy = direction == Direction::XtoY;
    const auto& source_table = xy ? table_x : table_y;
    const auto& target_table = xy ? table_y : table_x;
    const std::size_t steps = std::max(optim.min_steps_per_epoch, ceil_div(pairs.size(), optim.batch_size));
    BatchCycler<OverlapPair> cycle(pairs, derive_seed(optim.seed, 0x11 + static_cast<std::uint64_t>(direction)));
    Adam adam(optim.learning_rate);

    auto run_epoch = [&](MappingParams& params, std::size_t epoch) {
        adam.set_learning_rate(optim.learning_rate_at(epoch));
        double sum = 0.0;
        std::vector<ParamBlock> blocks;
        append_blocks(params.map, blocks);
        for (std::size_t s = 0; s < steps; ++s) {
            std::vector<Index> src;
            std::vector<Index> tgt;
            for (const auto& pr : cycle.next(optim.batch_size)) {
                src.push_back(xy ? pr.x : pr.y);
                tgt.push_back(xy ? pr.y : pr.x);
            }
            MappingParams grad{zeros_like(params.map), params.direction};
            const double loss =
                mapping_loss(params, gather_users(source_table, src), gather_users(target_table, tgt), &grad);
            sum += loss;
            std::vector<ParamBlock> grad_blocks;
            append_blocks(grad.map, grad_blocks);
            adam.step(blocks, grad_blocks);
        }
        const double mean = sum / static_cast<double>(steps);
        return LossBreakdown{0.0, 0.0, 0.0, mean};
    };
    auto transfer_of = [](const MappingParams& p) { return emcdr_transfer_fn(p, p); };
    return train_with_early_stopping(init_mapping(table_x.dim(), direction, hyper), optim, table_x, table_y, split,
                                     run_epoch, transfer_of, log, "mapping training", direction);
}

Vector emcdr_transfer_vector(const MappingParams& m, const Vector& u) {
    if (static_cast<std::size_t>(u.size()) != m.dim())
        throw Error(ErrorCode::DimensionMismatch, "mapping expects dim " + std::to_string(m.dim()));
    return forward(m.map, u);
}

Vector emcdr_transfer(const MappingParams& m, const EmbeddingTable& table_x, const EmbeddingTable& table_y,
                      Index user, Direction direction) {
    if (direction != m.direction)
        throw Error(ErrorCode::DirectionMismatch, std::string("map trained for ") + to_string(m.direction) +
                                                      ", asked for " + to_string(direction));
    const auto& table = direction == Direction::XtoY ? table_x : table_y;
    if (user < 0 || static_cast<std::size_t>(user) >= table.num_users())
        throw Error(ErrorCode::UnknownUser, "user " + std::to_string(user) + " has no embedding in '" +
                                                table.domain_id() + "'");
    return emcdr_transfer_vector(m, table.user(user));
}

TransferFn emcdr_transfer_fn(const MappingParams& xy, const MappingParams& yx) {
    return [xy, yx](Direction direction, const Vector& u) {
        return emcdr_transfer_vector(direction == Direction::XtoY ? xy : yx, u);
    };
}

namespace {
constexpr char kMappingMagic[5] = "CDMP";
constexpr std::uint32_t kMappingVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize(const MappingParams& m) {
    ByteWriter w;
    w.put_magic(kMappingMagic);
    w.put_u32(kMappingVersion);
    w.put_u8(static_cast<std::uint8_t>(m.direction));
    write_network(w, m.map);
    return w.take();
}

MappingParams deserialize_mapping(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kMappingMagic);
    if (const auto v = r.get_u32(); v != kMappingVersion)
        throw Error(ErrorCode::Format, "unsupported mapping version " + std::to_string(v));
    const auto dir = r.get_u8();
    if (dir > 1) throw Error(ErrorCode::Format, "unknown direction code");
    MappingParams m{read_network(r), static_cast<Direction>(dir)};
    r.expect_end();
    if (m.map.output_dim() != m.map.input_dim() || !all_finite(m.map))
        throw Error(ErrorCode::Format, "invalid mapping weights");
    return m;
}

void save_mapping(const MappingParams& m, const std::filesystem::path& path) { write_file(path, serialize(m)); }

MappingParams load_mapping(const std::filesystem::path& path) { return deserialize_mapping(read_file(path)); }

}  // namespace cdra
