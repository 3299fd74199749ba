#include "cdra/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cdra/binary_io.hpp"
#include "cdra/error.hpp"
#include "cdra/rng.hpp"

namespace cdra {

void AdapterHyper::validate() const {
    optim.validate();
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
    if (!(lambdas.l1 >= 0.0 && lambdas.l2 >= 0.0 && lambdas.l3 >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "lambdas must be non-negative");
}

AdapterParams init_adapter(std::size_t dim, const AdapterHyper& hyper) {
    hyper.validate();
    if (dim < 1) throw Error(ErrorCode::DimensionMismatch, "adapter dim must be positive");
    const auto hidden = hyper.optim.hidden_for(dim);
    Rng rng(derive_seed(hyper.optim.seed, 0xada));
    AdapterParams p;
    p.prior_x = FeedForward::glorot(dim, hidden, dim, rng);
    p.prior_y = FeedForward::glorot(dim, hidden, dim, rng);
    p.decoder_x = FeedForward::glorot(dim, hidden, dim, rng);
    p.decoder_y = FeedForward::glorot(dim, hidden, dim, rng);
    p.f1 = AffineMap::identity(dim, hyper.diagonal_scale);
    p.f2 = AffineMap::identity(dim, hyper.diagonal_scale);
    p.tau = hyper.tau;
    p.lambdas = hyper.lambdas;
    return p;
}

AdapterParams identity_adapter(std::size_t dim, std::size_t hidden, double tau, Lambdas lambdas) {
    AdapterParams p;
    p.prior_x = FeedForward::identity(dim, hidden);
    p.prior_y = FeedForward::identity(dim, hidden);
    p.decoder_x = FeedForward::identity(dim, hidden);
    p.decoder_y = FeedForward::identity(dim, hidden);
    p.f1 = AffineMap::identity(dim);
    p.f2 = AffineMap::identity(dim);
    p.tau = tau;
    p.lambdas = lambdas;
    return p;
}

AdapterParams zeros_like(const AdapterParams& p) {
    AdapterParams z;
    z.prior_x = zeros_like(p.prior_x);
    z.prior_y = zeros_like(p.prior_y);
    z.decoder_x = zeros_like(p.decoder_x);
    z.decoder_y = zeros_like(p.decoder_y);
    z.f1 = zeros_like(p.f1);
    z.f2 = zeros_like(p.f2);
    z.tau = p.tau;
    z.lambdas = p.lambdas;
    return z;
}

std::vector<ParamBlock> parameter_blocks(AdapterParams& p) {
    std::vector<ParamBlock> blocks;
    append_blocks(p.prior_x, blocks);
    append_blocks(p.prior_y, blocks);
    append_blocks(p.decoder_x, blocks);
    append_blocks(p.decoder_y, blocks);
    append_blocks(p.f1, blocks);
    append_blocks(p.f2, blocks);
    return blocks;
}

void check_adapter(const AdapterParams& p) {
    const auto d = p.dim();
    for (const FeedForward* net : {&p.prior_x, &p.prior_y, &p.decoder_x, &p.decoder_y}) {
        if (net->input_dim() != d || net->output_dim() != d)
            throw Error(ErrorCode::DimensionMismatch, "adapter networks must map dim " + std::to_string(d) + " to itself");
        if (!all_finite(*net)) throw Error(ErrorCode::InvalidArgument, "adapter weights are non-finite");
    }
    for (const AffineMap* map : {&p.f1, &p.f2}) {
        if (static_cast<std::size_t>(map->alpha.rows()) != d || static_cast<std::size_t>(map->beta.size()) != d)
            throw Error(ErrorCode::DimensionMismatch, "scale map dim mismatch");
        if (!map->alpha.allFinite() || !map->beta.allFinite())
            throw Error(ErrorCode::InvalidArgument, "scale map weights are non-finite");
    }
    if (!(p.tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
    if (!(p.lambdas.l1 >= 0.0 && p.lambdas.l2 >= 0.0 && p.lambdas.l3 >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "lambdas must be non-negative");
}

namespace {

void check_input(const AdapterParams& p, const Vector& u) {
    if (static_cast<std::size_t>(u.size()) != p.dim())
        throw Error(ErrorCode::DimensionMismatch, "adapter expects dim " + std::to_string(p.dim()) + ", got " +
                                                      std::to_string(u.size()));
    if (!u.allFinite()) throw Error(ErrorCode::InvalidArgument, "adapter input is non-finite");
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
    if (bottom.rows() == 0) return top;
    if (top.cols() != bottom.cols()) throw Error(ErrorCode::DimensionMismatch, "batch blocks differ in width");
    Matrix out(top.rows() + bottom.rows(), top.cols());
    out.topRows(top.rows()) = top;
    out.bottomRows(bottom.rows()) = bottom;
    return out;
}

}  // namespace

Vector prior_forward(const AdapterParams& p, Domain domain, const Vector& u) {
    check_input(p, u);
    return forward(p.prior(domain), u);
}

Vector decoder_forward(const AdapterParams& p, Domain domain, const Vector& u_prime) {
    check_input(p, u_prime);
    return forward(p.decoder(domain), u_prime);
}

LossBreakdown adapter_loss(const AdapterParams& p, const AdapterBatch& batch, AdapterParams* grad) {
    if (batch.x.rows() != batch.y.rows() || batch.x.cols() != batch.y.cols())
        throw Error(ErrorCode::DimensionMismatch, "paired batch blocks differ in shape");
    if (static_cast<std::size_t>(batch.x.cols()) != p.dim())
        throw Error(ErrorCode::DimensionMismatch, "batch width differs from adapter dim");
    const Eigen::Index n = batch.x.rows();
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "empty adapter batch");
    if (n < 2 && p.lambdas.l1 > 0.0)
        throw Error(ErrorCode::InvalidArgument, "contrastive term needs at least two paired users");

    const Matrix all_x = stack(batch.x, batch.x_extra);
    const Matrix all_y = stack(batch.y, batch.y_extra);

    FeedForwardCache prior_x_cache, prior_y_cache, dec_x_cache, dec_y_cache;
    const Matrix aligned_x = forward(p.prior_x, all_x, &prior_x_cache);
    const Matrix aligned_y = forward(p.prior_y, all_y, &prior_y_cache);
    const Matrix recon_x = forward(p.decoder_x, aligned_x, &dec_x_cache);
    const Matrix recon_y = forward(p.decoder_y, aligned_y, &dec_y_cache);

    const Matrix up_x = aligned_x.topRows(n);
    const Matrix up_y = aligned_y.topRows(n);

    PairGrad g1;
    ScaleGrad g2;
    ReconstructionGrad g3;
    const double l1 = n >= 2 ? contrastive_loss(up_x, up_y, p.tau, grad ? &g1 : nullptr) : 0.0;
    const double l2 = scale_alignment_loss(up_x, up_y, p.f1, p.f2, grad ? &g2 : nullptr);
    const double l3 = reconstruction_loss(all_x, recon_x, all_y, recon_y, grad ? &g3 : nullptr);
    const auto loss = total_loss(l1, l2, l3, p.lambdas);

    if (grad) {
        const auto& lam = p.lambdas;
        Matrix d_aligned_x = backward(p.decoder_x, dec_x_cache, lam.l3 * g3.d_x_hat, grad->decoder_x);
        Matrix d_aligned_y = backward(p.decoder_y, dec_y_cache, lam.l3 * g3.d_y_hat, grad->decoder_y);
        d_aligned_x.topRows(n) += lam.l2 * g2.d_x;
        d_aligned_y.topRows(n) += lam.l2 * g2.d_y;
        if (n >= 2) {
            d_aligned_x.topRows(n) += lam.l1 * g1.d_x;
            d_aligned_y.topRows(n) += lam.l1 * g1.d_y;
        }
        grad->f1.alpha += lam.l2 * g2.d_f1.alpha;
        grad->f1.beta += lam.l2 * g2.d_f1.beta;
        grad->f2.alpha += lam.l2 * g2.d_f2.alpha;
        grad->f2.beta += lam.l2 * g2.d_f2.beta;
        backward(p.prior_x, prior_x_cache, d_aligned_x, grad->prior_x);
        backward(p.prior_y, prior_y_cache, d_aligned_y, grad->prior_y);
    }
    return loss;
}

namespace {

// Users of one domain that are held out in either direction.
std::set<Index> held_out_users(const CdrSplit& split, Domain domain) {
    std::set<Index> out;
    for (auto cohort : {Cohort::Test, Cohort::Validation}) {
        for (const auto& rec : split.records(cohort, Direction::XtoY))
            out.insert(domain == Domain::X ? rec.source_user : rec.target_user);
        for (const auto& rec : split.records(cohort, Direction::YtoX))
            out.insert(domain == Domain::X ? rec.target_user : rec.source_user);
    }
    return out;
}

std::vector<Index> reconstruction_users(const EmbeddingTable& table, const CdrSplit& split, Domain domain) {
    auto excluded = held_out_users(split, domain);
    for (const auto& pair : split.train_overlap_users) excluded.insert(domain == Domain::X ? pair.x : pair.y);
    std::vector<Index> out;
    for (Index u = 0; u < static_cast<Index>(table.num_users()); ++u)
        if (!excluded.count(u)) out.push_back(u);
    return out;
}

}  // namespace

AdapterParams train_adapter(const EmbeddingTable& table_x, const EmbeddingTable& table_y, const CdrSplit& split,
                            const AdapterHyper& hyper, TrainingLog* log) {
    hyper.validate();
    if (!table_x.frozen() || !table_y.frozen())
        throw Error(ErrorCode::InvalidArgument, "adapter training requires frozen backbone tables");
    if (table_x.dim() != table_y.dim())
        throw Error(ErrorCode::DimensionMismatch, "backbone tables differ in dim");
    const auto& pairs = split.train_overlap_users;
    if (pairs.empty()) throw Error(ErrorCode::TrainingInfeasible, "no overlapping users selected for training");
    if (pairs.size() < 2 && hyper.lambdas.l1 > 0.0)
        throw Error(ErrorCode::TrainingInfeasible, "contrastive training needs at least two overlapping users");

    TrainingLog local;
    TrainingLog& out_log = log ? *log : local;
    const auto& optim = hyper.optim;
    const std::size_t batch = optim.batch_size;

    std::vector<Index> extra_x;
    std::vector<Index> extra_y;
    if (hyper.reconstruct_domain_users) {
        extra_x = reconstruction_users(table_x, split, Domain::X);
        extra_y = reconstruction_users(table_y, split, Domain::Y);
    }
    std::size_t steps = std::max(optim.min_steps_per_epoch, ceil_div(pairs.size(), batch));
    steps = std::max({steps, ceil_div(extra_x.size(), batch), ceil_div(extra_y.size(), batch)});

    BatchCycler<OverlapPair> pair_cycle(pairs, derive_seed(optim.seed, 0x01));
    BatchCycler<Index> extra_x_cycle(extra_x, derive_seed(optim.seed, 0x02));
    BatchCycler<Index> extra_y_cycle(extra_y, derive_seed(optim.seed, 0x03));
    Adam adam(optim.learning_rate);
    std::size_t dropped = 0;

    auto run_epoch = [&](AdapterParams& params, std::size_t epoch) {
        adam.set_learning_rate(optim.learning_rate_at(epoch));
        LossBreakdown sum;
        std::size_t used = 0;
        auto param_blocks = parameter_blocks(params);
        for (std::size_t s = 0; s < steps; ++s) {
            const auto chosen = pair_cycle.next(batch);
            if (chosen.size() < 2 && params.lambdas.l1 > 0.0) {
                ++dropped;
                continue;
            }
            std::vector<Index> ux;
            std::vector<Index> uy;
            for (const auto& pr : chosen) {
                ux.push_back(pr.x);
                uy.push_back(pr.y);
            }
            AdapterBatch b;
            b.x = gather_users(table_x, ux);
            b.y = gather_users(table_y, uy);
            b.x_extra = gather_users(table_x, extra_x_cycle.next(batch));
            b.y_extra = gather_users(table_y, extra_y_cycle.next(batch));
            AdapterParams grad = zeros_like(params);
            const auto loss = adapter_loss(params, b, &grad);
            if (!std::isfinite(loss.total)) return loss;
            auto grad_blocks = parameter_blocks(grad);
            adam.step(param_blocks, grad_blocks);
            sum.l1 += loss.l1;
            sum.l2 += loss.l2;
            sum.l3 += loss.l3;
            sum.total += loss.total;
            ++used;
        }
        if (used > 0) {
            const auto n = static_cast<double>(used);
            sum = {sum.l1 / n, sum.l2 / n, sum.l3 / n, sum.total / n};
        }
        return sum;
    };

    auto result = train_with_early_stopping(init_adapter(table_x.dim(), hyper), optim, table_x, table_y, split,
                                            run_epoch, [](const AdapterParams& p) { return adapter_transfer_fn(p); },
                                            &out_log, "adapter training");
    if (dropped > 0)
        out_log.warnings.push_back("adapter training: dropped " + std::to_string(dropped) +
                                   " single-user batches (contrastive term undefined)");
    return result;
}

Vector transfer_vector(const AdapterParams& p, const Vector& u, Direction direction) {
    check_input(p, u);
    return forward(p.decoder(target_of(direction)), forward(p.prior(source_of(direction)), u));
}

Vector transfer(const AdapterParams& p, const EmbeddingTable& table_x, const EmbeddingTable& table_y, Index user,
                Domain source, Domain target) {
    if (source == target) throw Error(ErrorCode::DirectionMismatch, "source and target domain coincide");
    const auto& table = source == Domain::X ? table_x : table_y;
    if (user < 0 || static_cast<std::size_t>(user) >= table.num_users())
        throw Error(ErrorCode::UnknownUser, "user " + std::to_string(user) + " has no embedding in '" +
                                                table.domain_id() + "'");
    return transfer_vector(p, table.user(user), source == Domain::X ? Direction::XtoY : Direction::YtoX);
}

TransferFn adapter_transfer_fn(const AdapterParams& p) {
    return [p](Direction direction, const Vector& u) { return transfer_vector(p, u, direction); };
}

Vector cascade(const AdapterParams& p_ab, const AdapterParams& p_bc, const Vector& u, CascadeRoute route) {
    if (p_ab.dim() != p_bc.dim())
        throw Error(ErrorCode::DimensionMismatch, "cascaded adapters differ in dim");
    if (route == CascadeRoute::Forward)
        return transfer_vector(p_bc, transfer_vector(p_ab, u, Direction::XtoY), Direction::XtoY);
    return transfer_vector(p_ab, transfer_vector(p_bc, u, Direction::YtoX), Direction::YtoX);
}

namespace {
constexpr char kAdapterMagic[5] = "CDAP";
constexpr std::uint32_t kAdapterVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize(const AdapterParams& p) {
    ByteWriter w;
    w.put_magic(kAdapterMagic);
    w.put_u32(kAdapterVersion);
    w.put_u32(static_cast<std::uint32_t>(p.dim()));
    w.put_f64(p.tau);
    w.put_f64(p.lambdas.l1);
    w.put_f64(p.lambdas.l2);
    w.put_f64(p.lambdas.l3);
    write_network(w, p.prior_x);
    write_network(w, p.prior_y);
    write_network(w, p.decoder_x);
    write_network(w, p.decoder_y);
    write_affine(w, p.f1);
    write_affine(w, p.f2);
    return w.take();
}

AdapterParams deserialize_adapter(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kAdapterMagic);
    if (const auto v = r.get_u32(); v != kAdapterVersion)
        throw Error(ErrorCode::Format, "unsupported adapter version " + std::to_string(v));
    const auto dim = r.get_u32();
    AdapterParams p;
    p.tau = r.get_f64();
    p.lambdas.l1 = r.get_f64();
    p.lambdas.l2 = r.get_f64();
    p.lambdas.l3 = r.get_f64();
    p.prior_x = read_network(r);
    p.prior_y = read_network(r);
    p.decoder_x = read_network(r);
    p.decoder_y = read_network(r);
    p.f1 = read_affine(r);
    p.f2 = read_affine(r);
    r.expect_end();
    if (p.dim() != dim) throw Error(ErrorCode::Format, "adapter header dim disagrees with weights");
    check_adapter(p);
    return p;
}

void save_adapter(const AdapterParams& p, const std::filesystem::path& path) { write_file(path, serialize(p)); }

AdapterParams load_adapter(const std::filesystem::path& path) { return deserialize_adapter(read_file(path)); }

}  // namespace cdra
