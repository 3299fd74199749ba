#include "cdra/pipeline.hpp"

#include <algorithm>

#include "cdra/error.hpp"
#include "cdra/rng.hpp"

namespace cdra {

PreparedPair prepare_pair(const InteractionDataset& raw_x, const InteractionDataset& raw_y,
                          const PrepareOptions& options) {
    PreparedPair out;
    out.x = filter_min_counts(raw_x, options.min_item, options.min_user);
    out.y = filter_min_counts(raw_y, options.min_item, options.min_user);
    auto split = make_cdr_split(out.x, out.y, options.eta, options.coldstart_frac, options.seed);
    std::size_t n = options.negatives;
    if (options.clamp_negatives)
        n = std::min({n, min_negative_pool(split, out.x), min_negative_pool(split, out.y)});
    split = sample_negatives(split, out.y, n, options.seed);
    split = sample_negatives(split, out.x, n, options.seed);
    out.split = std::move(split);
    return out;
}

Backbones pretrain_pair(const PreparedPair& data, const BprHyper& hyper, std::vector<double>* losses_x,
                        std::vector<double>* losses_y) {
    BprHyper hx = hyper;
    BprHyper hy = hyper;
    hx.seed = derive_seed(hyper.seed, 0x100);
    hy.seed = derive_seed(hyper.seed, 0x101);
    return {freeze(train_bpr(training_view(data.x, data.split), hx, losses_x)),
            freeze(train_bpr(training_view(data.y, data.split), hy, losses_y))};
}

EmcdrPair train_emcdr_pair(const Backbones& tables, const CdrSplit& split, const EmcdrHyper& hyper,
                           TrainingLog* log_xy, TrainingLog* log_yx) {
    return {train_emcdr(tables.x, tables.y, split, Direction::XtoY, hyper, log_xy),
            train_emcdr(tables.x, tables.y, split, Direction::YtoX, hyper, log_yx)};
}

std::vector<SweepRow> overlap_sweep(const PreparedPair& data, const Backbones& tables, std::span<const double> etas,
                                    const AdapterHyper& adapter_hyper, const EmcdrHyper& emcdr_hyper,
                                    std::span<const std::size_t> ks) {
    std::vector<SweepRow> rows;
    for (double eta : etas) {
        const auto split = with_eta(data.split, eta);
        const auto adapter = train_adapter(tables.x, tables.y, split, adapter_hyper);
        rows.push_back({"adapter", eta,
                        evaluate_cold_start(adapter_transfer_fn(adapter), tables.x, tables.y, split, ks)});
        const auto emcdr = train_emcdr_pair(tables, split, emcdr_hyper);
        rows.push_back({"emcdr", eta,
                        evaluate_cold_start(emcdr_transfer_fn(emcdr.xy, emcdr.yx), tables.x, tables.y, split, ks)});
    }
    return rows;
}

OracleTargets oracle_targets(const PreparedPair& data, const Backbones& tables, const BprHyper& hyper) {
    auto fit = [&](const std::vector<ColdStartRecord>& records, const InteractionDataset& target_ds,
                   const EmbeddingTable& target_table, std::uint64_t stream) {
        Matrix out(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(target_table.dim()));
        for (std::size_t r = 0; r < records.size(); ++r) {
            const auto positives = target_ds.items_of(records[r].target_user);
            const auto seed = derive_seed(derive_seed(hyper.seed, stream), static_cast<std::uint64_t>(r));
            out.row(static_cast<Eigen::Index>(r)) = fit_user_embedding(target_table, positives, hyper, seed).transpose();
        }
        return out;
    };
    return {fit(data.split.test_xy, data.y, tables.y, 0x200), fit(data.split.test_yx, data.x, tables.x, 0x201)};
}

MethodAnalysis analyze_method(const std::string& method, const TransferFn& transfer, const SharedFn& shared,
                              const PreparedPair& data, const Backbones& tables, const OracleTargets& targets) {
    MethodAnalysis out;
    out.method = method;
    const auto& xy = data.split.test_xy;
    const auto& yx = data.split.test_yx;
    const Matrix inferred_xy = transfer_queries(transfer, tables.x, xy, Direction::XtoY);
    const Matrix inferred_yx = transfer_queries(transfer, tables.y, yx, Direction::YtoX);
    Matrix inferred(inferred_xy.rows() + inferred_yx.rows(), inferred_xy.cols());
    inferred << inferred_xy, inferred_yx;
    Matrix truth(targets.xy.rows() + targets.yx.rows(), targets.xy.cols());
    truth << targets.xy, targets.yx;
    out.avg_distance = avg_latent_distance(inferred, truth);

    // Domain-specific vs cross-domain representations over every user of
    // each source domain, averaged over the two directions.
    auto kl_for = [&](const EmbeddingTable& source, Direction direction) {
        Matrix specific = source.users();
        Matrix crossed(specific.rows(), specific.cols());
        for (Eigen::Index u = 0; u < specific.rows(); ++u)
            crossed.row(u) = shared(direction, specific.row(u).transpose()).transpose();
        return kl_disentanglement(specific, crossed);
    };
    const auto kx = kl_for(tables.x, Direction::XtoY);
    const auto ky = kl_for(tables.y, Direction::YtoX);
    out.kl.value = 0.5 * (kx.value + ky.value);
    out.kl.floored_dims = kx.floored_dims + ky.floored_dims;
    return out;
}

SharedFn adapter_shared_fn(const AdapterParams& p) {
    return [p](Direction direction, const Vector& u) { return prior_forward(p, source_of(direction), u); };
}

SharedFn emcdr_shared_fn(const EmcdrPair& m) {
    return [m](Direction direction, const Vector& u) {
        return emcdr_transfer_vector(direction == Direction::XtoY ? m.xy : m.yx, u);
    };
}

CascadeResult cascade_chain(const InteractionDataset& raw_a, const InteractionDataset& raw_b,
                            const InteractionDataset& raw_c, const CascadeOptions& options,
                            std::span<const std::size_t> ks) {
    const auto& po = options.prepare;
    const PreparedPair ac = prepare_pair(raw_a, raw_c, po);
    const auto b = filter_min_counts(raw_b, po.min_item, po.min_user);
    const auto excluded = held_out_ids(ac.split, ac.x);

    auto bpr_for = [&](std::uint64_t stream) {
        BprHyper h = options.bpr;
        h.seed = derive_seed(options.bpr.seed, stream);
        return h;
    };
    const auto table_a = freeze(train_bpr(training_view(ac.x, ac.split), bpr_for(0x100)));
    const auto table_c = freeze(train_bpr(training_view(ac.y, ac.split), bpr_for(0x101)));
    const auto table_b = freeze(train_bpr(b, bpr_for(0x102)));

    const auto split_ab = bridge_split(ac.x, b, excluded, po.seed);
    const auto split_bc = bridge_split(b, ac.y, excluded, derive_seed(po.seed, 1));
    const auto p_ab = train_adapter(table_a, table_b, split_ab, options.adapter);
    AdapterHyper hyper_bc = options.adapter;
    hyper_bc.optim.seed = derive_seed(options.adapter.optim.seed, 1);
    const auto p_bc = train_adapter(table_b, table_c, split_bc, hyper_bc);

    auto queries = [&](const std::vector<ColdStartRecord>& records, const EmbeddingTable& source, CascadeRoute route) {
        Matrix q(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(source.dim()));
        for (std::size_t r = 0; r < records.size(); ++r)
            q.row(static_cast<Eigen::Index>(r)) = cascade(p_ab, p_bc, source.user(records[r].source_user), route).transpose();
        return q;
    };
    CascadeResult out;
    out.report = evaluate_queries(queries(ac.split.test_xy, table_a, CascadeRoute::Forward),
                                  queries(ac.split.test_yx, table_c, CascadeRoute::Backward), table_a, table_c,
                                  ac.split, ks);
    out.num_negatives = ac.split.num_negatives;
    out.bridge_ab_pairs = split_ab.train_overlap_users.size();
    out.bridge_bc_pairs = split_bc.train_overlap_users.size();
    return out;
}

}  // namespace cdra
