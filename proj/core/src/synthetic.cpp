#include "cdra/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdra/error.hpp"
#include "cdra/rng.hpp"

namespace cdra {

void SyntheticConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "synthetic config: " + what); };
    if (num_domains < 2) fail("num_domains must be at least 2");
    if (latent_dim < 1) fail("latent_dim must be positive");
    if (users_per_domain < 2) fail("users_per_domain must be at least 2");
    if (items_per_domain < 2) fail("items_per_domain must be at least 2");
    if (!(overlap_fraction > 0.0 && overlap_fraction <= 1.0)) fail("overlap_fraction must lie in (0, 1]");
    if (!(noise_std >= 0.0)) fail("noise_std must be non-negative");
    if (!(transform_strength >= 0.0) || !(offset_scale >= 0.0)) fail("transform scales must be non-negative");
    if (!(positive_quantile > 0.0 && positive_quantile < 1.0)) fail("positive_quantile must lie in (0, 1)");
    if (positives_per_user(*this) < 1) fail("positive_quantile yields no positives per user");
    if (!(max_condition >= 1.0)) fail("max_condition must be at least 1");
}

std::string synthetic_domain_name(std::size_t d) { return "D" + std::to_string(d); }

std::size_t positives_per_user(const SyntheticConfig& cfg) {
    return static_cast<std::size_t>(std::llround(cfg.positive_quantile * static_cast<double>(cfg.items_per_domain)));
}

namespace {

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
    return m;
}

double condition_number(const Matrix& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& s = svd.singularValues();
    const double smallest = s(s.size() - 1);
    return smallest > 0.0 ? s(0) / smallest : std::numeric_limits<double>::infinity();
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto k = cfg.latent_dim;
    const auto n_shared = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.overlap_fraction * static_cast<double>(cfg.users_per_domain))));
    const auto n_exclusive = cfg.users_per_domain - n_shared;
    const auto n_pos = positives_per_user(cfg);

    Rng rng(derive_seed(seed, 0x5e7));
    const Matrix shared = gaussian(rng, n_shared, k);

    SyntheticData out;
    for (std::size_t d = 0; d < cfg.num_domains; ++d) {
        DomainLatents lat;
        if (cfg.transform == TransformKind::Identity) {
            lat.transform = Matrix::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
            lat.offset = Vector::Zero(static_cast<Eigen::Index>(k));
        } else {
            bool ok = false;
            for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                lat.transform = Matrix::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) +
                                (cfg.transform_strength / std::sqrt(static_cast<double>(k))) * gaussian(rng, k, k);
                ok = condition_number(lat.transform) <= cfg.max_condition;
            }
            if (!ok)
                throw Error(ErrorCode::InvalidArgument,
                            "synthetic config: could not draw a transform with condition number <= " +
                                std::to_string(cfg.max_condition));
            lat.offset = cfg.offset_scale * gaussian(rng, k, 1).col(0);
        }

        Matrix z(cfg.users_per_domain, k);
        z.topRows(static_cast<Eigen::Index>(n_shared)) = shared;
        if (n_exclusive > 0) z.bottomRows(static_cast<Eigen::Index>(n_exclusive)) = gaussian(rng, n_exclusive, k);

        lat.users = z * lat.transform.transpose();
        lat.users.rowwise() += lat.offset.transpose();
        if (cfg.noise_std > 0.0) lat.users += cfg.noise_std * gaussian(rng, cfg.users_per_domain, k);

        lat.items = gaussian(rng, cfg.items_per_domain, k);
        lat.items.rowwise().normalize();

        const auto name = synthetic_domain_name(d);
        std::vector<std::string> user_ids;
        user_ids.reserve(cfg.users_per_domain);
        for (std::size_t u = 0; u < n_shared; ++u) user_ids.push_back("u" + std::to_string(u));
        for (std::size_t u = 0; u < n_exclusive; ++u) user_ids.push_back(name + "_u" + std::to_string(u));
        std::vector<std::string> item_ids;
        item_ids.reserve(cfg.items_per_domain);
        for (std::size_t i = 0; i < cfg.items_per_domain; ++i) item_ids.push_back(name + "_i" + std::to_string(i));

        const Matrix scores = lat.users * lat.items.transpose();
        std::vector<std::pair<Index, Index>> pairs;
        pairs.reserve(cfg.users_per_domain * n_pos);
        std::vector<Index> order(cfg.items_per_domain);
        for (Eigen::Index u = 0; u < scores.rows(); ++u) {
            std::iota(order.begin(), order.end(), 0);
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_pos), order.end(),
                              [&](Index a, Index b) {
                                  const double sa = scores(u, a);
                                  const double sb = scores(u, b);
                                  return sa > sb || (sa == sb && a < b);
                              });
            for (std::size_t r = 0; r < n_pos; ++r) pairs.emplace_back(static_cast<Index>(u), order[r]);
        }
        out.datasets.emplace_back(name, std::move(user_ids), std::move(item_ids), std::move(pairs));
        out.latents.push_back(std::move(lat));
    }
    return out;
}

}  // namespace cdra
