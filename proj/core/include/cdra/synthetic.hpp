#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdra/dataset.hpp"
#include "cdra/linalg.hpp"

namespace cdra {

enum class TransformKind { Identity, RandomAffine };

// Multi-domain latent-factor generator. A pool of shared users appears in
// every domain; each domain adds its own exclusive users and items. Domain d
// sees user z through affine_d(z) + noise, and a user's positives are the
// top positive_quantile fraction of items by dot product.
struct SyntheticConfig {
    std::size_t num_domains = 2;
    std::size_t latent_dim = 8;
    std::size_t users_per_domain = 1000;
    std::size_t items_per_domain = 500;
    double overlap_fraction = 0.5;
    TransformKind transform = TransformKind::Identity;
    double transform_strength = 0.5;  // RandomAffine: A = I + strength * G / sqrt(k)
    double offset_scale = 0.0;        // RandomAffine: b ~ N(0, offset_scale^2)
    double noise_std = 0.0;
    double positive_quantile = 0.02;
    double max_condition = 50.0;

    void validate() const;  // throws InvalidArgument listing the first violation
};

struct DomainLatents {
    Matrix transform;  // latent_dim x latent_dim
    Vector offset;
    Matrix users;      // user representation seen by this domain, one row per user index
    Matrix items;      // one row per item index
};

struct SyntheticData {
    std::vector<InteractionDataset> datasets;
    std::vector<DomainLatents> latents;
};

std::string synthetic_domain_name(std::size_t d);

// Number of positives each user receives.
std::size_t positives_per_user(const SyntheticConfig& cfg);

SyntheticData generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

}  // namespace cdra
