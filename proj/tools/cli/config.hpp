#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdra/adapter.hpp"
#include "cdra/baseline.hpp"
#include "cdra/bpr.hpp"
#include "cdra/pipeline.hpp"
#include "cdra/synthetic.hpp"

namespace cdra::cli {

inline constexpr int kSchemaVersion = 1;

// Every violation found while reading a config, in document order.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

struct FileDomain {
    std::filesystem::path path;
    std::string domain;
};

struct DataConfig {
    bool synthetic = true;
    SyntheticConfig synth;
    std::size_t domain_x = 0;  // synthetic domain indices of the pair
    std::size_t domain_y = 1;
    FileDomain x;
    FileDomain y;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out = "run";
    DataConfig data;
    PrepareOptions prepare;
    BprHyper bpr;
    AdapterHyper adapter;
    EmcdrHyper emcdr;
    std::vector<double> etas{0.05, 0.2, 0.5, 1.0};
    std::vector<std::size_t> ks{10, 20};
    std::size_t threads = 1;

    // Per-stage seeds derived from `seed`.
    std::uint64_t synth_seed() const;
    PrepareOptions prepare_options() const;
    BprHyper bpr_hyper() const;
    AdapterHyper adapter_hyper() const;
    EmcdrHyper emcdr_hyper() const;

    std::string name_x() const;
    std::string name_y() const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical form of the effective configuration (after flag overrides).
nlohmann::json to_json(const ExperimentConfig& cfg);

}  // namespace cdra::cli
