#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "config.hpp"

namespace cdra::cli {

enum class Method { Adapter, Emcdr };

Method parse_method(const std::string& name);
std::string method_name(Method m);

// An upstream artifact is missing; the message names the command to run.
class PrerequisiteError : public std::runtime_error {
public:
    PrerequisiteError(const std::filesystem::path& missing, const std::string& command);
};

// Every stage reads its inputs from and writes its outputs under cfg.out,
// one directory per stage, each with a manifest.json listing SHA-256 hashes
// of the inputs and outputs. Outputs depend only on the config and inputs.
void cmd_synth(const ExperimentConfig& cfg);
void cmd_prepare(const ExperimentConfig& cfg);
void cmd_pretrain(const ExperimentConfig& cfg);
// `eta` defaults to prepare.eta.
void cmd_train(const ExperimentConfig& cfg, Method method, std::optional<double> eta = std::nullopt);
void cmd_evaluate(const ExperimentConfig& cfg, Method method);
void cmd_sweep(const ExperimentConfig& cfg);
void cmd_analyze(const ExperimentConfig& cfg);

}  // namespace cdra::cli
