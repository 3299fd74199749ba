#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdra/evaluation.hpp"

namespace cdra::cli {

// Build identifier in `git describe` form, fixed at configure time.
std::string version_string();

struct ReportRow {
    std::string method;
    double eta = 0.0;
    ColdStartReport report;
};

// One CSV line per method x eta x direction (plus the macro average).
std::string metrics_csv(std::span<const ReportRow> rows, std::span<const std::size_t> ks, const std::string& name_x,
                        const std::string& name_y);

nlohmann::json metrics_json(const RankingMetrics& m);
nlohmann::json report_json(const ColdStartReport& r, const std::string& name_x, const std::string& name_y);

// Fixed-point formatting used by every CSV writer.
std::string fixed(double v, int digits = 6);

}  // namespace cdra::cli
