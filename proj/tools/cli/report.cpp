#include "report.hpp"

#include <cstdio>

#ifndef CDRA_VERSION_STRING
#define CDRA_VERSION_STRING "unknown"
#endif

namespace cdra::cli {

std::string version_string() { return CDRA_VERSION_STRING; }

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string metrics_csv(std::span<const ReportRow> rows, std::span<const std::size_t> ks, const std::string& name_x,
                        const std::string& name_y) {
    std::string out = "method,eta,source,target,n_users";
    for (auto k : ks) out += ",hr@" + std::to_string(k);
    for (auto k : ks) out += ",ndcg@" + std::to_string(k);
    out += ",mrr\n";
    for (const auto& row : rows) {
        auto line = [&](const char* source, const char* target, const RankingMetrics& m) {
            out += row.method + "," + fixed(row.eta, 4) + "," + source + "," + target + "," + std::to_string(m.n_users);
            for (auto k : ks) out += "," + fixed(m.hr.at(k));
            for (auto k : ks) out += "," + fixed(m.ndcg.at(k));
            out += "," + fixed(m.mrr) + "\n";
        };
        line(name_x.c_str(), name_y.c_str(), row.report.xy);
        line(name_y.c_str(), name_x.c_str(), row.report.yx);
        line("macro", "macro", row.report.macro);
    }
    return out;
}

nlohmann::json metrics_json(const RankingMetrics& m) {
    nlohmann::json hr = nlohmann::json::object();
    nlohmann::json ndcg = nlohmann::json::object();
    for (const auto& [k, v] : m.hr) hr[std::to_string(k)] = v;
    for (const auto& [k, v] : m.ndcg) ndcg[std::to_string(k)] = v;
    return {{"n_users", m.n_users}, {"hr", hr}, {"ndcg", ndcg}, {"mrr", m.mrr}};
}

nlohmann::json report_json(const ColdStartReport& r, const std::string& name_x, const std::string& name_y) {
    return {{name_x + "->" + name_y, metrics_json(r.xy)},
            {name_y + "->" + name_x, metrics_json(r.yx)},
            {"macro", metrics_json(r.macro)}};
}

}  // namespace cdra::cli
