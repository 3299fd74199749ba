#include "cdra/split.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cdra/error.hpp"
#include "cdra/rng.hpp"

namespace cdra {

const char* to_string(Domain d) { return d == Domain::X ? "X" : "Y"; }
const char* to_string(Direction d) { return d == Direction::XtoY ? "X->Y" : "Y->X"; }

const std::vector<ColdStartRecord>& CdrSplit::records(Cohort cohort, Direction direction) const {
    if (cohort == Cohort::Test) return direction == Direction::XtoY ? test_xy : test_yx;
    return direction == Direction::XtoY ? validation_xy : validation_yx;
}

std::vector<ColdStartRecord>& CdrSplit::records(Cohort cohort, Direction direction) {
    if (cohort == Cohort::Test) return direction == Direction::XtoY ? test_xy : test_yx;
    return direction == Direction::XtoY ? validation_xy : validation_yx;
}

namespace {

constexpr std::uint64_t kHoldoutStream = 1;
constexpr std::uint64_t kPoolStream = 2;
constexpr std::uint64_t kPositiveStream = 3;
constexpr std::uint64_t kNegativeStream = 4;

std::size_t train_count(std::size_t available, double eta) {
    // Guard against eta * n landing a hair above an integer through roundoff.
    const double raw = eta * static_cast<double>(available);
    const double rounded = std::round(raw);
    const double count = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
    return std::min(available, static_cast<std::size_t>(count));
}

void check_eta(double eta) {
    if (!(eta > 0.0 && eta <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "eta must lie in (0, 1], got " + std::to_string(eta));
}

}  // namespace

CdrSplit make_cdr_split(const InteractionDataset& ds_x, const InteractionDataset& ds_y, double eta,
                        double coldstart_frac, std::uint64_t seed) {
    check_eta(eta);
    if (!(coldstart_frac > 0.0 && coldstart_frac < 1.0))
        throw Error(ErrorCode::InvalidArgument, "coldstart_frac must lie in (0, 1)");

    CdrSplit split;
    split.seed = seed;
    split.coldstart_frac = coldstart_frac;
    split.eta = eta;
    split.domain_x = ds_x.domain_id();
    split.domain_y = ds_y.domain_id();

    for (std::size_t u = 0; u < ds_x.num_users(); ++u) {
        if (auto y = ds_y.find_user(ds_x.user_ids()[u]))
            split.overlap_users.push_back({static_cast<Index>(u), *y});
    }
    const auto n_overlap = split.overlap_users.size();
    if (static_cast<double>(n_overlap) < 2.0 / coldstart_frac)
        throw Error(ErrorCode::SplitInfeasible,
                    std::to_string(n_overlap) + " overlapping users; at least " +
                        std::to_string(static_cast<std::size_t>(std::ceil(2.0 / coldstart_frac))) +
                        " required");

    std::vector<OverlapPair> shuffled = split.overlap_users;
    Rng holdout_rng(derive_seed(seed, kHoldoutStream));
    holdout_rng.shuffle(shuffled);

    const auto n_holdout = static_cast<std::size_t>(std::floor(coldstart_frac * static_cast<double>(n_overlap)));
    const std::size_t n_validation = n_holdout / 2;
    const std::size_t n_test = n_holdout - n_validation;

    std::vector<OverlapPair> pool(shuffled.begin() + static_cast<std::ptrdiff_t>(n_holdout), shuffled.end());
    if (pool.empty()) throw Error(ErrorCode::SplitInfeasible, "no overlapping users left for training");
    Rng pool_rng(derive_seed(seed, kPoolStream));
    pool_rng.shuffle(pool);
    split.available_overlap = std::move(pool);

    Rng positive_rng(derive_seed(seed, kPositiveStream));
    auto make_record = [&](const OverlapPair& pair, Direction direction) {
        ColdStartRecord rec;
        const bool xy = direction == Direction::XtoY;
        rec.source_user = xy ? pair.x : pair.y;
        rec.target_user = xy ? pair.y : pair.x;
        const auto items = (xy ? ds_y : ds_x).items_of(rec.target_user);
        if (items.empty())
            throw Error(ErrorCode::SplitInfeasible, "held-out user has no target-domain interactions");
        rec.positive = items[positive_rng.uniform_index(items.size())];
        return rec;
    };
    auto fill = [&](std::size_t begin, std::size_t count, Cohort cohort) {
        const std::size_t n_xy = count - count / 2;
        for (std::size_t k = 0; k < count; ++k) {
            const auto direction = k < n_xy ? Direction::XtoY : Direction::YtoX;
            split.records(cohort, direction).push_back(make_record(shuffled[begin + k], direction));
        }
    };
    fill(0, n_test, Cohort::Test);
    fill(n_test, n_validation, Cohort::Validation);

    return with_eta(split, eta);
}

CdrSplit bridge_split(const InteractionDataset& ds_x, const InteractionDataset& ds_y,
                      const std::set<std::string>& excluded_ids, std::uint64_t seed) {
    CdrSplit split;
    split.seed = seed;
    split.coldstart_frac = 0.0;
    split.eta = 1.0;
    split.domain_x = ds_x.domain_id();
    split.domain_y = ds_y.domain_id();
    for (std::size_t u = 0; u < ds_x.num_users(); ++u) {
        const auto& id = ds_x.user_ids()[u];
        if (excluded_ids.contains(id)) continue;
        if (auto y = ds_y.find_user(id)) split.overlap_users.push_back({static_cast<Index>(u), *y});
    }
    if (split.overlap_users.empty())
        throw Error(ErrorCode::SplitInfeasible, "no shared users between " + split.domain_x + " and " +
                                                    split.domain_y + " outside the excluded set");
    split.available_overlap = split.overlap_users;
    Rng rng(derive_seed(seed, 0xb1d));
    rng.shuffle(split.available_overlap);
    split.train_overlap_users = split.available_overlap;
    return split;
}

std::set<std::string> held_out_ids(const CdrSplit& split, const InteractionDataset& ds_x) {
    std::set<std::string> ids;
    auto add = [&](const std::vector<ColdStartRecord>& records, bool source_is_x) {
        for (const auto& r : records) {
            const Index x = source_is_x ? r.source_user : r.target_user;
            ids.insert(ds_x.user_ids().at(static_cast<std::size_t>(x)));
        }
    };
    add(split.test_xy, true);
    add(split.validation_xy, true);
    add(split.test_yx, false);
    add(split.validation_yx, false);
    return ids;
}

CdrSplit with_eta(const CdrSplit& split, double eta) {
    check_eta(eta);
    CdrSplit out = split;
    out.eta = eta;
    const auto n = train_count(out.available_overlap.size(), eta);
    out.train_overlap_users.assign(out.available_overlap.begin(),
                                   out.available_overlap.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

namespace {

bool targets(const CdrSplit& split, Direction direction, const InteractionDataset& ds) {
    const auto& name = direction == Direction::XtoY ? split.domain_y : split.domain_x;
    return name == ds.domain_id();
}

}  // namespace

std::size_t min_negative_pool(const CdrSplit& split, const InteractionDataset& ds_target) {
    std::size_t pool = ds_target.num_items();
    for (auto direction : {Direction::XtoY, Direction::YtoX}) {
        if (!targets(split, direction, ds_target)) continue;
        for (auto cohort : {Cohort::Test, Cohort::Validation}) {
            for (const auto& rec : split.records(cohort, direction))
                pool = std::min(pool, ds_target.num_items() - ds_target.items_of(rec.target_user).size());
        }
    }
    return pool;
}

CdrSplit sample_negatives(const CdrSplit& split, const InteractionDataset& ds_target, std::size_t n,
                          std::uint64_t seed) {
    if (split.domain_x == split.domain_y)
        throw Error(ErrorCode::InvalidArgument, "split domains must be distinct");
    CdrSplit out = split;
    out.num_negatives = n;
    const std::uint64_t stream = kNegativeStream + (ds_target.domain_id() == split.domain_y ? 1 : 0);
    Rng rng(derive_seed(seed, stream));

    bool matched = false;
    for (auto direction : {Direction::XtoY, Direction::YtoX}) {
        if (!targets(split, direction, ds_target)) continue;
        matched = true;
        for (auto cohort : {Cohort::Test, Cohort::Validation}) {
            for (auto& rec : out.records(cohort, direction)) {
                const auto positives = ds_target.items_of(rec.target_user);
                std::vector<Index> pool;
                pool.reserve(ds_target.num_items() - positives.size());
                for (Index i = 0; i < static_cast<Index>(ds_target.num_items()); ++i) {
                    if (!std::binary_search(positives.begin(), positives.end(), i)) pool.push_back(i);
                }
                if (pool.size() < n)
                    throw Error(ErrorCode::SamplingInfeasible,
                                "user '" + ds_target.user_ids()[static_cast<std::size_t>(rec.target_user)] +
                                    "' has " + std::to_string(pool.size()) + " candidate negatives, " +
                                    std::to_string(n) + " requested");
                // partial Fisher-Yates
                for (std::size_t k = 0; k < n; ++k) {
                    const auto j = k + rng.uniform_index(pool.size() - k);
                    std::swap(pool[k], pool[j]);
                }
                pool.resize(n);
                std::sort(pool.begin(), pool.end());
                rec.negatives = std::move(pool);
            }
        }
    }
    if (!matched)
        throw Error(ErrorCode::InvalidArgument, "domain '" + ds_target.domain_id() + "' is not part of the split");
    return out;
}

InteractionDataset training_view(const InteractionDataset& ds, const CdrSplit& split) {
    std::vector<char> withheld(ds.num_users(), 0);
    for (auto direction : {Direction::XtoY, Direction::YtoX}) {
        if (!targets(split, direction, ds)) continue;
        for (auto cohort : {Cohort::Test, Cohort::Validation}) {
            for (const auto& rec : split.records(cohort, direction))
                withheld.at(static_cast<std::size_t>(rec.target_user)) = 1;
        }
    }
    std::vector<std::pair<Index, Index>> kept;
    kept.reserve(ds.num_interactions());
    for (const auto& [u, i] : ds.interactions()) {
        if (!withheld[static_cast<std::size_t>(u)]) kept.emplace_back(u, i);
    }
    return InteractionDataset(ds.domain_id(), ds.user_ids(), ds.item_ids(), std::move(kept));
}

namespace {

constexpr const char* kSplitFormat = "cdra.split";
constexpr int kSplitVersion = 1;

nlohmann::json pairs_to_json(const std::vector<OverlapPair>& pairs) {
    auto arr = nlohmann::json::array();
    for (const auto& p : pairs) arr.push_back({p.x, p.y});
    return arr;
}

std::vector<OverlapPair> pairs_from_json(const nlohmann::json& arr) {
    std::vector<OverlapPair> out;
    for (const auto& p : arr) out.push_back({p.at(0).get<Index>(), p.at(1).get<Index>()});
    return out;
}

nlohmann::json records_to_json(const std::vector<ColdStartRecord>& records) {
    auto arr = nlohmann::json::array();
    for (const auto& r : records) {
        arr.push_back({{"source_user", r.source_user},
                       {"target_user", r.target_user},
                       {"positive", r.positive},
                       {"negatives", r.negatives}});
    }
    return arr;
}

std::vector<ColdStartRecord> records_from_json(const nlohmann::json& arr) {
    std::vector<ColdStartRecord> out;
    for (const auto& r : arr) {
        ColdStartRecord rec;
        rec.source_user = r.at("source_user").get<Index>();
        rec.target_user = r.at("target_user").get<Index>();
        rec.positive = r.at("positive").get<Index>();
        rec.negatives = r.at("negatives").get<std::vector<Index>>();
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

nlohmann::json split_to_json(const CdrSplit& split, const InteractionDataset& ds_x,
                             const InteractionDataset& ds_y) {
    nlohmann::json doc;
    doc["format"] = kSplitFormat;
    doc["version"] = kSplitVersion;
    doc["seed"] = split.seed;
    doc["coldstart_frac"] = split.coldstart_frac;
    doc["eta"] = split.eta;
    doc["num_negatives"] = split.num_negatives;
    doc["domains"] = {
        {"X", {{"id", ds_x.domain_id()}, {"users", ds_x.user_ids()}, {"items", ds_x.item_ids()}}},
        {"Y", {{"id", ds_y.domain_id()}, {"users", ds_y.user_ids()}, {"items", ds_y.item_ids()}}},
    };
    doc["overlap_users"] = pairs_to_json(split.overlap_users);
    doc["available_overlap"] = pairs_to_json(split.available_overlap);
    doc["train_overlap_users"] = pairs_to_json(split.train_overlap_users);
    doc["test_xy"] = records_to_json(split.test_xy);
    doc["test_yx"] = records_to_json(split.test_yx);
    doc["validation_xy"] = records_to_json(split.validation_xy);
    doc["validation_yx"] = records_to_json(split.validation_yx);
    return doc;
}

LoadedSplit split_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != kSplitFormat)
            throw Error(ErrorCode::Format, "not a split document");
        if (doc.at("version").get<int>() != kSplitVersion)
            throw Error(ErrorCode::Format, "unsupported split version " + doc.at("version").dump());
        LoadedSplit out;
        auto& s = out.split;
        s.seed = doc.at("seed").get<std::uint64_t>();
        s.coldstart_frac = doc.at("coldstart_frac").get<double>();
        s.eta = doc.at("eta").get<double>();
        s.num_negatives = doc.at("num_negatives").get<std::size_t>();
        const auto& domains = doc.at("domains");
        s.domain_x = domains.at("X").at("id").get<std::string>();
        s.domain_y = domains.at("Y").at("id").get<std::string>();
        out.users_x = domains.at("X").at("users").get<std::vector<std::string>>();
        out.items_x = domains.at("X").at("items").get<std::vector<std::string>>();
        out.users_y = domains.at("Y").at("users").get<std::vector<std::string>>();
        out.items_y = domains.at("Y").at("items").get<std::vector<std::string>>();
        s.overlap_users = pairs_from_json(doc.at("overlap_users"));
        s.available_overlap = pairs_from_json(doc.at("available_overlap"));
        s.train_overlap_users = pairs_from_json(doc.at("train_overlap_users"));
        s.test_xy = records_from_json(doc.at("test_xy"));
        s.test_yx = records_from_json(doc.at("test_yx"));
        s.validation_xy = records_from_json(doc.at("validation_xy"));
        s.validation_yx = records_from_json(doc.at("validation_yx"));
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, std::string("malformed split document: ") + e.what());
    }
}

}  // namespace cdra
