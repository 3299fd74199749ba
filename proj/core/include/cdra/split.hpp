#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdra/dataset.hpp"

namespace cdra {

enum class Domain : std::uint8_t { X = 0, Y = 1 };

constexpr Domain other(Domain d) { return d == Domain::X ? Domain::Y : Domain::X; }
const char* to_string(Domain d);

enum class Direction : std::uint8_t { XtoY = 0, YtoX = 1 };

constexpr Domain source_of(Direction d) { return d == Direction::XtoY ? Domain::X : Domain::Y; }
constexpr Domain target_of(Direction d) { return d == Direction::XtoY ? Domain::Y : Domain::X; }
const char* to_string(Direction d);

enum class Cohort : std::uint8_t { Test, Validation };

struct OverlapPair {
    Index x = 0;
    Index y = 0;
    friend bool operator==(const OverlapPair&, const OverlapPair&) = default;
};

// A held-out overlapping user evaluated in one direction. Indices of
// `positive` and `negatives` refer to the target domain's item space.
struct ColdStartRecord {
    Index source_user = 0;
    Index target_user = 0;
    Index positive = 0;
    std::vector<Index> negatives;
    friend bool operator==(const ColdStartRecord&, const ColdStartRecord&) = default;
};

struct CdrSplit {
    std::uint64_t seed = 0;
    double coldstart_frac = 0.2;
    double eta = 1.0;
    std::string domain_x;
    std::string domain_y;
    std::size_t num_negatives = 0;

    std::vector<OverlapPair> overlap_users;        // every shared id, ordered by X index
    std::vector<OverlapPair> available_overlap;    // not held out, seeded order
    std::vector<OverlapPair> train_overlap_users;  // leading ceil(eta * available) entries

    std::vector<ColdStartRecord> test_xy;
    std::vector<ColdStartRecord> test_yx;
    std::vector<ColdStartRecord> validation_xy;
    std::vector<ColdStartRecord> validation_yx;

    const std::vector<ColdStartRecord>& records(Cohort cohort, Direction direction) const;
    std::vector<ColdStartRecord>& records(Cohort cohort, Direction direction);

    friend bool operator==(const CdrSplit&, const CdrSplit&) = default;
};

// Partitions the overlapping users (exact external-id match) into a cold-start
// holdout of floor(coldstart_frac * |overlap|) users and the remaining
// training pool. The holdout is halved into test and validation cohorts and
// each cohort is halved by direction. Leave-one-out positives are drawn
// uniformly from each held-out user's target-domain interactions. Negatives are
// left empty; see sample_negatives.
CdrSplit make_cdr_split(const InteractionDataset& ds_x, const InteractionDataset& ds_y, double eta,
                        double coldstart_frac, std::uint64_t seed);

// Same holdout, different training fraction. The training set for a smaller
// eta is always a prefix of the one for a larger eta.
CdrSplit with_eta(const CdrSplit& split, double eta);

// Fills the negatives of every record whose target domain is `ds_target`:
// n distinct items drawn uniformly from the items the user never interacted with.
CdrSplit sample_negatives(const CdrSplit& split, const InteractionDataset& ds_target, std::size_t n,
                          std::uint64_t seed);

// Smallest negative pool over the held-out users targeting this domain.
std::size_t min_negative_pool(const CdrSplit& split, const InteractionDataset& ds_target);

// Copy of `ds` with every held-out user's interactions in this (target)
// domain removed. Index spaces are unchanged.
InteractionDataset training_view(const InteractionDataset& ds, const CdrSplit& split);

// Training-only split for an intermediate hop of an adapter chain: every
// shared id not in `excluded_ids` becomes a training pair; there is no
// holdout and no validation cohort.
CdrSplit bridge_split(const InteractionDataset& ds_x, const InteractionDataset& ds_y,
                      const std::set<std::string>& excluded_ids, std::uint64_t seed);

// External ids of every held-out (test or validation) user.
std::set<std::string> held_out_ids(const CdrSplit& split, const InteractionDataset& ds_x);

nlohmann::json split_to_json(const CdrSplit& split, const InteractionDataset& ds_x,
                             const InteractionDataset& ds_y);

struct LoadedSplit {
    CdrSplit split;
    std::vector<std::string> users_x, items_x, users_y, items_y;
};

LoadedSplit split_from_json(const nlohmann::json& doc);

}  // namespace cdra
