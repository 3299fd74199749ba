#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cdra {

using Index = std::int32_t;

// One domain's implicit-feedback matrix. Users and items carry dense indices
// in [0, num_users) x [0, num_items); the external string ids are kept in
// index order. Interactions are unique and sorted by (user, item).
class InteractionDataset {
public:
    InteractionDataset() = default;

    // Dense constructor. Duplicate pairs are collapsed; ids must be unique.
    InteractionDataset(std::string domain_id, std::vector<std::string> user_ids,
                       std::vector<std::string> item_ids,
                       std::vector<std::pair<Index, Index>> pairs);

    // Assigns indices by first appearance of each external id.
    static InteractionDataset from_raw(
        std::string domain_id, std::span<const std::pair<std::string, std::string>> rows);

    const std::string& domain_id() const { return domain_id_; }
    std::size_t num_users() const { return user_ids_.size(); }
    std::size_t num_items() const { return item_ids_.size(); }
    std::size_t num_interactions() const { return items_.size(); }

    std::vector<std::pair<Index, Index>> interactions() const;

    // Sorted item indices the user interacted with.
    std::span<const Index> items_of(Index user) const;
    std::size_t item_degree(Index item) const { return item_degree_.at(static_cast<std::size_t>(item)); }
    bool has(Index user, Index item) const;

    const std::vector<std::string>& user_ids() const { return user_ids_; }
    const std::vector<std::string>& item_ids() const { return item_ids_; }
    std::optional<Index> find_user(std::string_view id) const;
    std::optional<Index> find_item(std::string_view id) const;

    friend bool operator==(const InteractionDataset& a, const InteractionDataset& b) {
        return a.domain_id_ == b.domain_id_ && a.user_ids_ == b.user_ids_ &&
               a.item_ids_ == b.item_ids_ && a.offsets_ == b.offsets_ && a.items_ == b.items_;
    }

private:
    std::string domain_id_;
    std::vector<std::string> user_ids_;
    std::vector<std::string> item_ids_;
    std::unordered_map<std::string, Index> user_lookup_;
    std::unordered_map<std::string, Index> item_lookup_;
    std::vector<std::size_t> offsets_;  // CSR row offsets, size num_users + 1
    std::vector<Index> items_;
    std::vector<std::size_t> item_degree_;
};

// Reads "user_id,item_id[,rating,timestamp]" lines; comma or tab delimited
// (detected from the first data line). Blank lines and '#' comments are skipped.
InteractionDataset load_interactions(const std::filesystem::path& path, std::string domain_id);

// Writes one "user_id\titem_id" line per interaction in (user, item) index order.
void save_interactions(const InteractionDataset& ds, const std::filesystem::path& path);

// Rebuilds `ds` under a prescribed index assignment. Every id of `ds` must be
// present in the given maps.
InteractionDataset reindexed(const InteractionDataset& ds, std::vector<std::string> user_ids,
                             std::vector<std::string> item_ids);

// Removes items below min_item and users below min_user, repeating until no
// entity violates a threshold. Surviving entities keep their relative order.
InteractionDataset filter_min_counts(const InteractionDataset& ds, std::size_t min_item = 10,
                                     std::size_t min_user = 5);

}  // namespace cdra
