#include "cdra/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cdra/error.hpp"

namespace cdra {

InteractionDataset::InteractionDataset(std::string domain_id, std::vector<std::string> user_ids,
                                       std::vector<std::string> item_ids,
                                       std::vector<std::pair<Index, Index>> pairs)
    : domain_id_(std::move(domain_id)), user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)) {
    for (std::size_t u = 0; u < user_ids_.size(); ++u) {
        if (!user_lookup_.emplace(user_ids_[u], static_cast<Index>(u)).second)
            throw Error(ErrorCode::InvalidArgument, "duplicate user id '" + user_ids_[u] + "'");
    }
    for (std::size_t i = 0; i < item_ids_.size(); ++i) {
        if (!item_lookup_.emplace(item_ids_[i], static_cast<Index>(i)).second)
            throw Error(ErrorCode::InvalidArgument, "duplicate item id '" + item_ids_[i] + "'");
    }
    const auto nu = static_cast<Index>(user_ids_.size());
    const auto ni = static_cast<Index>(item_ids_.size());
    for (const auto& [u, i] : pairs) {
        if (u < 0 || u >= nu || i < 0 || i >= ni)
            throw Error(ErrorCode::OutOfRange, "interaction (" + std::to_string(u) + ", " +
                                                   std::to_string(i) + ") outside the id space");
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    offsets_.assign(user_ids_.size() + 1, 0);
    item_degree_.assign(item_ids_.size(), 0);
    items_.reserve(pairs.size());
    for (const auto& [u, i] : pairs) {
        ++offsets_[static_cast<std::size_t>(u) + 1];
        ++item_degree_[static_cast<std::size_t>(i)];
        items_.push_back(i);
    }
    for (std::size_t u = 0; u < user_ids_.size(); ++u) offsets_[u + 1] += offsets_[u];
}

InteractionDataset InteractionDataset::from_raw(
    std::string domain_id, std::span<const std::pair<std::string, std::string>> rows) {
    std::vector<std::string> users;
    std::vector<std::string> items;
    std::unordered_map<std::string, Index> user_lookup;
    std::unordered_map<std::string, Index> item_lookup;
    std::vector<std::pair<Index, Index>> pairs;
    pairs.reserve(rows.size());
    for (const auto& [user, item] : rows) {
        auto [uit, unew] = user_lookup.emplace(user, static_cast<Index>(users.size()));
        if (unew) users.push_back(user);
        auto [iit, inew] = item_lookup.emplace(item, static_cast<Index>(items.size()));
        if (inew) items.push_back(item);
        pairs.emplace_back(uit->second, iit->second);
    }
    return InteractionDataset(std::move(domain_id), std::move(users), std::move(items), std::move(pairs));
}

std::vector<std::pair<Index, Index>> InteractionDataset::interactions() const {
    std::vector<std::pair<Index, Index>> out;
    out.reserve(items_.size());
    for (std::size_t u = 0; u < user_ids_.size(); ++u) {
        for (std::size_t k = offsets_[u]; k < offsets_[u + 1]; ++k)
            out.emplace_back(static_cast<Index>(u), items_[k]);
    }
    return out;
}

std::span<const Index> InteractionDataset::items_of(Index user) const {
    if (user < 0 || static_cast<std::size_t>(user) >= user_ids_.size())
        throw Error(ErrorCode::OutOfRange, "user index " + std::to_string(user));
    const auto u = static_cast<std::size_t>(user);
    return {items_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
}

bool InteractionDataset::has(Index user, Index item) const {
    auto row = items_of(user);
    return std::binary_search(row.begin(), row.end(), item);
}

std::optional<Index> InteractionDataset::find_user(std::string_view id) const {
    auto it = user_lookup_.find(std::string(id));
    if (it == user_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<Index> InteractionDataset::find_item(std::string_view id) const {
    auto it = item_lookup_.find(std::string(id));
    if (it == item_lookup_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delimiter, start);
        fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

bool is_number(std::string_view s) {
    if (s.empty()) return false;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

InteractionDataset load_interactions(const std::filesystem::path& path, std::string domain_id) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());

    std::vector<std::pair<std::string, std::string>> rows;
    std::optional<char> delimiter;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        if (!delimiter) delimiter = body.find('\t') != std::string_view::npos ? '\t' : ',';
        const auto fields = split_fields(body, *delimiter);
        const auto where = path.string() + ", line " + std::to_string(line_no);
        if (fields.size() < 2 || fields.size() > 4)
            throw Error(ErrorCode::Parse, where + ": expected 2 to 4 fields, found " +
                                              std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            throw Error(ErrorCode::Parse, where + ": empty user or item id");
        for (std::size_t f = 2; f < fields.size(); ++f) {
            if (!is_number(fields[f]))
                throw Error(ErrorCode::Parse, where + ": non-numeric field '" + std::string(fields[f]) + "'");
        }
        rows.emplace_back(std::string(fields[0]), std::string(fields[1]));
    }
    if (rows.empty()) throw Error(ErrorCode::EmptyDataset, path.string() + " has no interactions");
    return InteractionDataset::from_raw(std::move(domain_id), rows);
}

void save_interactions(const InteractionDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& [u, i] : ds.interactions()) {
        out << ds.user_ids()[static_cast<std::size_t>(u)] << '\t'
            << ds.item_ids()[static_cast<std::size_t>(i)] << '\n';
    }
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

InteractionDataset reindexed(const InteractionDataset& ds, std::vector<std::string> user_ids,
                             std::vector<std::string> item_ids) {
    std::unordered_map<std::string_view, Index> users;
    std::unordered_map<std::string_view, Index> items;
    for (std::size_t u = 0; u < user_ids.size(); ++u) users.emplace(user_ids[u], static_cast<Index>(u));
    for (std::size_t i = 0; i < item_ids.size(); ++i) items.emplace(item_ids[i], static_cast<Index>(i));

    std::vector<std::pair<Index, Index>> pairs;
    pairs.reserve(ds.num_interactions());
    for (const auto& [u, i] : ds.interactions()) {
        const auto& uid = ds.user_ids()[static_cast<std::size_t>(u)];
        const auto& iid = ds.item_ids()[static_cast<std::size_t>(i)];
        auto uit = users.find(uid);
        auto iit = items.find(iid);
        if (uit == users.end() || iit == items.end())
            throw Error(ErrorCode::Format, "interaction (" + uid + ", " + iid + ") not covered by index map");
        pairs.emplace_back(uit->second, iit->second);
    }
    return InteractionDataset(ds.domain_id(), std::move(user_ids), std::move(item_ids), std::move(pairs));
}

InteractionDataset filter_min_counts(const InteractionDataset& ds, std::size_t min_item, std::size_t min_user) {
    if (min_item < 1 || min_user < 1)
        throw Error(ErrorCode::InvalidArgument, "filter thresholds must be at least 1");

    std::vector<char> user_alive(ds.num_users(), 1);
    std::vector<char> item_alive(ds.num_items(), 1);
    const auto pairs = ds.interactions();

    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::size_t> item_count(ds.num_items(), 0);
        for (const auto& [u, i] : pairs) {
            if (user_alive[static_cast<std::size_t>(u)] && item_alive[static_cast<std::size_t>(i)])
                ++item_count[static_cast<std::size_t>(i)];
        }
        for (std::size_t i = 0; i < item_alive.size(); ++i) {
            if (item_alive[i] && item_count[i] < min_item) {
                item_alive[i] = 0;
                changed = true;
            }
        }
        std::vector<std::size_t> user_count(ds.num_users(), 0);
        for (const auto& [u, i] : pairs) {
            if (user_alive[static_cast<std::size_t>(u)] && item_alive[static_cast<std::size_t>(i)])
                ++user_count[static_cast<std::size_t>(u)];
        }
        for (std::size_t u = 0; u < user_alive.size(); ++u) {
            if (user_alive[u] && user_count[u] < min_user) {
                user_alive[u] = 0;
                changed = true;
            }
        }
    }

    std::vector<Index> user_map(ds.num_users(), -1);
    std::vector<Index> item_map(ds.num_items(), -1);
    std::vector<std::string> users;
    std::vector<std::string> items;
    for (std::size_t u = 0; u < user_alive.size(); ++u) {
        if (user_alive[u]) {
            user_map[u] = static_cast<Index>(users.size());
            users.push_back(ds.user_ids()[u]);
        }
    }
    for (std::size_t i = 0; i < item_alive.size(); ++i) {
        if (item_alive[i]) {
            item_map[i] = static_cast<Index>(items.size());
            items.push_back(ds.item_ids()[i]);
        }
    }
    std::vector<std::pair<Index, Index>> kept;
    for (const auto& [u, i] : pairs) {
        const auto nu = user_map[static_cast<std::size_t>(u)];
        const auto ni = item_map[static_cast<std::size_t>(i)];
        if (nu >= 0 && ni >= 0) kept.emplace_back(nu, ni);
    }
    if (kept.empty())
        throw Error(ErrorCode::DegenerateDataset,
                    "filtering '" + ds.domain_id() + "' left no interactions");
    return InteractionDataset(ds.domain_id(), std::move(users), std::move(items), std::move(kept));
}

}  // namespace cdra
