#include "config.hpp"

#include <fstream>
#include <functional>
#include <set>

#include "cdra/error.hpp"
#include "cdra/rng.hpp"

namespace cdra::cli {

namespace {

using nlohmann::json;

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out = "invalid config:";
    for (const auto& l : lines) out += "\n  " + l;
    return out;
}

// Reads one JSON object, recording type errors, failed checks and keys that
// were never consumed instead of stopping at the first problem.
class Reader {
public:
    Reader(const json* node, std::string where, std::vector<std::string>& errors)
        : node_(node), where_(std::move(where)), errors_(errors) {
        if (node_ && !node_->is_object()) {
            fail("", "expected an object");
            node_ = nullptr;
        }
    }

    ~Reader() {
        if (!node_) return;
        for (const auto& [key, value] : node_->items())
            if (!seen_.count(key)) fail(key, "unknown key");
    }

    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    bool has(const std::string& key) const { return node_ && node_->contains(key); }

    template <typename T>
    void read(const std::string& key, T& out, const std::function<bool(const T&)>& ok = {}, const char* rule = "") {
        if (!node_) return;
        seen_.insert(key);
        auto it = node_->find(key);
        if (it == node_->end()) return;
        T value;
        try {
            value = it->template get<T>();
        } catch (const json::exception&) {
            fail(key, std::string("expected ") + type_name<T>());
            return;
        }
        if (ok && !ok(value)) {
            fail(key, rule);
            return;
        }
        out = value;
    }

    Reader child(const std::string& key) {
        seen_.insert(key);
        const json* sub = node_ && node_->contains(key) ? &node_->at(key) : nullptr;
        return Reader(sub, path(key), errors_);
    }

    void fail(const std::string& key, const std::string& message) { errors_.push_back(path(key) + ": " + message); }

private:
    std::string path(const std::string& key) const {
        if (key.empty()) return where_.empty() ? "<root>" : where_;
        return where_.empty() ? key : where_ + "." + key;
    }

    template <typename T>
    static const char* type_name() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_same_v<T, std::string>) return "a string";
        else if constexpr (std::is_integral_v<T>) return "a non-negative integer";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else return "an array";
    }

    const json* node_;
    std::string where_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

template <typename T>
std::function<bool(const T&)> at_least(T lo) {
    return [lo](const T& v) { return v >= lo; };
}

const std::function<bool(const double&)> positive = [](const double& v) { return v > 0.0; };
const std::function<bool(const double&)> non_negative = [](const double& v) { return v >= 0.0; };
const std::function<bool(const double&)> unit_open = [](const double& v) { return v > 0.0 && v < 1.0; };
const std::function<bool(const double&)> unit_half_open = [](const double& v) { return v > 0.0 && v <= 1.0; };

void read_optim(Reader& r, OptimHyper& o) {
    r.read<std::size_t>("hidden", o.hidden);
    r.read<std::size_t>("batch_size", o.batch_size, at_least<std::size_t>(2), "must be at least 2");
    r.read<double>("learning_rate", o.learning_rate, positive, "must be positive");
    r.read<double>("lr_decay", o.lr_decay, unit_half_open, "must lie in (0, 1]");
    r.read<std::size_t>("max_epochs", o.max_epochs, at_least<std::size_t>(1), "must be positive");
    r.read<std::size_t>("patience", o.patience);
    r.read<std::size_t>("min_steps_per_epoch", o.min_steps_per_epoch, at_least<std::size_t>(1), "must be positive");
}

void read_synthetic(Reader& r, SyntheticConfig& s) {
    r.read<std::size_t>("num_domains", s.num_domains, at_least<std::size_t>(2), "must be at least 2");
    r.read<std::size_t>("latent_dim", s.latent_dim, at_least<std::size_t>(1), "must be positive");
    r.read<std::size_t>("users_per_domain", s.users_per_domain, at_least<std::size_t>(2), "must be at least 2");
    r.read<std::size_t>("items_per_domain", s.items_per_domain, at_least<std::size_t>(2), "must be at least 2");
    r.read<double>("overlap_fraction", s.overlap_fraction, unit_half_open, "must lie in (0, 1]");
    std::string transform = s.transform == TransformKind::Identity ? "identity" : "random_affine";
    r.read<std::string>(
        "transform", transform, [](const std::string& v) { return v == "identity" || v == "random_affine"; },
        "must be \"identity\" or \"random_affine\"");
    s.transform = transform == "identity" ? TransformKind::Identity : TransformKind::RandomAffine;
    r.read<double>("transform_strength", s.transform_strength, non_negative, "must be non-negative");
    r.read<double>("offset_scale", s.offset_scale, non_negative, "must be non-negative");
    r.read<double>("noise_std", s.noise_std, non_negative, "must be non-negative");
    r.read<double>("positive_quantile", s.positive_quantile, unit_open, "must lie in (0, 1)");
    r.read<double>("max_condition", s.max_condition, at_least(1.0), "must be at least 1");
}

void read_file_domain(Reader& r, FileDomain& f, const char* fallback_name) {
    std::string path;
    r.read<std::string>("path", path);
    if (path.empty()) r.fail("path", "required");
    f.path = path;
    f.domain = fallback_name;
    r.read<std::string>("domain", f.domain, [](const std::string& v) { return !v.empty(); }, "must not be empty");
}

json optim_json(const OptimHyper& o) {
    return {{"hidden", o.hidden},
            {"batch_size", o.batch_size},
            {"learning_rate", o.learning_rate},
            {"lr_decay", o.lr_decay},
            {"max_epochs", o.max_epochs},
            {"patience", o.patience},
            {"min_steps_per_epoch", o.min_steps_per_epoch}};
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join_lines(violations)), violations_(std::move(violations)) {}

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig cfg;
    std::vector<std::string> errors;
    {
        Reader root(&doc, "", errors);
        int version = 0;
        root.read<int>("schema_version", version);
        if (!root.has("schema_version")) root.fail("schema_version", "required");
        else if (version != kSchemaVersion)
            root.fail("schema_version", "unsupported version " + std::to_string(version) + ", expected " +
                                            std::to_string(kSchemaVersion));
        root.read<std::uint64_t>("seed", cfg.seed);
        std::string out = cfg.out.string();
        root.read<std::string>("out", out, [](const std::string& v) { return !v.empty(); }, "must not be empty");
        cfg.out = out;

        {
            auto data = root.child("data");
            std::string source = "synthetic";
            data.read<std::string>(
                "source", source, [](const std::string& v) { return v == "synthetic" || v == "files"; },
                "must be \"synthetic\" or \"files\"");
            cfg.data.synthetic = source == "synthetic";
            if (cfg.data.synthetic) {
                {
                    auto s = data.child("synthetic");
                    read_synthetic(s, cfg.data.synth);
                }
                std::vector<std::size_t> pair{0, 1};
                data.read<std::vector<std::size_t>>(
                    "pair", pair, [](const std::vector<std::size_t>& v) { return v.size() == 2 && v[0] != v[1]; },
                    "must hold two distinct domain indices");
                if (pair[0] >= cfg.data.synth.num_domains || pair[1] >= cfg.data.synth.num_domains)
                    data.fail("pair", "domain index out of range for num_domains");
                cfg.data.domain_x = pair[0];
                cfg.data.domain_y = pair[1];
            } else {
                auto x = data.child("x");
                auto y = data.child("y");
                if (!data.has("x")) data.fail("x", "required for file data");
                if (!data.has("y")) data.fail("y", "required for file data");
                if (data.has("x")) read_file_domain(x, cfg.data.x, "X");
                if (data.has("y")) read_file_domain(y, cfg.data.y, "Y");
                if (data.has("x") && data.has("y") && cfg.data.x.domain == cfg.data.y.domain)
                    data.fail("y.domain", "must differ from x.domain");
            }
        }
        {
            auto p = root.child("prepare");
            p.read<std::size_t>("min_item", cfg.prepare.min_item, at_least<std::size_t>(1), "must be positive");
            p.read<std::size_t>("min_user", cfg.prepare.min_user, at_least<std::size_t>(1), "must be positive");
            p.read<double>("coldstart_frac", cfg.prepare.coldstart_frac, unit_open, "must lie in (0, 1)");
            p.read<double>("eta", cfg.prepare.eta, unit_half_open, "must lie in (0, 1]");
            p.read<std::size_t>("negatives", cfg.prepare.negatives, at_least<std::size_t>(1), "must be positive");
            p.read<bool>("clamp_negatives", cfg.prepare.clamp_negatives);
        }
        {
            auto b = root.child("bpr");
            b.read<std::size_t>("dim", cfg.bpr.dim, at_least<std::size_t>(2), "must be at least 2");
            b.read<double>("learning_rate", cfg.bpr.learning_rate, positive, "must be positive");
            b.read<double>("l2_reg", cfg.bpr.l2_reg, positive, "must be positive");
            b.read<std::size_t>("epochs", cfg.bpr.epochs, at_least<std::size_t>(1), "must be positive");
            b.read<std::size_t>("negatives_per_positive", cfg.bpr.negatives_per_positive, at_least<std::size_t>(1),
                                "must be positive");
            b.read<double>("init_std", cfg.bpr.init_std, positive, "must be positive");
        }
        {
            auto a = root.child("adapter");
            a.read<double>("tau", cfg.adapter.tau, positive, "must be positive");
            std::vector<double> l{cfg.adapter.lambdas.l1, cfg.adapter.lambdas.l2, cfg.adapter.lambdas.l3};
            a.read<std::vector<double>>(
                "lambdas", l,
                [](const std::vector<double>& v) { return v.size() == 3 && v[0] >= 0 && v[1] >= 0 && v[2] >= 0; },
                "must hold three non-negative weights");
            cfg.adapter.lambdas = {l[0], l[1], l[2]};
            a.read<bool>("diagonal_scale", cfg.adapter.diagonal_scale);
            a.read<bool>("reconstruct_domain_users", cfg.adapter.reconstruct_domain_users);
            auto o = a.child("optim");
            read_optim(o, cfg.adapter.optim);
        }
        {
            auto e = root.child("emcdr");
            auto o = e.child("optim");
            read_optim(o, cfg.emcdr.optim);
        }
        root.read<std::vector<double>>(
            "etas", cfg.etas,
            [](const std::vector<double>& v) {
                if (v.empty()) return false;
                for (double x : v)
                    if (!(x > 0.0 && x <= 1.0)) return false;
                return true;
            },
            "must be a non-empty list of values in (0, 1]");
        root.read<std::vector<std::size_t>>(
            "ks", cfg.ks,
            [](const std::vector<std::size_t>& v) {
                if (v.empty()) return false;
                for (auto k : v)
                    if (k < 1) return false;
                return true;
            },
            "must be a non-empty list of positive integers");
        root.read<std::size_t>("threads", cfg.threads);
    }
    if (cfg.data.synthetic && errors.empty()) {
        try {
            cfg.data.synth.validate();
        } catch (const Error& e) {
            errors.push_back(std::string("data.synthetic: ") + e.what());
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open config file " + path.string()});
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({path.string() + ": " + e.what()});
    }
    return parse_config(doc);
}

std::uint64_t ExperimentConfig::synth_seed() const { return derive_seed(seed, 0x51); }

PrepareOptions ExperimentConfig::prepare_options() const {
    PrepareOptions p = prepare;
    p.seed = derive_seed(seed, 0x52);
    return p;
}

BprHyper ExperimentConfig::bpr_hyper() const {
    BprHyper b = bpr;
    b.seed = derive_seed(seed, 0x53);
    return b;
}

AdapterHyper ExperimentConfig::adapter_hyper() const {
    AdapterHyper a = adapter;
    a.optim.seed = derive_seed(seed, 0x54);
    return a;
}

EmcdrHyper ExperimentConfig::emcdr_hyper() const {
    EmcdrHyper e = emcdr;
    e.optim.seed = derive_seed(seed, 0x55);
    return e;
}

std::string ExperimentConfig::name_x() const {
    return data.synthetic ? synthetic_domain_name(data.domain_x) : data.x.domain;
}

std::string ExperimentConfig::name_y() const {
    return data.synthetic ? synthetic_domain_name(data.domain_y) : data.y.domain;
}

json to_json(const ExperimentConfig& cfg) {
    json data;
    if (cfg.data.synthetic) {
        const auto& s = cfg.data.synth;
        data = {{"source", "synthetic"},
                {"pair", {cfg.data.domain_x, cfg.data.domain_y}},
                {"synthetic",
                 {{"num_domains", s.num_domains},
                  {"latent_dim", s.latent_dim},
                  {"users_per_domain", s.users_per_domain},
                  {"items_per_domain", s.items_per_domain},
                  {"overlap_fraction", s.overlap_fraction},
                  {"transform", s.transform == TransformKind::Identity ? "identity" : "random_affine"},
                  {"transform_strength", s.transform_strength},
                  {"offset_scale", s.offset_scale},
                  {"noise_std", s.noise_std},
                  {"positive_quantile", s.positive_quantile},
                  {"max_condition", s.max_condition}}}};
    } else {
        data = {{"source", "files"},
                {"x", {{"path", cfg.data.x.path.string()}, {"domain", cfg.data.x.domain}}},
                {"y", {{"path", cfg.data.y.path.string()}, {"domain", cfg.data.y.domain}}}};
    }
    const auto& p = cfg.prepare;
    const auto& b = cfg.bpr;
    const auto& a = cfg.adapter;
    return {{"schema_version", kSchemaVersion},
            {"seed", cfg.seed},
            {"out", cfg.out.string()},
            {"data", data},
            {"prepare",
             {{"min_item", p.min_item},
              {"min_user", p.min_user},
              {"coldstart_frac", p.coldstart_frac},
              {"eta", p.eta},
              {"negatives", p.negatives},
              {"clamp_negatives", p.clamp_negatives}}},
            {"bpr",
             {{"dim", b.dim},
              {"learning_rate", b.learning_rate},
              {"l2_reg", b.l2_reg},
              {"epochs", b.epochs},
              {"negatives_per_positive", b.negatives_per_positive},
              {"init_std", b.init_std}}},
            {"adapter",
             {{"tau", a.tau},
              {"lambdas", {a.lambdas.l1, a.lambdas.l2, a.lambdas.l3}},
              {"diagonal_scale", a.diagonal_scale},
              {"reconstruct_domain_users", a.reconstruct_domain_users},
              {"optim", optim_json(a.optim)}}},
            {"emcdr", {{"optim", optim_json(cfg.emcdr.optim)}}},
            {"etas", cfg.etas},
            {"ks", cfg.ks},
            {"threads", cfg.threads}};
}

}  // namespace cdra::cli
