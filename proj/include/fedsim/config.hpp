#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/federation.hpp"

namespace fedsim {

struct DatasetConfig {
    enum class Type { synthetic, cifar10 };
    Type type = Type::synthetic;
    std::string path;  // cifar10 root; falls back to $FEDSIM_DATA_DIR when empty
    std::size_t classes = 10;
    std::size_t per_class = 500;
    std::size_t test_per_class = 100;
    std::size_t dim = 32;
    double separation = 4.0;
    std::uint64_t seed = 1;

    bool operator==(const DatasetConfig&) const = default;
};

struct ModelConfig {
    enum class Type { mlp, paper_cnn };
    Type type = Type::mlp;
    std::vector<std::size_t> hidden = {64};  // mlp only

    bool operator==(const ModelConfig&) const = default;
};

// One scheduled run: a label plus hyperparameter overrides on the base
// config, stored with canonicalized value strings.
struct SweepEntry {
    std::string label;
    std::vector<std::pair<std::string, std::string>> assignments;

    bool operator==(const SweepEntry&) const = default;
};

struct NamedRun {
    std::string label;
    HyperParams hp;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ModelConfig model;
    HyperParams hyperparams;
    std::vector<SweepEntry> sweep;
    std::string output_path = "results.csv";

    bool operator==(const ExperimentConfig&) const = default;

    // Fully resolved, validated run list; one "run" entry when no sweep is
    // configured.
    std::vector<NamedRun> runs() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& path) {
    std::uint64_t out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(path + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

inline std::size_t parse_size(const std::string& v, const std::string& path) {
    return static_cast<std::size_t>(parse_u64(v, path));
}

inline double parse_double(const std::string& v, const std::string& path) {
    double out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(path + ": expected a number, got '" + v + "'");
    return out;
}

// Shortest round-trip representation; keeps serialize/parse an identity.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

inline std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& path) {
    std::vector<std::size_t> out;
    std::string cur;
    std::stringstream ss(v);
    while (std::getline(ss, cur, ',')) {
        cur = trim(cur);
        if (cur.empty()) throw ConfigError(path + ": empty list element");
        out.push_back(parse_size(cur, path));
        if (out.back() == 0) throw ConfigError(path + ": sizes must be positive");
    }
    if (out.empty()) throw ConfigError(path + ": expected a comma-separated list");
    return out;
}

inline bool is_hyperparam_key(const std::string& key) {
    static const std::set<std::string> keys = {"T",  "K",      "E",    "B",
                                              "eta", "momentum", "m",    "lambda",
                                              "pool", "sample_ratio", "seed"};
    return keys.count(key) > 0;
}

// Applies one `key = value` to a HyperParams, with per-key range checks.
// Returns the canonical value string. Setting lambda directly clears any
// pool override; setting pool derives lambda = pool/m at validation time.
inline std::string apply_hyperparam(HyperParams& hp, const std::string& key,
                                    const std::string& value, const std::string& path) {
    if (key == "T") {
        hp.rounds = parse_size(value, path);
        if (hp.rounds < 1) throw ConfigError(path + ": T must be >= 1");
        return std::to_string(hp.rounds);
    }
    if (key == "K") {
        hp.clients = parse_size(value, path);
        if (hp.clients < 1) throw ConfigError(path + ": K must be >= 1");
        return std::to_string(hp.clients);
    }
    if (key == "E") {
        hp.local_epochs = parse_size(value, path);
        if (hp.local_epochs < 1) throw ConfigError(path + ": E must be >= 1");
        return std::to_string(hp.local_epochs);
    }
    if (key == "B") {
        hp.batch_size = parse_size(value, path);
        if (hp.batch_size < 1) throw ConfigError(path + ": B must be >= 1");
        return std::to_string(hp.batch_size);
    }
    if (key == "eta") {
        hp.learning_rate = parse_double(value, path);
        if (!(hp.learning_rate > 0)) throw ConfigError(path + ": eta must be > 0");
        return format_double(hp.learning_rate);
    }
    if (key == "momentum") {
        hp.momentum = parse_double(value, path);
        if (hp.momentum < 0 || hp.momentum >= 1)
            throw ConfigError(path + ": momentum must be in [0,1)");
        return format_double(hp.momentum);
    }
    if (key == "m") {
        hp.knowledgeable = parse_size(value, path);
        return std::to_string(hp.knowledgeable);
    }
    if (key == "lambda") {
        double lam = parse_double(value, path);
        if (!(lam > 0) || lam > 1) throw ConfigError(path + ": lambda must be in (0,1]");
        hp.lambda = lam;
        hp.pool.reset();
        return format_double(lam);
    }
    if (key == "pool") {
        double pool = parse_double(value, path);
        if (!(pool > 0) || pool > 1) throw ConfigError(path + ": pool must be in (0,1]");
        hp.pool = pool;
        return format_double(pool);
    }
    if (key == "sample_ratio") {
        double r = parse_double(value, path);
        if (r != 1.0) throw ConfigError(path + ": sample_ratio is fixed at 1");
        hp.sample_ratio = r;
        return format_double(r);
    }
    if (key == "seed") {
        hp.seed = parse_u64(value, path);
        return std::to_string(hp.seed);
    }
    throw ConfigError(path + ": unknown hyperparameter '" + key + "'");
}

inline void check_label(const std::string& label, const std::string& path) {
    if (label.empty()) throw ConfigError(path + ": empty run label");
    for (char c : label)
        if (c == ',' || c == ' ' || c == '\t' || c == '=')
            throw ConfigError(path + ": run label '" + label +
                              "' must not contain spaces, commas or '='");
}

}  // namespace detail

inline std::vector<NamedRun> ExperimentConfig::runs() const {
    std::vector<NamedRun> out;
    if (sweep.empty()) {
        HyperParams hp = hyperparams;
        hp.validate();
        out.push_back({"run", hp});
        return out;
    }
    for (const auto& entry : sweep) {
        HyperParams hp = hyperparams;
        for (const auto& [key, value] : entry.assignments)
            detail::apply_hyperparam(hp, key, value, "sweep." + entry.label + "." + key);
        hp.validate();
        out.push_back({entry.label, hp});
    }
    return out;
}

// Parses the flat sectioned key=value format. `origin` names the source in
// error messages (a file path or a test tag).
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::set<std::string> labels;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string at = origin + ":" + std::to_string(line_no);

        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(at + ": unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section != "dataset" && section != "model" && section != "hyperparams" &&
                section != "sweep" && section != "output")
                throw ConfigError(at + ": unknown section [" + section + "]");
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(at + ": expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(at + ": empty key");
        if (section.empty())
            throw ConfigError(at + ": key '" + key + "' appears before any [section]");

        if (section == "dataset") {
            const std::string path = "dataset." + key;
            if (key == "type") {
                if (value == "synthetic") cfg.dataset.type = DatasetConfig::Type::synthetic;
                else if (value == "cifar10") cfg.dataset.type = DatasetConfig::Type::cifar10;
                else throw ConfigError(path + ": expected 'synthetic' or 'cifar10'");
            } else if (key == "path") {
                cfg.dataset.path = value;
            } else if (key == "classes") {
                cfg.dataset.classes = detail::parse_size(value, path);
                if (cfg.dataset.classes < 2) throw ConfigError(path + ": need >= 2 classes");
            } else if (key == "per_class") {
                cfg.dataset.per_class = detail::parse_size(value, path);
                if (cfg.dataset.per_class < 1) throw ConfigError(path + ": must be >= 1");
            } else if (key == "test_per_class") {
                cfg.dataset.test_per_class = detail::parse_size(value, path);
                if (cfg.dataset.test_per_class < 1) throw ConfigError(path + ": must be >= 1");
            } else if (key == "dim") {
                cfg.dataset.dim = detail::parse_size(value, path);
                if (cfg.dataset.dim < 1) throw ConfigError(path + ": must be >= 1");
            } else if (key == "separation") {
                cfg.dataset.separation = detail::parse_double(value, path);
                if (!(cfg.dataset.separation > 0)) throw ConfigError(path + ": must be > 0");
            } else if (key == "seed") {
                cfg.dataset.seed = detail::parse_u64(value, path);
            } else {
                throw ConfigError(path + ": unknown key");
            }
        } else if (section == "model") {
            const std::string path = "model." + key;
            if (key == "type") {
                if (value == "mlp") cfg.model.type = ModelConfig::Type::mlp;
                else if (value == "paper_cnn") cfg.model.type = ModelConfig::Type::paper_cnn;
                else throw ConfigError(path + ": expected 'mlp' or 'paper_cnn'");
            } else if (key == "hidden") {
                cfg.model.hidden = detail::parse_size_list(value, path);
            } else {
                throw ConfigError(path + ": unknown key");
            }
        } else if (section == "hyperparams") {
            detail::apply_hyperparam(cfg.hyperparams, key, value, "hyperparams." + key);
        } else if (section == "sweep") {
            const std::string path = "sweep." + key;
            if (detail::is_hyperparam_key(key)) {
                // Expansion form: `K = 10,20,100` schedules one run per value.
                std::string cur;
                std::stringstream ss(value);
                bool any = false;
                while (std::getline(ss, cur, ',')) {
                    cur = detail::trim(cur);
                    if (cur.empty()) throw ConfigError(path + ": empty sweep value");
                    HyperParams probe = cfg.hyperparams;
                    std::string canon = detail::apply_hyperparam(probe, key, cur, path);
                    SweepEntry entry;
                    entry.label = key + "_" + canon;
                    entry.assignments = {{key, canon}};
                    detail::check_label(entry.label, path);
                    if (!labels.insert(entry.label).second)
                        throw ConfigError(path + ": duplicate run label '" + entry.label + "'");
                    cfg.sweep.push_back(std::move(entry));
                    any = true;
                }
                if (!any) throw ConfigError(path + ": expected a comma-separated list");
            } else {
                // Labeled form: `label = K=100 m=1 lambda=1`.
                detail::check_label(key, path);
                if (!labels.insert(key).second)
                    throw ConfigError(path + ": duplicate run label '" + key + "'");
                SweepEntry entry;
                entry.label = key;
                std::stringstream ss(value);
                std::string tok;
                while (ss >> tok) {
                    auto teq = tok.find('=');
                    if (teq == std::string::npos)
                        throw ConfigError(path + ": expected key=value tokens, got '" + tok + "'");
                    std::string akey = tok.substr(0, teq);
                    std::string avalue = tok.substr(teq + 1);
                    HyperParams probe = cfg.hyperparams;
                    std::string canon =
                        detail::apply_hyperparam(probe, akey, avalue, path + "." + akey);
                    entry.assignments.emplace_back(akey, canon);
                }
                if (entry.assignments.empty())
                    throw ConfigError(path + ": sweep entry has no assignments");
                cfg.sweep.push_back(std::move(entry));
            }
        } else {  // output
            const std::string path = "output." + key;
            if (key == "path") {
                if (value.empty()) throw ConfigError(path + ": must not be empty");
                cfg.output_path = value;
            } else {
                throw ConfigError(path + ": unknown key");
            }
        }
    }

    cfg.hyperparams.validate();
    cfg.runs();  // validate every sweep point
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& file_path) {
    std::ifstream in(file_path);
    if (!in) throw ConfigError("cannot open config file " + file_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), file_path);
}

// Emits every field explicitly; parse_config_text(serialize(c)) == c.
inline std::string serialize(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "[dataset]\n";
    os << "type = "
       << (cfg.dataset.type == DatasetConfig::Type::synthetic ? "synthetic" : "cifar10")
       << "\n";
    if (!cfg.dataset.path.empty()) os << "path = " << cfg.dataset.path << "\n";
    os << "classes = " << cfg.dataset.classes << "\n";
    os << "per_class = " << cfg.dataset.per_class << "\n";
    os << "test_per_class = " << cfg.dataset.test_per_class << "\n";
    os << "dim = " << cfg.dataset.dim << "\n";
    os << "separation = " << detail::format_double(cfg.dataset.separation) << "\n";
    os << "seed = " << cfg.dataset.seed << "\n";
    os << "\n[model]\n";
    os << "type = " << (cfg.model.type == ModelConfig::Type::mlp ? "mlp" : "paper_cnn")
       << "\n";
    os << "hidden = ";
    for (std::size_t i = 0; i < cfg.model.hidden.size(); ++i)
        os << (i ? "," : "") << cfg.model.hidden[i];
    os << "\n";
    os << "\n[hyperparams]\n";
    os << "T = " << cfg.hyperparams.rounds << "\n";
    os << "K = " << cfg.hyperparams.clients << "\n";
    os << "E = " << cfg.hyperparams.local_epochs << "\n";
    os << "B = " << cfg.hyperparams.batch_size << "\n";
    os << "eta = " << detail::format_double(cfg.hyperparams.learning_rate) << "\n";
    os << "momentum = " << detail::format_double(cfg.hyperparams.momentum) << "\n";
    os << "m = " << cfg.hyperparams.knowledgeable << "\n";
    os << "lambda = " << detail::format_double(cfg.hyperparams.lambda) << "\n";
    if (cfg.hyperparams.pool)
        os << "pool = " << detail::format_double(*cfg.hyperparams.pool) << "\n";
    os << "sample_ratio = " << detail::format_double(cfg.hyperparams.sample_ratio) << "\n";
    os << "seed = " << cfg.hyperparams.seed << "\n";
    if (!cfg.sweep.empty()) {
        os << "\n[sweep]\n";
        for (const auto& entry : cfg.sweep) {
            os << entry.label << " =";
            for (const auto& [k, v] : entry.assignments) os << " " << k << "=" << v;
            os << "\n";
        }
    }
    os << "\n[output]\n";
    os << "path = " << cfg.output_path << "\n";
    return os.str();
}

}  // namespace fedsim
