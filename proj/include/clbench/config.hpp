#pragma once

// Run and grid configuration: a flat `dotted.key = value` text format.
//
//   # comment
//   strategy.kind = ewc
//   stream.name = split-synth100
//   stream.num_tasks = 10
//
// Every key is known in advance; unknown keys, duplicate keys and invalid values are
// errors that name the key and the line.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/scenarios.hpp"
#include "clbench/strategy.hpp"
#include "clbench/util.hpp"

namespace clbench {

/// How a task stream is built: "<construction>-<dataset>", e.g. split-synth10, nc-core50.
struct StreamConfig {
    std::string name = "split-synth10";
    int num_tasks = 5;
    /// "auto" picks class-il for split/nc streams and domain-il for permuted/rotated/ni.
    std::string scenario = "auto";
    Granularity granularity = Granularity::Object;
    std::uint64_t seed = 7;
    double max_angle = 90.0;
    double session_shift = 0.5;
    int train_per_class = 0; // 0 = dataset default
    int test_per_class = 0;

    bool operator==(const StreamConfig&) const = default;
};

enum class ProtocolKind { Single, Adaptability, Scenarios, Granularity, Buffer, Epochs };

inline std::string to_string(ProtocolKind k) {
    switch (k) {
    case ProtocolKind::Single: return "single";
    case ProtocolKind::Adaptability: return "adaptability";
    case ProtocolKind::Scenarios: return "scenarios";
    case ProtocolKind::Granularity: return "granularity";
    case ProtocolKind::Buffer: return "buffer";
    case ProtocolKind::Epochs: return "epochs";
    }
    return "?";
}

inline ProtocolKind protocol_from_string(const std::string& s) {
    for (ProtocolKind k : {ProtocolKind::Single, ProtocolKind::Adaptability, ProtocolKind::Scenarios,
                           ProtocolKind::Granularity, ProtocolKind::Buffer, ProtocolKind::Epochs})
        if (to_string(k) == s)
            return k;
    throw ConfigError("unknown protocol '" + s +
                      "' (expected single, adaptability, scenarios, granularity, buffer or epochs)");
}

struct RunConfig {
    StreamConfig stream;
    StrategyConfig strategy;
    std::uint64_t seed = 1;
    int replicates = 3;
    bool record_wallclock = false;

    // grid-level settings
    ProtocolKind protocol = ProtocolKind::Single;
    std::vector<std::string> strategies; // empty = protocol default
    std::vector<double> values;          // axis values; empty = protocol default
    std::vector<std::string> benchmarks; // stream names; empty = protocol default
    int workers = 1;

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + f(v[i]);
    return out;
}

inline double parse_real(const std::string& v) {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size())
        throw std::invalid_argument(v);
    return d;
}

inline long long parse_int(const std::string& v) {
    std::size_t used = 0;
    long long d = std::stoll(v, &used);
    if (used != v.size())
        throw std::invalid_argument(v);
    return d;
}

inline int parse_int32(const std::string& v) {
    const long long d = parse_int(v);
    if (d < -2147483648LL || d > 2147483647LL)
        throw std::out_of_range(v);
    return static_cast<int>(d);
}

inline std::uint64_t parse_u64(const std::string& v) {
    if (!v.empty() && v[0] == '-')
        throw std::invalid_argument(v);
    std::size_t used = 0;
    unsigned long long d = std::stoull(v, &used);
    if (used != v.size())
        throw std::invalid_argument(v);
    return d;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw std::invalid_argument(v);
}

struct KeyDef {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<KeyDef>& key_table() {
    using R = RunConfig;
    static const std::vector<KeyDef> keys = {
        {"strategy.kind", [](R& c, const std::string& v) { c.strategy.kind = strategy_from_string(v); },
         [](const R& c) { return to_string(c.strategy.kind); }},
        {"strategy.lr", [](R& c, const std::string& v) { c.strategy.lr = parse_real(v); },
         [](const R& c) { return format_double(c.strategy.lr); }},
        {"strategy.epochs", [](R& c, const std::string& v) { c.strategy.epochs = parse_int32(v); },
         [](const R& c) { return std::to_string(c.strategy.epochs); }},
        {"strategy.batch_size", [](R& c, const std::string& v) { c.strategy.batch_size = parse_int32(v); },
         [](const R& c) { return std::to_string(c.strategy.batch_size); }},
        {"strategy.lambda",
         [](R& c, const std::string& v) {
             c.strategy.lambda = parse_real(v);
             if (c.strategy.lambda < 0)
                 throw std::out_of_range(v);
         },
         [](const R& c) { return c.strategy.lambda < 0 ? std::string("auto") : format_double(c.strategy.lambda); }},
        {"strategy.temperature", [](R& c, const std::string& v) { c.strategy.temperature = parse_real(v); },
         [](const R& c) { return format_double(c.strategy.temperature); }},
        {"strategy.distill_weight", [](R& c, const std::string& v) { c.strategy.distill_weight = parse_real(v); },
         [](const R& c) { return format_double(c.strategy.distill_weight); }},
        {"strategy.xi", [](R& c, const std::string& v) { c.strategy.xi = parse_real(v); },
         [](const R& c) { return format_double(c.strategy.xi); }},
        {"strategy.buffer_capacity",
         [](R& c, const std::string& v) { c.strategy.buffer_capacity = parse_int32(v); },
         [](const R& c) { return std::to_string(c.strategy.buffer_capacity); }},
        {"strategy.ref_batch", [](R& c, const std::string& v) { c.strategy.ref_batch = parse_int32(v); },
         [](const R& c) { return std::to_string(c.strategy.ref_batch); }},
        {"strategy.gss_subset", [](R& c, const std::string& v) { c.strategy.gss_subset = parse_int32(v); },
         [](const R& c) { return std::to_string(c.strategy.gss_subset); }},
        {"strategy.smax", [](R& c, const std::string& v) { c.strategy.smax = parse_real(v); },
         [](const R& c) { return format_double(c.strategy.smax); }},
        {"strategy.n_fisher", [](R& c, const std::string& v) { c.strategy.n_fisher = parse_int32(v); },
         [](const R& c) { return std::to_string(c.strategy.n_fisher); }},
        {"network.hidden",
         [](R& c, const std::string& v) {
             c.strategy.hidden.clear();
             for (const auto& s : split_list(v))
                 c.strategy.hidden.push_back(parse_int32(s));
         },
         [](const R& c) {
             return join<int>(c.strategy.hidden, [](const int& h) { return std::to_string(h); });
         }},
        {"stream.name", [](R& c, const std::string& v) { c.stream.name = v; },
         [](const R& c) { return c.stream.name; }},
        {"stream.num_tasks", [](R& c, const std::string& v) { c.stream.num_tasks = parse_int32(v); },
         [](const R& c) { return std::to_string(c.stream.num_tasks); }},
        {"stream.scenario",
         [](R& c, const std::string& v) {
             if (v != "auto")
                 scenario_from_string(v);
             c.stream.scenario = v;
         },
         [](const R& c) { return c.stream.scenario; }},
        {"stream.granularity",
         [](R& c, const std::string& v) { c.stream.granularity = granularity_from_string(v); },
         [](const R& c) { return to_string(c.stream.granularity); }},
        {"stream.seed", [](R& c, const std::string& v) { c.stream.seed = parse_u64(v); },
         [](const R& c) { return std::to_string(c.stream.seed); }},
        {"stream.max_angle", [](R& c, const std::string& v) { c.stream.max_angle = parse_real(v); },
         [](const R& c) { return format_double(c.stream.max_angle); }},
        {"stream.session_shift", [](R& c, const std::string& v) { c.stream.session_shift = parse_real(v); },
         [](const R& c) { return format_double(c.stream.session_shift); }},
        {"stream.train_per_class", [](R& c, const std::string& v) { c.stream.train_per_class = parse_int32(v); },
         [](const R& c) { return std::to_string(c.stream.train_per_class); }},
        {"stream.test_per_class", [](R& c, const std::string& v) { c.stream.test_per_class = parse_int32(v); },
         [](const R& c) { return std::to_string(c.stream.test_per_class); }},
        {"protocol.kind", [](R& c, const std::string& v) { c.protocol = protocol_from_string(v); },
         [](const R& c) { return to_string(c.protocol); }},
        {"protocol.strategies",
         [](R& c, const std::string& v) {
             c.strategies = split_list(v);
             for (const auto& s : c.strategies)
                 strategy_from_string(s);
         },
         [](const R& c) { return join<std::string>(c.strategies, [](const std::string& s) { return s; }); }},
        {"protocol.values",
         [](R& c, const std::string& v) {
             c.values.clear();
             for (const auto& s : split_list(v))
                 c.values.push_back(parse_real(s));
         },
         [](const R& c) { return join<double>(c.values, [](const double& d) { return format_double(d); }); }},
        {"protocol.benchmarks", [](R& c, const std::string& v) { c.benchmarks = split_list(v); },
         [](const R& c) { return join<std::string>(c.benchmarks, [](const std::string& s) { return s; }); }},
        {"protocol.record_wallclock", [](R& c, const std::string& v) { c.record_wallclock = parse_bool(v); },
         [](const R& c) { return std::string(c.record_wallclock ? "true" : "false"); }},
        {"seed", [](R& c, const std::string& v) { c.seed = parse_u64(v); },
         [](const R& c) { return std::to_string(c.seed); }},
        {"replicates", [](R& c, const std::string& v) { c.replicates = parse_int32(v); },
         [](const R& c) { return std::to_string(c.replicates); }},
        {"workers", [](R& c, const std::string& v) { c.workers = parse_int32(v); },
         [](const R& c) { return std::to_string(c.workers); }},
    };
    return keys;
}

inline std::string normalize_key(const std::string& s) {
    std::string out;
    for (char c : s)
        if (c != '_' && c != '.' && c != '-')
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::size_t longest_common_substring(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    std::size_t best = 0;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
            best = std::max(best, cur[j]);
        }
        std::swap(prev, cur);
    }
    return best;
}

} // namespace detail

inline std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : detail::key_table())
        out.push_back(k.key);
    return out;
}

/// Closest known key to a misspelled one (longest shared run of characters, ignoring
/// separators; ties go to the shorter key).
inline std::string suggest_key(const std::string& unknown) {
    const std::string u = detail::normalize_key(unknown);
    std::string best;
    std::size_t best_score = 0;
    for (const auto& k : detail::key_table()) {
        const std::size_t score = detail::longest_common_substring(u, detail::normalize_key(k.key));
        if (score > best_score || (score == best_score && !best.empty() && k.key.size() < best.size())) {
            best_score = score;
            best = k.key;
        }
    }
    return best_score >= 3 ? best : std::string();
}

inline void validate(const RunConfig& c) {
    validate(c.strategy);
    if (c.stream.num_tasks < 1)
        throw ConfigError("stream.num_tasks must be at least 1");
    if (c.replicates < 1)
        throw ConfigError("replicates must be at least 1");
    if (c.workers < 1)
        throw ConfigError("workers must be at least 1");
    if (c.stream.train_per_class < 0 || c.stream.test_per_class < 0)
        throw ConfigError("stream.train_per_class/test_per_class must be nonnegative");
    if (c.stream.session_shift < 0)
        throw ConfigError("stream.session_shift must be nonnegative");
    for (double v : c.values)
        if (!(v >= 1) || v != static_cast<double>(static_cast<long long>(v)))
            throw ConfigError("protocol.values must be positive integers");
}

inline RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>") {
    RunConfig cfg;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string body = detail::trim(line.substr(0, line.find('#')));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value'");
        const std::string key = detail::trim(body.substr(0, eq));
        const std::string value = detail::trim(body.substr(eq + 1));
        const auto& table = detail::key_table();
        auto it = std::find_if(table.begin(), table.end(), [&](const auto& k) { return k.key == key; });
        if (it == table.end()) {
            const std::string hint = suggest_key(key);
            throw ConfigError(where + ": unknown key '" + key + "'" +
                              (hint.empty() ? "" : " (did you mean '" + hint + "'?)"));
        }
        if (auto [pos, fresh] = seen.emplace(key, lineno); !fresh)
            throw ConfigError(where + ": key '" + key + "' already set on line " + std::to_string(pos->second));
        if (value.empty())
            throw ConfigError(where + ": key '" + key + "' has no value");
        try {
            it->set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": key '" + key + "': " + e.what());
        } catch (const std::exception&) {
            throw ConfigError(where + ": key '" + key + "': invalid value '" + value + "'");
        }
    }
    try {
        validate(cfg);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

/// Every key, in table order, with its current value. Parses back to an equal config.
inline std::string serialize_config(const RunConfig& c) {
    std::string out;
    for (const auto& k : detail::key_table()) {
        std::string v = k.get(c);
        if (v.empty() || (k.key == "strategy.lambda" && v == "auto"))
            continue;
        out += k.key + " = " + v + "\n";
    }
    return out;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(serialize_config(c))); }

} // namespace clbench
