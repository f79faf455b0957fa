#pragma once

// JSON checkpoints of a Learner taken between tasks.
//
// Layout (schema_version 1):
//   { "schema_version": 1, "config": {...}, "scenario": "class-il", "num_classes": C,
//     "seed": s, "network": {"dims": [...], "params": [...]}, "steps": n, "tasks_done": t,
//     "class_sets": {"0": [...], ...}, "importance": {...}, "buffer": {...},
//     "exemplars": {"<class>": {"task": t, "rows": [[...], ...]}}, "hat": {...},
//     "rng": {"shuffle": "...", "fisher": "...", "replay": "...", "hat": "..."} }
// Doubles are written with round-trip precision, so restore is bit-exact.

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "clbench/strategy.hpp"

namespace clbench {

inline nlohmann::json strategy_config_to_json(const StrategyConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"lr", c.lr},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lambda", c.effective_lambda()},
            {"temperature", c.temperature},
            {"distill_weight", c.distill_weight},
            {"xi", c.xi},
            {"buffer_capacity", c.buffer_capacity},
            {"ref_batch", c.ref_batch},
            {"gss_subset", c.gss_subset},
            {"smax", c.smax},
            {"n_fisher", c.n_fisher},
            {"hidden", c.hidden}};
}

inline StrategyConfig strategy_config_from_json(const nlohmann::json& j) {
    StrategyConfig c;
    c.kind = strategy_from_string(j.at("kind").get<std::string>());
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.temperature = j.at("temperature").get<double>();
    c.distill_weight = j.at("distill_weight").get<double>();
    c.xi = j.at("xi").get<double>();
    c.buffer_capacity = j.at("buffer_capacity").get<int>();
    c.ref_batch = j.at("ref_batch").get<int>();
    c.gss_subset = j.at("gss_subset").get<int>();
    c.smax = j.at("smax").get<double>();
    c.n_fisher = j.at("n_fisher").get<int>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    return c;
}

namespace detail {

inline nlohmann::json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}
inline nlohmann::json row_json(const RowVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector json_vec(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
inline RowVector json_row(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}
inline void set_rng_state(std::mt19937_64& rng, const std::string& s) {
    std::istringstream is(s);
    is >> rng;
    if (!is)
        throw FormatError("checkpoint: corrupt rng state");
}

} // namespace detail

inline nlohmann::json Learner::checkpoint() const {
    using nlohmann::json;
    if (frozen_)
        throw StateError("checkpoints can only be taken between tasks");
    json j;
    j["schema_version"] = checkpoint_version;
    j["config"] = strategy_config_to_json(cfg_);
    j["scenario"] = to_string(scenario_);
    j["num_classes"] = num_classes_;
    j["seed"] = seed_;
    j["network"] = {{"dims", net_.layer_dims()}, {"params", detail::vec_json(net_.params())}};
    j["steps"] = steps_;
    j["tasks_done"] = tasks_done_;
    json cs = json::object();
    for (const auto& [t, s] : class_sets_)
        cs[std::to_string(t)] = s;
    j["class_sets"] = cs;

    json imp = json::object();
    json ewc = json::array();
    for (const auto& a : importance_.ewc)
        ewc.push_back({{"fisher", detail::vec_json(a.fisher)}, {"anchor", detail::vec_json(a.anchor)}});
    imp["ewc"] = ewc;
    imp["omega_running"] = detail::vec_json(importance_.omega_running);
    imp["omega_consolidated"] = detail::vec_json(importance_.omega_consolidated);
    imp["theta_at_task_start"] = detail::vec_json(importance_.theta_at_task_start);
    imp["si_anchor"] = detail::vec_json(importance_.si_anchor);
    j["importance"] = imp;

    json entries = json::array();
    for (const auto& e : buffer_.entries())
        entries.push_back(
            {{"x", detail::row_json(e.features)}, {"label", e.label}, {"task", e.task_id}, {"score", e.score}});
    j["buffer"] = {{"capacity", buffer_.capacity()}, {"seen", buffer_.seen()}, {"entries", entries}};

    json ex = json::object();
    for (const auto& [c, rows] : exemplars_) {
        json r = json::array();
        for (const auto& x : rows)
            r.push_back(detail::row_json(x));
        ex[std::to_string(c)] = {{"task", exemplar_task_.at(c)}, {"rows", r}};
    }
    j["exemplars"] = ex;

    json emb = json::object();
    for (const auto& [t, e] : embeddings_)
        emb[std::to_string(t)] = detail::vec_json(e);
    j["hat"] = {{"embeddings", emb}, {"cumulative_mask", detail::vec_json(cumulative_mask_)}};

    j["rng"] = {{"shuffle", detail::rng_state(shuffle_rng_)},
                {"fisher", detail::rng_state(fisher_rng_)},
                {"replay", detail::rng_state(replay_rng_)},
                {"hat", detail::rng_state(hat_rng_)}};
    return j;
}

inline Learner Learner::restore(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != checkpoint_version)
            throw FormatError("checkpoint: unsupported schema_version " + j.at("schema_version").dump());
        Learner l;
        l.cfg_ = strategy_config_from_json(j.at("config"));
        validate(l.cfg_);
        l.scenario_ = scenario_from_string(j.at("scenario").get<std::string>());
        l.num_classes_ = j.at("num_classes").get<int>();
        l.seed_ = j.at("seed").get<std::uint64_t>();
        l.net_ = Network(j.at("network").at("dims").get<std::vector<int>>());
        const Vector params = detail::json_vec(j.at("network").at("params"));
        if (params.size() != l.net_.parameter_count())
            throw FormatError("checkpoint: parameter count does not match network dims");
        l.net_.params() = params;
        l.steps_ = j.at("steps").get<long long>();
        l.tasks_done_ = j.at("tasks_done").get<int>();
        for (const auto& [k, v] : j.at("class_sets").items()) {
            l.class_sets_[std::stoi(k)] = v.get<std::vector<int>>();
            for (int c : l.class_sets_[std::stoi(k)])
                l.seen_classes_.insert(c);
        }

        const auto& imp = j.at("importance");
        for (const auto& a : imp.at("ewc"))
            l.importance_.ewc.push_back({detail::json_vec(a.at("fisher")), detail::json_vec(a.at("anchor"))});
        l.importance_.omega_running = detail::json_vec(imp.at("omega_running"));
        l.importance_.omega_consolidated = detail::json_vec(imp.at("omega_consolidated"));
        l.importance_.theta_at_task_start = detail::json_vec(imp.at("theta_at_task_start"));
        l.importance_.si_anchor = detail::json_vec(imp.at("si_anchor"));

        const auto& buf = j.at("buffer");
        l.buffer_ = ReplayBuffer(buf.at("capacity").get<std::size_t>());
        for (const auto& e : buf.at("entries"))
            l.buffer_.push({detail::json_row(e.at("x")), e.at("label").get<int>(), e.at("task").get<int>(),
                            e.at("score").get<double>()});
        l.buffer_.set_seen(buf.at("seen").get<std::uint64_t>());

        for (const auto& [k, v] : j.at("exemplars").items()) {
            const int c = std::stoi(k);
            l.exemplar_task_[c] = v.at("task").get<int>();
            auto& rows = l.exemplars_[c];
            for (const auto& r : v.at("rows"))
                rows.push_back(detail::json_row(r));
        }
        if (l.cfg_.kind == StrategyKind::ICaRL)
            l.refresh_exemplar_means();

        for (const auto& [k, v] : j.at("hat").at("embeddings").items())
            l.embeddings_[std::stoi(k)] = detail::json_vec(v);
        l.cumulative_mask_ = detail::json_vec(j.at("hat").at("cumulative_mask"));

        detail::set_rng_state(l.shuffle_rng_, j.at("rng").at("shuffle").get<std::string>());
        detail::set_rng_state(l.fisher_rng_, j.at("rng").at("fisher").get<std::string>());
        detail::set_rng_state(l.replay_rng_, j.at("rng").at("replay").get<std::string>());
        detail::set_rng_state(l.hat_rng_, j.at("rng").at("hat").get<std::string>());
        return l;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

} // namespace clbench
