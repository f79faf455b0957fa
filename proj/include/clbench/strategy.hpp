#pragma once

// The eight learners behind one lifecycle: begin_task -> epochs of minibatch SGD ->
// end_task -> predict.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "clbench/audit.hpp"
#include "clbench/hat.hpp"
#include "clbench/icarl.hpp"
#include "clbench/nn.hpp"
#include "clbench/regularization.hpp"
#include "clbench/replay.hpp"
#include "clbench/scenarios.hpp"
#include "clbench/util.hpp"

namespace clbench {

enum class StrategyKind { Naive, LwF, EWC, SI, ICaRL, AGEM, GSS, HAT };

inline const std::vector<StrategyKind>& all_strategy_kinds() {
    static const std::vector<StrategyKind> kinds = {StrategyKind::Naive, StrategyKind::LwF,  StrategyKind::EWC,
                                                    StrategyKind::SI,    StrategyKind::ICaRL, StrategyKind::AGEM,
                                                    StrategyKind::GSS,   StrategyKind::HAT};
    return kinds;
}

inline std::string to_string(StrategyKind k) {
    switch (k) {
    case StrategyKind::Naive: return "naive";
    case StrategyKind::LwF: return "lwf";
    case StrategyKind::EWC: return "ewc";
    case StrategyKind::SI: return "si";
    case StrategyKind::ICaRL: return "icarl";
    case StrategyKind::AGEM: return "agem";
    case StrategyKind::GSS: return "gss";
    case StrategyKind::HAT: return "hat";
    }
    return "?";
}

inline StrategyKind strategy_from_string(const std::string& s) {
    for (StrategyKind k : all_strategy_kinds())
        if (to_string(k) == s)
            return k;
    throw ConfigError("unknown strategy '" + s + "' (expected naive, lwf, ewc, si, icarl, agem, gss or hat)");
}

inline bool uses_replay(StrategyKind k) {
    return k == StrategyKind::ICaRL || k == StrategyKind::AGEM || k == StrategyKind::GSS;
}

struct StrategyConfig {
    StrategyKind kind = StrategyKind::Naive;
    double lr = 0.05;
    int epochs = 1;
    int batch_size = 64;
    /// Penalty strength; negative selects the per-kind default (EWC 5000, SI 1).
    double lambda = -1.0;
    double temperature = 2.0;
    double distill_weight = 1.0;
    double xi = 0.1;
    int buffer_capacity = 1000;
    int ref_batch = 256;
    int gss_subset = 10;
    double smax = 400.0;
    int n_fisher = 1024;
    std::vector<int> hidden = {100, 100};

    double effective_lambda() const {
        if (lambda >= 0)
            return lambda;
        if (kind == StrategyKind::EWC)
            return 5000.0;
        if (kind == StrategyKind::SI)
            return 1.0;
        return 0.0;
    }

    bool operator==(const StrategyConfig&) const = default;
};

inline void validate(const StrategyConfig& c) {
    if (!(c.lr > 0))
        throw ConfigError("strategy.lr must be positive");
    if (c.epochs < 1)
        throw ConfigError("strategy.epochs must be at least 1");
    if (c.batch_size < 1)
        throw ConfigError("strategy.batch_size must be at least 1");
    if (!(c.temperature > 0))
        throw ConfigError("strategy.temperature must be positive");
    if (!(c.xi > 0))
        throw ConfigError("strategy.xi must be positive");
    if (c.distill_weight < 0)
        throw ConfigError("strategy.distill_weight must be nonnegative");
    if (c.buffer_capacity < 0)
        throw ConfigError("strategy.buffer_capacity must be nonnegative");
    if (uses_replay(c.kind) && c.buffer_capacity == 0)
        throw ConfigError("strategy.buffer_capacity must be positive for " + to_string(c.kind));
    if (c.ref_batch < 1)
        throw ConfigError("strategy.ref_batch must be at least 1");
    if (c.gss_subset < 1)
        throw ConfigError("strategy.gss_subset must be at least 1");
    if (!(c.smax > 0))
        throw ConfigError("strategy.smax must be positive");
    if (c.n_fisher < 1)
        throw ConfigError("strategy.n_fisher must be at least 1");
    if (c.hidden.empty())
        throw ConfigError("network.hidden needs at least one layer");
    for (int h : c.hidden)
        if (h < 1)
            throw ConfigError("network.hidden widths must be positive");
}

inline void check_compatible(StrategyKind kind, Scenario scenario) {
    if (kind == StrategyKind::HAT && scenario != Scenario::TaskIL)
        throw ConfigError("hat requires a task-il stream (got " + to_string(scenario) + ")");
}

class Learner {
public:
    static constexpr int checkpoint_version = 1;

    Learner(StrategyConfig cfg, int input_dim, int num_classes, Scenario scenario, std::uint64_t seed)
        : cfg_(std::move(cfg)), scenario_(scenario), num_classes_(num_classes), seed_(seed) {
        validate(cfg_);
        check_compatible(cfg_.kind, scenario_);
        std::vector<int> dims{input_dim};
        dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
        dims.push_back(num_classes);
        net_ = Network::initialized(dims, derive_seed(seed, "init"));
        shuffle_rng_.seed(derive_seed(seed, "shuffle"));
        fisher_rng_.seed(derive_seed(seed, "fisher"));
        replay_rng_.seed(derive_seed(seed, "replay"));
        hat_rng_.seed(derive_seed(seed, "hat"));
        buffer_ = ReplayBuffer(static_cast<std::size_t>(uses_replay(cfg_.kind) ? cfg_.buffer_capacity : 0));
        if (cfg_.kind == StrategyKind::HAT)
            cumulative_mask_ = Vector::Zero(net_.hidden_units());
    }

    const StrategyConfig& config() const { return cfg_; }
    Scenario scenario() const { return scenario_; }
    const Network& network() const { return net_; }
    Network& network() { return net_; }
    long long gradient_steps() const { return steps_; }
    int tasks_done() const { return tasks_done_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const ImportanceState& importance() const { return importance_; }
    const Vector& cumulative_mask() const { return cumulative_mask_; }
    const std::optional<Network>& frozen() const { return frozen_; }
    const std::map<int, std::vector<RowVector>>& exemplars() const { return exemplars_; }
    const std::vector<ClassMean>& class_means() const { return class_means_; }

    /// Embedding of a trained HAT task.
    const Vector& hat_embedding(int task_id) const { return embeddings_.at(task_id); }

    /// Number of stored replay samples (buffer entries or iCaRL exemplars).
    std::size_t memory_size() const {
        if (cfg_.kind == StrategyKind::ICaRL) {
            std::size_t n = 0;
            for (const auto& [c, ex] : exemplars_)
                n += ex.size();
            return n;
        }
        return buffer_.size();
    }

    /// Runs begin_task, cfg.epochs of shuffled minibatch SGD, then end_task.
    void train_task(const TaskView& task) {
        begin_task(task);
        const LabeledDataset& data = task.train();
        const auto n = static_cast<std::size_t>(data.size());
        if (n == 0)
            throw ConfigError("task " + std::to_string(task.task_id()) + " has no training data");
        const auto bs = static_cast<std::size_t>(cfg_.batch_size);
        const int batches = static_cast<int>((n + bs - 1) / bs);
        std::vector<int> order(n);
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), shuffle_rng_);
            for (int b = 0; b < batches; ++b) {
                const std::size_t lo = static_cast<std::size_t>(b) * bs;
                const std::size_t hi = std::min(n, lo + bs);
                std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(hi));
                train_batch(data, idx, task.task_id(), epoch, b, batches);
            }
        }
        end_task(task);
    }

    int predict(const RowVector& x, std::optional<int> task_hint = std::nullopt) const {
        Matrix m = x;
        return predict_batch(m, task_hint).front();
    }

    /// Class-IL / Domain-IL: argmax over every seen class. Task-IL: argmax restricted to the
    /// hinted task's classes (HAT also applies that task's gates). iCaRL classifies by
    /// nearest exemplar mean. Ties go to the lowest class id.
    std::vector<int> predict_batch(const Matrix& inputs, std::optional<int> task_hint = std::nullopt) const {
        if (tasks_done_ == 0)
            throw StateError("predict called before any task was trained");
        std::vector<int> columns;
        GateVector gates;
        const GateVector* gp = nullptr;
        if (task_hint) {
            auto it = class_sets_.find(*task_hint);
            if (it == class_sets_.end() || *task_hint >= tasks_done_)
                throw InputError("task hint " + std::to_string(*task_hint) + " refers to an unseen task");
            columns = it->second;
            if (cfg_.kind == StrategyKind::HAT) {
                gates = hat_gate(embeddings_.at(*task_hint), cfg_.smax);
                gp = &gates;
            }
        } else {
            if (cfg_.kind == StrategyKind::HAT)
                throw InputError("hat predictions need a task hint");
            columns.assign(seen_classes_.begin(), seen_classes_.end());
        }

        std::vector<int> out(static_cast<std::size_t>(inputs.rows()));
        if (cfg_.kind == StrategyKind::ICaRL) {
            const Matrix feats = l2_normalize_rows(hidden_features(net_, inputs));
            std::vector<ClassMean> means;
            for (const auto& cm : class_means_)
                if (std::binary_search(columns.begin(), columns.end(), cm.label))
                    means.push_back(cm);
            for (Eigen::Index i = 0; i < inputs.rows(); ++i)
                out[static_cast<std::size_t>(i)] = nearest_mean(feats.row(i), means);
            return out;
        }
        const Matrix logits = forward(net_, inputs, gp);
        for (Eigen::Index i = 0; i < inputs.rows(); ++i)
            out[static_cast<std::size_t>(i)] = argmax_over(logits.row(i), columns);
        return out;
    }

    nlohmann::json checkpoint() const;
    static Learner restore(const nlohmann::json& j);

private:
    Learner() = default;

    void begin_task(const TaskView& task) {
        const int t = task.task_id();
        if (t != tasks_done_)
            throw ProtocolError("expected task " + std::to_string(tasks_done_) + ", got task " + std::to_string(t));
        class_sets_[t] = task.class_set();
        std::sort(class_sets_[t].begin(), class_sets_[t].end());
        prev_classes_.assign(seen_classes_.begin(), seen_classes_.end());
        seen_classes_.insert(task.class_set().begin(), task.class_set().end());

        const bool distills = cfg_.kind == StrategyKind::LwF || cfg_.kind == StrategyKind::ICaRL;
        if (distills && tasks_done_ > 0)
            frozen_ = net_;
        else
            frozen_.reset();

        if (cfg_.kind == StrategyKind::SI) {
            if (importance_.omega_running.size() == 0) {
                importance_.omega_running = Vector::Zero(net_.parameter_count());
                importance_.omega_consolidated = Vector::Zero(net_.parameter_count());
            }
            importance_.theta_at_task_start = net_.params();
        }
        if (cfg_.kind == StrategyKind::HAT) {
            std::normal_distribution<double> gauss(0.0, 1.0);
            Vector e(net_.hidden_units());
            for (Eigen::Index u = 0; u < e.size(); ++u)
                e[u] = gauss(hat_rng_);
            embeddings_[t] = e;
            param_gate_ = hat_gradient_gate(cumulative_mask_, net_);
        }
    }

    // Anchors and importances are fixed within a task, so the (capped) penalty terms are
    // built once per task.
    void build_penalties() {
        const double lambda = cfg_.effective_lambda();
        std::vector<QuadraticPenalty> terms;
        if (cfg_.kind == StrategyKind::EWC)
            terms = ewc_penalty_terms(importance_.ewc, lambda);
        if (cfg_.kind == StrategyKind::SI && lambda != 0.0 && importance_.si_anchor.size() > 0)
            terms.push_back({lambda, importance_.omega_consolidated, importance_.si_anchor});
        penalties_ = cap_penalty_curvature(std::move(terms), cfg_.lr);
        penalties_ready_ = true;
    }

    void end_task(const TaskView& task) {
        const int t = task.task_id();
        switch (cfg_.kind) {
        case StrategyKind::EWC: {
            const LabeledDataset& data = task.train();
            Vector fisher = ewc_fisher(net_, data.features, active_classes_for(t), cfg_.n_fisher, fisher_rng_);
            importance_.ewc.push_back({std::move(fisher), net_.params()});
            break;
        }
        case StrategyKind::SI:
            si_consolidate(importance_.omega_consolidated, importance_.omega_running, net_.params(),
                           importance_.theta_at_task_start, cfg_.xi);
            importance_.si_anchor = net_.params();
            break;
        case StrategyKind::ICaRL:
            rebuild_exemplars(task);
            break;
        case StrategyKind::AGEM: {
            const LabeledDataset& data = task.train();
            for (Eigen::Index i = 0; i < data.size(); ++i)
                buffer_.reservoir_insert({data.features.row(i), data.labels[static_cast<std::size_t>(i)], t, 0.0},
                                         replay_rng_);
            break;
        }
        case StrategyKind::HAT:
            cumulative_mask_ = cumulative_mask_.cwiseMax(hat_gate(embeddings_.at(t), cfg_.smax));
            break;
        default:
            break;
        }
        frozen_.reset();
        penalties_ready_ = false;
        ++tasks_done_;
    }

    /// Classes a sample of task `t` competes over during training.
    std::vector<int> active_classes_for(int t) const {
        if (scenario_ == Scenario::TaskIL)
            return class_sets_.at(t);
        return {seen_classes_.begin(), seen_classes_.end()};
    }

    CrossEntropyTerm cross_entropy_for(const std::vector<int>& row_tasks) const {
        CrossEntropyTerm ce;
        if (scenario_ != Scenario::TaskIL) {
            ce.class_sets.push_back({seen_classes_.begin(), seen_classes_.end()});
            return ce;
        }
        std::map<int, int> slot;
        for (int t : row_tasks) {
            auto [it, fresh] = slot.emplace(t, static_cast<int>(ce.class_sets.size()));
            if (fresh)
                ce.class_sets.push_back(class_sets_.at(t));
            ce.row_set.push_back(it->second);
        }
        if (ce.class_sets.size() == 1)
            ce.row_set.clear();
        return ce;
    }

    static Batch make_batch(const LabeledDataset& data, const std::vector<int>& idx, int task_id) {
        Batch b;
        b.inputs.resize(static_cast<Eigen::Index>(idx.size()), data.features.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            b.inputs.row(static_cast<Eigen::Index>(i)) = data.features.row(idx[i]);
            b.labels.push_back(data.labels[static_cast<std::size_t>(idx[i])]);
        }
        b.task_id = task_id;
        return b;
    }

    static void append(Batch& b, std::vector<int>& row_tasks, const std::vector<ReplayEntry>& entries) {
        if (entries.empty())
            return;
        const Eigen::Index n0 = b.inputs.rows();
        b.inputs.conservativeResize(n0 + static_cast<Eigen::Index>(entries.size()), Eigen::NoChange);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            b.inputs.row(n0 + static_cast<Eigen::Index>(i)) = entries[i].features;
            b.labels.push_back(entries[i].label);
            row_tasks.push_back(entries[i].task_id);
        }
    }

    void add_distillation(LossSpec& spec, const Batch& b) const {
        if (!frozen_ || prev_classes_.empty() || cfg_.distill_weight == 0.0)
            return;
        DistillationTerm d;
        d.weight = cfg_.distill_weight;
        d.temperature = cfg_.temperature;
        d.columns = prev_classes_;
        const Matrix full = forward(*frozen_, b.inputs);
        d.target_logits.resize(full.rows(), static_cast<Eigen::Index>(d.columns.size()));
        for (std::size_t c = 0; c < d.columns.size(); ++c)
            d.target_logits.col(static_cast<Eigen::Index>(c)) = full.col(d.columns[c]);
        spec.distillation = std::move(d);
    }

    Vector single_gradient(const RowVector& x, int label, int task_id) const {
        Batch b;
        b.inputs = x;
        b.labels = {label};
        LossSpec spec;
        spec.cross_entropy = cross_entropy_for({task_id});
        return backward(net_, b, spec).grads;
    }

    void train_batch(const LabeledDataset& data, const std::vector<int>& idx, int t, int epoch, int b_index,
                     int batches) {
        Batch batch = make_batch(data, idx, t);
        std::vector<int> row_tasks(idx.size(), t);
        const auto bs = static_cast<std::size_t>(cfg_.batch_size);
        LossSpec spec;
        const GateVector* gates = nullptr;
        GateVector hat_gates;
        double hat_s = 0.0;

        switch (cfg_.kind) {
        case StrategyKind::ICaRL:
            if (!exemplar_pool_.empty()) {
                std::vector<ReplayEntry> replay;
                for (std::size_t i : sample_indices(exemplar_pool_.size(), bs, replay_rng_))
                    replay.push_back(exemplar_pool_[i]);
                append(batch, row_tasks, replay);
            }
            break;
        case StrategyKind::GSS:
            if (!buffer_.empty())
                append(batch, row_tasks, replay_sample(buffer_, bs, replay_rng_));
            break;
        case StrategyKind::HAT:
            hat_s = hat_anneal(b_index, batches, cfg_.smax);
            hat_gates = hat_gate(embeddings_.at(t), hat_s);
            gates = &hat_gates;
            break;
        default:
            break;
        }

        spec.cross_entropy = cross_entropy_for(row_tasks);
        if (cfg_.kind == StrategyKind::LwF || cfg_.kind == StrategyKind::ICaRL)
            add_distillation(spec, batch);
        if (cfg_.kind == StrategyKind::EWC || cfg_.kind == StrategyKind::SI) {
            if (!penalties_ready_)
                build_penalties();
            spec.penalties = penalties_;
        }

        BackwardResult r = backward(net_, batch, spec, gates);
        GradientVector step = r.grads;

        if (cfg_.kind == StrategyKind::AGEM && !buffer_.empty()) {
            std::vector<ReplayEntry> ref = replay_sample(buffer_, static_cast<std::size_t>(cfg_.ref_batch), replay_rng_);
            Batch rb;
            std::vector<int> ref_tasks;
            rb.inputs.resize(0, batch.inputs.cols());
            append(rb, ref_tasks, ref);
            LossSpec ref_spec;
            ref_spec.cross_entropy = cross_entropy_for(ref_tasks);
            step = agem_project(step, backward(net_, rb, ref_spec).grads);
        }

        const Vector theta_before = cfg_.kind == StrategyKind::SI ? net_.params() : Vector();
        sgd_step(net_, step, cfg_.lr, cfg_.kind == StrategyKind::HAT ? &param_gate_ : nullptr);
        ++steps_;

        if (cfg_.kind == StrategyKind::SI) {
            // path integral uses the gradient of the data loss alone
            Vector data_grad = r.grads;
            for (const auto& p : spec.penalties)
                data_grad.array() -= 2.0 * p.weight * p.importance.array() * (theta_before - p.anchor).array();
            si_accumulate(importance_.omega_running, data_grad, net_.params() - theta_before);
        }

        if (cfg_.kind == StrategyKind::HAT) {
            Vector& e = embeddings_.at(t);
            Vector de(e.size());
            for (Eigen::Index u = 0; u < e.size(); ++u) {
                const double g = hat_gates[u];
                de[u] = r.gate_grads[u] * hat_s * g * (1.0 - g);
            }
            e -= cfg_.lr * hat_compensate(de, e, hat_s, cfg_.smax);
            e = e.cwiseMax(-hat_embedding_clamp).cwiseMin(hat_embedding_clamp);
        }

        if (cfg_.kind == StrategyKind::GSS && epoch == 0)
            gss_observe(data, idx, t);
    }

    void gss_observe(const LabeledDataset& data, const std::vector<int>& idx, int t) {
        std::vector<Vector> compare;
        if (!buffer_.empty()) {
            for (std::size_t i :
                 sample_indices(buffer_.size(), static_cast<std::size_t>(cfg_.gss_subset), replay_rng_)) {
                const ReplayEntry& e = buffer_.entries()[i];
                compare.push_back(single_gradient(e.features, e.label, e.task_id));
            }
        }
        for (int i : idx) {
            ReplayEntry cand{data.features.row(i), data.labels[static_cast<std::size_t>(i)], t, 0.0};
            const Vector g = single_gradient(cand.features, cand.label, t);
            const double score = gss_score(g, compare);
            gss_update_buffer(buffer_, std::move(cand), score);
        }
    }

    void rebuild_exemplars(const TaskView& task) {
        const int K = cfg_.buffer_capacity;
        const int classes = static_cast<int>(seen_classes_.size());
        const int m = K / std::max(1, classes);
        for (auto& [c, ex] : exemplars_)
            if (static_cast<int>(ex.size()) > m)
                ex.resize(static_cast<std::size_t>(m));
        if (m >= 1) {
            const LabeledDataset& data = task.train();
            for (int c : task.class_set()) {
                std::vector<int> rows;
                for (std::size_t i = 0; i < data.labels.size(); ++i)
                    if (data.labels[i] == c)
                        rows.push_back(static_cast<int>(i));
                if (rows.empty())
                    continue;
                Matrix x(static_cast<Eigen::Index>(rows.size()), data.features.cols());
                for (std::size_t i = 0; i < rows.size(); ++i)
                    x.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
                const Matrix feats = l2_normalize_rows(hidden_features(net_, x));
                std::vector<RowVector> chosen;
                for (int r : herding_select(feats, m))
                    chosen.push_back(x.row(r));
                exemplars_[c] = std::move(chosen);
                exemplar_task_[c] = task.task_id();
            }
        }
        refresh_exemplar_means();
    }

    void refresh_exemplar_means() {
        class_means_.clear();
        exemplar_pool_.clear();
        for (const auto& [c, ex] : exemplars_) {
            if (ex.empty())
                continue;
            Matrix x(static_cast<Eigen::Index>(ex.size()), net_.input_dim());
            for (std::size_t i = 0; i < ex.size(); ++i) {
                x.row(static_cast<Eigen::Index>(i)) = ex[i];
                exemplar_pool_.push_back({ex[i], c, exemplar_task_.at(c), 0.0});
            }
            class_means_.push_back({c, l2_normalize_rows(hidden_features(net_, x)).colwise().mean()});
        }
    }

    static constexpr double hat_embedding_clamp = 6.0;

    StrategyConfig cfg_;
    Scenario scenario_ = Scenario::ClassIL;
    int num_classes_ = 0;
    std::uint64_t seed_ = 0;
    Network net_;
    long long steps_ = 0;
    int tasks_done_ = 0;

    std::map<int, std::vector<int>> class_sets_;
    std::set<int> seen_classes_;
    std::vector<int> prev_classes_;
    std::optional<Network> frozen_;

    ImportanceState importance_;
    ReplayBuffer buffer_;

    std::map<int, std::vector<RowVector>> exemplars_;
    std::map<int, int> exemplar_task_;
    std::vector<ClassMean> class_means_;
    std::vector<ReplayEntry> exemplar_pool_;

    std::map<int, Vector> embeddings_;
    Vector cumulative_mask_;
    Vector param_gate_;
    std::vector<QuadraticPenalty> penalties_;
    bool penalties_ready_ = false;

    std::mt19937_64 shuffle_rng_;
    std::mt19937_64 fisher_rng_;
    std::mt19937_64 replay_rng_;
    std::mt19937_64 hat_rng_;
};

} // namespace clbench

#include "clbench/checkpoint.hpp"
