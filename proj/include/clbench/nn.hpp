#pragma once

// Dense feed-forward network with exact backpropagation.
//
// Parameters live in one flat vector, layer-major: for every layer the
// weight matrix (out x in, row-major) followed by its bias vector. The
// same layout is used for gradients, importance weights, anchors and
// gradient masks so strategies can treat all of them as plain vectors.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "clbench/error.hpp"

namespace clbench {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Flat per-parameter vector in Network parameter order.
using GradientVector = Vector;
/// Multiplicative gate per hidden unit, hidden layers concatenated in order.
using GateVector = Vector;

class Network {
public:
    Network() = default;

    explicit Network(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
        if (dims_.size() < 2)
            throw ConfigError("network needs at least an input and an output layer");
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            if (dims_[l] <= 0 || dims_[l + 1] <= 0)
                throw ConfigError("layer dimensions must be positive");
            offsets_.push_back(total);
            total += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
        }
        params_ = Vector::Zero(static_cast<Eigen::Index>(total));
    }

    /// Glorot-uniform weights, zero biases.
    static Network initialized(std::vector<int> layer_dims, std::uint64_t seed) {
        Network net(std::move(layer_dims));
        std::mt19937_64 rng(seed);
        for (int l = 0; l < net.layer_count(); ++l) {
            const int fan_in = net.dims_[l];
            const int fan_out = net.dims_[l + 1];
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> uni(-limit, limit);
            auto w = net.weights(l);
            for (Eigen::Index i = 0; i < w.size(); ++i)
                w.data()[i] = uni(rng);
        }
        return net;
    }

    int layer_count() const { return static_cast<int>(dims_.size()) - 1; }
    const std::vector<int>& layer_dims() const { return dims_; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }

    int hidden_units() const {
        int n = 0;
        for (std::size_t l = 1; l + 1 < dims_.size(); ++l)
            n += dims_[l];
        return n;
    }

    /// Offset of hidden layer `h` (0-based, h < layer_count()-1) inside a GateVector.
    int gate_offset(int h) const {
        int n = 0;
        for (int l = 1; l <= h; ++l)
            n += dims_[l];
        return n;
    }

    Eigen::Index parameter_count() const { return params_.size(); }

    std::size_t weight_offset(int l) const { return offsets_[l]; }
    std::size_t bias_offset(int l) const {
        return offsets_[l] + static_cast<std::size_t>(dims_[l]) * dims_[l + 1];
    }

    Eigen::Map<Matrix> weights(int l) {
        return {params_.data() + weight_offset(l), dims_[l + 1], dims_[l]};
    }
    Eigen::Map<const Matrix> weights(int l) const {
        return {params_.data() + weight_offset(l), dims_[l + 1], dims_[l]};
    }
    Eigen::Map<Vector> bias(int l) { return {params_.data() + bias_offset(l), dims_[l + 1]}; }
    Eigen::Map<const Vector> bias(int l) const {
        return {params_.data() + bias_offset(l), dims_[l + 1]};
    }

    Vector& params() { return params_; }
    const Vector& params() const { return params_; }

    bool operator==(const Network& other) const {
        return dims_ == other.dims_ && params_.size() == other.params_.size() &&
               std::equal(params_.data(), params_.data() + params_.size(), other.params_.data(),
                          [](double a, double b) {
                              return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
                          });
    }

private:
    std::vector<int> dims_;
    std::vector<std::size_t> offsets_;
    Vector params_;
};

struct Batch {
    Matrix inputs;
    std::vector<int> labels;
    std::optional<int> task_id;

    Eigen::Index size() const { return inputs.rows(); }
};

namespace detail {

inline void check_gates(const Network& net, const GateVector* gates) {
    if (gates && gates->size() != net.hidden_units())
        throw ConfigError("gate vector has " + std::to_string(gates->size()) +
                          " entries, network has " + std::to_string(net.hidden_units()) +
                          " hidden units");
}

inline void check_inputs(const Network& net, const Matrix& inputs) {
    if (inputs.cols() != net.input_dim())
        throw ConfigError("input width " + std::to_string(inputs.cols()) +
                          " does not match network input dim " + std::to_string(net.input_dim()));
}

/// Activations kept for the backward pass. pre[l] is the hidden pre-activation of
/// hidden layer l, post[l] the gated output that feeds layer l+1 (post[0] = input).
struct ForwardTrace {
    std::vector<Matrix> pre;
    std::vector<Matrix> relu;
    std::vector<Matrix> post;
    Matrix logits;
};

inline ForwardTrace trace_forward(const Network& net, const Matrix& inputs, const GateVector* gates) {
    check_inputs(net, inputs);
    check_gates(net, gates);
    ForwardTrace t;
    t.post.push_back(inputs);
    const int L = net.layer_count();
    for (int l = 0; l < L; ++l) {
        Matrix z = t.post.back() * net.weights(l).transpose();
        z.rowwise() += net.bias(l).transpose();
        if (l + 1 == L) {
            t.logits = std::move(z);
            break;
        }
        Matrix h = z.cwiseMax(0.0);
        Matrix a = h;
        if (gates) {
            const auto g = gates->segment(net.gate_offset(l), net.layer_dims()[l + 1]);
            a.array().rowwise() *= g.transpose().array();
        }
        t.pre.push_back(std::move(z));
        t.relu.push_back(std::move(h));
        t.post.push_back(std::move(a));
    }
    return t;
}

} // namespace detail

/// Logits for every input row. Hidden activations are multiplied by their gate after the ReLU.
inline Matrix forward(const Network& net, const Matrix& inputs, const GateVector* gates = nullptr) {
    return detail::trace_forward(net, inputs, gates).logits;
}

/// Gated activations of the last hidden layer (the feature space iCaRL works in).
inline Matrix hidden_features(const Network& net, const Matrix& inputs, const GateVector* gates = nullptr) {
    if (net.layer_count() < 2)
        throw ConfigError("network has no hidden layer");
    return detail::trace_forward(net, inputs, gates).post.back();
}

inline RowVector softmax(const RowVector& logits) {
    if (!logits.allFinite())
        throw NumericError("non-finite logits in softmax");
    RowVector e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

inline double softmax_cross_entropy(const RowVector& logits, int label) {
    if (!logits.allFinite())
        throw NumericError("non-finite logits in cross-entropy");
    if (label < 0 || label >= logits.size())
        throw ConfigError("label " + std::to_string(label) + " outside logit range");
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return std::max(0.0, lse - logits[label]);
}

/// KL(softmax(target/T) || softmax(logits/T)); exactly zero for identical inputs.
inline double distillation_loss(const RowVector& logits, const RowVector& target_logits, double temperature) {
    if (logits.size() != target_logits.size())
        throw ConfigError("distillation: logits and targets differ in length");
    if (!(temperature > 0))
        throw ConfigError("distillation: temperature must be positive");
    const RowVector p = softmax(logits / temperature);
    const RowVector q = softmax(target_logits / temperature);
    double kl = 0;
    for (Eigen::Index k = 0; k < q.size(); ++k)
        if (q[k] > 0)
            kl += q[k] * (std::log(q[k]) - std::log(p[k]));
    return std::max(0.0, kl);
}

// ---------------------------------------------------------------------------
// Composite loss

/// Cross-entropy over a restricted set of output columns. Each row uses the class
/// set `class_sets[row_set[i]]`; with no class sets the softmax spans every output.
struct CrossEntropyTerm {
    double weight = 1.0;
    std::vector<std::vector<int>> class_sets;
    std::vector<int> row_set;
};

/// Distillation toward fixed targets on a subset of output columns.
struct DistillationTerm {
    double weight = 1.0;
    double temperature = 2.0;
    std::vector<int> columns;
    Matrix target_logits; // rows x columns.size()
};

/// weight * sum_k importance_k * (theta_k - anchor_k)^2
struct QuadraticPenalty {
    double weight = 0.0;
    Vector importance;
    Vector anchor;
};

struct LossSpec {
    std::optional<CrossEntropyTerm> cross_entropy;
    std::optional<DistillationTerm> distillation;
    std::vector<QuadraticPenalty> penalties;

    /// Every term scaled by `factor`.
    LossSpec scaled(double factor) const {
        LossSpec s = *this;
        if (s.cross_entropy)
            s.cross_entropy->weight *= factor;
        if (s.distillation)
            s.distillation->weight *= factor;
        for (auto& p : s.penalties)
            p.weight *= factor;
        return s;
    }
};

inline double quadratic_penalty_value(const Vector& params, const QuadraticPenalty& p) {
    return p.weight * (p.importance.array() * (params - p.anchor).array().square()).sum();
}

struct BackwardResult {
    double loss = 0.0;
    GradientVector grads;
    GateVector gate_grads; // dLoss/dgate, filled when gates are supplied
};

namespace detail {

inline const std::vector<int>* row_classes(const CrossEntropyTerm& ce, Eigen::Index row) {
    if (ce.class_sets.empty())
        return nullptr;
    const int idx = ce.class_sets.size() == 1 ? 0 : ce.row_set.at(static_cast<std::size_t>(row));
    return &ce.class_sets.at(static_cast<std::size_t>(idx));
}

/// Adds the data-term loss of `logits` and writes dLoss/dlogits (mean over rows).
inline double data_terms(const Matrix& logits, const Batch& batch, const LossSpec& spec, Matrix& dlogits) {
    if (!logits.allFinite())
        throw NumericError("non-finite logits");
    const Eigen::Index n = logits.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    dlogits = Matrix::Zero(n, logits.cols());
    double loss = 0.0;

    if (spec.cross_entropy && spec.cross_entropy->weight != 0.0) {
        const auto& ce = *spec.cross_entropy;
        if (static_cast<Eigen::Index>(batch.labels.size()) != n)
            throw ConfigError("batch has " + std::to_string(batch.labels.size()) + " labels for " +
                              std::to_string(n) + " rows");
        for (Eigen::Index i = 0; i < n; ++i) {
            const int y = batch.labels[static_cast<std::size_t>(i)];
            if (y < 0 || y >= logits.cols())
                throw ConfigError("label " + std::to_string(y) + " outside output range");
            const std::vector<int>* cls = row_classes(ce, i);
            if (!cls) {
                const RowVector p = softmax(logits.row(i));
                loss += ce.weight * inv_n * softmax_cross_entropy(logits.row(i), y);
                dlogits.row(i) += ce.weight * inv_n * p;
                dlogits(i, y) -= ce.weight * inv_n;
                continue;
            }
            RowVector sub(static_cast<Eigen::Index>(cls->size()));
            int local = -1;
            for (std::size_t k = 0; k < cls->size(); ++k) {
                sub[static_cast<Eigen::Index>(k)] = logits(i, (*cls)[k]);
                if ((*cls)[k] == y)
                    local = static_cast<int>(k);
            }
            if (local < 0)
                throw ConfigError("label " + std::to_string(y) + " not in the row's active class set");
            const RowVector p = softmax(sub);
            loss += ce.weight * inv_n * softmax_cross_entropy(sub, local);
            for (std::size_t k = 0; k < cls->size(); ++k)
                dlogits(i, (*cls)[k]) += ce.weight * inv_n * p[static_cast<Eigen::Index>(k)];
            dlogits(i, y) -= ce.weight * inv_n;
        }
    }

    if (spec.distillation && spec.distillation->weight != 0.0 && !spec.distillation->columns.empty()) {
        const auto& d = *spec.distillation;
        if (d.target_logits.rows() != n || d.target_logits.cols() != static_cast<Eigen::Index>(d.columns.size()))
            throw ConfigError("distillation targets do not match batch/column shape");
        if (!(d.temperature > 0))
            throw ConfigError("distillation: temperature must be positive");
        const auto k = static_cast<Eigen::Index>(d.columns.size());
        for (Eigen::Index i = 0; i < n; ++i) {
            RowVector sub(k);
            for (Eigen::Index c = 0; c < k; ++c)
                sub[c] = logits(i, d.columns[static_cast<std::size_t>(c)]);
            const RowVector target = d.target_logits.row(i);
            loss += d.weight * inv_n * distillation_loss(sub, target, d.temperature);
            const RowVector p = softmax(sub / d.temperature);
            const RowVector q = softmax(target / d.temperature);
            for (Eigen::Index c = 0; c < k; ++c)
                dlogits(i, d.columns[static_cast<std::size_t>(c)]) +=
                    d.weight * inv_n * (p[c] - q[c]) / d.temperature;
        }
    }
    return loss;
}

inline void check_penalty(const Network& net, const QuadraticPenalty& p) {
    if (p.importance.size() != net.parameter_count() || p.anchor.size() != net.parameter_count())
        throw ConfigError("quadratic penalty does not match the parameter count");
}

} // namespace detail

/// Mean-over-rows data loss plus parameter penalties; the reference the
/// gradient checks differentiate numerically.
inline double loss_value(const Network& net, const Batch& batch, const LossSpec& spec,
                         const GateVector* gates = nullptr) {
    const Matrix logits = forward(net, batch.inputs, gates);
    Matrix scratch;
    double loss = detail::data_terms(logits, batch, spec, scratch);
    for (const auto& p : spec.penalties) {
        detail::check_penalty(net, p);
        if (p.weight != 0.0)
            loss += quadratic_penalty_value(net.params(), p);
    }
    return loss;
}

inline BackwardResult backward(const Network& net, const Batch& batch, const LossSpec& spec,
                               const GateVector* gates = nullptr) {
    if (batch.size() < 1)
        throw ConfigError("empty batch");
    const detail::ForwardTrace t = detail::trace_forward(net, batch.inputs, gates);
    BackwardResult out;
    Matrix delta;
    out.loss = detail::data_terms(t.logits, batch, spec, delta);
    out.grads = GradientVector::Zero(net.parameter_count());
    if (gates)
        out.gate_grads = GateVector::Zero(net.hidden_units());

    const int L = net.layer_count();
    for (int l = L - 1; l >= 0; --l) {
        const Matrix& a_prev = t.post[static_cast<std::size_t>(l)];
        Eigen::Map<Matrix> dw(out.grads.data() + net.weight_offset(l), net.layer_dims()[l + 1],
                              net.layer_dims()[l]);
        dw.noalias() = delta.transpose() * a_prev;
        Eigen::Map<Vector>(out.grads.data() + net.bias_offset(l), net.layer_dims()[l + 1]) =
            delta.colwise().sum().transpose();
        if (l == 0)
            break;
        const Matrix da = delta * net.weights(l);
        const int h = l - 1;
        const Matrix& relu = t.relu[static_cast<std::size_t>(h)];
        Matrix dh = da;
        if (gates) {
            const auto g = gates->segment(net.gate_offset(h), net.layer_dims()[l]);
            out.gate_grads.segment(net.gate_offset(h), net.layer_dims()[l]) =
                (da.array() * relu.array()).colwise().sum().transpose();
            dh.array().rowwise() *= g.transpose().array();
        }
        delta = (t.pre[static_cast<std::size_t>(h)].array() > 0.0).cast<double>() * dh.array();
    }

    for (const auto& p : spec.penalties) {
        detail::check_penalty(net, p);
        if (p.weight == 0.0)
            continue;
        out.loss += quadratic_penalty_value(net.params(), p);
        out.grads.array() += 2.0 * p.weight * p.importance.array() * (net.params() - p.anchor).array();
    }
    if (!out.grads.allFinite())
        throw NumericError("non-finite gradient");
    return out;
}

/// theta <- theta - lr * gate .* g. Entries whose gate is exactly zero are not touched.
inline void sgd_step(Network& net, const GradientVector& grads, double lr, const Vector* grad_gate = nullptr) {
    if (!(lr > 0))
        throw ConfigError("learning rate must be positive");
    if (grads.size() != net.parameter_count())
        throw ConfigError("gradient size does not match the parameter count");
    if (grad_gate && grad_gate->size() != net.parameter_count())
        throw ConfigError("gradient gate size does not match the parameter count");
    Vector& theta = net.params();
    if (!grad_gate) {
        theta.noalias() -= lr * grads;
        return;
    }
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const double g = (*grad_gate)[k];
        if (g == 0.0)
            continue;
        theta[k] -= lr * g * grads[k];
    }
}

/// Index of the largest entry among `columns` (all columns when empty); ties go to the
/// lowest class id.
inline int argmax_over(const RowVector& logits, std::span<const int> columns = {}) {
    int best = -1;
    double best_v = 0;
    auto consider = [&](int c) {
        const double v = logits[c];
        if (best < 0 || v > best_v || (v == best_v && c < best)) {
            best = c;
            best_v = v;
        }
    };
    if (columns.empty())
        for (int c = 0; c < logits.size(); ++c)
            consider(c);
    else
        for (int c : columns)
            consider(c);
    return best;
}

} // namespace clbench
