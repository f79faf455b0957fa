#pragma once

// Hard attention to the task: per-task unit gates and the gradient blocking that
// keeps units claimed by earlier tasks fixed.

#include <algorithm>
#include <cmath>

#include "clbench/nn.hpp"

namespace clbench {

inline double sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// gate_u = sigmoid(s * e_u)
inline GateVector hat_gate(const Vector& embedding, double s) {
    return embedding.unaryExpr([s](double e) { return sigmoid(s * e); });
}

/// Per-parameter gradient multiplier. A hidden-to-hidden weight from unit j to unit i
/// gets 1 - min(cum_i, cum_j); first-layer weights and hidden biases get 1 - cum_i (the
/// input endpoint is always in use); output-layer parameters are left free since the
/// per-task loss only reaches the current task's output columns.
inline Vector hat_gradient_gate(const Vector& cumulative_mask, const Network& net) {
    Vector gate = Vector::Ones(net.parameter_count());
    const int L = net.layer_count();
    const auto& dims = net.layer_dims();
    for (int l = 0; l + 1 < L; ++l) {
        const int out_h = l; // hidden layer fed by layer l
        const auto cum_out = cumulative_mask.segment(net.gate_offset(out_h), dims[l + 1]);
        Eigen::Map<Matrix> w(gate.data() + net.weight_offset(l), dims[l + 1], dims[l]);
        Eigen::Map<Vector> b(gate.data() + net.bias_offset(l), dims[l + 1]);
        for (int i = 0; i < dims[l + 1]; ++i) {
            b[i] = 1.0 - cum_out[i];
            for (int j = 0; j < dims[l]; ++j) {
                const double cum_in = l == 0 ? 1.0 : cumulative_mask[net.gate_offset(l - 1) + j];
                w(i, j) = 1.0 - std::min(cum_out[i], cum_in);
            }
        }
    }
    return gate;
}

/// Embedding-gradient compensation for the annealed gate slope: scales the raw gradient
/// by (smax/s) * (cosh(clamp(s*e, -50, 50)) + 1) / (cosh(e) + 1).
inline Vector hat_compensate(const Vector& embedding_grad, const Vector& embedding, double s, double smax) {
    Vector out(embedding_grad.size());
    for (Eigen::Index u = 0; u < embedding.size(); ++u) {
        const double num = std::cosh(std::clamp(s * embedding[u], -50.0, 50.0)) + 1.0;
        const double den = std::cosh(embedding[u]) + 1.0;
        out[u] = embedding_grad[u] * (smax / s) * num / den;
    }
    return out;
}

/// Linear anneal of the gate slope across the batches of one epoch, from 1/smax to smax.
inline double hat_anneal(int batch_index, int batches_per_epoch, double smax) {
    if (batches_per_epoch <= 1)
        return smax;
    const double frac = static_cast<double>(batch_index) / (batches_per_epoch - 1);
    return 1.0 / smax + (smax - 1.0 / smax) * frac;
}

} // namespace clbench
