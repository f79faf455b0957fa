#pragma once

// Replay memory shared by the rehearsal strategies: reservoir insertion, uniform
// sampling, and gradient-based sample selection (greedy GSS).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/nn.hpp"

namespace clbench {

struct ReplayEntry {
    RowVector features;
    int label = 0;
    int task_id = 0;
    double score = 0.0; // GSS only
};

class ReplayBuffer {
public:
    ReplayBuffer() = default;
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    bool full() const { return entries_.size() >= capacity_; }

    const std::vector<ReplayEntry>& entries() const { return entries_; }
    std::vector<ReplayEntry>& entries() { return entries_; }

    /// Number of stream samples offered to reservoir_insert so far.
    std::uint64_t seen() const { return seen_; }
    void set_seen(std::uint64_t n) { seen_ = n; }

    void push(ReplayEntry e) {
        if (full())
            throw StateError("replay buffer is full");
        entries_.push_back(std::move(e));
    }

    /// Classic reservoir sampling over every sample ever offered.
    template <class Rng>
    void reservoir_insert(ReplayEntry e, Rng& rng) {
        ++seen_;
        if (capacity_ == 0)
            return;
        if (!full()) {
            entries_.push_back(std::move(e));
            return;
        }
        std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
        const std::uint64_t j = pick(rng);
        if (j < capacity_)
            entries_[static_cast<std::size_t>(j)] = std::move(e);
    }

private:
    std::size_t capacity_ = 0;
    std::vector<ReplayEntry> entries_;
    std::uint64_t seen_ = 0;
};

/// Indices of a uniform sample without replacement of min(k, n) out of n.
template <class Rng>
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (k >= n)
        return idx;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, n - 1);
        std::swap(idx[i], idx[d(rng)]);
    }
    idx.resize(k);
    return idx;
}

/// Uniform sample without replacement of min(k, |buffer|) entries.
inline std::vector<ReplayEntry> replay_sample(const ReplayBuffer& buffer, std::size_t k, std::uint64_t seed) {
    if (buffer.empty())
        throw StateError("cannot sample from an empty replay buffer");
    std::mt19937_64 rng(seed);
    std::vector<ReplayEntry> out;
    for (std::size_t i : sample_indices(buffer.size(), k, rng))
        out.push_back(buffer.entries()[i]);
    return out;
}

template <class Rng>
std::vector<ReplayEntry> replay_sample(const ReplayBuffer& buffer, std::size_t k, Rng& rng) {
    if (buffer.empty())
        throw StateError("cannot sample from an empty replay buffer");
    std::vector<ReplayEntry> out;
    for (std::size_t i : sample_indices(buffer.size(), k, rng))
        out.push_back(buffer.entries()[i]);
    return out;
}

inline double cosine_similarity(const Vector& a, const Vector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Maximum cosine similarity between the candidate's gradient and the comparison
/// gradients. Zero-norm comparison gradients are skipped; with nothing to compare
/// the candidate is maximally novel (-1).
inline double gss_score(const Vector& candidate_grad, const std::vector<Vector>& buffer_grads) {
    if (candidate_grad.norm() == 0.0)
        return -1.0;
    double best = -1.0;
    bool any = false;
    for (const Vector& g : buffer_grads) {
        if (g.norm() == 0.0)
            continue;
        const double c = cosine_similarity(candidate_grad, g);
        best = any ? std::max(best, c) : c;
        any = true;
    }
    return any ? best : -1.0;
}

/// Greedy score replacement: insert while there is room, otherwise replace the
/// highest-scoring (most redundant) entry when the candidate scores lower.
/// Returns true when the candidate was stored.
inline bool gss_update_buffer(ReplayBuffer& buffer, ReplayEntry candidate, double score) {
    candidate.score = score;
    if (buffer.capacity() == 0)
        return false;
    if (!buffer.full()) {
        buffer.push(std::move(candidate));
        return true;
    }
    auto& entries = buffer.entries();
    auto worst = std::max_element(entries.begin(), entries.end(),
                                  [](const ReplayEntry& a, const ReplayEntry& b) { return a.score < b.score; });
    if (score < worst->score) {
        *worst = std::move(candidate);
        return true;
    }
    return false;
}

/// A-GEM projection: keep g when it does not conflict with the reference gradient,
/// otherwise remove the conflicting component.
inline GradientVector agem_project(const GradientVector& g, const GradientVector& g_ref) {
    if (g.size() != g_ref.size())
        throw ConfigError("agem_project: gradient sizes differ");
    const double dot = g.dot(g_ref);
    if (dot >= 0.0)
        return g;
    const double ref_sq = g_ref.squaredNorm();
    if (ref_sq == 0.0)
        return g;
    return g - (dot / ref_sq) * g_ref;
}

} // namespace clbench
