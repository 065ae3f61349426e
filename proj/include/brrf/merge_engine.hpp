#ifndef BRRF_MERGE_ENGINE_HPP
#define BRRF_MERGE_ENGINE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "brrf/classifier.hpp"
#include "brrf/error.hpp"
#include "brrf/hierarchy.hpp"
#include "brrf/seggraph.hpp"

namespace brrf {

struct MergeConfig {
    /// re-ranking starts once fewer than this many segments remain
    std::size_t rerank_start = 120;
    /// number of lowest-dissimilarity candidates re-ranked per step
    std::size_t rerank_top = 4;
    double sil_weight = 0.5;
    bool enable_rerank = true;
};

struct SilhouetteResult {
    double score = 0.0;
    /// the candidate had no neighbors; score is 0
    bool empty_neighborhood = false;
};

/**
 * Silhouette of the candidate merged segment S = a u b against the union S_n
 * of its neighbors, evaluated on the segments' representation samples:
 *
 *   a(i) = mean distance from i to the rest of S (0 when |S| = 1)
 *   b(i) = mean distance from i to S_n
 *   score = mean over i in S of (b(i) - a(i)) / max(a(i), b(i))
 */
inline double silhouette(std::span<const float> cluster, std::span<const float> others, std::size_t dim) {
    const std::size_t ns = cluster.size() / dim, nn = others.size() / dim;
    if (ns == 0 || nn == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
        const std::span<const float> xi = cluster.subspan(i * dim, dim);
        double within = 0.0;
        for (std::size_t j = 0; j < ns; ++j) {
            if (j != i) within += l2_distance(xi, cluster.subspan(j * dim, dim));
        }
        const double a = ns > 1 ? within / static_cast<double>(ns - 1) : 0.0;
        double between = 0.0;
        for (std::size_t j = 0; j < nn; ++j) {
            between += l2_distance(xi, others.subspan(j * dim, dim));
        }
        const double b = between / static_cast<double>(nn);
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(ns);
}

inline SilhouetteResult silhouette_score(const SegmentGraph& g, std::uint32_t a, std::uint32_t b) {
    if (!g.adjacent(a, b)) {
        throw Error(Errc::NotAdjacent, "silhouette of non-adjacent segments " + std::to_string(a) + ", " +
                                           std::to_string(b));
    }
    if (a > b) std::swap(a, b);
    std::vector<float> cluster = g.stats(a).rep_sample.reps;
    const auto& rb = g.stats(b).rep_sample.reps;
    cluster.insert(cluster.end(), rb.begin(), rb.end());
    std::vector<float> others;
    std::set<std::uint32_t> around(g.neighbors(a).begin(), g.neighbors(a).end());
    around.insert(g.neighbors(b).begin(), g.neighbors(b).end());
    around.erase(a);
    around.erase(b);
    for (auto x : around) {
        const auto& rx = g.stats(x).rep_sample.reps;
        others.insert(others.end(), rx.begin(), rx.end());
    }
    if (others.empty()) {
        return {0.0, true};
    }
    return {silhouette(cluster, others, g.rep_dim()), false};
}

/**
 * Per-point distance sums between segment samples, keyed by ordered id pair.
 * Node contents never change once created (a merge makes a new id), so
 * entries stay valid for the lifetime of a merge run.
 */
class SilhouetteCache {
public:
    /// sums[i] = sum over points q of `to` of |p_i - q|, p_i in `from`
    const std::vector<double>& sums(const SegmentGraph& g, std::uint32_t from, std::uint32_t to) {
        const auto key = (static_cast<std::uint64_t>(from) << 32) | to;
        auto it = table_.find(key);
        if (it != table_.end()) return it->second;
        // one pass over the distance matrix fills both directions
        const auto& sf = g.stats(from).rep_sample;
        const auto& st = g.stats(to).rep_sample;
        const std::size_t dim = g.rep_dim();
        const std::vector<double> df(sf.reps.begin(), sf.reps.end()), dt(st.reps.begin(), st.reps.end());
        std::vector<double> out(sf.size(), 0.0), back(st.size(), 0.0);
        for (std::size_t i = 0; i < sf.size(); ++i) {
            const double* p = df.data() + i * dim;
            double row = 0.0;
            for (std::size_t j = 0; j < st.size(); ++j) {
                const double* q = dt.data() + j * dim;
                double acc = 0.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    const double d = p[c] - q[c];
                    acc += d * d;
                }
                const double dist = std::sqrt(acc);
                row += dist;
                back[j] += dist;
            }
            out[i] = row;
        }
        if (from != to) table_.try_emplace((static_cast<std::uint64_t>(to) << 32) | from, std::move(back));
        return table_.emplace(key, std::move(out)).first->second;
    }

private:
    std::unordered_map<std::uint64_t, std::vector<double>> table_;
};

/// Same value as silhouette_score(g, a, b), reusing cached distance sums.
inline SilhouetteResult silhouette_score(const SegmentGraph& g, std::uint32_t a, std::uint32_t b,
                                         SilhouetteCache& cache) {
    if (!g.adjacent(a, b)) {
        throw Error(Errc::NotAdjacent, "silhouette of non-adjacent segments " + std::to_string(a) + ", " +
                                           std::to_string(b));
    }
    if (a > b) std::swap(a, b);
    std::set<std::uint32_t> around(g.neighbors(a).begin(), g.neighbors(a).end());
    around.insert(g.neighbors(b).begin(), g.neighbors(b).end());
    around.erase(a);
    around.erase(b);
    std::size_t nn = 0;
    for (auto x : around) nn += g.stats(x).rep_sample.size();
    if (nn == 0) {
        return {0.0, true};
    }
    const std::size_t ns = g.stats(a).rep_sample.size() + g.stats(b).rep_sample.size();
    if (ns == 0) return {0.0, false};
    double total = 0.0;
    for (auto from : {a, b}) {
        const auto& to_a = cache.sums(g, from, a);
        const auto& to_b = cache.sums(g, from, b);
        std::vector<double> between(to_a.size(), 0.0);
        for (auto x : around) {
            const auto& to_x = cache.sums(g, from, x);
            for (std::size_t i = 0; i < between.size(); ++i) between[i] += to_x[i];
        }
        for (std::size_t i = 0; i < to_a.size(); ++i) {
            const double ai = ns > 1 ? (to_a[i] + to_b[i]) / static_cast<double>(ns - 1) : 0.0;
            const double bi = between[i] / static_cast<double>(nn);
            const double denom = std::max(ai, bi);
            total += denom > 0.0 ? (bi - ai) / denom : 0.0;
        }
    }
    return {total / static_cast<double>(ns), false};
}

inline double augmented_dissim(double pair_dissim, double sil, double sil_weight = 0.5) {
    return pair_dissim - sil_weight * sil;
}

namespace detail {

struct Candidate {
    double dissim;
    std::size_t combined_size;
    std::uint32_t lo, hi;

    bool operator>(const Candidate& o) const {
        if (dissim != o.dissim) return dissim > o.dissim;
        if (combined_size != o.combined_size) return combined_size > o.combined_size;
        if (lo != o.lo) return lo > o.lo;
        return hi > o.hi;
    }
};

}

/**
 * Greedy agglomeration. Above rerank_start segments (or with re-ranking off)
 * the adjacent pair of lowest Pair_Dissim merges; below it, the rerank_top
 * lowest pairs are re-scored with Pair_Dissim - sil_weight * Sil_Score and the
 * minimum merges. Dissimilarities to every neighbor of the merged node are
 * recomputed after each step. UCM values are the running maximum of the
 * merged pairs' Pair_Dissim.
 *
 * The priority queue uses lazy deletion: entries whose endpoints died are
 * dropped on pop. Ties order by combined size, then lower id.
 */
inline Hierarchy run_merging(SegmentGraph g, const DissimModel& model, const MergeConfig& cfg = {}) {
    using detail::Candidate;
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
    const bool with_reps = uses_rep_features(model);
    auto push = [&](std::uint32_t x, std::uint32_t y) {
        if (x > y) std::swap(x, y);
        const double d = pair_dissim(model, pair_features(g, x, y, with_reps));
        heap.push({d, g.stats(x).size + g.stats(y).size, x, y});
    };
    for (const auto& [x, y] : g.adjacent_pairs()) {
        push(x, y);
    }
    auto pop_valid = [&]() -> std::optional<Candidate> {
        while (!heap.empty()) {
            const Candidate c = heap.top();
            heap.pop();
            if (g.alive(c.lo) && g.alive(c.hi)) return c;
        }
        return std::nullopt;
    };

    SilhouetteCache cache;
    Hierarchy h;
    h.base = g.base();
    double running = -INFINITY;
    while (g.alive_count() > 1) {
        std::optional<Candidate> chosen;
        std::optional<double> sil;
        if (!cfg.enable_rerank || g.alive_count() >= cfg.rerank_start || cfg.rerank_top <= 1) {
            chosen = pop_valid();
        } else {
            std::vector<Candidate> top;
            while (top.size() < cfg.rerank_top) {
                auto c = pop_valid();
                if (!c) break;
                top.push_back(*c);
            }
            std::size_t best = 0;
            double best_aug = INFINITY;
            double best_sil = 0.0;
            for (std::size_t i = 0; i < top.size(); ++i) {
                const double s = silhouette_score(g, top[i].lo, top[i].hi, cache).score;
                const double aug = augmented_dissim(top[i].dissim, s, cfg.sil_weight);
                if (aug < best_aug) {
                    best_aug = aug;
                    best = i;
                    best_sil = s;
                }
            }
            for (std::size_t i = 0; i < top.size(); ++i) {
                if (i != best) heap.push(top[i]);
            }
            if (!top.empty()) {
                chosen = top[best];
                sil = best_sil;
            }
        }
        if (!chosen) {
            break;
        }
        const auto outcome = g.merge(chosen->lo, chosen->hi);
        running = std::max(running, chosen->dissim);
        h.merges.push_back({h.merges.size(), chosen->lo, chosen->hi, outcome.new_id, chosen->dissim, sil, running});
        for (const auto& [c, x] : outcome.affected) {
            push(c, x);
        }
    }

    if (g.alive_count() > 1) {
        // adjacency graph was disconnected: join what is left at the top level
        h.disconnected = true;
        const auto remaining = g.alive_ids();
        std::uint32_t current = remaining.front();
        auto next_id = static_cast<std::uint32_t>(g.capacity());
        running = std::max(running, 1.0);
        for (std::size_t i = 1; i < remaining.size(); ++i) {
            const std::uint32_t lo = std::min(current, remaining[i]);
            const std::uint32_t hi = std::max(current, remaining[i]);
            h.merges.push_back({h.merges.size(), lo, hi, next_id, 1.0, std::nullopt, running});
            current = next_id++;
        }
    }
    return h;
}

}

#endif
