#ifndef BRRF_SEGGRAPH_HPP
#define BRRF_SEGGRAPH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "brrf/error.hpp"
#include "brrf/oversegment.hpp"
#include "brrf/random.hpp"
#include "brrf/rep_prep.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

// ---------------------------------------------------------------------------
// Pair features

enum class Feature : std::size_t {
    RepL2Min,
    RepL2Max,
    RepL2Avg,
    RepL2Med,
    RepCosMin,
    RepCosMax,
    RepCosAvg,
    RepCosMed,
    RepMeanL2,
    RepMeanCos,
    EdgeMean,
    SqrtBoundaryLen,
    SqrtCombinedSize,
    MaxBoundaryPerimeterRatio,
    DLabL,
    DLabA,
    DLabB,
};

inline constexpr std::size_t feature_count = 17;
/// Features RepL2Min..RepMeanCos depend on the representation samples.
inline constexpr std::size_t rep_feature_count = 10;

inline constexpr std::array<std::string_view, feature_count> feature_names = {
    "rep_l2_min",       "rep_l2_max",         "rep_l2_avg",   "rep_l2_med",
    "rep_cos_min",      "rep_cos_max",        "rep_cos_avg",  "rep_cos_med",
    "rep_mean_l2",      "rep_mean_cos",       "edge_mean",    "sqrt_boundary_len",
    "sqrt_combined_size", "max_boundary_perimeter_ratio", "dlab_L", "dlab_a",
    "dlab_b",
};

/// Offset inside the log of L2 distances so identical vectors stay finite.
inline constexpr double log_epsilon = 1e-8;

struct PairFeatures {
    std::array<double, feature_count> values{};

    double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
    double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
    bool operator==(const PairFeatures&) const = default;
};

/// 1 - cos(u, v); a zero vector counts as orthogonal (distance 1).
template <typename A, typename B>
double cosine_distance(std::span<const A> u, std::span<const B> v) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
    }
    if (nu == 0.0 || nv == 0.0) {
        return 1.0;
    }
    return std::clamp(1.0 - dot / (std::sqrt(nu) * std::sqrt(nv)), 0.0, 2.0);
}

template <typename A, typename B>
double l2_distance(std::span<const A> u, std::span<const B> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = static_cast<double>(u[i]) - static_cast<double>(v[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace detail {

struct Summary {
    double min, max, avg, med;
};

/// Reorders values.
inline Summary summarize(std::vector<double>& values) {
    Summary s{values[0], values[0], 0.0, 0.0};
    double sum = 0.0;
    for (double v : values) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        sum += v;
    }
    s.avg = sum / static_cast<double>(values.size());
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    s.med = values[mid];
    if (values.size() % 2 == 0) {
        const double below = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
        s.med = 0.5 * (below + s.med);
    }
    return s;
}

inline std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

}

// ---------------------------------------------------------------------------
// Graph

struct GraphConfig {
    PrepConfig prep;
    std::uint64_t seed = 0;
};

struct SegmentStats {
    std::size_t size = 0;
    /// number of 4-adjacent pixel pairs leaving the segment (image border excluded)
    std::size_t perimeter = 0;
    std::array<double, 3> lab_sum{};
    SegmentRepSample rep_sample;
    std::vector<double> rep_mean;

    std::array<double, 3> mean_lab() const {
        const double n = static_cast<double>(size);
        return {lab_sum[0] / n, lab_sum[1] / n, lab_sum[2] / n};
    }
};

struct BoundarySegment {
    std::uint32_t a = 0, b = 0;
    /// 4-adjacent (p, q) pixel pairs, p < q in raster order
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pixel_pairs;
    /// sum over pairs of (edge[p] + edge[q]) / 2
    double edge_sum = 0.0;

    std::size_t length() const { return pixel_pairs.size(); }
    double mean_edge() const { return edge_sum / static_cast<double>(pixel_pairs.size()); }
};

struct MergeOutcome {
    std::uint32_t new_id;
    /// (new_id, neighbor) for every neighbor of the merged node
    std::vector<std::pair<std::uint32_t, std::uint32_t>> affected;
};

/**
 * Region adjacency graph over a superpixel map. Base segments keep their
 * label ids; each merge creates a fresh node id (base count, base count + 1,
 * ...), and the two merged nodes die.
 */
class SegmentGraph {
public:
    static SegmentGraph build(const LabelMap& sp, const EdgeMap& edges, const LabImage& lab, const RepTensor& reps,
                              const GraphConfig& cfg = {}) {
        if (sp.empty()) {
            throw Error(Errc::InvalidShape, "empty superpixel map");
        }
        if (!sp.same_shape(edges) || !sp.same_shape(lab) || edges.channels != 1 || lab.channels != 3) {
            throw Error(Errc::DimMismatch, "superpixels, edge map and Lab image must share dims");
        }
        const auto [hh, hw] = half_resolution(sp.height, sp.width);
        const bool half = reps.height == hh && reps.width == hw;
        const bool full = reps.height == sp.height && reps.width == sp.width;
        if ((!half && !full) || reps.channels == 0) {
            throw Error(Errc::DimMismatch, "representation tensor must be at half or full image resolution");
        }

        SegmentGraph g;
        g.cfg_ = cfg;
        g.base_ = relabel_contiguous(sp).map;
        g.edges_ = edges;
        g.rep_dim_ = reps.channels;
        const std::size_t k = label_count(g.base_);
        g.base_count_ = k;
        g.nodes_.resize(k);
        g.alive_count_ = k;

        std::vector<std::vector<std::uint32_t>> pixels(k);
        for (std::size_t p = 0; p < g.base_.pixels(); ++p) {
            const auto id = g.base_.data[p];
            pixels[id].push_back(static_cast<std::uint32_t>(p));
            auto& node = g.nodes_[id];
            ++node.stats.size;
            for (int c = 0; c < 3; ++c) {
                node.stats.lab_sum[c] += lab.data[p * 3 + c];
            }
        }
        detail::for_each_adjacent_pair(sp.height, sp.width, [&](std::size_t p, std::size_t q) {
            const auto a = g.base_.data[p], b = g.base_.data[q];
            if (a == b) {
                return;
            }
            auto& bs = g.boundary_mut(a, b);
            bs.pixel_pairs.emplace_back(static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(q));
            bs.edge_sum += 0.5 * (static_cast<double>(edges.data[p]) + edges.data[q]);
            ++g.nodes_[a].stats.perimeter;
            ++g.nodes_[b].stats.perimeter;
            g.nodes_[a].neighbors.insert(b);
            g.nodes_[b].neighbors.insert(a);
        });
        for (std::uint32_t id = 0; id < k; ++id) {
            auto& node = g.nodes_[id];
            node.alive = true;
            node.members = {id};
            node.stats.rep_sample = prepare_segment_sample(id, pixels[id], reps, sp.height, sp.width, cfg.prep,
                                                           mix_seed(cfg.seed, id));
            node.stats.rep_mean = sample_mean(node.stats.rep_sample);
        }
        return g;
    }

    std::size_t base_count() const { return base_count_; }
    std::size_t alive_count() const { return alive_count_; }
    std::size_t capacity() const { return nodes_.size(); }
    std::size_t rep_dim() const { return rep_dim_; }
    const LabelMap& base() const { return base_; }
    const EdgeMap& edges() const { return edges_; }
    const GraphConfig& config() const { return cfg_; }

    bool alive(std::uint32_t id) const { return id < nodes_.size() && nodes_[id].alive; }

    std::vector<std::uint32_t> alive_ids() const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].alive) out.push_back(i);
        }
        return out;
    }

    const SegmentStats& stats(std::uint32_t id) const { return node(id).stats; }
    const std::set<std::uint32_t>& neighbors(std::uint32_t id) const { return node(id).neighbors; }
    /// base segment ids covered by the node, ascending
    const std::vector<std::uint32_t>& members(std::uint32_t id) const { return node(id).members; }

    bool adjacent(std::uint32_t a, std::uint32_t b) const {
        return a != b && boundaries_.count(detail::pair_key(a, b)) != 0;
    }

    const BoundarySegment& boundary(std::uint32_t a, std::uint32_t b) const {
        auto it = boundaries_.find(detail::pair_key(a, b));
        if (a == b || it == boundaries_.end()) {
            throw Error(Errc::NotAdjacent, "segments " + std::to_string(a) + " and " + std::to_string(b) +
                                               " are not adjacent");
        }
        return it->second;
    }

    /// All adjacent alive pairs (lower id first), sorted.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> adjacent_pairs() const {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
        for (std::uint32_t a = 0; a < nodes_.size(); ++a) {
            if (!nodes_[a].alive) continue;
            for (auto b : nodes_[a].neighbors) {
                if (a < b) out.emplace_back(a, b);
            }
        }
        return out;
    }

    /// Current segmentation, labeled with node ids.
    LabelMap current_labels() const {
        std::vector<std::uint32_t> owner(base_count_);
        for (std::uint32_t id = 0; id < nodes_.size(); ++id) {
            if (!nodes_[id].alive) continue;
            for (auto m : nodes_[id].members) owner[m] = id;
        }
        LabelMap out = base_;
        for (auto& v : out.data) v = owner[v];
        return out;
    }

    /**
     * Merges two adjacent nodes into a new node. Exact fields are combined
     * arithmetically; the representation sample is the union of both samples,
     * re-capped to sample_cap with a seed derived from the new id.
     */
    MergeOutcome merge(std::uint32_t a, std::uint32_t b) {
        if (!adjacent(a, b) || !alive(a) || !alive(b)) {
            throw Error(Errc::NotAdjacent, "cannot merge non-adjacent segments " + std::to_string(a) + " and " +
                                               std::to_string(b));
        }
        if (a > b) std::swap(a, b);
        const auto c = static_cast<std::uint32_t>(nodes_.size());
        nodes_.emplace_back();
        Node& na = nodes_[a];
        Node& nb = nodes_[b];
        Node& nc = nodes_[c];

        const std::size_t shared = boundaries_.at(detail::pair_key(a, b)).length();
        nc.stats.size = na.stats.size + nb.stats.size;
        nc.stats.perimeter = na.stats.perimeter + nb.stats.perimeter - 2 * shared;
        for (int i = 0; i < 3; ++i) {
            nc.stats.lab_sum[i] = na.stats.lab_sum[i] + nb.stats.lab_sum[i];
        }
        nc.members.resize(na.members.size() + nb.members.size());
        std::merge(na.members.begin(), na.members.end(), nb.members.begin(), nb.members.end(), nc.members.begin());

        SegmentRepSample joined = na.stats.rep_sample;
        joined.segment = c;
        joined.kept_indices.insert(joined.kept_indices.end(), nb.stats.rep_sample.kept_indices.begin(),
                                   nb.stats.rep_sample.kept_indices.end());
        joined.reps.insert(joined.reps.end(), nb.stats.rep_sample.reps.begin(), nb.stats.rep_sample.reps.end());
        nc.stats.rep_sample = sample_segment(joined, cfg_.prep.sample_cap, mix_seed(cfg_.seed, c));
        nc.stats.rep_mean = sample_mean(nc.stats.rep_sample);

        boundaries_.erase(detail::pair_key(a, b));
        MergeOutcome outcome{c, {}};
        std::set<std::uint32_t> around;
        for (auto x : na.neighbors) around.insert(x);
        for (auto x : nb.neighbors) around.insert(x);
        around.erase(a);
        around.erase(b);
        for (auto x : around) {
            BoundarySegment merged;
            merged.a = x;
            merged.b = c;
            for (auto old : {a, b}) {
                auto it = boundaries_.find(detail::pair_key(old, x));
                if (it == boundaries_.end()) continue;
                merged.pixel_pairs.insert(merged.pixel_pairs.end(), it->second.pixel_pairs.begin(),
                                          it->second.pixel_pairs.end());
                merged.edge_sum += it->second.edge_sum;
                boundaries_.erase(it);
            }
            boundaries_.emplace(detail::pair_key(x, c), std::move(merged));
            auto& xn = nodes_[x].neighbors;
            xn.erase(a);
            xn.erase(b);
            xn.insert(c);
            nc.neighbors.insert(x);
            outcome.affected.emplace_back(c, x);
        }
        for (Node* dead : {&na, &nb}) {
            dead->alive = false;
            dead->neighbors.clear();
            dead->members.clear();
            dead->members.shrink_to_fit();
            dead->stats.rep_sample = {};
        }
        nc.alive = true;
        alive_count_ -= 1;
        return outcome;
    }

private:
    struct Node {
        SegmentStats stats;
        std::set<std::uint32_t> neighbors;
        std::vector<std::uint32_t> members;
        bool alive = false;
    };

    static std::vector<double> sample_mean(const SegmentRepSample& s) {
        std::vector<double> mean(s.dim, 0.0);
        if (s.size() == 0) return mean;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto r = s.rep(i);
            for (std::size_t c = 0; c < s.dim; ++c) mean[c] += r[c];
        }
        for (auto& v : mean) v /= static_cast<double>(s.size());
        return mean;
    }

    const Node& node(std::uint32_t id) const {
        if (id >= nodes_.size()) {
            throw Error(Errc::InvalidArgument, "unknown segment id " + std::to_string(id));
        }
        return nodes_[id];
    }

    BoundarySegment& boundary_mut(std::uint32_t a, std::uint32_t b) {
        auto [it, inserted] = boundaries_.try_emplace(detail::pair_key(a, b));
        if (inserted) {
            it->second.a = std::min(a, b);
            it->second.b = std::max(a, b);
        }
        return it->second;
    }

    GraphConfig cfg_;
    LabelMap base_;
    EdgeMap edges_;
    std::size_t rep_dim_ = 0;
    std::size_t base_count_ = 0;
    std::size_t alive_count_ = 0;
    std::vector<Node> nodes_;
    std::unordered_map<std::uint64_t, BoundarySegment> boundaries_;
};

namespace detail {

/// Fills the boundary, size and color features of f.
inline PairFeatures geometric_features(PairFeatures f, const BoundarySegment& shared, const SegmentStats& sa,
                                       const SegmentStats& sb) {
    f[Feature::EdgeMean] = std::clamp(shared.mean_edge(), 0.0, 1.0);
    const double len = static_cast<double>(shared.length());
    f[Feature::SqrtBoundaryLen] = std::sqrt(len);
    f[Feature::SqrtCombinedSize] = std::sqrt(static_cast<double>(sa.size + sb.size));
    f[Feature::MaxBoundaryPerimeterRatio] =
        std::max(len / static_cast<double>(sa.perimeter), len / static_cast<double>(sb.perimeter));
    const auto la = sa.mean_lab(), lb = sb.mean_lab();
    f[Feature::DLabL] = std::abs(la[0] - lb[0]);
    f[Feature::DLabA] = std::abs(la[1] - lb[1]);
    f[Feature::DLabB] = std::abs(la[2] - lb[2]);
    return f;
}

}

/**
 * The 17 pair features: eight statistics over the cross product of the two
 * representation samples (L2 distances as ln(d + eps), cosine distances),
 * two distances between the sample means, the mean boundary edge strength,
 * three geometric terms and the absolute Lab mean differences.
 *
 * With with_reps = false the representation features are left at 0, for
 * models that put no weight on them.
 */
inline PairFeatures pair_features(const SegmentGraph& g, std::uint32_t a, std::uint32_t b, bool with_reps = true) {
    const auto& shared = g.boundary(a, b);
    if (a > b) std::swap(a, b);
    const auto& sa = g.stats(a);
    const auto& sb = g.stats(b);
    PairFeatures f;

    if (!with_reps) return detail::geometric_features(f, shared, sa, sb);
    const auto& ra = sa.rep_sample;
    const auto& rb = sb.rep_sample;
    const std::size_t n = ra.size() * rb.size();
    if (n > 0) {
        std::vector<double> l2(n), cosd(n);
        const std::size_t dim = g.rep_dim();
        const std::vector<double> da(ra.reps.begin(), ra.reps.end()), db(rb.reps.begin(), rb.reps.end());
        auto norms = [dim](const std::vector<double>& x) {
            std::vector<double> out(x.size() / dim);
            for (std::size_t i = 0; i < out.size(); ++i) {
                double acc = 0.0;
                for (std::size_t c = 0; c < dim; ++c) acc += x[i * dim + c] * x[i * dim + c];
                out[i] = std::sqrt(acc);
            }
            return out;
        };
        const auto na = norms(da), nb = norms(db);
        std::size_t k = 0;
        for (std::size_t i = 0; i < ra.size(); ++i) {
            const double* u = da.data() + i * dim;
            for (std::size_t j = 0; j < rb.size(); ++j, ++k) {
                const double* v = db.data() + j * dim;
                double d2 = 0.0, dot = 0.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    const double d = u[c] - v[c];
                    d2 += d * d;
                    dot += u[c] * v[c];
                }
                l2[k] = std::log(std::sqrt(d2) + log_epsilon);
                cosd[k] = na[i] == 0.0 || nb[j] == 0.0 ? 1.0 : std::clamp(1.0 - dot / (na[i] * nb[j]), 0.0, 2.0);
            }
        }
        const auto s2 = detail::summarize(l2);
        const auto sc = detail::summarize(cosd);
        f[Feature::RepL2Min] = s2.min;
        f[Feature::RepL2Max] = s2.max;
        f[Feature::RepL2Avg] = s2.avg;
        f[Feature::RepL2Med] = s2.med;
        f[Feature::RepCosMin] = sc.min;
        f[Feature::RepCosMax] = sc.max;
        f[Feature::RepCosAvg] = sc.avg;
        f[Feature::RepCosMed] = sc.med;
    } else {
        for (auto feat : {Feature::RepL2Min, Feature::RepL2Max, Feature::RepL2Avg, Feature::RepL2Med}) {
            f[feat] = std::log(log_epsilon);
        }
        for (auto feat : {Feature::RepCosMin, Feature::RepCosMax, Feature::RepCosAvg, Feature::RepCosMed}) {
            f[feat] = 1.0;
        }
    }
    const std::span<const double> ma(sa.rep_mean), mb(sb.rep_mean);
    f[Feature::RepMeanL2] = std::log(l2_distance(ma, mb) + log_epsilon);
    f[Feature::RepMeanCos] = cosine_distance(ma, mb);

    return detail::geometric_features(f, shared, sa, sb);
}

}

#endif
