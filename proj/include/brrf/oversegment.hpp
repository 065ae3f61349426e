#ifndef BRRF_OVERSEGMENT_HPP
#define BRRF_OVERSEGMENT_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <tuple>
#include <vector>

#include "brrf/error.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

namespace detail {

template <typename F>
inline void for_each_neighbor4(std::size_t p, std::size_t h, std::size_t w, F&& f) {
    const std::size_t y = p / w, x = p % w;
    if (y > 0) f(p - w);
    if (x > 0) f(p - 1);
    if (x + 1 < w) f(p + 1);
    if (y + 1 < h) f(p + w);
}

/// Calls f(p, q) for every 4-adjacent pixel pair p < q, in raster order.
template <typename F>
inline void for_each_adjacent_pair(std::size_t h, std::size_t w, F&& f) {
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t p = y * w + x;
            if (x + 1 < w) f(p, p + 1);
            if (y + 1 < h) f(p, p + w);
        }
    }
}

inline void check_edges(const EdgeMap& edges) {
    if (edges.empty() || edges.channels != 1) {
        throw Error(Errc::InvalidShape, "edge map must be a non-empty single-channel field");
    }
}

}

/// Labels each regional minimum plateau of the edge surface (4-connected,
/// equal value, no strictly lower neighbor), numbered in raster order of its
/// first pixel. Non-minimum pixels get UINT32_MAX.
inline LabelMap regional_minima(const EdgeMap& edges) {
    detail::check_edges(edges);
    const std::size_t h = edges.height, w = edges.width, n = edges.pixels();
    constexpr std::uint32_t unset = UINT32_MAX;
    LabelMap out(h, w, 1, unset);
    std::vector<char> visited(n, 0);
    std::vector<std::size_t> plateau, stack;
    std::uint32_t next = 0;
    for (std::size_t start = 0; start < n; ++start) {
        if (visited[start]) {
            continue;
        }
        const float level = edges.data[start];
        bool is_minimum = true;
        plateau.clear();
        stack.assign(1, start);
        visited[start] = 1;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            plateau.push_back(p);
            detail::for_each_neighbor4(p, h, w, [&](std::size_t q) {
                const float v = edges.data[q];
                if (v < level) {
                    is_minimum = false;
                } else if (v == level && !visited[q]) {
                    visited[q] = 1;
                    stack.push_back(q);
                }
            });
        }
        if (is_minimum) {
            for (auto p : plateau) {
                out.data[p] = next;
            }
            ++next;
        }
    }
    return out;
}

/**
 * Minima-seeded priority-flood watershed on the scalar edge surface.
 *
 * A pixel joins the basin of the first labeled neighbor popped from the queue;
 * the queue is ordered by flood level, then insertion order (FIFO on
 * plateaus). Returns one label per regional minimum plateau.
 */
inline LabelMap watershed(const EdgeMap& edges) {
    LabelMap labels = regional_minima(edges);
    const std::size_t h = edges.height, w = edges.width;
    constexpr std::uint32_t unset = UINT32_MAX;

    using Entry = std::tuple<float, std::uint64_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    std::uint64_t counter = 0;
    for (std::size_t p = 0; p < labels.pixels(); ++p) {
        if (labels.data[p] != unset) {
            queue.emplace(edges.data[p], counter++, p);
        }
    }
    while (!queue.empty()) {
        const auto [level, order, p] = queue.top();
        queue.pop();
        detail::for_each_neighbor4(p, h, w, [&, level = level, p = p](std::size_t q) {
            if (labels.data[q] == unset) {
                labels.data[q] = labels.data[p];
                queue.emplace(std::max(edges.data[q], level), counter++, q);
            }
        });
    }
    return labels;
}

struct SmallRemovalResult {
    LabelMap labels;
    /// set when a segment below min_size had no neighbor to merge into
    bool no_neighbor = false;
    std::size_t merges = 0;
};

/**
 * Merges every superpixel smaller than min_size into the neighbor with the
 * lowest mean edge strength along their shared boundary, smallest segment
 * first (ties: lower id), until no small segment remains. The absorbing
 * neighbor keeps its id. A shared boundary is the set of 4-adjacent pixel
 * pairs with differing labels; each pair contributes the mean of its two
 * edge values.
 */
inline SmallRemovalResult remove_small_superpixels(const LabelMap& sp, const EdgeMap& edges,
                                                   std::size_t min_size = 32) {
    detail::check_edges(edges);
    if (!sp.same_shape(edges)) {
        throw Error(Errc::DimMismatch, "superpixels and edge map differ in size");
    }
    if (min_size < 1) {
        throw Error(Errc::InvalidArgument, "min_size must be >= 1");
    }
    const auto compact = relabel_contiguous(sp).map;
    const std::size_t k = label_count(compact);

    struct Shared {
        double edge_sum = 0.0;
        std::size_t count = 0;
    };
    std::vector<std::size_t> size(k, 0);
    std::vector<std::map<std::uint32_t, Shared>> adjacency(k);
    for (auto v : compact.data) {
        ++size[v];
    }
    detail::for_each_adjacent_pair(compact.height, compact.width, [&](std::size_t p, std::size_t q) {
        const auto a = compact.data[p], b = compact.data[q];
        if (a != b) {
            const double e = 0.5 * (static_cast<double>(edges.data[p]) + edges.data[q]);
            for (auto [u, v] : {std::pair{a, b}, std::pair{b, a}}) {
                auto& s = adjacency[u][v];
                s.edge_sum += e;
                ++s.count;
            }
        }
    });

    std::vector<std::uint32_t> parent(k);
    std::iota(parent.begin(), parent.end(), 0u);
    std::set<std::pair<std::size_t, std::uint32_t>> small;
    for (std::uint32_t i = 0; i < k; ++i) {
        if (size[i] < min_size) {
            small.emplace(size[i], i);
        }
    }

    SmallRemovalResult result;
    while (!small.empty()) {
        const auto [s_size, s] = *small.begin();
        if (adjacency[s].empty()) {
            result.no_neighbor = true;
            break;
        }
        small.erase(small.begin());
        std::uint32_t target = 0;
        double best = 0.0;
        bool found = false;
        for (const auto& [nb, shared] : adjacency[s]) {
            const double mean = shared.edge_sum / static_cast<double>(shared.count);
            if (!found || mean < best) {
                best = mean;
                target = nb;
                found = true;
            }
        }

        if (size[target] < min_size) {
            small.erase({size[target], target});
        }
        size[target] += s_size;
        if (size[target] < min_size) {
            small.emplace(size[target], target);
        }
        for (const auto& [nb, shared] : adjacency[s]) {
            adjacency[nb].erase(s);
            if (nb == target) {
                continue;
            }
            auto& a = adjacency[target][nb];
            a.edge_sum += shared.edge_sum;
            a.count += shared.count;
            auto& b = adjacency[nb][target];
            b.edge_sum += shared.edge_sum;
            b.count += shared.count;
        }
        adjacency[s].clear();
        parent[s] = target;
        size[s] = 0;
        ++result.merges;
    }

    auto find = [&](std::uint32_t v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    LabelMap out = compact;
    for (auto& v : out.data) {
        v = find(v);
    }
    result.labels = relabel_contiguous(std::move(out)).map;
    return result;
}

}

#endif
