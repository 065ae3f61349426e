#pragma once

// Maximum-cardinality bipartite matching (Hopcroft-Karp) between predicted and
// annotated boundary pixels within a Chebyshev radius.

#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

namespace oracle {

inline std::size_t max_boundary_matching(const std::vector<char>& pred, const std::vector<char>& gt, std::size_t h,
                                         std::size_t w, long tol) {
    std::vector<std::size_t> left, right_index(gt.size(), SIZE_MAX);
    std::size_t nright = 0;
    for (std::size_t q = 0; q < gt.size(); ++q) {
        if (gt[q]) right_index[q] = nright++;
    }
    std::vector<std::vector<std::size_t>> adj;
    for (std::size_t p = 0; p < pred.size(); ++p) {
        if (!pred[p]) continue;
        std::vector<std::size_t> nb;
        const long y = static_cast<long>(p / w), x = static_cast<long>(p % w);
        for (long dy = -tol; dy <= tol; ++dy) {
            for (long dx = -tol; dx <= tol; ++dx) {
                const long yy = y + dy, xx = x + dx;
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                const auto q = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
                if (gt[q]) nb.push_back(right_index[q]);
            }
        }
        adj.push_back(std::move(nb));
    }
    const std::size_t nleft = adj.size();
    constexpr std::size_t none = SIZE_MAX;
    constexpr std::size_t inf = std::numeric_limits<std::size_t>::max() / 2;
    std::vector<std::size_t> match_l(nleft, none), match_r(nright, none), dist(nleft);

    auto bfs = [&] {
        std::queue<std::size_t> q;
        bool found = false;
        for (std::size_t u = 0; u < nleft; ++u) {
            if (match_l[u] == none) {
                dist[u] = 0;
                q.push(u);
            } else {
                dist[u] = inf;
            }
        }
        while (!q.empty()) {
            const auto u = q.front();
            q.pop();
            for (auto v : adj[u]) {
                const auto m = match_r[v];
                if (m == none) {
                    found = true;
                } else if (dist[m] == inf) {
                    dist[m] = dist[u] + 1;
                    q.push(m);
                }
            }
        }
        return found;
    };
    auto dfs = [&](auto&& self, std::size_t u) -> bool {
        for (auto v : adj[u]) {
            const auto m = match_r[v];
            if (m == none || (dist[m] == dist[u] + 1 && self(self, m))) {
                match_l[u] = v;
                match_r[v] = u;
                return true;
            }
        }
        dist[u] = inf;
        return false;
    };

    std::size_t size = 0;
    while (bfs()) {
        for (std::size_t u = 0; u < nleft; ++u) {
            if (match_l[u] == none && dfs(dfs, u)) ++size;
        }
    }
    return size;
}

}
