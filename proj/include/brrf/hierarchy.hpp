#ifndef BRRF_HIERARCHY_HPP
#define BRRF_HIERARCHY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "brrf/error.hpp"
#include "brrf/oversegment.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

struct MergeRecord {
    std::size_t step = 0;
    std::uint32_t a = 0, b = 0;
    std::uint32_t new_id = 0;
    double pair_dissim = 0.0;
    /// only set for merges chosen by silhouette re-ranking
    std::optional<double> sil_score;
    /// running maximum of pair_dissim up to this step
    double ucm_value = 0.0;

    bool operator==(const MergeRecord&) const = default;
};

/// Base oversegmentation plus the ordered merge log. Base segments are ids
/// 0..K-1; merge i creates id K + i.
struct Hierarchy {
    LabelMap base;
    std::vector<MergeRecord> merges;
    /// components of the adjacency graph were joined at the end
    bool disconnected = false;

    std::size_t base_count() const { return label_count(base); }

    std::vector<double> ucm_values() const {
        std::vector<double> out;
        out.reserve(merges.size());
        for (const auto& m : merges) out.push_back(m.ucm_value);
        return out;
    }

    bool operator==(const Hierarchy&) const = default;
};

namespace detail {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }

    std::uint32_t find(std::uint32_t v) {
        while (parent_[v] != v) {
            parent_[v] = parent_[parent_[v]];
            v = parent_[v];
        }
        return v;
    }

    void attach(std::uint32_t child, std::uint32_t parent) { parent_[find(child)] = find(parent); }

private:
    std::vector<std::uint32_t> parent_;
};

}

/// Segmentation obtained by applying every merge with ucm_value <= t to the
/// base partition. Labels are numbered by first occurrence in raster order.
inline LabelMap threshold_hierarchy(const Hierarchy& h, double t) {
    const std::size_t k = h.base_count();
    detail::UnionFind uf(k + h.merges.size());
    for (const auto& m : h.merges) {
        if (m.ucm_value > t) {
            break;
        }
        uf.attach(m.a, m.new_id);
        uf.attach(m.b, m.new_id);
    }
    LabelMap out = h.base;
    for (auto& v : out.data) {
        v = uf.find(v);
    }
    return relabel_by_first_occurrence(out);
}

/// Segmentation after the first `count` merges.
inline LabelMap segmentation_after(const Hierarchy& h, std::size_t count) {
    const std::size_t k = h.base_count();
    detail::UnionFind uf(k + h.merges.size());
    for (std::size_t i = 0; i < std::min(count, h.merges.size()); ++i) {
        uf.attach(h.merges[i].a, h.merges[i].new_id);
        uf.attach(h.merges[i].b, h.merges[i].new_id);
    }
    LabelMap out = h.base;
    for (auto& v : out.data) {
        v = uf.find(v);
    }
    return relabel_by_first_occurrence(out);
}

/**
 * Ultrametric contour map on the (2H+1) x (2W+1) interpixel grid: the cell
 * between two horizontally or vertically adjacent pixels of different base
 * segments holds the ucm_value of the merge that joined them. Everything else
 * is 0.
 */
inline RasterF32 render_ucm(const Hierarchy& h) {
    const std::size_t k = h.base_count();
    const std::size_t total = k + h.merges.size();
    std::vector<std::uint32_t> parent(total, UINT32_MAX);
    std::vector<double> level(total, 0.0);
    for (const auto& m : h.merges) {
        parent[m.a] = m.new_id;
        parent[m.b] = m.new_id;
        level[m.new_id] = m.ucm_value;
    }
    std::vector<std::size_t> depth(total, 0);
    for (std::size_t i = total; i-- > 0;) {
        if (parent[i] != UINT32_MAX) depth[i] = depth[parent[i]] + 1;
    }
    std::map<std::pair<std::uint32_t, std::uint32_t>, float> cache;
    auto dissolve = [&](std::uint32_t a, std::uint32_t b) -> float {
        if (a > b) std::swap(a, b);
        auto it = cache.find({a, b});
        if (it != cache.end()) return it->second;
        std::uint32_t x = a, y = b;
        while (x != y) {
            if (depth[x] < depth[y]) std::swap(x, y);
            if (parent[x] == UINT32_MAX) {
                x = y = UINT32_MAX;
                break;
            }
            x = parent[x];
        }
        const float v = x == UINT32_MAX ? 1.0f : static_cast<float>(level[x]);
        cache.emplace(std::pair{a, b}, v);
        return v;
    };

    const std::size_t H = h.base.height, W = h.base.width;
    RasterF32 out(2 * H + 1, 2 * W + 1, 1, 0.0f);
    detail::for_each_adjacent_pair(H, W, [&](std::size_t p, std::size_t q) {
        const auto a = h.base.data[p], b = h.base.data[q];
        if (a == b) return;
        const std::size_t y = p / W, x = p % W;
        const float v = dissolve(a, b);
        if (q == p + 1) {
            out.at(2 * y + 1, 2 * x + 2) = v;
        } else {
            out.at(2 * y + 2, 2 * x + 1) = v;
        }
    });
    return out;
}

/// Segmentation recovered from a rendered UCM: pixels connected through
/// interpixel cells with value <= t share a label.
inline LabelMap threshold_ucm(const RasterF32& ucm, double t) {
    const std::size_t H = (ucm.height - 1) / 2, W = (ucm.width - 1) / 2;
    constexpr std::uint32_t unset = UINT32_MAX;
    LabelMap out(H, W, 1, unset);
    std::uint32_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < H * W; ++s) {
        if (out.data[s] != unset) continue;
        out.data[s] = next;
        stack.assign(1, s);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t y = p / W, x = p % W;
            auto go = [&](std::size_t q, std::size_t cy, std::size_t cx) {
                if (out.data[q] == unset && ucm.at(cy, cx) <= t) {
                    out.data[q] = next;
                    stack.push_back(q);
                }
            };
            if (x + 1 < W) go(p + 1, 2 * y + 1, 2 * x + 2);
            if (x > 0) go(p - 1, 2 * y + 1, 2 * x);
            if (y + 1 < H) go(p + W, 2 * y + 2, 2 * x + 1);
            if (y > 0) go(p - W, 2 * y, 2 * x + 1);
        }
        ++next;
    }
    return out;
}

/// Checks the structural invariants; returns an empty string when valid.
inline std::string validate_hierarchy(const Hierarchy& h) {
    const std::size_t k = h.base_count();
    if (k == 0) return "empty base";
    if (h.merges.size() + 1 != k) return "merge count does not equal base segments - 1";
    std::vector<char> used(k + h.merges.size(), 0);
    double prev = -INFINITY;
    for (std::size_t i = 0; i < h.merges.size(); ++i) {
        const auto& m = h.merges[i];
        if (m.new_id != k + i) return "merge " + std::to_string(i) + " has unexpected new id";
        if (m.a >= m.new_id || m.b >= m.new_id || m.a == m.b) return "merge " + std::to_string(i) + " bad operands";
        if (used[m.a] || used[m.b]) return "merge " + std::to_string(i) + " reuses a dead node";
        used[m.a] = used[m.b] = 1;
        if (!(m.ucm_value >= prev)) return "ucm values decrease at merge " + std::to_string(i);
        prev = m.ucm_value;
    }
    return {};
}

// ---------------------------------------------------------------------------
// JSON container

inline constexpr int hierarchy_schema_version = 1;

inline nlohmann::json hierarchy_to_json(const Hierarchy& h, const std::string& base_path) {
    nlohmann::json j;
    j["format"] = "brrf-hierarchy";
    j["version"] = hierarchy_schema_version;
    j["base"] = base_path;
    j["height"] = h.base.height;
    j["width"] = h.base.width;
    j["base_segments"] = h.base_count();
    j["disconnected"] = h.disconnected;
    auto& merges = j["merges"] = nlohmann::json::array();
    for (const auto& m : h.merges) {
        nlohmann::json r;
        r["step"] = m.step;
        r["a"] = m.a;
        r["b"] = m.b;
        r["new_id"] = m.new_id;
        r["pair_dissim"] = m.pair_dissim;
        r["sil_score"] = m.sil_score ? nlohmann::json(*m.sil_score) : nlohmann::json(nullptr);
        r["ucm"] = m.ucm_value;
        merges.push_back(std::move(r));
    }
    return j;
}

/// Writes <path> (JSON) and the base label map next to it as <stem>.base.brrf.
inline void write_hierarchy(const Hierarchy& h, const std::filesystem::path& path) {
    const auto base_name = path.stem().string() + ".base.brrf";
    write_label_map(h.base, path.parent_path() / base_name);
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(Errc::IoFailure, "cannot open " + path.string() + " for writing");
    }
    out << hierarchy_to_json(h, base_name).dump(1) << '\n';
    if (!out) {
        throw Error(Errc::IoFailure, "write failed for " + path.string());
    }
}

inline Hierarchy read_hierarchy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::IoFailure, "cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "brrf-hierarchy") {
        throw Error(Errc::MagicMismatch, path.string() + ": not a hierarchy file");
    }
    if (j.value("version", -1) != hierarchy_schema_version) {
        throw Error(Errc::SchemaVersionMismatch, path.string() + ": unsupported hierarchy version");
    }
    Hierarchy h;
    try {
        std::filesystem::path base = j.at("base").get<std::string>();
        if (base.is_relative()) base = path.parent_path() / base;
        h.base = read_label_map(base).map;
        h.disconnected = j.value("disconnected", false);
        for (const auto& r : j.at("merges")) {
            MergeRecord m;
            m.step = r.at("step").get<std::size_t>();
            m.a = r.at("a").get<std::uint32_t>();
            m.b = r.at("b").get<std::uint32_t>();
            m.new_id = r.at("new_id").get<std::uint32_t>();
            m.pair_dissim = r.at("pair_dissim").get<double>();
            if (!r.at("sil_score").is_null()) m.sil_score = r.at("sil_score").get<double>();
            m.ucm_value = r.at("ucm").get<double>();
            h.merges.push_back(m);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, path.string() + ": " + e.what());
    }
    if (auto problem = validate_hierarchy(h); !problem.empty()) {
        throw Error(Errc::InvalidArgument, path.string() + ": " + problem);
    }
    return h;
}

}

#endif
