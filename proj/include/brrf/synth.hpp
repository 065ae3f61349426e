#ifndef BRRF_SYNTH_HPP
#define BRRF_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <queue>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "brrf/classifier.hpp"
#include "brrf/error.hpp"
#include "brrf/oversegment.hpp"
#include "brrf/random.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

/// Parameters of a synthetic scene. Noise levels are standard deviations.
struct SynthSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t n_segments = 6;
    std::size_t rep_dim = 16;
    /// typical distance between segment mean representations, in units of rep_noise
    double rep_separation = 10.0;
    double rep_noise = 1.0;
    /// representation grid stride relative to the image
    std::size_t rep_downsample = 4;
    double edge_strength = 0.9;
    double edge_noise = 0.05;
    /// expected number of spurious edge arcs per segment
    double spurious_edge_rate = 0.0;
    double color_noise = 0.05;
    /// width of the interval segment base colors are drawn from
    double color_spread = 0.7;
    std::uint64_t seed = 0;
};

inline void validate(const SynthSpec& s) {
    if (s.height == 0 || s.width == 0 || s.rep_dim == 0 || s.rep_downsample == 0) {
        throw Error(Errc::InvalidShape, "synth spec has a zero dimension");
    }
    if (s.n_segments < 1 || s.n_segments > s.height * s.width) {
        throw Error(Errc::InvalidArgument, "n_segments must be in [1, H*W]");
    }
    if (s.rep_noise < 0 || s.edge_noise < 0 || s.color_noise < 0 || s.spurious_edge_rate < 0 ||
        s.rep_separation < 0 || s.color_spread < 0 || s.color_spread > 1) {
        throw Error(Errc::InvalidArgument, "synth noise levels must be non-negative");
    }
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.height = j.value("height", s.height);
        s.width = j.value("width", s.width);
        s.n_segments = j.value("n_segments", s.n_segments);
        s.rep_dim = j.value("rep_dim", s.rep_dim);
        s.rep_separation = j.value("rep_separation", s.rep_separation);
        s.rep_noise = j.value("rep_noise", s.rep_noise);
        s.rep_downsample = j.value("rep_downsample", s.rep_downsample);
        s.edge_strength = j.value("edge_strength", s.edge_strength);
        s.edge_noise = j.value("edge_noise", s.edge_noise);
        s.spurious_edge_rate = j.value("spurious_edge_rate", s.spurious_edge_rate);
        s.color_noise = j.value("color_noise", s.color_noise);
        s.color_spread = j.value("color_spread", s.color_spread);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("bad synth spec: ") + e.what());
    }
    validate(s);
    return s;
}

struct SynthScene {
    LabelMap gt;
    RepTensor reps;
    EdgeMap edges;
    RasterF32 image;
    /// per-segment mean representation, n_segments x rep_dim
    std::vector<double> rep_means;
};

/// Connected Voronoi partition: each site grows over 4-neighbors in order of
/// squared distance to the site (ties: lower site id), so every cell is
/// 4-connected and nonempty.
inline LabelMap grow_voronoi(std::size_t h, std::size_t w, const std::vector<std::size_t>& sites) {
    constexpr std::uint32_t unset = UINT32_MAX;
    LabelMap out(h, w, 1, unset);
    using Entry = std::tuple<std::int64_t, std::uint32_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    for (std::uint32_t s = 0; s < sites.size(); ++s) queue.emplace(0, s, sites[s]);
    while (!queue.empty()) {
        const auto [d, s, p] = queue.top();
        queue.pop();
        if (out.data[p] != unset) continue;
        out.data[p] = s;
        const auto sy = static_cast<std::int64_t>(sites[s] / w), sx = static_cast<std::int64_t>(sites[s] % w);
        detail::for_each_neighbor4(p, h, w, [&, s = s](std::size_t q) {
            if (out.data[q] != unset) return;
            const auto dy = static_cast<std::int64_t>(q / w) - sy, dx = static_cast<std::int64_t>(q % w) - sx;
            queue.emplace(dy * dy + dx * dx, s, q);
        });
    }
    return out;
}

/**
 * Deterministic synthetic scene: Voronoi ground truth, per-segment Gaussian
 * representations on a coarse grid, a noisy boundary-strength edge map with
 * optional spurious arcs, and a per-segment colored image with pixel noise.
 */
inline SynthScene generate(const SynthSpec& spec) {
    validate(spec);
    const std::size_t h = spec.height, w = spec.width, k = spec.n_segments;
    Rng rng(spec.seed);
    SynthScene scene;

    const auto sites = rng.sample_without_replacement(h * w, k);
    scene.gt = grow_voronoi(h, w, sites);

    const double unit = spec.rep_noise > 0 ? spec.rep_noise : 1.0;
    const double radius = spec.rep_separation * unit / std::numbers::sqrt2;
    scene.rep_means.assign(k * spec.rep_dim, 0.0);
    for (std::size_t s = 0; s < k; ++s) {
        double norm = 0.0;
        std::vector<double> dir(spec.rep_dim);
        do {
            norm = 0.0;
            for (auto& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < spec.rep_dim; ++c) scene.rep_means[s * spec.rep_dim + c] = radius * dir[c] / norm;
    }
    const std::size_t ds = spec.rep_downsample;
    const std::size_t rh = (h + ds - 1) / ds, rw = (w + ds - 1) / ds;
    scene.reps = RepTensor(rh, rw, spec.rep_dim);
    for (std::size_t y = 0; y < rh; ++y) {
        for (std::size_t x = 0; x < rw; ++x) {
            const std::size_t sy = std::min(h - 1, y * ds + ds / 2), sx = std::min(w - 1, x * ds + ds / 2);
            const auto s = scene.gt.at(sy, sx);
            for (std::size_t c = 0; c < spec.rep_dim; ++c) {
                scene.reps.at(y, x, c) =
                    static_cast<float>(scene.rep_means[s * spec.rep_dim + c] + spec.rep_noise * rng.normal());
            }
        }
    }

    std::vector<double> edges(h * w, 0.0);
    detail::for_each_adjacent_pair(h, w, [&](std::size_t p, std::size_t q) {
        if (scene.gt.data[p] != scene.gt.data[q]) edges[p] = edges[q] = spec.edge_strength;
    });
    const auto arcs = static_cast<std::size_t>(std::llround(spec.spurious_edge_rate * static_cast<double>(k)));
    const double arc_len = static_cast<double>(std::max(h, w)) / 4.0;
    for (std::size_t a = 0; a < arcs; ++a) {
        double y = rng.uniform(0.0, static_cast<double>(h)), x = rng.uniform(0.0, static_cast<double>(w));
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (double t = 0.0; t < arc_len; t += 0.5) {
            const auto py = static_cast<std::ptrdiff_t>(std::floor(y + t * std::sin(theta)));
            const auto px = static_cast<std::ptrdiff_t>(std::floor(x + t * std::cos(theta)));
            if (py < 0 || px < 0 || py >= static_cast<std::ptrdiff_t>(h) || px >= static_cast<std::ptrdiff_t>(w)) break;
            auto& e = edges[static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)];
            e = std::max(e, 0.5 * spec.edge_strength);
        }
    }
    scene.edges = EdgeMap(h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
        const double v = edges[i] + (spec.edge_noise > 0 ? spec.edge_noise * rng.normal() : 0.0);
        scene.edges.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }

    std::vector<double> base(k * 3);
    const double lo = 0.5 - spec.color_spread / 2;
    for (auto& v : base) v = rng.uniform(lo, lo + spec.color_spread);
    scene.image = RasterF32(h, w, 3);
    for (std::size_t i = 0; i < h * w; ++i) {
        const auto s = scene.gt.data[i];
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = base[s * 3 + c] + (spec.color_noise > 0 ? spec.color_noise * rng.normal() : 0.0);
            scene.image.data[i * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return scene;
}

/// Majority ground-truth label of the pixels carrying `segment` in seg
/// (ties: lower GT label).
inline std::uint32_t majority_label(const LabelMap& gt, const LabelMap& seg, std::uint32_t segment) {
    std::map<std::uint32_t, std::size_t> votes;
    for (std::size_t i = 0; i < seg.pixels(); ++i) {
        if (seg.data[i] == segment) ++votes[gt.data[i]];
    }
    if (votes.empty()) {
        throw Error(Errc::InvalidArgument, "segment " + std::to_string(segment) + " has no pixels");
    }
    std::uint32_t best = votes.begin()->first;
    std::size_t count = 0;
    for (const auto& [label, n] : votes) {
        if (n > count) {
            count = n;
            best = label;
        }
    }
    return best;
}

/// Merge iff both segments' majority ground-truth labels agree.
inline PairLabel oracle_label(const LabelMap& gt, const LabelMap& seg, std::uint32_t a, std::uint32_t b) {
    if (!gt.same_shape(seg)) {
        throw Error(Errc::DimMismatch, "ground truth and segmentation differ in size");
    }
    return majority_label(gt, seg, a) == majority_label(gt, seg, b) ? PairLabel::Merge : PairLabel::NoMerge;
}

}

#endif
