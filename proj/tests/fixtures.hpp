#pragma once

// Constructed label-map fixtures shared by the unit tests and the acceptance
// runner.

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <vector>

#include "brrf/classifier.hpp"
#include "brrf/random.hpp"
#include "brrf/synth.hpp"

namespace fixtures {

struct Labeling {
    brrf::LabelMap seg;
    std::vector<brrf::LabelMap> gts;
};

inline brrf::LabelMap random_voronoi(std::size_t h, std::size_t w, std::size_t k, brrf::Rng& rng) {
    return brrf::grow_voronoi(h, w, rng.sample_without_replacement(h * w, k));
}

// Copy of m shifted by (dy, dx), edge pixels replicated.
inline brrf::LabelMap shifted(const brrf::LabelMap& m, long dy, long dx) {
    brrf::LabelMap out(m.height, m.width);
    const long h = static_cast<long>(m.height), w = static_cast<long>(m.width);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            const long sy = std::clamp(y - dy, 0L, h - 1), sx = std::clamp(x - dx, 0L, w - 1);
            out.data[static_cast<std::size_t>(y * w + x)] = m.data[static_cast<std::size_t>(sy * w + sx)];
        }
    }
    return out;
}

// Vertical split at column c; the annotation follows it at c + shift on the
// first `rows` rows and sits at `far` elsewhere.
inline Labeling partial_step(std::size_t h, std::size_t w, std::size_t c, std::size_t shift, std::size_t rows,
                             std::size_t far) {
    Labeling f{brrf::LabelMap(h, w), {brrf::LabelMap(h, w)}};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            f.seg.data[y * w + x] = x >= c;
            f.gts[0].data[y * w + x] = x >= (y < rows ? c + shift : far);
        }
    }
    return f;
}

/// Mix of straight steps with controlled near fractions, independent random
/// partitions, shifted copies, multiple annotations and boundary-free
/// annotations.
inline std::vector<Labeling> labeling_set(std::size_t count, std::uint64_t seed) {
    brrf::Rng rng(seed);
    std::vector<Labeling> out;
    for (std::size_t i = 0; i < count; ++i) {
        switch (i % 5) {
            case 0: {
                const std::size_t h = 5 + rng.below(16), w = 16 + rng.below(10);
                out.push_back(partial_step(h, w, 5, rng.below(5), rng.below(h + 1), w - 1 - rng.below(3)));
                break;
            }
            case 1: {
                const std::size_t h = 12 + rng.below(20), w = 12 + rng.below(20);
                Labeling f{random_voronoi(h, w, 2 + rng.below(7), rng), {}};
                f.gts.push_back(random_voronoi(h, w, 2 + rng.below(7), rng));
                out.push_back(std::move(f));
                break;
            }
            case 2: {
                const std::size_t h = 12 + rng.below(20), w = 12 + rng.below(20);
                Labeling f{random_voronoi(h, w, 2 + rng.below(7), rng), {}};
                const long dy = static_cast<long>(rng.below(7)) - 3, dx = static_cast<long>(rng.below(7)) - 3;
                f.gts.push_back(shifted(f.seg, dy, dx));
                out.push_back(std::move(f));
                break;
            }
            case 3: {
                const std::size_t h = 12 + rng.below(12), w = 12 + rng.below(12);
                Labeling f{random_voronoi(h, w, 3 + rng.below(4), rng), {}};
                for (std::size_t k = 0; k < 2 + rng.below(3); ++k) {
                    if (rng.below(2)) {
                        f.gts.push_back(shifted(f.seg, static_cast<long>(rng.below(5)) - 2,
                                                static_cast<long>(rng.below(5)) - 2));
                    } else {
                        f.gts.push_back(random_voronoi(h, w, 2 + rng.below(5), rng));
                    }
                }
                out.push_back(std::move(f));
                break;
            }
            default: {
                const std::size_t h = 8 + rng.below(10), w = 8 + rng.below(10);
                Labeling f{random_voronoi(h, w, 2 + rng.below(4), rng), {brrf::LabelMap(h, w, 1, 3)}};
                out.push_back(std::move(f));
                break;
            }
        }
    }
    return out;
}

/// Labels of every adjacent pair computed by the library.
inline std::vector<std::tuple<std::uint32_t, std::uint32_t, brrf::PairLabel>> library_labels(const Labeling& f) {
    const std::size_t h = f.seg.height, w = f.seg.width;
    brrf::GraphConfig cfg;
    cfg.prep.enable_filter = false;
    const auto g = brrf::SegmentGraph::build(f.seg, brrf::EdgeMap(h, w), brrf::LabImage(h, w, 3),
                                             brrf::RepTensor(h, w, 1, 0.5f), cfg);
    std::vector<std::vector<std::uint32_t>> dist;
    for (const auto& gt : f.gts) dist.push_back(brrf::boundary_distance(gt));
    std::vector<std::tuple<std::uint32_t, std::uint32_t, brrf::PairLabel>> out;
    for (const auto& [a, b] : g.adjacent_pairs()) {
        out.emplace_back(a, b, brrf::label_pair(g.boundary(a, b).pixel_pairs, dist));
    }
    return out;
}

}
