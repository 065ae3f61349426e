#ifndef BRRF_EVAL_HPP
#define BRRF_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "brrf/error.hpp"
#include "brrf/hierarchy.hpp"
#include "brrf/random.hpp"
#include "brrf/rep_prep.hpp"
#include "brrf/seggraph.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

inline double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

struct BenchmarkSummary {
    double ods_f = 0.0;
    double ods_threshold = 0.0;
    double ois_f = 0.0;
    double average_precision = 0.0;
};

/// Pixels with at least one 4-neighbor carrying a different label.
inline std::vector<char> boundary_mask(const LabelMap& lm) {
    std::vector<char> mask(lm.pixels(), 0);
    detail::for_each_adjacent_pair(lm.height, lm.width, [&](std::size_t p, std::size_t q) {
        if (lm.data[p] != lm.data[q]) mask[p] = mask[q] = 1;
    });
    return mask;
}

namespace detail {

inline void check_same_dims(const LabelMap& pred, std::span<const LabelMap> gts) {
    if (gts.empty()) {
        throw Error(Errc::InvalidArgument, "at least one ground truth is required");
    }
    for (const auto& gt : gts) {
        if (!gt.same_shape(pred)) {
            throw Error(Errc::DimMismatch, "prediction and ground truth differ in size");
        }
    }
}

/// One-to-one matching of predicted to GT boundary pixels within Chebyshev
/// distance tol. Pairs are first taken greedily nearest-first; augmenting
/// paths (Hopcroft-Karp) then complete it to maximum cardinality, which never
/// unmatches a pixel. Returns the matched flags of both sides.
inline std::pair<std::vector<char>, std::vector<char>> match_boundaries(const std::vector<char>& pred,
                                                                        const std::vector<char>& gt,
                                                                        std::size_t h, std::size_t w,
                                                                        std::size_t tol) {
    constexpr std::uint32_t none = UINT32_MAX;
    std::vector<std::uint32_t> left_of(pred.size(), none), right_of(gt.size(), none);
    std::vector<std::size_t> left_pixel, right_pixel;
    for (std::size_t p = 0; p < pred.size(); ++p) {
        if (pred[p]) {
            left_of[p] = static_cast<std::uint32_t>(left_pixel.size());
            left_pixel.push_back(p);
        }
        if (gt[p]) {
            right_of[p] = static_cast<std::uint32_t>(right_pixel.size());
            right_pixel.push_back(p);
        }
    }
    const std::size_t nl = left_pixel.size(), nr = right_pixel.size();

    // adjacency per predicted pixel, nearest first
    std::vector<std::vector<std::uint32_t>> adj(nl);
    std::vector<std::tuple<std::size_t, std::uint32_t, std::uint32_t>> candidates;
    const auto t = static_cast<std::ptrdiff_t>(tol);
    for (std::uint32_t u = 0; u < nl; ++u) {
        const std::size_t p = left_pixel[u];
        const auto y = static_cast<std::ptrdiff_t>(p / w), x = static_cast<std::ptrdiff_t>(p % w);
        std::vector<std::pair<std::size_t, std::uint32_t>> near;
        for (std::ptrdiff_t dy = -t; dy <= t; ++dy) {
            for (std::ptrdiff_t dx = -t; dx <= t; ++dx) {
                const auto yy = y + dy, xx = x + dx;
                if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w))
                    continue;
                const auto q = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
                if (gt[q]) near.emplace_back(static_cast<std::size_t>(dy * dy + dx * dx), right_of[q]);
            }
        }
        std::sort(near.begin(), near.end());
        for (const auto& [d, v] : near) {
            adj[u].push_back(v);
            candidates.emplace_back(d, u, v);
        }
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<std::uint32_t> match_l(nl, none), match_r(nr, none);
    for (const auto& [d, u, v] : candidates) {
        if (match_l[u] == none && match_r[v] == none) {
            match_l[u] = v;
            match_r[v] = u;
        }
    }

    constexpr std::uint32_t inf = UINT32_MAX;
    std::vector<std::uint32_t> dist(nl), cursor(nl);
    std::vector<std::uint32_t> queue;
    auto layer = [&] {
        queue.clear();
        for (std::uint32_t u = 0; u < nl; ++u) {
            dist[u] = match_l[u] == none ? 0 : inf;
            if (match_l[u] == none) queue.push_back(u);
        }
        bool found = false;
        for (std::size_t i = 0; i < queue.size(); ++i) {
            const auto u = queue[i];
            for (auto v : adj[u]) {
                const auto m = match_r[v];
                if (m == none) {
                    found = true;
                } else if (dist[m] == inf) {
                    dist[m] = dist[u] + 1;
                    queue.push_back(m);
                }
            }
        }
        return found;
    };
    // iterative DFS along the layered graph
    std::vector<std::uint32_t> stack;
    auto augment = [&](std::uint32_t root) {
        stack.assign(1, root);
        while (!stack.empty()) {
            const auto u = stack.back();
            if (cursor[u] == adj[u].size()) {
                dist[u] = inf;
                stack.pop_back();
                continue;
            }
            const auto v = adj[u][cursor[u]];
            const auto m = match_r[v];
            if (m == none) {
                // flip the path: each stacked vertex takes the edge its cursor points at
                for (auto x : stack) {
                    const auto y = adj[x][cursor[x]];
                    match_l[x] = y;
                    match_r[y] = x;
                }
                return true;
            }
            if (dist[m] == dist[u] + 1) {
                stack.push_back(m);
            } else {
                ++cursor[u];
            }
        }
        return false;
    };
    while (layer()) {
        std::fill(cursor.begin(), cursor.end(), 0u);
        for (std::uint32_t u = 0; u < nl; ++u) {
            if (match_l[u] == none) augment(u);
        }
    }

    std::vector<char> used_pred(pred.size(), 0), used_gt(gt.size(), 0);
    for (std::uint32_t u = 0; u < nl; ++u) {
        if (match_l[u] != none) {
            used_pred[left_pixel[u]] = 1;
            used_gt[right_pixel[match_l[u]]] = 1;
        }
    }
    return {std::move(used_pred), std::move(used_gt)};
}

}

/**
 * Boundary precision/recall. Precision: share of predicted boundary pixels
 * matched in at least one annotation. Recall: per-annotation share of its
 * boundary pixels matched, averaged over annotations. An empty prediction
 * has precision 1; an annotation without boundary has recall 1.
 */
inline PrPoint boundary_pr(const LabelMap& pred, std::span<const LabelMap> gts, std::size_t tol_px = 2) {
    detail::check_same_dims(pred, gts);
    const auto pb = boundary_mask(pred);
    std::vector<char> matched_any(pb.size(), 0);
    double recall_sum = 0.0;
    for (const auto& gt : gts) {
        const auto gb = boundary_mask(gt);
        const auto [mp, mg] = detail::match_boundaries(pb, gb, pred.height, pred.width, tol_px);
        std::size_t total = 0, hit = 0;
        for (std::size_t i = 0; i < gb.size(); ++i) {
            total += gb[i];
            hit += mg[i];
            matched_any[i] = matched_any[i] || mp[i];
        }
        recall_sum += total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
    }
    std::size_t npred = 0, nmatched = 0;
    for (std::size_t i = 0; i < pb.size(); ++i) {
        npred += pb[i];
        nmatched += matched_any[i];
    }
    PrPoint pt;
    pt.precision = npred ? static_cast<double>(nmatched) / static_cast<double>(npred) : 1.0;
    pt.recall = recall_sum / static_cast<double>(gts.size());
    pt.f_measure = f_measure(pt.precision, pt.recall);
    return pt;
}

namespace detail {

/// Size-weighted mean over segments of `from` of their best IoU against `to`.
inline double best_iou_covering(const LabelMap& from, const LabelMap& to) {
    std::unordered_map<std::uint64_t, std::size_t> joint;
    std::unordered_map<std::uint32_t, std::size_t> size_from, size_to;
    for (std::size_t i = 0; i < from.pixels(); ++i) {
        const auto a = from.data[i], b = to.data[i];
        ++joint[(static_cast<std::uint64_t>(a) << 32) | b];
        ++size_from[a];
        ++size_to[b];
    }
    std::unordered_map<std::uint32_t, double> best;
    for (const auto& [key, inter] : joint) {
        const auto a = static_cast<std::uint32_t>(key >> 32), b = static_cast<std::uint32_t>(key & 0xffffffffu);
        const double iou = static_cast<double>(inter) / static_cast<double>(size_from[a] + size_to[b] - inter);
        auto& slot = best[a];
        slot = std::max(slot, iou);
    }
    // accumulate in label order so the sum is reproducible
    std::map<std::uint32_t, double> ordered(best.begin(), best.end());
    double total = 0.0;
    for (const auto& [a, iou] : ordered) {
        total += static_cast<double>(size_from[a]) * iou;
    }
    return total / static_cast<double>(from.pixels());
}

}

/// Symmetric best-IoU covering F: precision covers predicted segments by GT,
/// recall covers GT segments by prediction. The best annotation wins.
inline double region_f(const LabelMap& pred, std::span<const LabelMap> gts) {
    detail::check_same_dims(pred, gts);
    double best = 0.0;
    for (const auto& gt : gts) {
        const double p = detail::best_iou_covering(pred, gt);
        const double r = detail::best_iou_covering(gt, pred);
        best = std::max(best, f_measure(p, r));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Threshold sweeps

/// `levels` uniform quantiles (k / (levels - 1)) of a value set.
inline std::vector<double> quantile_levels(std::vector<double> values, std::size_t levels = 51) {
    std::vector<double> out;
    if (values.empty() || levels == 0) return out;
    std::sort(values.begin(), values.end());
    for (std::size_t k = 0; k < levels; ++k) {
        const double q = levels == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(levels - 1);
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        out.push_back(values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]));
    }
    return out;
}

/// Sweep thresholds over UCM values: uniform quantiles, except that the
/// lowest level sits just below the smallest value so the unmerged base
/// partition is part of the sweep (merges apply at ucm_value <= t).
inline std::vector<double> sweep_thresholds(std::vector<double> ucm_values, std::size_t levels = 51) {
    auto out = quantile_levels(std::move(ucm_values), levels);
    if (out.size() > 1) out.front() = std::nextafter(out.front(), -INFINITY);
    return out;
}

struct ImageSweep {
    std::vector<PrPoint> boundary;
    std::vector<double> region;
};

inline ImageSweep sweep_at(const Hierarchy& h, std::span<const LabelMap> gts, std::span<const double> thresholds,
                           std::size_t tol_px = 2) {
    ImageSweep out;
    for (double t : thresholds) {
        const auto seg = threshold_hierarchy(h, t);
        auto pt = boundary_pr(seg, gts, tol_px);
        pt.threshold = t;
        out.boundary.push_back(pt);
        out.region.push_back(region_f(seg, gts));
    }
    return out;
}

/// Area under the interpolated PR curve (precision made monotone from the
/// high-recall end), trapezoidal in recall.
inline double average_precision(std::span<const PrPoint> curve) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curve) pts.emplace_back(p.recall, p.precision);
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = pts.size(); i-- > 1;) {
        pts[i - 1].second = std::max(pts[i - 1].second, pts[i].second);
    }
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
    }
    return std::clamp(area, 0.0, 1.0);
}

struct DatasetSweep {
    std::vector<double> thresholds;
    /// mean precision / recall / F across images at each threshold
    std::vector<PrPoint> curve;
    BenchmarkSummary boundary;
    double region_ods = 0.0;
    double region_ois = 0.0;
    std::vector<ImageSweep> images;
};

/// ODS: best threshold shared by all images (mean F); OIS: mean of each
/// image's best F.
inline DatasetSweep summarize(std::vector<ImageSweep> images, std::vector<double> thresholds) {
    DatasetSweep out;
    out.thresholds = std::move(thresholds);
    out.images = std::move(images);
    const std::size_t n = out.images.size(), levels = out.thresholds.size();
    if (n == 0 || levels == 0) return out;
    std::vector<double> region_mean(levels, 0.0);
    for (std::size_t k = 0; k < levels; ++k) {
        PrPoint m;
        m.threshold = out.thresholds[k];
        double fsum = 0.0;
        for (const auto& im : out.images) {
            m.precision += im.boundary[k].precision / static_cast<double>(n);
            m.recall += im.boundary[k].recall / static_cast<double>(n);
            fsum += im.boundary[k].f_measure;
            region_mean[k] += im.region[k] / static_cast<double>(n);
        }
        m.f_measure = fsum / static_cast<double>(n);
        out.curve.push_back(m);
        if (k == 0 || m.f_measure > out.boundary.ods_f) {
            out.boundary.ods_f = m.f_measure;
            out.boundary.ods_threshold = m.threshold;
        }
    }
    out.region_ods = *std::max_element(region_mean.begin(), region_mean.end());
    for (const auto& im : out.images) {
        double bf = 0.0;
        for (const auto& p : im.boundary) bf = std::max(bf, p.f_measure);
        out.boundary.ois_f += bf / static_cast<double>(n);
        out.region_ois += *std::max_element(im.region.begin(), im.region.end()) / static_cast<double>(n);
    }
    out.boundary.average_precision = average_precision(out.curve);
    return out;
}

/// Sweep one hierarchy at `levels` thresholds over its own UCM values.
inline DatasetSweep sweep(const Hierarchy& h, std::span<const LabelMap> gts, std::size_t levels = 51,
                          std::size_t tol_px = 2) {
    auto thresholds = sweep_thresholds(h.ucm_values(), levels);
    if (thresholds.empty()) thresholds.push_back(0.0);
    std::vector<ImageSweep> images{sweep_at(h, gts, thresholds, tol_px)};
    return summarize(std::move(images), std::move(thresholds));
}

// ---------------------------------------------------------------------------
// Pixel-pair classification

struct PairAccuracy {
    double accuracy = 0.0;
    double threshold = 0.0;
    double validation_accuracy = 0.0;
};

namespace detail {

struct PixelPair {
    std::size_t p, q;
    bool same;
};

inline std::vector<PixelPair> sample_pixel_pairs(const LabelMap& gt,
                                                 const std::vector<std::vector<std::size_t>>& members,
                                                 std::size_t count, Rng& rng) {
    std::vector<PixelPair> out;
    out.reserve(count);
    const std::size_t n = gt.pixels();
    for (std::size_t k = 0; k < count; ++k) {
        const bool same = k % 2 == 0;
        const std::size_t p = rng.below(n);
        const auto& seg = members[gt.data[p]];
        std::size_t q = p;
        if (same) {
            if (seg.size() > 1) {
                do {
                    q = seg[rng.below(seg.size())];
                } while (q == p);
            }
        } else {
            do {
                q = rng.below(n);
            } while (gt.data[q] == gt.data[p]);
        }
        out.push_back({p, q, same});
    }
    return out;
}

}

/**
 * Decide "same segment" iff the Euclidean distance between the two pixels'
 * representations is below a threshold chosen on a validation draw (256
 * distance quantiles); report accuracy on an independent test draw. Both draws
 * are balanced between same- and different-segment pairs.
 */
inline PairAccuracy pixel_pair_accuracy(const RepTensor& reps, const LabelMap& gt, std::size_t n_pairs,
                                        std::uint64_t seed) {
    if (reps.empty() || gt.empty()) {
        throw Error(Errc::InvalidShape, "empty input to pixel_pair_accuracy");
    }
    if (reps.height > gt.height || reps.width > gt.width) {
        throw Error(Errc::DimMismatch, "representation larger than ground truth");
    }
    const auto compact = relabel_contiguous(gt).map;
    const std::size_t k = label_count(compact);
    if (k < 2) {
        throw Error(Errc::SingleSegmentImage, "pixel pairs need at least two segments");
    }
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < compact.pixels(); ++i) members[compact.data[i]].push_back(i);

    auto distance = [&](std::size_t p, std::size_t q) {
        const auto rp = reps.pixel(map_pixel(p, gt.height, gt.width, reps.height, reps.width));
        const auto rq = reps.pixel(map_pixel(q, gt.height, gt.width, reps.height, reps.width));
        return l2_distance(rp, rq);
    };
    Rng rng(seed);
    const auto validation = detail::sample_pixel_pairs(compact, members, n_pairs, rng);
    const auto test = detail::sample_pixel_pairs(compact, members, n_pairs, rng);

    std::vector<double> vd;
    for (const auto& pp : validation) vd.push_back(distance(pp.p, pp.q));
    const auto candidates = quantile_levels(vd, 256);
    auto accuracy = [&](const std::vector<detail::PixelPair>& pairs, const std::vector<double>& d, double thr) {
        std::size_t right = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) right += (d[i] < thr) == pairs[i].same;
        return static_cast<double>(right) / static_cast<double>(pairs.size());
    };
    PairAccuracy out;
    out.validation_accuracy = -1.0;
    for (double thr : candidates) {
        const double acc = accuracy(validation, vd, thr);
        if (acc > out.validation_accuracy) {
            out.validation_accuracy = acc;
            out.threshold = thr;
        }
    }
    std::vector<double> td;
    for (const auto& pp : test) td.push_back(distance(pp.p, pp.q));
    out.accuracy = accuracy(test, td, out.threshold);
    return out;
}

}

#endif
