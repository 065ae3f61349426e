#ifndef BRRF_REP_PREP_HPP
#define BRRF_REP_PREP_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "brrf/error.hpp"
#include "brrf/random.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

/// Knobs for representation preparation. Defaults follow the reference
/// pipeline: 9 PCA dims fitted after upsampling, iForest filtering, 300-sample cap.
struct PrepConfig {
    std::size_t pca_dim = 9;
    bool fit_pca_after_upsample = true;
    bool enable_filter = true;
    double contamination = 0.1;
    std::size_t trees = 100;
    std::size_t subsample = 256;
    std::size_t sample_cap = 300;
};

// ---------------------------------------------------------------------------
// Upsampling

/// Bilinear resize with half-pixel centers (align_corners = false).
inline RepTensor upsample_bilinear(const RepTensor& r, std::size_t target_h, std::size_t target_w) {
    if (r.empty()) {
        throw Error(Errc::InvalidShape, "cannot upsample an empty tensor");
    }
    if (target_h < r.height || target_w < r.width) {
        throw Error(Errc::ShrinkRequested, "target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                                               " is smaller than source " + std::to_string(r.height) + "x" +
                                               std::to_string(r.width));
    }
    if (target_h == r.height && target_w == r.width) {
        return r;
    }
    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t src, std::size_t dst) {
        std::vector<Tap> out(dst);
        const double scale = static_cast<double>(src) / static_cast<double>(dst);
        for (std::size_t i = 0; i < dst; ++i) {
            double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(src - 1));
            const auto lo = static_cast<std::size_t>(std::floor(s));
            const std::size_t hi = std::min(lo + 1, src - 1);
            out[i] = {lo, hi, s - static_cast<double>(lo)};
        }
        return out;
    };
    const auto ty = taps(r.height, target_h);
    const auto tx = taps(r.width, target_w);
    RepTensor out(target_h, target_w, r.channels);
    for (std::size_t y = 0; y < target_h; ++y) {
        for (std::size_t x = 0; x < target_w; ++x) {
            const auto& [y0, y1, fy] = ty[y];
            const auto& [x0, x1, fx] = tx[x];
            for (std::size_t c = 0; c < r.channels; ++c) {
                const double top = (1 - fx) * r.at(y0, x0, c) + fx * r.at(y0, x1, c);
                const double bottom = (1 - fx) * r.at(y1, x0, c) + fx * r.at(y1, x1, c);
                out.at(y, x, c) = static_cast<float>((1 - fy) * top + fy * bottom);
            }
        }
    }
    return out;
}

/// Working resolution of the merge engine: half the image, rounded up.
inline std::pair<std::size_t, std::size_t> half_resolution(std::size_t height, std::size_t width) {
    return {(height + 1) / 2, (width + 1) / 2};
}

/// Nearest-neighbor lookup of an image pixel in a (possibly coarser) tensor.
inline std::size_t map_pixel(std::size_t index, std::size_t image_h, std::size_t image_w, std::size_t grid_h,
                             std::size_t grid_w) {
    const std::size_t y = index / image_w, x = index % image_w;
    const auto gy = std::min(grid_h - 1, (2 * y + 1) * grid_h / (2 * image_h));
    const auto gx = std::min(grid_w - 1, (2 * x + 1) * grid_w / (2 * image_w));
    return gy * grid_w + gx;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
    std::vector<double> mean;
    /// out_dim rows of length N, row-major, orthonormal
    std::vector<double> basis;
    std::vector<double> explained_variance;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    /// all input vectors were identical
    bool degenerate = false;

    std::span<const double> row(std::size_t i) const { return {basis.data() + i * input_dim, input_dim}; }
};

/**
 * Per-image PCA over the pixel cloud of r. Uses the population covariance so
 * the mean squared reconstruction error equals the sum of the discarded
 * eigenvalues. When N < out_dim the model keeps N components.
 */
inline PcaModel fit_pca(const RepTensor& r, std::size_t out_dim = 9) {
    const std::size_t n = r.pixels(), dim = r.channels;
    if (dim == 0 || n == 0) {
        throw Error(Errc::InvalidShape, "fit_pca on empty tensor");
    }
    if (out_dim == 0) {
        throw Error(Errc::InvalidArgument, "out_dim must be positive");
    }
    if (n < out_dim) {
        throw Error(Errc::InvalidShape, "fit_pca needs at least out_dim pixels");
    }
    const std::size_t k = std::min(out_dim, dim);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i) {
        const auto px = r.pixel(i);
        for (std::size_t c = 0; c < dim; ++c) {
            mean[static_cast<Eigen::Index>(c)] += px[c];
        }
    }
    mean /= static_cast<double>(n);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd centered(static_cast<Eigen::Index>(dim));
    bool all_equal = true;
    const auto first = r.pixel(0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto px = r.pixel(i);
        for (std::size_t c = 0; c < dim; ++c) {
            centered[static_cast<Eigen::Index>(c)] = px[c] - mean[static_cast<Eigen::Index>(c)];
            all_equal = all_equal && px[c] == first[c];
        }
        cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
    }
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(n);

    PcaModel model;
    model.input_dim = dim;
    model.output_dim = k;
    model.mean.assign(mean.data(), mean.data() + dim);
    model.basis.assign(k * dim, 0.0);
    model.explained_variance.assign(k, 0.0);

    if (all_equal) {
        model.degenerate = true;
        for (std::size_t i = 0; i < k; ++i) {
            model.basis[i * dim + i] = 1.0;
        }
        return model;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const auto& values = solver.eigenvalues();
    const auto& vectors = solver.eigenvectors();
    const double top = std::max(values[static_cast<Eigen::Index>(dim - 1)], 0.0);
    const double cutoff = top * 1e-10;
    for (std::size_t i = 0; i < k; ++i) {
        const auto col = static_cast<Eigen::Index>(dim - 1 - i);
        const double v = values[col];
        model.explained_variance[i] = v > cutoff ? v : 0.0;
        // Fix the sign so the largest-magnitude coordinate is positive.
        Eigen::Index arg = 0;
        vectors.col(col).cwiseAbs().maxCoeff(&arg);
        const double sign = vectors(arg, col) < 0 ? -1.0 : 1.0;
        for (std::size_t c = 0; c < dim; ++c) {
            model.basis[i * dim + c] = sign * vectors(static_cast<Eigen::Index>(c), col);
        }
    }
    return model;
}

/// Row-wise (x - mean) . basis^T.
inline RepTensor project(const RepTensor& r, const PcaModel& m) {
    if (r.channels != m.input_dim) {
        throw Error(Errc::DimMismatch, "tensor dim " + std::to_string(r.channels) + " != model dim " +
                                           std::to_string(m.input_dim));
    }
    RepTensor out(r.height, r.width, m.output_dim);
    std::vector<double> centered(m.input_dim);
    for (std::size_t i = 0; i < r.pixels(); ++i) {
        const auto px = r.pixel(i);
        for (std::size_t c = 0; c < m.input_dim; ++c) {
            centered[c] = px[c] - m.mean[c];
        }
        for (std::size_t j = 0; j < m.output_dim; ++j) {
            const auto row = m.row(j);
            double acc = 0.0;
            for (std::size_t c = 0; c < m.input_dim; ++c) {
                acc += centered[c] * row[c];
            }
            out.data[i * m.output_dim + j] = static_cast<float>(acc);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Isolation forest

namespace iforest {

/// Average unsuccessful-search path length in a BST of n nodes.
inline double average_path(std::size_t n) {
    if (n <= 1) return 0.0;
    if (n == 2) return 1.0;
    constexpr double euler_gamma = 0.5772156649015329;
    const double m = static_cast<double>(n - 1);
    return 2.0 * (std::log(m) + euler_gamma) - 2.0 * m / static_cast<double>(n);
}

struct Node {
    std::size_t feature = 0;
    double split = 0.0;
    std::int32_t left = -1, right = -1;
    std::size_t size = 0;
    bool leaf() const { return left < 0; }
};

/// A point set viewed as n rows of dim floats.
struct PointView {
    std::span<const float> data;
    std::size_t dim;
    std::size_t size() const { return dim ? data.size() / dim : 0; }
    float at(std::size_t i, std::size_t c) const { return data[i * dim + c]; }
};

class Tree {
public:
    Tree(const PointView& pts, std::vector<std::size_t> rows, std::size_t height_limit, Rng& rng) {
        nodes_.reserve(2 * rows.size());
        build(pts, rows.data(), rows.data() + rows.size(), 0, height_limit, rng);
    }

    double path_length(const PointView& pts, std::size_t row) const {
        std::size_t depth = 0;
        std::int32_t at = 0;
        while (!nodes_[at].leaf()) {
            const auto& n = nodes_[at];
            at = pts.at(row, n.feature) < n.split ? n.left : n.right;
            ++depth;
        }
        return static_cast<double>(depth) + average_path(nodes_[at].size);
    }

private:
    std::int32_t build(const PointView& pts, std::size_t* first, std::size_t* last, std::size_t depth,
                       std::size_t limit, Rng& rng) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back({});
        nodes_[id].size = static_cast<std::size_t>(last - first);
        if (depth >= limit || last - first <= 1) {
            return id;
        }
        // choose among attributes that still vary inside this node
        varying_.clear();
        range_.resize(pts.dim);
        for (std::size_t c = 0; c < pts.dim; ++c) {
            float lo = pts.at(*first, c), hi = lo;
            for (auto* r = first; r != last; ++r) {
                lo = std::min(lo, pts.at(*r, c));
                hi = std::max(hi, pts.at(*r, c));
            }
            range_[c] = {lo, hi};
            if (lo < hi) {
                varying_.push_back(c);
            }
        }
        if (varying_.empty()) {
            return id;
        }
        const std::size_t feature = varying_[rng.below(varying_.size())];
        const auto [lo, hi] = range_[feature];
        double split = rng.uniform(lo, hi);
        if (split <= lo) {
            split = std::nextafter(static_cast<double>(lo), static_cast<double>(hi));
        }
        auto* mid = std::partition(first, last, [&](std::size_t r) { return pts.at(r, feature) < split; });
        const auto l = build(pts, first, mid, depth + 1, limit, rng);
        const auto rr = build(pts, mid, last, depth + 1, limit, rng);
        nodes_[id].feature = feature;
        nodes_[id].split = split;
        nodes_[id].left = l;
        nodes_[id].right = rr;
        return id;
    }

    std::vector<std::size_t> varying_;
    std::vector<std::pair<float, float>> range_;
    std::vector<Node> nodes_;
};

}

/// Anomaly score s(x) = 2^(-E[h(x)] / c(psi)) for every point.
inline std::vector<double> isolation_forest_scores(std::span<const float> points, std::size_t dim,
                                                   std::size_t trees, std::size_t subsample,
                                                   std::uint64_t seed) {
    const iforest::PointView pts{points, dim};
    const std::size_t n = pts.size();
    const std::size_t psi = std::min(subsample, n);
    const auto limit = static_cast<std::size_t>(std::ceil(std::log2(std::max<std::size_t>(psi, 2))));
    std::vector<double> total(n, 0.0);
    Rng rng(seed);
    for (std::size_t t = 0; t < trees; ++t) {
        auto rows = rng.sample_without_replacement(n, psi);
        const iforest::Tree tree(pts, std::move(rows), limit, rng);
        for (std::size_t i = 0; i < n; ++i) {
            total[i] += tree.path_length(pts, i);
        }
    }
    const double norm = iforest::average_path(psi);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double mean_h = total[i] / static_cast<double>(std::max<std::size_t>(trees, 1));
        scores[i] = norm > 0 ? std::exp2(-mean_h / norm) : 0.5;
    }
    return scores;
}

struct FilterResult {
    /// retained positions into the input, ascending
    std::vector<std::size_t> kept;
    /// fewer than 4 points: filtering skipped
    bool too_few_points = false;
};

/**
 * Drops the floor(contamination * n) points with the highest isolation-forest
 * anomaly score; on equal scores the lower index is kept.
 */
inline FilterResult isolation_forest_filter(std::span<const float> points, std::size_t dim,
                                            double contamination = 0.1, std::size_t trees = 100,
                                            std::size_t subsample = 256, std::uint64_t seed = 0) {
    if (dim == 0 || points.size() % dim != 0) {
        throw Error(Errc::DimMismatch, "point buffer is not a whole number of vectors");
    }
    if (contamination < 0.0 || contamination >= 1.0) {
        throw Error(Errc::InvalidArgument, "contamination must be in [0,1)");
    }
    const std::size_t n = points.size() / dim;
    FilterResult result;
    result.kept.resize(n);
    std::iota(result.kept.begin(), result.kept.end(), std::size_t{0});
    if (n < 4) {
        result.too_few_points = true;
        return result;
    }
    const auto drop = static_cast<std::size_t>(std::floor(contamination * static_cast<double>(n)));
    if (drop == 0) {
        return result;
    }
    const auto scores = isolation_forest_scores(points, dim, trees, subsample, seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // most anomalous first; among equals the higher index goes first
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a > b;
    });
    std::vector<char> dropped(n, 0);
    for (std::size_t i = 0; i < drop; ++i) {
        dropped[order[i]] = 1;
    }
    result.kept.clear();
    for (std::size_t i = 0; i < n; ++i) {
        if (!dropped[i]) {
            result.kept.push_back(i);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Segment samples

struct SegmentRepSample {
    std::uint32_t segment = 0;
    /// image pixel indices the retained reps were taken from
    std::vector<std::uint32_t> kept_indices;
    /// |kept_indices| vectors of length dim, row-major
    std::vector<float> reps;
    std::size_t dim = 0;

    std::size_t size() const { return kept_indices.size(); }
    std::span<const float> rep(std::size_t i) const { return {reps.data() + i * dim, dim}; }
};

/// Seeded uniform subsample without replacement of at most cap positions;
/// returned positions are ascending.
inline std::vector<std::size_t> sample_positions(std::size_t n, std::size_t cap, std::uint64_t seed) {
    std::vector<std::size_t> pick;
    if (n <= cap) {
        pick.resize(n);
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        return pick;
    }
    Rng rng(seed);
    pick = rng.sample_without_replacement(n, cap);
    std::sort(pick.begin(), pick.end());
    return pick;
}

/// Caps a sample to cap entries (uniform, seeded).
inline SegmentRepSample sample_segment(const SegmentRepSample& in, std::size_t cap = 300, std::uint64_t seed = 0) {
    if (in.size() <= cap) {
        return in;
    }
    SegmentRepSample out;
    out.segment = in.segment;
    out.dim = in.dim;
    for (auto i : sample_positions(in.size(), cap, seed)) {
        out.kept_indices.push_back(in.kept_indices[i]);
        const auto r = in.rep(i);
        out.reps.insert(out.reps.end(), r.begin(), r.end());
    }
    return out;
}

/**
 * Builds the representation sample of one segment: look up each pixel in the
 * (half-resolution) tensor, drop iForest outliers, then cap the count.
 */
inline SegmentRepSample prepare_segment_sample(std::uint32_t segment, std::span<const std::uint32_t> pixels,
                                               const RepTensor& reps, std::size_t image_h, std::size_t image_w,
                                               const PrepConfig& cfg, std::uint64_t seed) {
    SegmentRepSample all;
    all.segment = segment;
    all.dim = reps.channels;
    all.kept_indices.assign(pixels.begin(), pixels.end());
    all.reps.reserve(pixels.size() * reps.channels);
    for (auto p : pixels) {
        const auto px = reps.pixel(map_pixel(p, image_h, image_w, reps.height, reps.width));
        all.reps.insert(all.reps.end(), px.begin(), px.end());
    }
    SegmentRepSample filtered;
    if (cfg.enable_filter && all.size() >= 4) {
        const auto kept = isolation_forest_filter(all.reps, all.dim, cfg.contamination, cfg.trees, cfg.subsample,
                                                  mix_seed(seed, 1));
        filtered.segment = segment;
        filtered.dim = all.dim;
        for (auto i : kept.kept) {
            filtered.kept_indices.push_back(all.kept_indices[i]);
            const auto r = all.rep(i);
            filtered.reps.insert(filtered.reps.end(), r.begin(), r.end());
        }
    } else {
        filtered = std::move(all);
    }
    return sample_segment(filtered, cfg.sample_cap, mix_seed(seed, 2));
}

/// Upsample to half resolution and reduce to cfg.pca_dim dims with a per-image PCA.
struct PreparedReps {
    RepTensor reps;
    PcaModel pca;
};

inline PreparedReps prepare_representation(const RepTensor& raw, std::size_t image_h, std::size_t image_w,
                                           const PrepConfig& cfg = {}) {
    const auto [hh, hw] = half_resolution(image_h, image_w);
    PreparedReps out;
    if (cfg.fit_pca_after_upsample) {
        const auto up = upsample_bilinear(raw, hh, hw);
        out.pca = fit_pca(up, cfg.pca_dim);
        out.reps = project(up, out.pca);
    } else {
        out.pca = fit_pca(raw, cfg.pca_dim);
        out.reps = upsample_bilinear(project(raw, out.pca), hh, hw);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Visualization

struct VirtualColors {
    RasterF32 image;
    bool degenerate = false;
};

/// Projects every pixel on the top three principal directions and min-max
/// normalizes each channel to [0,1]. Flat channels render mid-gray.
inline VirtualColors virtual_colors(const RepTensor& r) {
    if (r.pixels() < 3) {
        throw Error(Errc::DegenerateInput, "virtual colors need at least 3 pixels");
    }
    const auto model = fit_pca(r, 3);
    const auto proj = project(r, model);
    VirtualColors out{RasterF32(r.height, r.width, 3, 0.5f), model.degenerate};
    if (model.degenerate) {
        return out;
    }
    for (std::size_t c = 0; c < proj.channels; ++c) {
        float lo = proj.data[c], hi = lo;
        for (std::size_t i = 0; i < proj.pixels(); ++i) {
            lo = std::min(lo, proj.data[i * proj.channels + c]);
            hi = std::max(hi, proj.data[i * proj.channels + c]);
        }
        if (!(hi > lo)) {
            continue;
        }
        for (std::size_t i = 0; i < proj.pixels(); ++i) {
            const float v = (proj.data[i * proj.channels + c] - lo) / (hi - lo);
            out.image.data[i * 3 + c] = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return out;
}

}

#endif
