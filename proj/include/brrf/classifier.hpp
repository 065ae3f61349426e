#ifndef BRRF_CLASSIFIER_HPP
#define BRRF_CLASSIFIER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "brrf/error.hpp"
#include "brrf/hierarchy.hpp"
#include "brrf/random.hpp"
#include "brrf/seggraph.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

enum class PairLabel : std::uint8_t { Merge = 0, NoMerge = 1 };

struct PairExample {
    PairFeatures features;
    PairLabel label = PairLabel::Merge;
    std::string image_id;
    /// UCM threshold the pair was harvested at
    double level = 0.0;
};

// ---------------------------------------------------------------------------
// Labeling rule

/// Chessboard (Chebyshev) distance from every pixel to the nearest pixel that
/// has a 4-neighbor with a different label. Without any boundary every entry is
/// UINT32_MAX.
inline std::vector<std::uint32_t> boundary_distance(const LabelMap& gt) {
    const std::size_t h = gt.height, w = gt.width;
    constexpr std::uint32_t far = UINT32_MAX;
    std::vector<std::uint32_t> dist(gt.pixels(), far);
    detail::for_each_adjacent_pair(h, w, [&](std::size_t p, std::size_t q) {
        if (gt.data[p] != gt.data[q]) dist[p] = dist[q] = 0;
    });
    auto relax = [&](std::size_t p, std::size_t q) {
        if (dist[q] != far && dist[q] + 1 < dist[p]) dist[p] = dist[q] + 1;
    };
    // two-pass 8-neighbor chamfer with unit weights is exact for the chessboard metric
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t p = y * w + x;
            if (x > 0) relax(p, p - 1);
            if (y > 0) {
                relax(p, p - w);
                if (x > 0) relax(p, p - w - 1);
                if (x + 1 < w) relax(p, p - w + 1);
            }
        }
    }
    for (std::size_t y = h; y-- > 0;) {
        for (std::size_t x = w; x-- > 0;) {
            const std::size_t p = y * w + x;
            if (x + 1 < w) relax(p, p + 1);
            if (y + 1 < h) {
                relax(p, p + w);
                if (x + 1 < w) relax(p, p + w + 1);
                if (x > 0) relax(p, p + w - 1);
            }
        }
    }
    return dist;
}

/// Fraction of the shared-boundary pixel pairs with at least one pixel
/// within tol_px of the annotation's boundary.
inline double near_boundary_fraction(std::span<const std::pair<std::uint32_t, std::uint32_t>> pixel_pairs,
                                     std::span<const std::uint32_t> distance, std::uint32_t tol_px = 2) {
    if (pixel_pairs.empty()) return 0.0;
    std::size_t near = 0;
    for (const auto& [p, q] : pixel_pairs) {
        if (std::min(distance[p], distance[q]) <= tol_px) ++near;
    }
    return static_cast<double>(near) / static_cast<double>(pixel_pairs.size());
}

/// Negative (no-merge) iff, for at least one annotation, at least
/// neg_fraction of the shared boundary is within tol_px of its boundary.
inline PairLabel label_pair(std::span<const std::pair<std::uint32_t, std::uint32_t>> pixel_pairs,
                            std::span<const std::vector<std::uint32_t>> gt_distances, double neg_fraction = 0.6,
                            std::uint32_t tol_px = 2) {
    for (const auto& d : gt_distances) {
        if (near_boundary_fraction(pixel_pairs, d, tol_px) >= neg_fraction) {
            return PairLabel::NoMerge;
        }
    }
    return PairLabel::Merge;
}

/// Per-image inputs of the segment graph besides the partition itself.
struct ImageInputs {
    EdgeMap edges;
    LabImage lab;
    /// prepared (upsampled + projected) representation
    RepTensor reps;
};

/// count interior quantiles (k+1)/(count+1) of the hierarchy's UCM values.
inline std::vector<double> harvest_levels(const Hierarchy& h, std::size_t count = 8) {
    auto values = h.ucm_values();
    std::vector<double> out;
    if (values.empty()) return out;
    std::sort(values.begin(), values.end());
    for (std::size_t k = 0; k < count; ++k) {
        const double q = static_cast<double>(k + 1) / static_cast<double>(count + 1);
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        out.push_back(values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]));
    }
    return out;
}

struct HarvestConfig {
    double neg_fraction = 0.6;
    std::uint32_t tol_px = 2;
    std::size_t levels = 8;
};

/**
 * Thresholds the hierarchy at each level and emits one labeled example per
 * adjacent segment pair of each resulting segmentation.
 */
inline std::vector<PairExample> harvest_pairs(const Hierarchy& h, const ImageInputs& inputs,
                                              std::span<const LabelMap> gts, std::span<const double> levels,
                                              const GraphConfig& graph_cfg, const std::string& image_id = "",
                                              const HarvestConfig& cfg = {}) {
    if (h.merges.empty()) {
        throw Error(Errc::EmptyHierarchy, "hierarchy has no merges to threshold");
    }
    std::vector<std::vector<std::uint32_t>> distances;
    for (const auto& gt : gts) {
        if (!gt.same_shape(h.base)) {
            throw Error(Errc::DimMismatch, "ground truth and hierarchy differ in size");
        }
        distances.push_back(boundary_distance(gt));
    }
    std::vector<PairExample> out;
    for (double level : levels) {
        const auto seg = threshold_hierarchy(h, level);
        const auto g = SegmentGraph::build(seg, inputs.edges, inputs.lab, inputs.reps, graph_cfg);
        for (const auto& [a, b] : g.adjacent_pairs()) {
            PairExample ex;
            ex.features = pair_features(g, a, b);
            ex.label = label_pair(g.boundary(a, b).pixel_pairs, distances, cfg.neg_fraction, cfg.tol_px);
            ex.image_id = image_id;
            ex.level = level;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model

enum class ModelKind { LR, MLP };

inline std::string kind_name(ModelKind k) { return k == ModelKind::LR ? "lr" : "mlp"; }

inline ModelKind parse_kind(const std::string& s) {
    if (s == "lr") return ModelKind::LR;
    if (s == "mlp") return ModelKind::MLP;
    throw Error(Errc::InvalidArgument, "unknown model kind '" + s + "'");
}

using FeatureVector = std::array<double, feature_count>;

struct Normalization {
    FeatureVector mean{};
    FeatureVector std{};
    /// zero-variance features in the training set are ignored at inference
    std::array<bool, feature_count> active{};

    FeatureVector apply(const FeatureVector& x) const {
        FeatureVector z{};
        for (std::size_t i = 0; i < feature_count; ++i) {
            z[i] = active[i] ? (x[i] - mean[i]) / std[i] : 0.0;
        }
        return z;
    }

    static Normalization identity() {
        Normalization n;
        n.std.fill(1.0);
        n.active.fill(true);
        return n;
    }

    bool operator==(const Normalization&) const = default;
};

struct DissimModel {
    ModelKind kind = ModelKind::LR;
    Normalization norm = Normalization::identity();
    // LR
    FeatureVector weights{};
    double bias = 0.0;
    // MLP [17, hidden, 1]
    std::size_t hidden = 0;
    /// hidden x 17, row-major
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    bool operator==(const DissimModel&) const = default;
};

inline double sigmoid(double z) {
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Keeps probabilities strictly inside (0,1).
inline double open_unit(double p) { return std::clamp(p, 1e-15, 1.0 - 1e-15); }

namespace detail {

inline double logit_lr(const DissimModel& m, const FeatureVector& z) {
    double s = m.bias;
    for (std::size_t i = 0; i < feature_count; ++i) s += m.weights[i] * z[i];
    return s;
}

inline double logit_mlp(const DissimModel& m, const FeatureVector& z, std::vector<double>* hidden_out = nullptr) {
    double out = m.b2;
    if (hidden_out) hidden_out->assign(m.hidden, 0.0);
    for (std::size_t j = 0; j < m.hidden; ++j) {
        double a = m.b1[j];
        for (std::size_t i = 0; i < feature_count; ++i) a += m.w1[j * feature_count + i] * z[i];
        a = std::max(a, 0.0);
        if (hidden_out) (*hidden_out)[j] = a;
        out += m.w2[j] * a;
    }
    return out;
}

}

/// False when every weight on the representation features is zero, so
/// pair_dissim does not depend on them.
inline bool uses_rep_features(const DissimModel& m) {
    for (std::size_t i = 0; i < rep_feature_count; ++i) {
        if (m.kind == ModelKind::LR && m.weights[i] != 0.0) return true;
        for (std::size_t j = 0; m.kind == ModelKind::MLP && j < m.hidden; ++j) {
            if (m.w1[j * feature_count + i] != 0.0) return true;
        }
    }
    return false;
}

/// Probability that the pair should not merge.
inline double pair_dissim(const DissimModel& m, const PairFeatures& f) {
    const auto z = m.norm.apply(f.values);
    return open_unit(sigmoid(m.kind == ModelKind::LR ? detail::logit_lr(m, z) : detail::logit_mlp(m, z)));
}

/// Logistic model on edge_mean alone: sigmoid(weight * (edge_mean - 0.5)).
/// Used to build bootstrap hierarchies before a trained model exists.
inline DissimModel edge_only_model(double weight = 10.0) {
    DissimModel m;
    m.weights[static_cast<std::size_t>(Feature::EdgeMean)] = weight;
    m.bias = -0.5 * weight;
    return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainHyper {
    double l2 = 1e-4;
    double grad_tol = 1e-6;
    std::size_t max_iters = 10000;
    std::size_t hidden = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    double holdout = 0.1;
};

namespace detail {

struct Prepared {
    std::vector<FeatureVector> z;
    std::vector<double> y;
    std::vector<double> weight;
};

inline Normalization fit_normalization(std::span<const PairExample> examples) {
    Normalization n;
    const double count = static_cast<double>(examples.size());
    for (std::size_t i = 0; i < feature_count; ++i) {
        double sum = 0.0;
        for (const auto& e : examples) sum += e.features.values[i];
        const double mean = sum / count;
        double var = 0.0;
        for (const auto& e : examples) {
            const double d = e.features.values[i] - mean;
            var += d * d;
        }
        var /= count;
        n.mean[i] = mean;
        const double sd = std::sqrt(var);
        const bool varies = sd > 1e-12 * std::max(1.0, std::abs(mean));
        n.std[i] = varies ? sd : 1.0;
        n.active[i] = varies;
    }
    return n;
}

/// Inverse class frequency weights so both classes carry equal total weight.
inline Prepared prepare(std::span<const PairExample> examples, const Normalization& norm) {
    Prepared p;
    std::size_t pos = 0;
    for (const auto& e : examples) pos += e.label == PairLabel::NoMerge;
    const std::size_t neg = examples.size() - pos;
    const double n = static_cast<double>(examples.size());
    for (const auto& e : examples) {
        p.z.push_back(norm.apply(e.features.values));
        const bool y = e.label == PairLabel::NoMerge;
        p.y.push_back(y ? 1.0 : 0.0);
        p.weight.push_back(n / (2.0 * static_cast<double>(y ? pos : neg)));
    }
    return p;
}

inline double lr_objective(const Prepared& d, const FeatureVector& w, double b, double l2, FeatureVector* gw,
                           double* gb) {
    double loss = 0.0, wsum = 0.0;
    if (gw) gw->fill(0.0);
    if (gb) *gb = 0.0;
    for (std::size_t k = 0; k < d.z.size(); ++k) {
        double s = b;
        for (std::size_t i = 0; i < feature_count; ++i) s += w[i] * d.z[k][i];
        // log(1 + e^s) - y s, computed stably
        const double softplus = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
        loss += d.weight[k] * (softplus - d.y[k] * s);
        wsum += d.weight[k];
        if (gw) {
            const double r = d.weight[k] * (sigmoid(s) - d.y[k]);
            for (std::size_t i = 0; i < feature_count; ++i) (*gw)[i] += r * d.z[k][i];
            *gb += r;
        }
    }
    double reg = 0.0;
    for (std::size_t i = 0; i < feature_count; ++i) reg += w[i] * w[i];
    if (gw) {
        for (std::size_t i = 0; i < feature_count; ++i) (*gw)[i] = (*gw)[i] / wsum + l2 * w[i];
        *gb /= wsum;
    }
    return loss / wsum + 0.5 * l2 * reg;
}

inline void train_lr(DissimModel& m, const Prepared& d, const TrainHyper& hp) {
    FeatureVector w{}, gw{}, trial{};
    double b = 0.0, gb = 0.0;
    double step = 1.0;
    double loss = lr_objective(d, w, b, hp.l2, &gw, &gb);
    for (std::size_t it = 0; it < hp.max_iters; ++it) {
        double gnorm2 = gb * gb;
        for (double g : gw) gnorm2 += g * g;
        if (std::sqrt(gnorm2) < hp.grad_tol) break;
        // Armijo backtracking along the negative gradient
        double next = loss;
        double trial_b = b;
        for (int tries = 0; tries < 60; ++tries) {
            for (std::size_t i = 0; i < feature_count; ++i) trial[i] = w[i] - step * gw[i];
            trial_b = b - step * gb;
            next = lr_objective(d, trial, trial_b, hp.l2, nullptr, nullptr);
            if (next <= loss - 0.5 * step * gnorm2) break;
            step *= 0.5;
        }
        if (!(next < loss)) break;
        w = trial;
        b = trial_b;
        loss = lr_objective(d, w, b, hp.l2, &gw, &gb);
        step = std::min(step * 2.0, 1024.0);
    }
    m.weights = w;
    m.bias = b;
}

inline void train_mlp(DissimModel& m, const Prepared& all, const TrainHyper& hp, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = all.z.size();
    const std::size_t hidden = hp.hidden;
    m.hidden = hidden;
    m.w1.assign(hidden * feature_count, 0.0);
    m.b1.assign(hidden, 0.0);
    m.w2.assign(hidden, 0.0);
    m.b2 = 0.0;
    const double r1 = std::sqrt(6.0 / static_cast<double>(feature_count));
    const double r2 = std::sqrt(6.0 / static_cast<double>(hidden));
    for (auto& v : m.w1) v = rng.uniform(-r1, r1);
    for (auto& v : m.w2) v = rng.uniform(-r2, r2);
    for (std::size_t j = 0; j < hidden; ++j) {
        for (std::size_t i = 0; i < feature_count; ++i) {
            if (!m.norm.active[i]) m.w1[j * feature_count + i] = 0.0;
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto held = n >= 10 ? std::max<std::size_t>(1, static_cast<std::size_t>(hp.holdout * n)) : 0;
    const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());

    auto val_loss = [&](const DissimModel& model) {
        double loss = 0.0, ws = 0.0;
        for (auto k : val) {
            const double p = open_unit(sigmoid(logit_mlp(model, all.z[k])));
            loss -= all.weight[k] * (all.y[k] * std::log(p) + (1 - all.y[k]) * std::log(1 - p));
            ws += all.weight[k];
        }
        return ws > 0 ? loss / ws : 0.0;
    };

    std::vector<double> vw1(m.w1.size(), 0.0), vb1(hidden, 0.0), vw2(hidden, 0.0);
    double vb2 = 0.0;
    std::vector<double> gw1(m.w1.size()), gb1(hidden), gw2(hidden), act;
    DissimModel best = m;
    double best_loss = held ? val_loss(m) : INFINITY;
    std::size_t stale = 0;
    for (std::size_t epoch = 0; epoch < hp.max_epochs; ++epoch) {
        for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[rng.below(i)]);
        for (std::size_t start = 0; start < train.size(); start += hp.batch) {
            const std::size_t end = std::min(train.size(), start + hp.batch);
            std::fill(gw1.begin(), gw1.end(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            std::fill(gw2.begin(), gw2.end(), 0.0);
            double gb2 = 0.0;
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t t = start; t < end; ++t) {
                const auto k = train[t];
                const double out = logit_mlp(m, all.z[k], &act);
                const double r = all.weight[k] * (sigmoid(out) - all.y[k]) * scale;
                gb2 += r;
                for (std::size_t j = 0; j < hidden; ++j) {
                    gw2[j] += r * act[j];
                    if (act[j] <= 0.0) continue;
                    const double back = r * m.w2[j];
                    gb1[j] += back;
                    for (std::size_t i = 0; i < feature_count; ++i) gw1[j * feature_count + i] += back * all.z[k][i];
                }
            }
            for (std::size_t q = 0; q < m.w1.size(); ++q) {
                vw1[q] = hp.momentum * vw1[q] - hp.learning_rate * (gw1[q] + hp.l2 * m.w1[q]);
                m.w1[q] += vw1[q];
            }
            for (std::size_t j = 0; j < hidden; ++j) {
                vb1[j] = hp.momentum * vb1[j] - hp.learning_rate * gb1[j];
                m.b1[j] += vb1[j];
                vw2[j] = hp.momentum * vw2[j] - hp.learning_rate * (gw2[j] + hp.l2 * m.w2[j]);
                m.w2[j] += vw2[j];
            }
            vb2 = hp.momentum * vb2 - hp.learning_rate * gb2;
            m.b2 += vb2;
        }
        if (held) {
            const double loss = val_loss(m);
            if (loss < best_loss) {
                best_loss = loss;
                best = m;
                stale = 0;
            } else if (++stale >= hp.patience) {
                break;
            }
        }
    }
    if (held) m = best;
}

}

/// Trains a dissimilarity model on z-scored features with class-balancing
/// weights. LR uses batch gradient descent with L2 penalty; MLP uses seeded
/// minibatch SGD with early stopping on a held-out split.
inline DissimModel train(std::span<const PairExample> examples, ModelKind kind, std::uint64_t seed = 0,
                         const TrainHyper& hp = {}) {
    std::size_t pos = 0;
    for (const auto& e : examples) pos += e.label == PairLabel::NoMerge;
    if (examples.empty() || pos == 0 || pos == examples.size()) {
        throw Error(Errc::SingleClass, "training needs both merge and no-merge examples");
    }
    DissimModel m;
    m.kind = kind;
    m.norm = detail::fit_normalization(examples);
    const auto data = detail::prepare(examples, m.norm);
    if (kind == ModelKind::LR) {
        detail::train_lr(m, data, hp);
    } else {
        detail::train_mlp(m, data, hp, seed);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int model_schema_version = 1;

inline nlohmann::json model_to_json(const DissimModel& m) {
    nlohmann::json j;
    j["format"] = "brrf-dissim-model";
    j["version"] = model_schema_version;
    j["kind"] = kind_name(m.kind);
    j["feature_names"] = feature_names;
    j["normalization"] = {{"mean", m.norm.mean}, {"std", m.norm.std}, {"active", m.norm.active}};
    if (m.kind == ModelKind::LR) {
        j["lr"] = {{"weights", m.weights}, {"bias", m.bias}};
    } else {
        j["mlp"] = {{"layers", {feature_count, m.hidden, 1}},
                    {"w1", m.w1},
                    {"b1", m.b1},
                    {"w2", m.w2},
                    {"b2", m.b2}};
    }
    return j;
}

inline DissimModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "brrf-dissim-model") {
        throw Error(Errc::MagicMismatch, "not a dissimilarity model document");
    }
    if (!j.contains("version") || !j["version"].is_number_integer() ||
        j["version"].get<int>() != model_schema_version) {
        throw Error(Errc::SchemaVersionMismatch, "unsupported model version");
    }
    try {
        DissimModel m;
        m.kind = parse_kind(j.at("kind").get<std::string>());
        const auto& n = j.at("normalization");
        m.norm.mean = n.at("mean").get<FeatureVector>();
        m.norm.std = n.at("std").get<FeatureVector>();
        m.norm.active = n.at("active").get<std::array<bool, feature_count>>();
        if (m.kind == ModelKind::LR) {
            m.weights = j.at("lr").at("weights").get<FeatureVector>();
            m.bias = j.at("lr").at("bias").get<double>();
        } else {
            const auto& p = j.at("mlp");
            const auto layers = p.at("layers").get<std::vector<std::size_t>>();
            if (layers.size() != 3 || layers[0] != feature_count || layers[2] != 1) {
                throw Error(Errc::InvalidArgument, "MLP layers must be [17, hidden, 1]");
            }
            m.hidden = layers[1];
            m.w1 = p.at("w1").get<std::vector<double>>();
            m.b1 = p.at("b1").get<std::vector<double>>();
            m.w2 = p.at("w2").get<std::vector<double>>();
            m.b2 = p.at("b2").get<double>();
            if (m.w1.size() != m.hidden * feature_count || m.b1.size() != m.hidden || m.w2.size() != m.hidden) {
                throw Error(Errc::InvalidArgument, "MLP weight shapes do not match layers");
            }
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("malformed model: ") + e.what());
    }
}

inline std::string serialize_model(const DissimModel& m) { return model_to_json(m).dump(1); }

inline DissimModel deserialize_model(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("model is not JSON: ") + e.what());
    }
    return model_from_json(j);
}

inline void save_model(const DissimModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open " + path.string() + " for writing");
    out << serialize_model(m) << '\n';
}

inline DissimModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

// ---------------------------------------------------------------------------
// Pair dataset CSV: 17 feature columns, label (1 = no-merge), image_id, level

inline std::string csv_header() {
    std::string h;
    for (auto name : feature_names) {
        h += name;
        h += ',';
    }
    return h + "label,image_id,level";
}

inline void write_pairs_csv(std::span<const PairExample> examples, std::ostream& out, bool header = true) {
    char buf[32];
    if (header) out << csv_header() << '\n';
    for (const auto& e : examples) {
        for (double v : e.features.values) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", e.level);
        out << (e.label == PairLabel::NoMerge ? 1 : 0) << ',' << e.image_id << ',' << buf << '\n';
    }
}

inline std::vector<PairExample> read_pairs_csv(std::istream& in) {
    std::vector<PairExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.rfind("rep_l2_min", 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != feature_count + 3) {
            throw Error(Errc::InvalidArgument, "pair CSV line " + std::to_string(line_no) + " has " +
                                                   std::to_string(cells.size()) + " columns");
        }
        PairExample e;
        try {
            for (std::size_t i = 0; i < feature_count; ++i) e.features.values[i] = std::stod(cells[i]);
            e.label = std::stoi(cells[feature_count]) ? PairLabel::NoMerge : PairLabel::Merge;
            e.image_id = cells[feature_count + 1];
            e.level = std::stod(cells[feature_count + 2]);
        } catch (const std::exception&) {
            throw Error(Errc::InvalidArgument, "pair CSV line " + std::to_string(line_no) + " is not numeric");
        }
        out.push_back(std::move(e));
    }
    return out;
}

}

#endif
