#ifndef BRRF_PIPELINE_HPP
#define BRRF_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "brrf/classifier.hpp"
#include "brrf/eval.hpp"
#include "brrf/hierarchy.hpp"
#include "brrf/merge_engine.hpp"
#include "brrf/oversegment.hpp"
#include "brrf/rep_prep.hpp"
#include "brrf/seggraph.hpp"
#include "brrf/synth.hpp"
#include "brrf/tensor_io.hpp"

namespace brrf {

/// Every tunable of the end-to-end run. Defaults are the reference constants.
struct RunConfig {
    std::size_t min_size = 32;
    PrepConfig prep;
    MergeConfig merge;
    HarvestConfig harvest;
    std::size_t sweep_levels = 51;
    std::uint64_t seed = 0;
};

inline constexpr int run_config_version = 1;

/// Reads the keys present in j over the defaults in cfg.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig cfg = {}) {
    if (j.contains("version") && j["version"] != run_config_version) {
        throw Error(Errc::SchemaVersionMismatch, "unsupported config version");
    }
    try {
        cfg.min_size = j.value("min_size", cfg.min_size);
        cfg.prep.pca_dim = j.value("pca_dim", cfg.prep.pca_dim);
        cfg.prep.sample_cap = j.value("sample_cap", cfg.prep.sample_cap);
        cfg.prep.enable_filter = j.value("filter", cfg.prep.enable_filter);
        cfg.prep.contamination = j.value("contamination", cfg.prep.contamination);
        cfg.prep.trees = j.value("trees", cfg.prep.trees);
        cfg.prep.subsample = j.value("subsample", cfg.prep.subsample);
        cfg.prep.fit_pca_after_upsample = j.value("pca_after_upsample", cfg.prep.fit_pca_after_upsample);
        cfg.merge.rerank_start = j.value("rerank_start", cfg.merge.rerank_start);
        cfg.merge.rerank_top = j.value("rerank_top", cfg.merge.rerank_top);
        cfg.merge.sil_weight = j.value("sil_weight", cfg.merge.sil_weight);
        cfg.merge.enable_rerank = j.value("rerank", cfg.merge.enable_rerank);
        cfg.harvest.neg_fraction = j.value("neg_fraction", cfg.harvest.neg_fraction);
        cfg.harvest.tol_px = j.value("tol_px", cfg.harvest.tol_px);
        cfg.harvest.levels = j.value("harvest_levels", cfg.harvest.levels);
        cfg.sweep_levels = j.value("sweep_levels", cfg.sweep_levels);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("bad config: ") + e.what());
    }
    return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
    return {{"version", run_config_version},
            {"min_size", cfg.min_size},
            {"pca_dim", cfg.prep.pca_dim},
            {"sample_cap", cfg.prep.sample_cap},
            {"filter", cfg.prep.enable_filter},
            {"contamination", cfg.prep.contamination},
            {"trees", cfg.prep.trees},
            {"subsample", cfg.prep.subsample},
            {"pca_after_upsample", cfg.prep.fit_pca_after_upsample},
            {"rerank_start", cfg.merge.rerank_start},
            {"rerank_top", cfg.merge.rerank_top},
            {"sil_weight", cfg.merge.sil_weight},
            {"rerank", cfg.merge.enable_rerank},
            {"neg_fraction", cfg.harvest.neg_fraction},
            {"tol_px", cfg.harvest.tol_px},
            {"harvest_levels", cfg.harvest.levels},
            {"sweep_levels", cfg.sweep_levels},
            {"seed", cfg.seed}};
}

inline GraphConfig graph_config(const RunConfig& cfg) { return {cfg.prep, cfg.seed}; }

/// Watershed followed by small-superpixel removal.
inline LabelMap initial_superpixels(const EdgeMap& edges, std::size_t min_size = 32) {
    return remove_small_superpixels(watershed(edges), edges, min_size).labels;
}

/// Lab image plus prepared representation for one image.
inline ImageInputs prepare_inputs(const EdgeMap& edges, const RasterF32& image, const RepTensor& raw_reps,
                                  const RunConfig& cfg = {}) {
    if (!image.same_shape(edges)) {
        throw Error(Errc::DimMismatch, "image and edge map differ in size");
    }
    ImageInputs in;
    in.edges = edges;
    in.lab = rgb_to_lab(image);
    in.reps = prepare_representation(raw_reps, image.height, image.width, cfg.prep).reps;
    return in;
}

inline Hierarchy segment_image(const ImageInputs& in, const LabelMap& superpixels, const DissimModel& model,
                               const RunConfig& cfg = {}) {
    auto graph = SegmentGraph::build(superpixels, in.edges, in.lab, in.reps, graph_config(cfg));
    return run_merging(std::move(graph), model, cfg.merge);
}

/// Bootstrap hierarchy from edge strength alone, without re-ranking; this is
/// the hierarchy training pairs are harvested from.
inline Hierarchy bootstrap_hierarchy(const ImageInputs& in, const LabelMap& superpixels, const RunConfig& cfg = {}) {
    RunConfig boot = cfg;
    boot.merge.enable_rerank = false;
    return segment_image(in, superpixels, edge_only_model(), boot);
}

struct Scene {
    std::string id;
    EdgeMap edges;
    RasterF32 image;
    RepTensor raw_reps;
    std::vector<LabelMap> gts;
};

inline Scene scene_from_synth(const SynthScene& s, std::string id) {
    return {std::move(id), s.edges, s.image, s.reps, {s.gt}};
}

/// Harvest labeled pairs from the bootstrap hierarchies of the given scenes.
inline std::vector<PairExample> harvest_scenes(std::span<const Scene> scenes, const RunConfig& cfg = {}) {
    std::vector<PairExample> out;
    for (const auto& sc : scenes) {
        const auto in = prepare_inputs(sc.edges, sc.image, sc.raw_reps, cfg);
        const auto sp = initial_superpixels(sc.edges, cfg.min_size);
        const auto h = bootstrap_hierarchy(in, sp, cfg);
        if (h.merges.empty()) continue;
        const auto levels = harvest_levels(h, cfg.harvest.levels);
        auto ex = harvest_pairs(h, in, sc.gts, levels, graph_config(cfg), sc.id, cfg.harvest);
        out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
    }
    return out;
}

struct SceneResult {
    Hierarchy hierarchy;
    DatasetSweep sweep;
};

inline SceneResult run_scene(const Scene& sc, const DissimModel& model, const RunConfig& cfg = {}) {
    const auto in = prepare_inputs(sc.edges, sc.image, sc.raw_reps, cfg);
    const auto sp = initial_superpixels(sc.edges, cfg.min_size);
    SceneResult r;
    r.hierarchy = segment_image(in, sp, model, cfg);
    if (!sc.gts.empty()) {
        r.sweep = sweep(r.hierarchy, sc.gts, cfg.sweep_levels, cfg.harvest.tol_px);
    }
    return r;
}

}

#endif
