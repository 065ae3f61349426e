#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "brrf/brrf.hpp"
#include "brrf/png_io.hpp"

namespace fs = std::filesystem;
using namespace brrf;

namespace {

int log_level() {
    static const int level = [] {
        const char* v = std::getenv("BRRF_LOG");
        if (!v) return 0;
        const std::string s(v);
        if (s == "debug" || s == "2") return 2;
        if (s == "info" || s == "1") return 1;
        return 0;
    }();
    return level;
}

std::mutex log_mutex;

template <typename... Args>
void log(int level, const Args&... args) {
    if (log_level() < level) return;
    std::lock_guard lock(log_mutex);
    std::cerr << "[brrf] ";
    (std::cerr << ... << args);
    std::cerr << '\n';
}

bool is_png(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

RasterF32 load_raster(const fs::path& p) { return is_png(p) ? png::read_image(p) : read_raster(p); }

EdgeMap load_edges(const fs::path& p) {
    auto r = load_raster(p);
    if (r.channels != 1) {
        throw Error(Errc::ChannelCountMismatch, p.string() + ": edge map must have one channel");
    }
    return retag<EdgeMap>(std::move(r));
}

RasterF32 load_image(const fs::path& p) {
    auto r = load_raster(p);
    if (r.channels == 1) {
        RasterF32 rgb(r.height, r.width, 3);
        for (std::size_t i = 0; i < r.pixels(); ++i) {
            for (std::size_t c = 0; c < 3; ++c) rgb.data[i * 3 + c] = r.data[i];
        }
        return rgb;
    }
    return r;
}

RepTensor load_reps(const fs::path& p) { return read_field<RepTensor>(p); }

LabelMap load_labels(const fs::path& p) { return (is_png(p) ? png::read_labels(p) : read_label_map(p)).map; }

void save_labels(const LabelMap& lm, const fs::path& p) {
    if (is_png(p)) {
        png::write_labels(lm, p);
    } else {
        write_label_map(lm, p);
    }
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

nlohmann::json load_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidArgument, p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    ensure_parent(p);
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open " + p.string() + " for writing");
    out << text;
    if (!out) throw Error(Errc::IoFailure, "write failed for " + p.string());
}

/// A scene directory holds edges.brrf, reps.brrf, image.brrf and zero or more
/// gt*.brrf annotations (the layout `synth` writes).
Scene load_scene(const fs::path& dir) {
    Scene sc;
    sc.id = dir.filename().string();
    if (sc.id.empty()) sc.id = dir.parent_path().filename().string();
    sc.edges = load_edges(dir / "edges.brrf");
    sc.image = load_image(dir / "image.brrf");
    sc.raw_reps = load_reps(dir / "reps.brrf");
    std::vector<fs::path> gts;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (name.rfind("gt", 0) == 0 && e.path().extension() == ".brrf") gts.push_back(e.path());
        }
    }
    std::sort(gts.begin(), gts.end());
    for (const auto& g : gts) sc.gts.push_back(load_labels(g));
    return sc;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// Flags shared by commands that build graphs; std::optional so that only the
// flags the user actually passed override a config file.
struct Overrides {
    std::optional<std::size_t> min_size, pca_dim, rerank_start, rerank_top, sample_cap;
    std::optional<std::uint64_t> seed;
    bool no_rerank = false;
    bool no_filter = false;
    std::string config;

    void add(CLI::App* app, bool merge_flags) {
        app->add_option("--config", config, "run configuration JSON");
        app->add_option("--min-size", min_size, "superpixels smaller than this are absorbed (default 32)");
        app->add_option("--pca-dim", pca_dim, "representation dimension after PCA (default 9)");
        app->add_option("--sample-cap", sample_cap, "representation samples per segment (default 300)");
        app->add_option("--seed", seed, "random seed");
        app->add_flag("--no-filter", no_filter, "skip isolation-forest outlier removal");
        if (merge_flags) {
            app->add_flag("--no-rerank", no_rerank, "disable silhouette re-ranking");
            app->add_option("--rerank-start", rerank_start, "re-rank below this many segments (default 120)");
            app->add_option("--rerank-top", rerank_top, "candidates re-ranked per step (default 4)");
        }
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config.empty()) cfg = run_config_from_json(load_json(config));
        if (min_size) cfg.min_size = *min_size;
        if (pca_dim) cfg.prep.pca_dim = *pca_dim;
        if (sample_cap) cfg.prep.sample_cap = *sample_cap;
        if (seed) cfg.seed = *seed;
        if (no_filter) cfg.prep.enable_filter = false;
        if (no_rerank) cfg.merge.enable_rerank = false;
        if (rerank_start) cfg.merge.rerank_start = *rerank_start;
        if (rerank_top) cfg.merge.rerank_top = *rerank_top;
        return cfg;
    }
};

void write_sweep_csv(const DatasetSweep& s, const fs::path& p) {
    ensure_parent(p);
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open " + p.string() + " for writing");
    out << "threshold,precision,recall,boundary_f,region_f\n";
    char line[256];
    for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
        double region = 0.0;
        for (const auto& im : s.images) region += im.region[k] / static_cast<double>(s.images.size());
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", s.thresholds[k], s.curve[k].precision,
                      s.curve[k].recall, s.curve[k].f_measure, region);
        out << line;
    }
    if (!out) throw Error(Errc::IoFailure, "write failed for " + p.string());
}

nlohmann::json summary_json(const DatasetSweep& s) {
    return {{"boundary_ods", s.boundary.ods_f},
            {"boundary_ods_threshold", s.boundary.ods_threshold},
            {"boundary_ois", s.boundary.ois_f},
            {"boundary_ap", s.boundary.average_precision},
            {"region_ods", s.region_ods},
            {"region_ois", s.region_ois},
            {"images", s.images.size()}};
}

/// Common thresholds for a set of hierarchies: quantiles of all UCM values.
DatasetSweep sweep_dataset(const std::vector<const Hierarchy*>& hs, const std::vector<std::vector<LabelMap>>& gts,
                           std::size_t levels, std::size_t tol, std::size_t jobs) {
    std::vector<double> all;
    for (const auto* h : hs) {
        const auto v = h->ucm_values();
        all.insert(all.end(), v.begin(), v.end());
    }
    auto thresholds = sweep_thresholds(all, levels);
    if (thresholds.empty()) thresholds.push_back(0.0);
    std::vector<ImageSweep> images(hs.size());
    parallel_for(hs.size(), jobs, [&](std::size_t i) { images[i] = sweep_at(*hs[i], gts[i], thresholds, tol); });
    return summarize(std::move(images), std::move(thresholds));
}

std::vector<PairExample> read_pairs(const std::vector<std::string>& files) {
    std::vector<PairExample> out;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw Error(Errc::IoFailure, "cannot open " + f);
        auto part = read_pairs_csv(in);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

void write_pairs(const std::vector<PairExample>& ex, const fs::path& p) {
    ensure_parent(p);
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open " + p.string() + " for writing");
    write_pairs_csv(ex, out);
    if (!out) throw Error(Errc::IoFailure, "write failed for " + p.string());
}

std::string format_threshold(double t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", t);
    return buf;
}

}

int main(int argc, char** argv) {
    CLI::App app{"BRRF hierarchical segmentation"};
    app.require_subcommand(1);

    // oversegment
    auto* over = app.add_subcommand("oversegment", "watershed superpixels with small-region removal");
    std::string over_edges, over_out;
    std::size_t over_min = 32;
    over->add_option("--edges", over_edges, "edge map (BRRF or PNG)")->required();
    over->add_option("--min-size", over_min, "minimum superpixel size");
    over->add_option("--out", over_out, "label map (BRRF or PNG)")->required();

    // prep
    auto* prep = app.add_subcommand("prep", "upsample and PCA-reduce a representation tensor");
    std::string prep_reps, prep_image, prep_out;
    std::size_t prep_dim = 9;
    std::uint64_t prep_seed = 0;
    bool prep_pca_before = false;
    prep->add_option("--reps", prep_reps, "raw representation tensor")->required();
    prep->add_option("--image", prep_image, "image, used for its size")->required();
    prep->add_option("--pca-dim", prep_dim, "output dimension");
    prep->add_option("--seed", prep_seed, "random seed (prep itself is deterministic)");
    prep->add_flag("--pca-before-upsample", prep_pca_before, "fit PCA on the raw grid");
    prep->add_option("--out", prep_out, "prepared tensor")->required();

    // harvest
    auto* harvest = app.add_subcommand("harvest", "labelled segment pairs for classifier training");
    std::vector<std::string> harvest_scenes_dirs, harvest_gt;
    std::string harvest_edges, harvest_reps, harvest_image, harvest_out, harvest_id = "image";
    std::size_t harvest_jobs = 1;
    Overrides harvest_ov;
    harvest->add_option("--scene", harvest_scenes_dirs, "scene directories (edges/reps/image/gt*.brrf)");
    harvest->add_option("--edges", harvest_edges, "edge map of a single image");
    harvest->add_option("--reps", harvest_reps, "representation tensor of a single image");
    harvest->add_option("--image", harvest_image, "RGB image of a single image");
    harvest->add_option("--gt", harvest_gt, "ground-truth label maps of a single image");
    harvest->add_option("--image-id", harvest_id, "id recorded for a single image");
    harvest->add_option("--jobs", harvest_jobs, "parallel images");
    harvest->add_option("--out-csv", harvest_out, "pair dataset")->required();
    harvest_ov.add(harvest, false);

    // train
    auto* trn = app.add_subcommand("train", "fit the pair dissimilarity classifier");
    std::vector<std::string> train_pairs;
    std::string train_kind = "lr", train_out;
    std::uint64_t train_seed = 0;
    trn->add_option("--pairs", train_pairs, "pair CSV files")->required();
    trn->add_option("--kind", train_kind, "lr or mlp")->check(CLI::IsMember({"lr", "mlp"}));
    trn->add_option("--seed", train_seed, "random seed");
    trn->add_option("--out", train_out, "model JSON")->required();

    // segment
    auto* seg = app.add_subcommand("segment", "build the merge hierarchy and UCM of one image");
    std::string seg_edges, seg_reps, seg_image, seg_model, seg_hier, seg_ucm, seg_sp;
    Overrides seg_ov;
    seg->add_option("--edges", seg_edges, "edge map")->required();
    seg->add_option("--reps", seg_reps, "raw representation tensor")->required();
    seg->add_option("--image", seg_image, "RGB image")->required();
    seg->add_option("--model", seg_model, "model JSON (omit for the edge-only model)");
    seg->add_option("--superpixels", seg_sp, "precomputed superpixels instead of the watershed");
    seg->add_option("--out-hierarchy", seg_hier, "hierarchy JSON")->required();
    seg->add_option("--out-ucm", seg_ucm, "UCM on the (2H+1)x(2W+1) interpixel grid (BRRF or PNG)")->required();
    seg_ov.add(seg, true);

    // threshold
    auto* thr = app.add_subcommand("threshold", "cut a hierarchy or UCM at given values");
    std::string thr_hier, thr_ucm, thr_out;
    std::vector<double> thr_t;
    std::optional<std::size_t> thr_count;
    thr->add_option("--hierarchy", thr_hier, "hierarchy JSON");
    thr->add_option("--ucm", thr_ucm, "UCM raster");
    thr->add_option("-t,--t", thr_t, "threshold values");
    thr->add_option("--segments", thr_count, "cut at this many segments (hierarchy only)");
    thr->add_option("--out", thr_out, "output label map; {t} is replaced by the threshold")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "boundary and region scores over a threshold sweep");
    std::string ev_hier, ev_csv;
    std::vector<std::string> ev_gt;
    std::size_t ev_levels = 51, ev_tol = 2;
    ev->add_option("--hierarchy", ev_hier, "hierarchy JSON")->required();
    ev->add_option("--gt", ev_gt, "ground-truth label maps")->required();
    ev->add_option("--levels", ev_levels, "number of thresholds");
    ev->add_option("--tol", ev_tol, "boundary match tolerance in pixels");
    ev->add_option("--out-csv", ev_csv, "PR curve CSV");

    // pair-eval
    auto* pe = app.add_subcommand("pair-eval", "same-segment classification accuracy of pixel pairs");
    std::string pe_reps, pe_gt;
    std::size_t pe_pairs = 10000;
    std::uint64_t pe_seed = 0;
    pe->add_option("--reps", pe_reps, "representation tensor or image (BRRF or PNG)")->required();
    pe->add_option("--gt", pe_gt, "ground-truth label map")->required();
    pe->add_option("--pairs", pe_pairs, "pairs per split");
    pe->add_option("--seed", pe_seed, "random seed");

    // synth
    auto* syn = app.add_subcommand("synth", "generate a synthetic scene");
    std::string syn_spec, syn_out;
    std::optional<std::uint64_t> syn_seed;
    syn->add_option("--spec", syn_spec, "synth spec JSON")->required();
    syn->add_option("--seed", syn_seed, "overrides the seed in the spec");
    syn->add_option("--out-dir", syn_out, "output directory")->required();

    // viz
    auto* viz = app.add_subcommand("viz", "render a representation tensor as colors");
    std::string viz_reps, viz_out;
    viz->add_option("--reps", viz_reps, "representation tensor")->required();
    viz->add_option("--out", viz_out, "PNG")->required();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "harvest, train, segment and evaluate scene directories");
    std::vector<std::string> pipe_train, pipe_test;
    std::string pipe_out, pipe_model, pipe_kind;
    std::vector<double> pipe_thresholds;
    std::optional<std::size_t> pipe_jobs;
    Overrides pipe_ov;
    pipe->add_option("--train", pipe_train, "training scene directories");
    pipe->add_option("--test", pipe_test, "scene directories to segment");
    pipe->add_option("--model", pipe_model, "use this model instead of training");
    pipe->add_option("--kind", pipe_kind, "lr or mlp");
    pipe->add_option("--thresholds", pipe_thresholds, "write segmentations at these UCM values");
    pipe->add_option("--jobs", pipe_jobs, "parallel images");
    pipe->add_option("--out-dir", pipe_out, "output directory");
    pipe_ov.add(pipe, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*over) {
            const auto edges = load_edges(over_edges);
            const auto ws = watershed(edges);
            const auto r = remove_small_superpixels(ws, edges, over_min);
            log(1, "watershed ", label_count(ws), " regions, ", label_count(r.labels), " after removal");
            if (r.no_neighbor) log(1, "some small regions had no neighbor and were kept");
            ensure_parent(over_out);
            save_labels(r.labels, over_out);
        } else if (*prep) {
            const auto raw = load_reps(prep_reps);
            const auto image = load_raster(prep_image);
            PrepConfig cfg;
            cfg.pca_dim = prep_dim;
            cfg.fit_pca_after_upsample = !prep_pca_before;
            const auto out = prepare_representation(raw, image.height, image.width, cfg);
            if (out.pca.degenerate) log(1, "PCA input is degenerate; identity basis used");
            ensure_parent(prep_out);
            write_field(out.reps, prep_out);
        } else if (*harvest) {
            const auto cfg = harvest_ov.resolve();
            std::vector<Scene> scenes;
            for (const auto& d : harvest_scenes_dirs) scenes.push_back(load_scene(d));
            if (!harvest_edges.empty()) {
                if (harvest_reps.empty() || harvest_image.empty() || harvest_gt.empty()) {
                    throw Error(Errc::InvalidArgument, "--edges needs --reps, --image and --gt");
                }
                Scene sc{harvest_id, load_edges(harvest_edges), load_image(harvest_image), load_reps(harvest_reps), {}};
                for (const auto& g : harvest_gt) sc.gts.push_back(load_labels(g));
                scenes.push_back(std::move(sc));
            }
            if (scenes.empty()) throw Error(Errc::InvalidArgument, "nothing to harvest");
            std::vector<std::vector<PairExample>> parts(scenes.size());
            parallel_for(scenes.size(), harvest_jobs, [&](std::size_t i) {
                if (scenes[i].gts.empty()) throw Error(Errc::InvalidArgument, scenes[i].id + ": no ground truth");
                parts[i] = harvest_scenes(std::span<const Scene>(&scenes[i], 1), cfg);
                log(1, scenes[i].id, ": ", parts[i].size(), " pairs");
            });
            std::vector<PairExample> all;
            for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
            write_pairs(all, harvest_out);
        } else if (*trn) {
            const auto ex = read_pairs(train_pairs);
            log(1, "training ", train_kind, " on ", ex.size(), " pairs");
            const auto model = train(ex, parse_kind(train_kind), train_seed);
            ensure_parent(train_out);
            save_model(model, train_out);
        } else if (*seg) {
            const auto cfg = seg_ov.resolve();
            const auto edges = load_edges(seg_edges);
            const auto in = prepare_inputs(edges, load_image(seg_image), load_reps(seg_reps), cfg);
            const auto sp = seg_sp.empty() ? initial_superpixels(edges, cfg.min_size) : load_labels(seg_sp);
            const auto model = seg_model.empty() ? edge_only_model() : load_model(seg_model);
            const auto h = segment_image(in, sp, model, cfg);
            log(1, h.base_count(), " superpixels, ", h.merges.size(), " merges");
            if (h.disconnected) log(1, "adjacency graph was disconnected; remaining parts joined at 1.0");
            ensure_parent(seg_hier);
            write_hierarchy(h, seg_hier);
            ensure_parent(seg_ucm);
            const auto ucm = render_ucm(h);
            if (is_png(seg_ucm)) {
                png::write_image(ucm, seg_ucm);
            } else {
                write_raster(ucm, seg_ucm);
            }
        } else if (*thr) {
            if (thr_hier.empty() == thr_ucm.empty()) {
                throw Error(Errc::InvalidArgument, "give exactly one of --hierarchy and --ucm");
            }
            if (thr_t.empty() && !thr_count) throw Error(Errc::InvalidArgument, "give --t or --segments");
            auto out_path = [&](const std::string& tag) {
                std::string p = thr_out;
                const auto at = p.find("{t}");
                if (at != std::string::npos) {
                    p.replace(at, 3, tag);
                } else if (thr_t.size() + (thr_count ? 1 : 0) > 1) {
                    throw Error(Errc::InvalidArgument, "several cuts need {t} in --out");
                }
                ensure_parent(p);
                return fs::path(p);
            };
            if (!thr_hier.empty()) {
                const auto h = read_hierarchy(thr_hier);
                for (double t : thr_t) save_labels(threshold_hierarchy(h, t), out_path(format_threshold(t)));
                if (thr_count) {
                    save_labels(segmentation_after(h, h.base_count() - std::min(*thr_count, h.base_count())),
                                out_path(std::to_string(*thr_count) + "seg"));
                }
            } else {
                if (thr_count) throw Error(Errc::InvalidArgument, "--segments needs --hierarchy");
                const auto ucm = load_raster(thr_ucm);
                for (double t : thr_t) save_labels(threshold_ucm(ucm, t), out_path(format_threshold(t)));
            }
        } else if (*ev) {
            const auto h = read_hierarchy(ev_hier);
            std::vector<LabelMap> gts;
            for (const auto& g : ev_gt) gts.push_back(load_labels(g));
            const auto s = sweep(h, gts, ev_levels, ev_tol);
            if (!ev_csv.empty()) write_sweep_csv(s, ev_csv);
            std::cout << summary_json(s).dump(1) << '\n';
        } else if (*pe) {
            const fs::path rp(pe_reps);
            auto reps = is_png(rp) ? retag<RepTensor>(png::read_image(rp)) : load_reps(rp);
            const auto gt = load_labels(pe_gt);
            if (!reps.same_shape(gt)) reps = upsample_bilinear(reps, gt.height, gt.width);
            const auto acc = pixel_pair_accuracy(reps, gt, pe_pairs, pe_seed);
            std::cout << nlohmann::json{{"accuracy", acc.accuracy},
                                        {"threshold", acc.threshold},
                                        {"validation_accuracy", acc.validation_accuracy}}
                             .dump(1)
                      << '\n';
        } else if (*syn) {
            auto spec = synth_spec_from_json(load_json(syn_spec));
            if (syn_seed) spec.seed = *syn_seed;
            const auto scene = generate(spec);
            const fs::path dir(syn_out);
            fs::create_directories(dir);
            write_label_map(scene.gt, dir / "gt.brrf");
            write_field(scene.reps, dir / "reps.brrf");
            write_field(scene.edges, dir / "edges.brrf");
            write_raster(scene.image, dir / "image.brrf");
        } else if (*viz) {
            const auto v = virtual_colors(load_reps(viz_reps));
            if (v.degenerate) log(1, "representation has no variance; output is flat");
            ensure_parent(viz_out);
            png::write_image(v.image, viz_out);
        } else if (*pipe) {
            auto cfg = pipe_ov.resolve();
            nlohmann::json file;
            if (!pipe_ov.config.empty()) file = load_json(pipe_ov.config);
            auto from_file = [&](const char* key, auto& target) {
                if (file.contains(key)) target = file[key].get<std::decay_t<decltype(target)>>();
            };
            try {
                if (pipe_train.empty()) from_file("train", pipe_train);
                if (pipe_test.empty()) from_file("test", pipe_test);
                if (pipe_model.empty()) from_file("model", pipe_model);
                if (pipe_kind.empty()) from_file("kind", pipe_kind);
                if (pipe_out.empty()) from_file("out_dir", pipe_out);
                if (pipe_thresholds.empty()) from_file("thresholds", pipe_thresholds);
                if (!pipe_jobs && file.contains("jobs")) pipe_jobs = file["jobs"].get<std::size_t>();
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::InvalidArgument, std::string("bad pipeline config: ") + e.what());
            }
            if (pipe_kind.empty()) pipe_kind = "lr";
            const std::size_t jobs = pipe_jobs.value_or(1);
            if (pipe_out.empty()) throw Error(Errc::InvalidArgument, "pipeline needs --out-dir");
            if (pipe_test.empty()) throw Error(Errc::InvalidArgument, "pipeline needs --test scenes");
            const fs::path out(pipe_out);
            fs::create_directories(out);
            write_text(out / "config.json", run_config_to_json(cfg).dump(1) + "\n");

            DissimModel model;
            if (!pipe_model.empty()) {
                model = load_model(pipe_model);
            } else {
                if (pipe_train.empty()) throw Error(Errc::InvalidArgument, "pipeline needs --train or --model");
                std::vector<Scene> train_scenes(pipe_train.size());
                std::vector<std::vector<PairExample>> parts(pipe_train.size());
                parallel_for(pipe_train.size(), jobs, [&](std::size_t i) {
                    train_scenes[i] = load_scene(pipe_train[i]);
                    if (train_scenes[i].gts.empty()) {
                        throw Error(Errc::InvalidArgument, pipe_train[i] + ": no ground truth");
                    }
                    parts[i] = harvest_scenes(std::span<const Scene>(&train_scenes[i], 1), cfg);
                    log(1, "harvested ", parts[i].size(), " pairs from ", train_scenes[i].id);
                });
                std::vector<PairExample> all;
                for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
                write_pairs(all, out / "pairs.csv");
                model = train(all, parse_kind(pipe_kind), cfg.seed);
                save_model(model, out / "model.json");
            }

            std::vector<Scene> test_scenes(pipe_test.size());
            std::vector<Hierarchy> hierarchies(pipe_test.size());
            parallel_for(pipe_test.size(), jobs, [&](std::size_t i) {
                test_scenes[i] = load_scene(pipe_test[i]);
                const auto& sc = test_scenes[i];
                const auto in = prepare_inputs(sc.edges, sc.image, sc.raw_reps, cfg);
                hierarchies[i] = segment_image(in, initial_superpixels(sc.edges, cfg.min_size), model, cfg);
                const auto& h = hierarchies[i];
                if (const auto problem = validate_hierarchy(h); !problem.empty()) {
                    throw Error(Errc::InvariantViolation, sc.id + ": " + problem);
                }
                write_hierarchy(h, out / (sc.id + ".hierarchy.json"));
                write_raster(render_ucm(h), out / (sc.id + ".ucm.brrf"));
                for (double t : pipe_thresholds) {
                    write_label_map(threshold_hierarchy(h, t), out / (sc.id + ".seg_" + format_threshold(t) + ".brrf"));
                }
                log(1, sc.id, ": ", h.base_count(), " superpixels");
            });

            std::vector<const Hierarchy*> with_gt;
            std::vector<std::vector<LabelMap>> gts;
            for (std::size_t i = 0; i < test_scenes.size(); ++i) {
                if (test_scenes[i].gts.empty()) continue;
                with_gt.push_back(&hierarchies[i]);
                gts.push_back(test_scenes[i].gts);
            }
            if (!with_gt.empty()) {
                const auto s = sweep_dataset(with_gt, gts, cfg.sweep_levels, cfg.harvest.tol_px, jobs);
                write_sweep_csv(s, out / "metrics.csv");
                const auto summary = summary_json(s);
                write_text(out / "summary.json", summary.dump(1) + "\n");
                std::cout << summary.dump(1) << '\n';
            }
        }
    } catch (const Error& e) {
        std::cerr << "brrf: " << e.what() << '\n';
        return e.code() == Errc::InvariantViolation ? 3 : 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "brrf: " << errc_name(Errc::IoFailure) << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "brrf: internal error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
