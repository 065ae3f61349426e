#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "brrf/classifier.hpp"
#include "fixtures.hpp"
#include "oracles/boundary_label.hpp"
#include "test_util.hpp"

using namespace brrf;
using testutil::error_of;

namespace {

PairExample example(const FeatureVector& v, PairLabel label) {
    PairExample e;
    e.features.values = v;
    e.label = label;
    return e;
}

// Two Gaussian blobs separated along feature 0 (no-merge on the positive side)
// with noise in the remaining features.
std::vector<PairExample> blobs(std::size_t n, double gap, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<PairExample> out;
    for (std::size_t k = 0; k < n; ++k) {
        const bool neg = k % 2 == 1;
        FeatureVector v{};
        for (auto& x : v) x = noise(gen);
        v[0] += neg ? gap : -gap;
        out.push_back(example(v, neg ? PairLabel::NoMerge : PairLabel::Merge));
    }
    return out;
}

double accuracy(const DissimModel& m, const std::vector<PairExample>& data) {
    std::size_t hit = 0;
    for (const auto& e : data) hit += (pair_dissim(m, e.features) > 0.5) == (e.label == PairLabel::NoMerge);
    return static_cast<double>(hit) / static_cast<double>(data.size());
}

std::vector<std::uint32_t> distances(const LabelMap& gt) { return boundary_distance(gt); }

}

TEST(Labeling, DistanceTransformMatchesBruteForce) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto gt = fixtures::random_voronoi(5 + rng.below(25), 5 + rng.below(25), 1 + rng.below(6), rng);
        const auto got = boundary_distance(gt);
        const auto bnd = oracle::boundary_pixels(gt);
        for (std::size_t p = 0; p < gt.pixels(); ++p) {
            const long want = oracle::chebyshev_to_boundary(gt, bnd, p);
            if (want < 0) {
                ASSERT_EQ(got[p], UINT32_MAX);
            } else {
                ASSERT_EQ(static_cast<long>(got[p]), want) << "trial " << trial << " pixel " << p;
            }
        }
    }
}

TEST(Labeling, CoincidentBoundaryIsNoMerge) {
    const auto f = fixtures::partial_step(10, 12, 5, 0, 10, 11);
    const auto labels = fixtures::library_labels(f);
    ASSERT_EQ(labels.size(), 1u);
    EXPECT_EQ(std::get<2>(labels[0]), PairLabel::NoMerge);
}

TEST(Labeling, DistantAnnotationBoundaryIsMerge) {
    const auto f = fixtures::partial_step(10, 20, 5, 0, 0, 15);
    EXPECT_EQ(std::get<2>(fixtures::library_labels(f)[0]), PairLabel::Merge);
}

TEST(Labeling, FractionThresholdIsInclusive) {
    // the annotation's horizontal jog adds 3 near rows below the followed ones: 12/20 vs 11/20
    EXPECT_EQ(std::get<2>(fixtures::library_labels(fixtures::partial_step(20, 20, 5, 0, 9, 15))[0]),
              PairLabel::NoMerge);
    EXPECT_EQ(std::get<2>(fixtures::library_labels(fixtures::partial_step(20, 20, 5, 0, 8, 15))[0]),
              PairLabel::Merge);
}

TEST(Labeling, ToleranceIsTwoPixels) {
    // pair (4,5) against an annotation pair (5+s-1, 5+s): nearest distance is s-1
    EXPECT_EQ(std::get<2>(fixtures::library_labels(fixtures::partial_step(8, 20, 5, 3, 8, 19))[0]),
              PairLabel::NoMerge);
    EXPECT_EQ(std::get<2>(fixtures::library_labels(fixtures::partial_step(8, 20, 5, 4, 8, 19))[0]),
              PairLabel::Merge);
}

TEST(Labeling, AnyAnnotationSuffices) {
    auto f = fixtures::partial_step(10, 20, 5, 0, 0, 15);
    f.gts.push_back(fixtures::partial_step(10, 20, 5, 1, 10, 15).gts[0]);
    EXPECT_EQ(std::get<2>(fixtures::library_labels(f)[0]), PairLabel::NoMerge);
}

TEST(Labeling, NoAnnotationBoundaryMeansMerge) {
    const LabelMap gt(6, 6, 1, 0);
    const auto d = distances(gt);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs{{0, 1}, {6, 7}};
    const std::vector<std::vector<std::uint32_t>> ds{d};
    EXPECT_EQ(label_pair(pairs, ds), PairLabel::Merge);
    EXPECT_EQ(near_boundary_fraction({}, d), 0.0);
}

TEST(Labeling, MatchesOracleOnConstructedFixtures) {
    const auto set = fixtures::labeling_set(150, 17);
    std::size_t pairs = 0, negatives = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto seg = relabel_contiguous(set[i].seg).map;
        for (const auto& [a, b, label] : fixtures::library_labels(set[i])) {
            const bool want = oracle::no_merge(seg, a, b, set[i].gts);
            ASSERT_EQ(label == PairLabel::NoMerge, want) << "fixture " << i << " pair " << a << "," << b;
            ++pairs;
            negatives += want;
        }
    }
    // the set exercises both outcomes
    EXPECT_GT(negatives, pairs / 10);
    EXPECT_LT(negatives, pairs - pairs / 10);
}

TEST(Harvest, LabelsMatchOracleAtEveryLevel) {
    auto s = testutil::synth_inputs(5, 48, 5);
    RunConfig cfg;
    const auto h = bootstrap_hierarchy(s.inputs, s.superpixels, cfg);
    const auto levels = harvest_levels(h, 4);
    ASSERT_EQ(levels.size(), 4u);
    const std::vector<LabelMap> gts{s.scene.gt};
    const auto examples = harvest_pairs(h, s.inputs, gts, levels, graph_config(cfg), "img");
    std::size_t k = 0;
    for (double level : levels) {
        const auto seg = relabel_contiguous(threshold_hierarchy(h, level)).map;
        const auto g = SegmentGraph::build(seg, s.inputs.edges, s.inputs.lab, s.inputs.reps, graph_config(cfg));
        for (const auto& [a, b] : g.adjacent_pairs()) {
            ASSERT_LT(k, examples.size());
            EXPECT_EQ(examples[k].level, level);
            EXPECT_EQ(examples[k].image_id, "img");
            EXPECT_EQ(examples[k].label == PairLabel::NoMerge, oracle::no_merge(seg, a, b, gts));
            ++k;
        }
    }
    EXPECT_EQ(k, examples.size());
}

TEST(Harvest, LevelsAreInteriorQuantiles) {
    Hierarchy h;
    h.base = LabelMap(1, 5);
    h.base.data = {0, 1, 2, 3, 4};
    for (std::uint32_t i = 0; i < 4; ++i) {
        MergeRecord r;
        r.a = i == 0 ? 0 : 4 + i;
        r.b = i + 1;
        r.new_id = 5 + i;
        r.step = i;
        r.pair_dissim = r.ucm_value = static_cast<double>(i + 1);
        h.merges.push_back(r);
    }
    const auto lv = harvest_levels(h, 3);
    ASSERT_EQ(lv.size(), 3u);
    EXPECT_DOUBLE_EQ(lv[0], 1.75);
    EXPECT_DOUBLE_EQ(lv[1], 2.5);
    EXPECT_DOUBLE_EQ(lv[2], 3.25);
}

TEST(Harvest, RejectsEmptyHierarchyAndSizeMismatch) {
    auto s = testutil::synth_inputs(1, 32, 3);
    Hierarchy empty;
    empty.base = s.superpixels;
    const std::vector<LabelMap> gts{s.scene.gt};
    const std::vector<double> levels{0.5};
    EXPECT_EQ(error_of([&] { harvest_pairs(empty, s.inputs, gts, levels, {}); }), Errc::EmptyHierarchy);
    const auto h = bootstrap_hierarchy(s.inputs, s.superpixels);
    const std::vector<LabelMap> wrong{LabelMap(4, 4)};
    EXPECT_EQ(error_of([&] { harvest_pairs(h, s.inputs, wrong, levels, {}); }), Errc::DimMismatch);
}

TEST(Model, ZeroWeightsGiveOneHalf) {
    DissimModel m;
    PairFeatures f;
    f.values.fill(3.0);
    EXPECT_DOUBLE_EQ(pair_dissim(m, f), 0.5);
}

TEST(Model, EdgeOnlyModelIsMonotoneInEdgeStrength) {
    const auto m = edge_only_model();
    PairFeatures f;
    double prev = 0.0;
    for (int k = 0; k <= 20; ++k) {
        f.values[static_cast<std::size_t>(Feature::EdgeMean)] = k / 20.0;
        const double p = pair_dissim(m, f);
        EXPECT_GT(p, prev);
        prev = p;
    }
    f.values[static_cast<std::size_t>(Feature::EdgeMean)] = 0.5;
    EXPECT_DOUBLE_EQ(pair_dissim(m, f), 0.5);
}

TEST(Model, LogisticMatchesDotProductOracle) {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        DissimModel m;
        for (std::size_t i = 0; i < feature_count; ++i) {
            m.weights[i] = n(gen);
            m.norm.mean[i] = n(gen);
            m.norm.std[i] = 0.5 + std::abs(n(gen));
            m.norm.active[i] = i % 7 != 3;
        }
        m.bias = n(gen);
        PairFeatures f;
        for (auto& v : f.values) v = n(gen);
        double s = m.bias;
        for (std::size_t i = 0; i < feature_count; ++i) {
            if (m.norm.active[i]) s += m.weights[i] * (f.values[i] - m.norm.mean[i]) / m.norm.std[i];
        }
        EXPECT_NEAR(pair_dissim(m, f), 1.0 / (1.0 + std::exp(-s)), 1e-9);
    }
}

TEST(Model, ExtremeLogitsStayInsideOpenInterval) {
    DissimModel m;
    m.bias = 1e4;
    PairFeatures f;
    EXPECT_LT(pair_dissim(m, f), 1.0);
    m.bias = -1e4;
    EXPECT_GT(pair_dissim(m, f), 0.0);
}

TEST(Training, LogisticSeparatesBlobs) {
    const auto train_set = blobs(400, 4.0, 1);
    const auto m = train(train_set, ModelKind::LR);
    EXPECT_GE(accuracy(m, blobs(400, 4.0, 2)), 0.99);
}

TEST(Training, IdenticalFeaturesBalancedLabelsGiveOneHalf) {
    FeatureVector v{};
    v.fill(0.3);
    std::vector<PairExample> data;
    for (int k = 0; k < 50; ++k) data.push_back(example(v, k % 2 ? PairLabel::NoMerge : PairLabel::Merge));
    PairFeatures f;
    f.values = v;
    for (auto kind : {ModelKind::LR, ModelKind::MLP}) {
        EXPECT_NEAR(pair_dissim(train(data, kind), f), 0.5, 0.01);
    }
}

TEST(Training, ClassImbalanceIsReweighted) {
    // constant features: the balanced objective puts the optimum at 1/2 regardless of the ratio
    FeatureVector v{};
    std::vector<PairExample> data;
    for (int k = 0; k < 100; ++k) data.push_back(example(v, k < 10 ? PairLabel::NoMerge : PairLabel::Merge));
    PairFeatures f;
    EXPECT_NEAR(pair_dissim(train(data, ModelKind::LR), f), 0.5, 1e-6);
}

TEST(Training, DuplicatingTheDatasetChangesNothing) {
    auto data = blobs(200, 1.0, 4);
    const auto once = train(data, ModelKind::LR);
    const auto copy = data;
    data.insert(data.end(), copy.begin(), copy.end());
    const auto twice = train(data, ModelKind::LR);
    for (const auto& e : blobs(50, 1.0, 5)) {
        EXPECT_NEAR(pair_dissim(once, e.features), pair_dissim(twice, e.features), 1e-6);
    }
}

TEST(Training, AffineFeatureRescalingChangesNothing) {
    auto data = blobs(200, 1.0, 6);
    const auto base = train(data, ModelKind::LR);
    auto test = blobs(50, 1.0, 7);
    auto rescale = [](PairFeatures& f) {
        for (std::size_t i = 0; i < feature_count; ++i) f.values[i] = f.values[i] * (1.0 + i) + 10.0 * i;
    };
    const auto before = test;
    for (auto& e : data) rescale(e.features);
    for (auto& e : test) rescale(e.features);
    const auto scaled = train(data, ModelKind::LR);
    for (std::size_t k = 0; k < test.size(); ++k) {
        EXPECT_NEAR(pair_dissim(base, before[k].features), pair_dissim(scaled, test[k].features), 1e-6);
    }
}

TEST(Training, ConstantFeatureIsIgnored) {
    auto data = blobs(200, 3.0, 9);
    for (auto& e : data) e.features.values[5] = 42.0;
    const auto m = train(data, ModelKind::LR);
    EXPECT_FALSE(m.norm.active[5]);
    auto probe = data[0].features;
    const double p = pair_dissim(m, probe);
    probe.values[5] = -1e6;
    EXPECT_EQ(pair_dissim(m, probe), p);
}

TEST(Training, SingleClassIsRejected) {
    FeatureVector v{};
    std::vector<PairExample> data(5, example(v, PairLabel::Merge));
    EXPECT_EQ(error_of([&] { train(data, ModelKind::LR); }), Errc::SingleClass);
    EXPECT_EQ(error_of([&] { train(std::vector<PairExample>{}, ModelKind::MLP); }), Errc::SingleClass);
}

TEST(Training, MlpLearnsXor) {
    // not linearly separable: no-merge iff sign(f0) != sign(f1)
    std::mt19937_64 gen(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<PairExample> data, test;
    for (int k = 0; k < 1200; ++k) {
        FeatureVector v{};
        v[0] = u(gen);
        v[1] = u(gen);
        if (std::abs(v[0]) < 0.1 || std::abs(v[1]) < 0.1) continue;
        (k % 4 ? data : test).push_back(example(v, (v[0] > 0) != (v[1] > 0) ? PairLabel::NoMerge : PairLabel::Merge));
    }
    const auto mlp = train(data, ModelKind::MLP, 3);
    EXPECT_GE(accuracy(mlp, test), 0.9);
    EXPECT_LT(accuracy(train(data, ModelKind::LR), test), 0.75);
}

TEST(Training, MlpIsDeterministicPerSeed) {
    const auto data = blobs(300, 1.0, 13);
    EXPECT_EQ(train(data, ModelKind::MLP, 5), train(data, ModelKind::MLP, 5));
    EXPECT_NE(train(data, ModelKind::MLP, 5), train(data, ModelKind::MLP, 6));
}

TEST(Serialization, RoundTripsBothKinds) {
    testutil::TempDir dir;
    const auto data = blobs(200, 2.0, 14);
    for (auto kind : {ModelKind::LR, ModelKind::MLP}) {
        const auto m = train(data, kind, 1);
        EXPECT_EQ(deserialize_model(serialize_model(m)), m);
        save_model(m, dir / "m.json");
        const auto back = load_model(dir / "m.json");
        EXPECT_EQ(back, m);
        for (const auto& e : data) ASSERT_EQ(pair_dissim(back, e.features), pair_dissim(m, e.features));
    }
}

TEST(Serialization, RejectsWrongVersionAndFormat) {
    auto j = model_to_json(edge_only_model());
    j["version"] = 2;
    EXPECT_EQ(error_of([&] { model_from_json(j); }), Errc::SchemaVersionMismatch);
    j = model_to_json(edge_only_model());
    j["format"] = "something-else";
    EXPECT_EQ(error_of([&] { model_from_json(j); }), Errc::MagicMismatch);
    EXPECT_EQ(error_of([] { deserialize_model("{not json"); }), Errc::InvalidArgument);
    EXPECT_EQ(error_of([] { load_model("/nonexistent/model.json"); }), Errc::IoFailure);
}

TEST(Serialization, RejectsMalformedMlpShapes) {
    auto m = train(blobs(100, 2.0, 15), ModelKind::MLP, 2, TrainHyper{.hidden = 4, .max_epochs = 3});
    auto j = model_to_json(m);
    j["mlp"]["w2"].erase(0);
    EXPECT_EQ(error_of([&] { model_from_json(j); }), Errc::InvalidArgument);
    j = model_to_json(m);
    j["mlp"]["layers"] = {16, 4, 1};
    EXPECT_EQ(error_of([&] { model_from_json(j); }), Errc::InvalidArgument);
}

TEST(PairCsv, RoundTripIsExact) {
    auto data = blobs(30, 1.0, 16);
    for (std::size_t k = 0; k < data.size(); ++k) {
        data[k].image_id = "img" + std::to_string(k % 3);
        data[k].level = 0.1 * static_cast<double>(k) + 1e-13;
    }
    std::stringstream ss;
    write_pairs_csv(data, ss);
    const auto back = read_pairs_csv(ss);
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        EXPECT_EQ(back[k].features.values, data[k].features.values);
        EXPECT_EQ(back[k].label, data[k].label);
        EXPECT_EQ(back[k].image_id, data[k].image_id);
        EXPECT_EQ(back[k].level, data[k].level);
    }
}

TEST(PairCsv, HeaderNamesEveryColumn) {
    const auto h = csv_header();
    EXPECT_EQ(std::count(h.begin(), h.end(), ','), static_cast<long>(feature_count + 2));
    EXPECT_EQ(h.rfind("rep_l2_min", 0), 0u);
}

TEST(PairCsv, MalformedRowsAreRejected) {
    std::stringstream short_row("1,2,3\n");
    EXPECT_EQ(error_of([&] { read_pairs_csv(short_row); }), Errc::InvalidArgument);
    std::string row;
    for (std::size_t i = 0; i < feature_count; ++i) row += i == 4 ? "abc," : "1,";
    std::stringstream bad(row + "0,id,0.5\n");
    EXPECT_EQ(error_of([&] { read_pairs_csv(bad); }), Errc::InvalidArgument);
}
