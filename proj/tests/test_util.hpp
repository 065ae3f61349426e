#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "brrf/tensor_io.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "brrf_";
        if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& f) const { return path_ / f; }

private:
    std::filesystem::path path_;
};

// Two label maps describe the same partition (equal up to relabeling).
inline bool same_partition(const brrf::LabelMap& a, const brrf::LabelMap& b) {
    if (!a.same_shape(b)) return false;
    return brrf::relabel_by_first_occurrence(a).data == brrf::relabel_by_first_occurrence(b).data;
}

// Error code thrown by fn; records a failure when nothing is thrown.
inline brrf::Errc error_of(auto&& fn) {
    try {
        fn();
    } catch (const brrf::Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return brrf::Errc::InvariantViolation;
}

inline brrf::EdgeMap random_edges(std::size_t h, std::size_t w, std::mt19937_64& gen) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    brrf::EdgeMap e(h, w);
    for (auto& v : e.data) v = u(gen);
    return e;
}

}

#include "brrf/pipeline.hpp"

namespace testutil {

struct SceneInputs {
    brrf::SynthScene scene;
    brrf::ImageInputs inputs;
    brrf::LabelMap superpixels;
};

inline SceneInputs synth_inputs(std::uint64_t seed, std::size_t size = 48, std::size_t segments = 5,
                                std::size_t min_size = 32) {
    brrf::SynthSpec spec;
    spec.height = spec.width = size;
    spec.n_segments = segments;
    spec.seed = seed;
    SceneInputs s;
    s.scene = brrf::generate(spec);
    s.inputs = brrf::prepare_inputs(s.scene.edges, s.scene.image, s.scene.reps);
    s.superpixels = brrf::initial_superpixels(s.scene.edges, min_size);
    return s;
}

}
