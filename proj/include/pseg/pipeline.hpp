#ifndef PSEG_PIPELINE_HPP
#define PSEG_PIPELINE_HPP

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseg/error.hpp"
#include "pseg/eval.hpp"
#include "pseg/features.hpp"
#include "pseg/model_io.hpp"
#include "pseg/pflicm.hpp"
#include "pseg/superpixels.hpp"

namespace pseg {

/// Everything needed to turn a grayscale image into classified superpixels.
struct PipelineConfig {
    SobelBankConfig sobel;
    std::vector<LacunarityConfig> lacunarity = default_lacunarity_configs();
    int superpixel_target = 300;
    double superpixel_compactness = 0.3;
    PflicmParams pflicm;
    PknnParams pknn;
    bool normalize = true;
    std::uint64_t seed = 0;
    int jobs = 1;

    void validate() const {
        sobel.validate();
        for (const auto& l : lacunarity) l.validate();
        detail::require(superpixel_target >= 1, "config: invariant superpixel_target >= 1 violated");
        detail::require(superpixel_compactness > 0.0, "config: invariant superpixel_compactness > 0 violated");
        pflicm.validate();
        pknn.validate();
        detail::require(jobs >= 1, "config: invariant jobs >= 1 violated");
    }

    CvOptions cv_options() const { return {pflicm, pknn, normalize, seed}; }
};

inline const char* sobel_response_name(SobelResponse r) { return r == SobelResponse::Absolute ? "absolute" : "halfwave"; }

inline SobelResponse parse_sobel_response(const std::string& s) {
    if (s == "absolute") return SobelResponse::Absolute;
    if (s == "halfwave") return SobelResponse::HalfWave;
    throw ValidationError("unknown sobel response '" + s + "' (expected absolute or halfwave)");
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    using nlohmann::json;
    json lac = json::array();
    for (const auto& l : c.lacunarity) lac.push_back({l.outer_window, l.inner_box});
    return {{"features",
             {{"orientations", c.sobel.orientations},
              {"mask_sizes", c.sobel.mask_sizes},
              {"response", sobel_response_name(c.sobel.response)},
              {"lacunarity", lac}}},
            {"superpixels", {{"target_count", c.superpixel_target}, {"compactness", c.superpixel_compactness}}},
            {"pflicm", detail::pflicm_params_json(c.pflicm)},
            {"pknn", detail::pknn_params_json(c.pknn)},
            {"normalize", c.normalize},
            {"seed", c.seed},
            {"jobs", c.jobs}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
    using nlohmann::json;
    auto check_keys = [](const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
        if (!obj.is_object()) throw ValidationError("config: '" + where + "' must be an object");
        for (const auto& [key, _] : obj.items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || key == a;
            if (!ok) throw ValidationError("config: unknown key '" + key + "' in " + where);
        }
    };
    try {
        check_keys(j, {"features", "superpixels", "pflicm", "pknn", "normalize", "seed", "jobs"}, "config");
        if (j.contains("features")) {
            const auto& f = j["features"];
            check_keys(f, {"orientations", "mask_sizes", "response", "lacunarity"}, "features");
            if (f.contains("orientations")) c.sobel.orientations = f["orientations"].get<int>();
            if (f.contains("mask_sizes")) c.sobel.mask_sizes = f["mask_sizes"].get<std::vector<int>>();
            if (f.contains("response")) c.sobel.response = parse_sobel_response(f["response"].get<std::string>());
            if (f.contains("lacunarity")) {
                c.lacunarity.clear();
                for (const auto& pair : f["lacunarity"]) c.lacunarity.push_back({pair.at(0).get<int>(), pair.at(1).get<int>()});
            }
        }
        if (j.contains("superpixels")) {
            const auto& s = j["superpixels"];
            check_keys(s, {"target_count", "compactness"}, "superpixels");
            if (s.contains("target_count")) c.superpixel_target = s["target_count"].get<int>();
            if (s.contains("compactness")) c.superpixel_compactness = s["compactness"].get<double>();
        }
        if (j.contains("pflicm")) {
            json merged = detail::pflicm_params_json(c.pflicm);
            check_keys(j["pflicm"], {"a", "b", "m", "q", "n_clusters", "window_radius", "max_iters", "tol"}, "pflicm");
            merged.update(j["pflicm"]);
            c.pflicm = detail::pflicm_params_from(merged);
        }
        if (j.contains("pknn")) {
            json merged = detail::pknn_params_json(c.pknn);
            check_keys(j["pknn"], {"k", "m", "eta"}, "pknn");
            merged.update(j["pknn"]);
            c.pknn = detail::pknn_params_from(merged);
        }
        if (j.contains("normalize")) c.normalize = j["normalize"].get<bool>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path.string() + "'");
    try {
        return config_from_json(nlohmann::json::parse(is), std::move(base));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("cannot parse config '" + path.string() + "': " + e.what());
    }
}

/// One image reduced to superpixel samples.
struct PreparedImage {
    SuperpixelMap superpixels;
    FeatureMatrix features;
    NeighborGraph graph;
};

inline PreparedImage prepare_image(const Image& image, const PipelineConfig& cfg,
                                   const SuperpixelMap* external_superpixels = nullptr) {
    const FeatureStack stack = extract_features(image, cfg.sobel, cfg.lacunarity);
    PreparedImage out;
    out.superpixels = external_superpixels
                          ? *external_superpixels
                          : segment_superpixels(image, cfg.superpixel_target, cfg.superpixel_compactness);
    out.features = aggregate_features(stack, out.superpixels);
    out.graph = build_neighbor_graph(out.superpixels, cfg.pflicm.window_radius);
    return out;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(jobs));
    for (std::size_t w = 0; w < count; ++w)
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

/// Per-class score maps painted back onto pixels: the score of each
/// pixel's superpixel, mapped [0,1] -> [0,255] without stretching.
inline std::vector<Image> paint_class_maps(const Matrix& class_scores, const SuperpixelMap& sp) {
    std::vector<Image> maps;
    for (std::size_t c = 0; c < class_scores.rows(); ++c) {
        Image m(sp.height(), sp.width());
        for (std::size_t p = 0; p < m.size(); ++p)
            m.data()[p] = class_scores(c, static_cast<std::size_t>(sp.labels.data()[p]));
        maps.push_back(std::move(m));
    }
    return maps;
}

inline LabelImage paint_labels(const std::vector<int>& labels, const SuperpixelMap& sp) {
    LabelImage out(sp.height(), sp.width());
    for (std::size_t p = 0; p < out.size(); ++p) out.data()[p] = labels[static_cast<std::size_t>(sp.labels.data()[p])];
    return out;
}

}  // namespace pseg

#endif  // PSEG_PIPELINE_HPP
