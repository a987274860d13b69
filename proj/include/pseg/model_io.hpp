#ifndef PSEG_MODEL_IO_HPP
#define PSEG_MODEL_IO_HPP

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "pseg/csv.hpp"
#include "pseg/error.hpp"
#include "pseg/normalize.hpp"
#include "pseg/pflicm.hpp"
#include "pseg/pknn.hpp"

namespace pseg {

inline constexpr int kModelFormatVersion = 1;

using AnyModel = std::variant<PflicmModel, PknnModel>;

/// Optional preprocessing carried alongside a model so new images are
/// transformed the way the training data was.
struct ModelMeta {
    std::optional<Normalizer> normalization;
    nlohmann::json pipeline = nlohmann::json::object();
};

struct LoadedModel {
    AnyModel model;
    ModelMeta meta;
};

namespace detail {

using nlohmann::json;

inline void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw ValidationError(std::string("cannot serialize non-finite value in ") + what);
}

inline json matrix_to_json(const Matrix& m, const char* what) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (double v : m.row(r)) {
            check_finite(v, what);
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw IoError(std::string("model file: '") + what + "' must be a non-empty array");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw IoError(std::string("model file: ragged matrix '") + what + "'");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw IoError(std::string("model file: non-numeric entry in '") + what + "'");
            m(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

inline json pflicm_params_json(const PflicmParams& p) {
    return {{"a", p.a}, {"b", p.b}, {"m", p.m}, {"q", p.q}, {"n_clusters", p.n_clusters},
            {"window_radius", p.window_radius}, {"max_iters", p.max_iters}, {"tol", p.tol}};
}

inline PflicmParams pflicm_params_from(const json& j) {
    PflicmParams p;
    p.a = j.at("a").get<double>();
    p.b = j.at("b").get<double>();
    p.m = j.at("m").get<double>();
    p.q = j.at("q").get<double>();
    p.n_clusters = j.at("n_clusters").get<int>();
    p.window_radius = j.at("window_radius").get<int>();
    p.max_iters = j.at("max_iters").get<int>();
    p.tol = j.at("tol").get<double>();
    return p;
}

inline json pknn_params_json(const PknnParams& p) { return {{"k", p.k}, {"m", p.m}, {"eta", p.eta}}; }

inline PknnParams pknn_params_from(const json& j) {
    PknnParams p;
    p.k = j.at("k").get<int>();
    p.m = j.at("m").get<double>();
    p.eta = j.at("eta").get<double>();
    return p;
}

}  // namespace detail

inline nlohmann::json model_to_json(const AnyModel& any, const ModelMeta& meta = {}) {
    using nlohmann::json;
    json doc;
    doc["format_version"] = kModelFormatVersion;
    if (const auto* m = std::get_if<PflicmModel>(&any)) {
        m->validate();
        doc["kind"] = "pflicm";
        doc["params"] = detail::pflicm_params_json(m->params);
        json payload;
        payload["centers"] = detail::matrix_to_json(m->centers, "centers");
        for (double g : m->gammas) detail::check_finite(g, "gammas");
        payload["gammas"] = m->gammas;
        payload["cluster_labels"] = m->cluster_labels ? json(*m->cluster_labels) : json(nullptr);
        payload["class_names"] = m->class_names;
        doc["payload"] = std::move(payload);
    } else {
        const auto& k = std::get<PknnModel>(any);
        k.validate();
        doc["kind"] = "pknn";
        doc["params"] = detail::pknn_params_json(k.params);
        json payload;
        payload["class_names"] = k.train.class_names;
        payload["train_features"] = detail::matrix_to_json(k.train.features.matrix(), "train_features");
        payload["train_labels"] = k.train.labels;
        payload["train_fuzzy"] = detail::matrix_to_json(k.train_fuzzy, "train_fuzzy");
        doc["payload"] = std::move(payload);
    }
    if (meta.normalization) {
        for (double v : meta.normalization->mean) detail::check_finite(v, "normalization");
        for (double v : meta.normalization->scale) detail::check_finite(v, "normalization");
        doc["payload"]["normalization"] = {{"mean", meta.normalization->mean}, {"scale", meta.normalization->scale}};
    }
    if (!meta.pipeline.empty()) doc["payload"]["pipeline"] = meta.pipeline;
    return doc;
}

/// Writes the JSON model file {format_version, kind, params, payload}.
/// Doubles are written in shortest round-trip form, so loading restores
/// them bit for bit.
inline void save_model(const AnyModel& model, const std::filesystem::path& path, const ModelMeta& meta = {}) {
    const auto doc = model_to_json(model, meta);
    detail::atomic_write(path, [&](std::ostream& os) { os << doc.dump(1) << '\n'; });
}

inline LoadedModel model_from_json(const nlohmann::json& doc) {
    using nlohmann::json;
    try {
        if (!doc.is_object()) throw IoError("model file: top level must be an object");
        if (doc.at("format_version").get<int>() != kModelFormatVersion)
            throw IoError("model file: unsupported format_version " + doc.at("format_version").dump());
        const auto kind = doc.at("kind").get<std::string>();
        const json& params = doc.at("params");
        const json& payload = doc.at("payload");
        LoadedModel out;
        if (kind == "pflicm") {
            PflicmModel m;
            m.params = detail::pflicm_params_from(params);
            m.centers = detail::matrix_from_json(payload.at("centers"), "centers");
            m.gammas = payload.at("gammas").get<std::vector<double>>();
            if (!payload.at("cluster_labels").is_null()) m.cluster_labels = payload.at("cluster_labels").get<std::vector<int>>();
            m.class_names = payload.at("class_names").get<std::vector<std::string>>();
            m.validate();
            out.model = std::move(m);
        } else if (kind == "pknn") {
            PknnModel k;
            k.params = detail::pknn_params_from(params);
            k.train = LabeledDataset(FeatureMatrix(detail::matrix_from_json(payload.at("train_features"), "train_features")),
                                     payload.at("train_labels").get<std::vector<int>>(),
                                     payload.at("class_names").get<std::vector<std::string>>());
            k.train_fuzzy = detail::matrix_from_json(payload.at("train_fuzzy"), "train_fuzzy");
            k.index = std::make_shared<const KdTree>(k.train.features.matrix());
            k.validate();
            out.model = std::move(k);
        } else {
            throw IoError("model file: unknown kind '" + kind + "'");
        }
        if (payload.contains("normalization")) {
            const auto& z = payload.at("normalization");
            out.meta.normalization =
                Normalizer{z.at("mean").get<std::vector<double>>(), z.at("scale").get<std::vector<double>>()};
        }
        if (payload.contains("pipeline")) out.meta.pipeline = payload.at("pipeline");
        return out;
    } catch (const json::exception& e) {
        throw IoError(std::string("model file: ") + e.what());
    }
}

inline LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open model file '" + path.string() + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse model file '" + path.string() + "': " + e.what());
    }
    return model_from_json(doc);
}

/// Thrown when a model file holds a different kind than requested.
class ModelKindError : public ValidationError {
public:
    ModelKindError(const std::string& expected, const std::string& found)
        : ValidationError("model file: expected kind '" + expected + "' but found '" + found + "'"),
          expected_(expected) {}
    const std::string& expected() const noexcept { return expected_; }

private:
    std::string expected_;
};

template <typename Model>
Model expect_model(const LoadedModel& loaded) {
    constexpr bool want_pflicm = std::is_same_v<Model, PflicmModel>;
    const char* expected = want_pflicm ? "pflicm" : "pknn";
    if (const auto* m = std::get_if<Model>(&loaded.model)) return *m;
    throw ModelKindError(expected, want_pflicm ? "pknn" : "pflicm");
}

}  // namespace pseg

#endif  // PSEG_MODEL_IO_HPP
