// pseg command-line front end: synth -> features -> superpixels -> train ->
// segment -> evaluate, plus a timing benchmark.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pseg/pseg.hpp"

namespace fs = std::filesystem;
using namespace pseg;

namespace {

// ---------------------------------------------------------------------------
// Shared pipeline options

/// Flags mirroring PipelineConfig. Values are bound to a default-initialized
/// config; after parsing, only flags the user actually passed are copied
/// over the config file (or the defaults when no file is given).
struct PipelineFlags {
    PipelineConfig values;
    std::string config_path;
    std::string response = "absolute";
    std::vector<std::string> lacunarity{"31:21", "21:11"};
    std::string normalize = "on";
    std::vector<std::pair<CLI::Option*, std::function<void(PipelineConfig&)>>> bindings;

    template <typename T>
    void bind(CLI::App* app, const std::string& name, T& field, const std::string& help,
              std::function<void(PipelineConfig&)> copy) {
        auto* opt = app->add_option(name, field, help)->capture_default_str();
        bindings.emplace_back(opt, std::move(copy));
    }

    PipelineConfig resolve() const {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        for (const auto& [opt, copy] : bindings)
            if (opt->count() > 0) copy(cfg);
        cfg.validate();
        return cfg;
    }
};

std::vector<LacunarityConfig> parse_lacunarity(const std::vector<std::string>& specs) {
    std::vector<LacunarityConfig> out;
    for (const auto& s : specs) {
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw ValidationError("lacunarity spec '" + s + "' must be OUTER:INNER");
        try {
            out.push_back({std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))});
        } catch (const std::exception&) {
            throw ValidationError("lacunarity spec '" + s + "' must be OUTER:INNER");
        }
    }
    return out;
}

bool parse_on_off(const std::string& s) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw ValidationError("expected on|off, got '" + s + "'");
}

enum Groups : unsigned { kFeatures = 1, kSuperpixels = 2, kPflicm = 4, kPknn = 8, kRun = 16 };

std::shared_ptr<PipelineFlags> add_pipeline_options(CLI::App* app, unsigned groups) {
    auto f = std::make_shared<PipelineFlags>();
    auto& v = f->values;
    app->add_option("--config", f->config_path, "JSON pipeline config; flags override its values")
        ->check(CLI::ExistingFile);
    if (groups & kFeatures) {
        f->bind(app, "--orientations", v.sobel.orientations, "Sobel orientations per mask size",
                [f = f.get()](PipelineConfig& c) { c.sobel.orientations = f->values.sobel.orientations; });
        f->bind(app, "--mask-sizes", v.sobel.mask_sizes, "Sobel mask sizes (odd)",
                [f = f.get()](PipelineConfig& c) { c.sobel.mask_sizes = f->values.sobel.mask_sizes; });
        app->get_option("--mask-sizes")->delimiter(',');
        f->bind(app, "--sobel-response", f->response, "Oriented response: absolute|halfwave",
                [f = f.get()](PipelineConfig& c) { c.sobel.response = parse_sobel_response(f->response); });
        f->bind(app, "--lacunarity", f->lacunarity, "Lacunarity windows OUTER:INNER",
                [f = f.get()](PipelineConfig& c) { c.lacunarity = parse_lacunarity(f->lacunarity); });
        app->get_option("--lacunarity")->delimiter(',');
    }
    if (groups & kSuperpixels) {
        f->bind(app, "--superpixels-target", v.superpixel_target, "Target superpixel count per image",
                [f = f.get()](PipelineConfig& c) { c.superpixel_target = f->values.superpixel_target; });
        f->bind(app, "--compactness", v.superpixel_compactness, "Superpixel compactness (small follows intensity)",
                [f = f.get()](PipelineConfig& c) { c.superpixel_compactness = f->values.superpixel_compactness; });
    }
    if (groups & kPflicm) {
        auto& p = v.pflicm;
        f->bind(app, "--a", p.a, "PFLICM membership weight a", [f = f.get()](PipelineConfig& c) { c.pflicm.a = f->values.pflicm.a; });
        f->bind(app, "--b", p.b, "PFLICM typicality weight b", [f = f.get()](PipelineConfig& c) { c.pflicm.b = f->values.pflicm.b; });
        f->bind(app, "--m", p.m, "PFLICM fuzzifier m (> 1)", [f = f.get()](PipelineConfig& c) { c.pflicm.m = f->values.pflicm.m; });
        f->bind(app, "--q", p.q, "PFLICM typicality exponent q (> 1)",
                [f = f.get()](PipelineConfig& c) { c.pflicm.q = f->values.pflicm.q; });
        f->bind(app, "--clusters", p.n_clusters, "PFLICM cluster count C",
                [f = f.get()](PipelineConfig& c) { c.pflicm.n_clusters = f->values.pflicm.n_clusters; });
        f->bind(app, "--window-radius", p.window_radius, "Neighborhood radius in superpixel adjacency hops",
                [f = f.get()](PipelineConfig& c) { c.pflicm.window_radius = f->values.pflicm.window_radius; });
        f->bind(app, "--max-iters", p.max_iters, "PFLICM iteration cap",
                [f = f.get()](PipelineConfig& c) { c.pflicm.max_iters = f->values.pflicm.max_iters; });
        f->bind(app, "--tol", p.tol, "PFLICM stop when max membership change < tol",
                [f = f.get()](PipelineConfig& c) { c.pflicm.tol = f->values.pflicm.tol; });
    }
    if (groups & kPknn) {
        auto& p = v.pknn;
        f->bind(app, "--k", p.k, "PKNN neighbor count K", [f = f.get()](PipelineConfig& c) { c.pknn.k = f->values.pknn.k; });
        f->bind(app, "--pknn-m", p.m, "PKNN distance exponent m (> 1)",
                [f = f.get()](PipelineConfig& c) { c.pknn.m = f->values.pknn.m; });
        f->bind(app, "--eta", p.eta, "PKNN full-weight radius eta",
                [f = f.get()](PipelineConfig& c) { c.pknn.eta = f->values.pknn.eta; });
    }
    if (groups & kRun) {
        f->bind(app, "--normalize", f->normalize, "Z-score features on training statistics: on|off",
                [f = f.get()](PipelineConfig& c) { c.normalize = parse_on_off(f->normalize); });
        f->bind(app, "--seed", v.seed, "Random seed", [f = f.get()](PipelineConfig& c) { c.seed = f->values.seed; });
    }
    f->bind(app, "--jobs", v.jobs, "Images processed concurrently",
            [f = f.get()](PipelineConfig& c) { c.jobs = f->values.jobs; });
    return f;
}

// ---------------------------------------------------------------------------
// Datasets

struct ManifestEntry {
    fs::path image;
    fs::path mask;
    int fold = 0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;
};

/// manifest.csv (image,mask,fold; paths relative to the manifest) plus
/// classes.txt (one class name per line, id = line number) beside it.
Manifest read_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest '" + path.string() + "'");
    const fs::path dir = path.parent_path();
    Manifest m;
    std::string line;
    if (!std::getline(is, line) || detail::split_csv_line(line) != std::vector<std::string>{"image", "mask", "fold"})
        throw IoError("manifest '" + path.string() + "' must start with header image,mask,fold");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 3) throw IoError("manifest row must have 3 fields: '" + line + "'");
        int fold = 0;
        try {
            fold = std::stoi(cells[2]);
        } catch (const std::exception&) {
            throw IoError("manifest fold id is not an integer: '" + cells[2] + "'");
        }
        m.entries.push_back({dir / cells[0], dir / cells[1], fold});
    }
    if (m.entries.empty()) throw ValidationError("manifest '" + path.string() + "' lists no images");
    std::ifstream cs(dir / "classes.txt");
    if (!cs) throw IoError("cannot open '" + (dir / "classes.txt").string() + "'");
    while (std::getline(cs, line))
        if (!line.empty()) m.class_names.push_back(line);
    if (m.class_names.empty()) throw ValidationError("classes.txt lists no classes");
    for (const auto& e : m.entries) {
        if (!fs::exists(e.image)) throw IoError("missing image '" + e.image.string() + "'");
        if (!fs::exists(e.mask)) throw IoError("missing mask '" + e.mask.string() + "'");
        detail::require(e.fold >= 0, "manifest: fold ids must be >= 0");
    }
    return m;
}

std::vector<ManifestEntry> select_folds(const Manifest& m, const std::vector<int>& folds) {
    if (folds.empty()) return m.entries;
    std::vector<ManifestEntry> out;
    for (const auto& e : m.entries)
        if (std::find(folds.begin(), folds.end(), e.fold) != folds.end()) out.push_back(e);
    if (out.empty()) throw ValidationError("no manifest images in the selected folds");
    return out;
}

std::vector<EvalImage> prepare_dataset(const std::vector<ManifestEntry>& entries, std::size_t n_classes,
                                       const PipelineConfig& cfg) {
    std::vector<std::optional<EvalImage>> slots(entries.size());
    parallel_for(entries.size(), cfg.jobs, [&](std::size_t i) {
        const Image image = read_image(entries[i].image);
        const LabelImage mask = read_label_png(entries[i].mask);
        if (mask.height() != image.height() || mask.width() != image.width())
            throw ValidationError("mask '" + entries[i].mask.string() + "' does not match its image size");
        for (int v : mask.data())
            if (v < 0 || static_cast<std::size_t>(v) >= n_classes)
                throw ValidationError("mask '" + entries[i].mask.string() + "' has a class id outside classes.txt");
        auto prep = prepare_image(image, cfg);
        auto truth = superpixel_majority_labels(mask, prep.superpixels, static_cast<int>(n_classes));
        slots[i] = EvalImage{std::move(prep.features), std::move(prep.graph), std::move(truth)};
    });
    std::vector<EvalImage> out;
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

struct Pooled {
    FeatureMatrix features;
    NeighborGraph graph;
    std::vector<int> labels;
};

Pooled pool(const std::vector<EvalImage>& images) {
    std::vector<const FeatureMatrix*> feats;
    std::vector<const NeighborGraph*> graphs;
    std::vector<int> labels;
    for (const auto& im : images) {
        feats.push_back(&im.features);
        graphs.push_back(&im.graph);
        labels.insert(labels.end(), im.truth.begin(), im.truth.end());
    }
    return {detail::stack_rows(feats), NeighborGraph::disjoint_union(graphs), std::move(labels)};
}

ModelMeta make_meta(const PipelineConfig& cfg, FeatureMatrix& x) {
    ModelMeta meta;
    meta.pipeline = config_to_json(cfg);
    if (cfg.normalize) {
        meta.normalization = Normalizer::fit(x);
        x = meta.normalization->apply(x);
    }
    return meta;
}

FeatureMatrix apply_meta(const ModelMeta& meta, const FeatureMatrix& x) {
    return meta.normalization ? meta.normalization->apply(x) : x;
}

PipelineConfig model_pipeline(const LoadedModel& loaded, int jobs) {
    PipelineConfig cfg = loaded.meta.pipeline.empty() ? PipelineConfig{} : config_from_json(loaded.meta.pipeline);
    cfg.jobs = jobs;
    cfg.validate();
    return cfg;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string fold_list_text(const std::vector<int>& v) {
    std::string s;
    for (int f : v) s += (s.empty() ? "" : ",") + std::to_string(f);
    return s.empty() ? "all" : s;
}

// ---------------------------------------------------------------------------
// Commands

struct SynthArgs {
    std::string out_dir;
    int n_images = 30;
    int size = 256;
    std::vector<std::string> classes{"flat", "ripple", "rocky", "crater"};
    int folds = 3;
    std::uint64_t seed = 0;
    int max_regions = 4;
};

int cmd_synth(const SynthArgs& a, int jobs) {
    std::vector<TextureKind> kinds;
    for (const auto& c : a.classes) kinds.push_back(parse_texture(c));
    detail::require(a.n_images >= a.folds, "synth: invariant n_images >= folds violated");
    detail::require(a.max_regions >= 1, "synth: max_regions must be >= 1");
    const auto plan = make_fold_plan(a.n_images, a.folds);
    std::vector<std::string> names;
    for (auto k : kinds) names.emplace_back(texture_name(k));
    const fs::path out(a.out_dir);
    ensure_dir(out / "images");
    ensure_dir(out / "masks");
    std::vector<int> fold_of(static_cast<std::size_t>(a.n_images));
    for (std::size_t f = 0; f < plan.folds.size(); ++f)
        for (int id : plan.folds[f]) fold_of[static_cast<std::size_t>(id)] = static_cast<int>(f);
    auto stem = [](int i) {
        std::ostringstream os;
        os << std::setw(3) << std::setfill('0') << i;
        return os.str();
    };
    parallel_for(static_cast<std::size_t>(a.n_images), jobs, [&](std::size_t i) {
        const auto img = dataset_image(i, a.size, kinds, a.seed, a.max_regions);
        write_image_png(out / "images" / ("img_" + stem(static_cast<int>(i)) + ".png"), img.image);
        write_label_png(out / "masks" / ("mask_" + stem(static_cast<int>(i)) + ".png"), img.mask);
    });
    detail::atomic_write(out / "classes.txt", [&](std::ostream& os) {
        for (const auto& n : names) os << n << '\n';
    });
    detail::atomic_write(out / "manifest.csv", [&](std::ostream& os) {
        os << "image,mask,fold\n";
        for (int i = 0; i < a.n_images; ++i)
            os << "images/img_" << stem(i) << ".png,masks/mask_" << stem(i) << ".png," << fold_of[static_cast<std::size_t>(i)]
               << '\n';
    });
    std::cout << "wrote " << a.n_images << " images to " << out.string() << '\n';
    return 0;
}

struct FeaturesArgs {
    std::string image, out, superpixels, csv;
};

int cmd_features(const FeaturesArgs& a, const PipelineConfig& cfg) {
    detail::require(!a.out.empty() || !a.csv.empty(), "features: give --out and/or --csv");
    detail::require(a.csv.empty() || !a.superpixels.empty(), "features: --csv needs --superpixels");
    const Image image = read_image(a.image);
    std::optional<SuperpixelMap> sp;
    if (!a.superpixels.empty()) sp = load_superpixels(a.superpixels, image.height(), image.width());
    const auto stack = extract_features(image, cfg.sobel, cfg.lacunarity);
    if (!a.out.empty()) write_feature_stack(a.out, stack);
    if (!a.csv.empty()) write_feature_csv(a.csv, aggregate_features(stack, *sp));
    return 0;
}

struct SuperpixelsArgs {
    std::string image, out, format = "auto";
};

int cmd_superpixels(const SuperpixelsArgs& a, const PipelineConfig& cfg) {
    SuperpixelFormat fmt = SuperpixelFormat::Auto;
    if (a.format == "png") fmt = SuperpixelFormat::Png;
    else if (a.format == "csv") fmt = SuperpixelFormat::Csv;
    else detail::require(a.format == "auto", "superpixels: --format must be auto|png|csv");
    const Image image = read_image(a.image);
    const auto sp = segment_superpixels(image, cfg.superpixel_target, cfg.superpixel_compactness);
    save_superpixels(a.out, sp, fmt);
    std::cout << sp.n_superpixels << " superpixels\n";
    return 0;
}

struct TrainArgs {
    std::string manifest, out, trace;
    std::vector<int> folds;
};

int cmd_train_pflicm(const TrainArgs& a, const PipelineConfig& cfg) {
    const auto manifest = read_manifest(a.manifest);
    const auto images = prepare_dataset(select_folds(manifest, a.folds), manifest.class_names.size(), cfg);
    auto data = pool(images);
    const ModelMeta meta = make_meta(cfg, data.features);
    auto fit = fit_pflicm(data.features, data.graph, cfg.pflicm, cfg.seed);
    fit.model.class_names = manifest.class_names;
    if (!a.trace.empty())
        detail::atomic_write(a.trace, [&](std::ostream& os) {
            os << "iter,objective,max_delta_u\n";
            for (const auto& r : fit.trace)
                os << r.iter << ',' << detail::format_double(r.objective) << ',' << detail::format_double(r.max_delta_u)
                   << '\n';
        });
    save_model(fit.model, a.out, meta);
    std::cout << "pflicm: " << fit.trace.size() << " iterations, " << (fit.converged ? "converged" : "not converged")
              << ", folds " << fold_list_text(a.folds) << '\n';
    return 0;
}

struct LabelArgs {
    std::string model, manifest, out;
    std::vector<int> folds;
};

int cmd_label_clusters(const LabelArgs& a, int jobs) {
    const auto loaded = load_model(a.model);
    auto model = expect_model<PflicmModel>(loaded);
    const auto cfg = model_pipeline(loaded, jobs);
    const auto manifest = read_manifest(a.manifest);
    const auto images = prepare_dataset(select_folds(manifest, a.folds), manifest.class_names.size(), cfg);
    auto data = pool(images);
    const FeatureMatrix x = apply_meta(loaded.meta, data.features);
    const auto assign = predict_pflicm(model, x, data.graph);
    const LabeledDataset labeled(x, std::move(data.labels), manifest.class_names);
    const auto result = label_clusters(model, labeled, assign);
    for (int c : result.fallback_clusters)
        std::cerr << "warning: cluster " << c << " has no labeled weight; given the majority class\n";
    save_model(result.model, a.out, loaded.meta);
    return 0;
}

int cmd_train_pknn(const TrainArgs& a, const PipelineConfig& cfg) {
    const auto manifest = read_manifest(a.manifest);
    const auto images = prepare_dataset(select_folds(manifest, a.folds), manifest.class_names.size(), cfg);
    auto data = pool(images);
    const ModelMeta meta = make_meta(cfg, data.features);
    const auto model = fit_pknn(LabeledDataset(data.features, std::move(data.labels), manifest.class_names), cfg.pknn);
    save_model(model, a.out, meta);
    return 0;
}

struct SegmentArgs {
    std::string model, image, superpixels, out_dir, features_csv, out_csv;
};

TrainedSegmenter as_segmenter(const LoadedModel& loaded) {
    TrainedSegmenter s{Algorithm::Pknn, loaded.meta.normalization, std::nullopt, std::nullopt};
    if (const auto* p = std::get_if<PflicmModel>(&loaded.model)) {
        s.algorithm = Algorithm::Pflicm;
        s.pflicm = *p;
    } else {
        s.pknn = std::get<PknnModel>(loaded.model);
    }
    return s;
}

const std::vector<std::string>& class_names_of(const LoadedModel& loaded) {
    if (const auto* p = std::get_if<PflicmModel>(&loaded.model)) return p->class_names;
    return std::get<PknnModel>(loaded.model).train.class_names;
}

void write_scores_csv(const fs::path& path, const Segmentation& seg, const std::vector<std::string>& names) {
    detail::atomic_write(path, [&](std::ostream& os) {
        os << "sample";
        for (const auto& n : names) os << ',' << n;
        os << ",label\n";
        for (std::size_t i = 0; i < seg.labels.size(); ++i) {
            os << i;
            for (std::size_t c = 0; c < names.size(); ++c) os << ',' << detail::format_double(seg.class_scores(c, i));
            os << ',' << names[static_cast<std::size_t>(seg.labels[i])] << '\n';
        }
    });
}

int cmd_segment(const SegmentArgs& a, int jobs) {
    const bool batch = !a.features_csv.empty();
    detail::require(batch != !a.image.empty(), "segment: give exactly one of --image or --features-csv");
    detail::require(!batch || !a.out_csv.empty(), "segment: --features-csv needs --out-csv");
    detail::require(batch || !a.out_dir.empty(), "segment: --image needs --out-dir");
    const auto loaded = load_model(a.model);
    const auto segmenter = as_segmenter(loaded);
    if (segmenter.pflicm) detail::require(segmenter.pflicm->labeled(), "segment: pflicm model has no cluster labels (run label-clusters)");
    const auto& names = class_names_of(loaded);

    if (batch) {
        const auto csv = read_feature_csv(a.features_csv);
        // No spatial layout is known for free-standing samples.
        const auto graph = NeighborGraph::from_edges(csv.features.n_samples(), {});
        const auto seg = segment_samples(segmenter, csv.features, graph);
        write_scores_csv(a.out_csv, seg, names);
        return 0;
    }

    const auto cfg = model_pipeline(loaded, jobs);
    const Image image = read_image(a.image);
    std::optional<SuperpixelMap> external;
    if (!a.superpixels.empty()) external = load_superpixels(a.superpixels, image.height(), image.width());
    const auto prep = prepare_image(image, cfg, external ? &*external : nullptr);
    const auto seg = segment_samples(segmenter, prep.features, prep.graph);
    const fs::path out(a.out_dir);
    ensure_dir(out);
    const auto maps = paint_class_maps(seg.class_scores, prep.superpixels);
    for (std::size_t c = 0; c < maps.size(); ++c) write_image_png(out / ("class_" + names[c] + ".png"), maps[c]);
    write_label_png(out / "crisp.png", paint_labels(seg.labels, prep.superpixels));
    write_scores_csv(out / "superpixel_scores.csv", seg, names);
    if (!a.out_csv.empty()) write_scores_csv(a.out_csv, seg, names);
    return 0;
}

struct EvaluateArgs {
    std::string manifest, algorithm = "pflicm", out_dir, timing;
};

int cmd_evaluate(const EvaluateArgs& a, const PipelineConfig& cfg) {
    const Algorithm algo = parse_algorithm(a.algorithm);
    const auto manifest = read_manifest(a.manifest);
    std::set<int> fold_ids;
    for (const auto& e : manifest.entries) fold_ids.insert(e.fold);
    FoldPlan plan;
    for (int f : fold_ids) {
        auto& fold = plan.folds.emplace_back();
        for (std::size_t i = 0; i < manifest.entries.size(); ++i)
            if (manifest.entries[i].fold == f) fold.push_back(static_cast<int>(i));
    }
    plan.validate(manifest.entries.size());
    const auto images = prepare_dataset(manifest.entries, manifest.class_names.size(), cfg);
    const auto cv = run_cross_validation(images, manifest.class_names, plan, algo, cfg.cv_options());
    const fs::path out(a.out_dir);
    ensure_dir(out);
    const std::string prefix = algorithm_name(algo);
    for (std::size_t f = 0; f < cv.folds.size(); ++f) {
        const auto& fr = cv.folds[f];
        for (const auto& w : fr.warnings) std::cerr << "warning: " << w << '\n';
        const std::string stem = prefix + "_fold" + std::to_string(f);
        write_confusion_csv(out / (stem + "_confusion.csv"), fr.confusion);
        write_confusion_csv(out / (stem + "_rates.csv"), fr.confusion, true);
        write_confusion_png(out / (stem + "_confusion.png"), fr.confusion);
    }
    const auto pooled = cv.pooled();
    write_confusion_csv(out / (prefix + "_pooled_confusion.csv"), pooled);
    write_confusion_csv(out / (prefix + "_pooled_rates.csv"), pooled, true);
    write_confusion_png(out / (prefix + "_pooled_confusion.png"), pooled);
    detail::atomic_write(out / (prefix + "_summary.csv"), [&](std::ostream& os) {
        os << "fold,samples,accuracy";
        for (const auto& n : manifest.class_names) os << ",recall_" << n;
        os << '\n';
        auto row = [&](const std::string& name, const ConfusionMatrix& cm) {
            os << name << ',' << cm.total() << ',' << detail::format_double(cm.accuracy());
            for (std::size_t c = 0; c < manifest.class_names.size(); ++c) os << ',' << detail::format_double(cm.recall(c));
            os << '\n';
        };
        for (std::size_t f = 0; f < cv.folds.size(); ++f) row(std::to_string(f), cv.folds[f].confusion);
        row("pooled", pooled);
    });
    if (!a.timing.empty())
        detail::atomic_write(a.timing, [&](std::ostream& os) {
            os << "fold,train_seconds,test_seconds\n";
            for (std::size_t f = 0; f < cv.folds.size(); ++f)
                os << f << ',' << detail::format_double(cv.folds[f].train_seconds) << ','
                   << detail::format_double(cv.folds[f].test_seconds) << '\n';
        });
    std::cout << prefix << " pooled accuracy " << pooled.accuracy() << '\n';
    return 0;
}

struct BenchArgs {
    std::string algorithm = "pknn", mode = "test", out;
    std::vector<std::size_t> sizes{1000, 2000, 4000};
    BenchmarkOptions options;
};

int cmd_bench(BenchArgs a, const PipelineConfig& cfg) {
    const Algorithm algo = parse_algorithm(a.algorithm);
    if (a.mode == "test") a.options.mode = ScalingMode::VaryTest;
    else if (a.mode == "train") a.options.mode = ScalingMode::VaryTrain;
    else throw ValidationError("bench: --mode must be test|train");
    detail::require(!a.sizes.empty(), "bench: --sizes is empty");
    for (auto n : a.sizes) detail::require(n >= static_cast<std::size_t>(std::max(cfg.pflicm.n_clusters, cfg.pknn.k + 1)),
                                           "bench: sizes must exceed the cluster count and K");
    const auto rows = timing_benchmark(a.sizes, algo, cfg.cv_options(), a.options);
    write_timing_csv(a.out, rows);
    for (const auto& r : rows) std::cout << r.n << ' ' << r.train_seconds << ' ' << r.test_seconds << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Possibilistic texture segmentation (PFLICM and PKNN)"};
    app.require_subcommand(1);
    app.get_formatter()->column_width(36);

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Generate synthetic textured images, masks and a fold manifest");
    s_synth->add_option("--out-dir", synth.out_dir, "Output directory")->required();
    s_synth->add_option("--n-images", synth.n_images, "Number of images")->capture_default_str();
    s_synth->add_option("--size", synth.size, "Image side length in pixels")->capture_default_str();
    s_synth->add_option("--classes", synth.classes, "Texture classes (flat,ripple,rocky,crater)")
        ->delimiter(',')
        ->capture_default_str();
    s_synth->add_option("--folds", synth.folds, "Cross-validation folds")->capture_default_str();
    s_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
    s_synth->add_option("--max-regions", synth.max_regions, "Maximum texture regions per image")->capture_default_str();
    int synth_jobs = 1;
    s_synth->add_option("--jobs", synth_jobs, "Images generated concurrently")->capture_default_str();

    FeaturesArgs feat;
    auto* s_feat = app.add_subcommand("features", "Compute the per-pixel texture feature stack");
    s_feat->add_option("--image", feat.image, "Input grayscale image (PNG or PGM)")->required()->check(CLI::ExistingFile);
    s_feat->add_option("--out", feat.out, "Feature stack cache file");
    s_feat->add_option("--superpixels", feat.superpixels, "Superpixel map (PNG or CSV)")->check(CLI::ExistingFile);
    s_feat->add_option("--csv", feat.csv, "Per-superpixel mean features as CSV (needs --superpixels)");
    auto feat_flags = add_pipeline_options(s_feat, kFeatures);

    SuperpixelsArgs spx;
    auto* s_sp = app.add_subcommand("superpixels", "Over-segment an image into superpixels");
    s_sp->add_option("--image", spx.image, "Input grayscale image")->required()->check(CLI::ExistingFile);
    s_sp->add_option("--out", spx.out, "Output superpixel map")->required();
    s_sp->add_option("--format", spx.format, "auto|png|csv")->capture_default_str();
    auto sp_flags = add_pipeline_options(s_sp, kSuperpixels);

    TrainArgs tp;
    auto* s_tp = app.add_subcommand("train-pflicm", "Cluster training superpixels with PFLICM");
    s_tp->add_option("--manifest", tp.manifest, "Dataset manifest.csv")->required()->check(CLI::ExistingFile);
    s_tp->add_option("--folds", tp.folds, "Fold ids to train on (default all)")->delimiter(',');
    s_tp->add_option("--out", tp.out, "Output model file")->required();
    s_tp->add_option("--trace", tp.trace, "Per-iteration objective trace CSV");
    auto tp_flags = add_pipeline_options(s_tp, kFeatures | kSuperpixels | kPflicm | kRun);

    LabelArgs lab;
    auto* s_lab = app.add_subcommand("label-clusters", "Assign a class to every PFLICM cluster from labeled data");
    s_lab->add_option("--model", lab.model, "Unlabeled PFLICM model")->required()->check(CLI::ExistingFile);
    s_lab->add_option("--manifest", lab.manifest, "Dataset manifest.csv")->required()->check(CLI::ExistingFile);
    s_lab->add_option("--folds", lab.folds, "Fold ids to label from (default all)")->delimiter(',');
    s_lab->add_option("--out", lab.out, "Output labeled model")->required();
    int lab_jobs = 1;
    s_lab->add_option("--jobs", lab_jobs, "Images processed concurrently")->capture_default_str();

    TrainArgs tk;
    auto* s_tk = app.add_subcommand("train-pknn", "Fit a PKNN classifier on labeled superpixels");
    s_tk->add_option("--manifest", tk.manifest, "Dataset manifest.csv")->required()->check(CLI::ExistingFile);
    s_tk->add_option("--folds", tk.folds, "Fold ids to train on (default all)")->delimiter(',');
    s_tk->add_option("--out", tk.out, "Output model file")->required();
    auto tk_flags = add_pipeline_options(s_tk, kFeatures | kSuperpixels | kPknn | kRun);

    SegmentArgs seg;
    auto* s_seg = app.add_subcommand("segment", "Segment an image (or classify a feature CSV) with a trained model");
    s_seg->add_option("--model", seg.model, "Trained model file")->required()->check(CLI::ExistingFile);
    s_seg->add_option("--image", seg.image, "Input grayscale image")->check(CLI::ExistingFile);
    s_seg->add_option("--superpixels", seg.superpixels, "Use this superpixel map instead of computing one")
        ->check(CLI::ExistingFile);
    s_seg->add_option("--out-dir", seg.out_dir, "Directory for class maps, crisp map and scores");
    s_seg->add_option("--features-csv", seg.features_csv, "Classify rows of a feature CSV instead of an image")
        ->check(CLI::ExistingFile);
    s_seg->add_option("--out-csv", seg.out_csv, "Per-sample class scores CSV");
    int seg_jobs = 1;
    s_seg->add_option("--jobs", seg_jobs, "Worker threads")->capture_default_str();

    EvaluateArgs ev;
    auto* s_ev = app.add_subcommand("evaluate", "Cross-validate an algorithm over the manifest's folds");
    s_ev->add_option("--manifest", ev.manifest, "Dataset manifest.csv")->required()->check(CLI::ExistingFile);
    s_ev->add_option("--algorithm", ev.algorithm, "pflicm|pknn")->capture_default_str();
    s_ev->add_option("--out-dir", ev.out_dir, "Directory for confusion matrices and summary")->required();
    s_ev->add_option("--timing", ev.timing, "Per-fold wall-clock timing CSV");
    auto ev_flags = add_pipeline_options(s_ev, kFeatures | kSuperpixels | kPflicm | kPknn | kRun);

    BenchArgs bench;
    auto* s_bench = app.add_subcommand("bench", "Time training and testing on synthetic samples of growing size");
    s_bench->add_option("--algorithm", bench.algorithm, "pflicm|pknn")->capture_default_str();
    s_bench->add_option("--mode", bench.mode, "test: vary test size; train: vary training size")->capture_default_str();
    s_bench->add_option("--sizes", bench.sizes, "Sample counts")->delimiter(',')->capture_default_str();
    s_bench->add_option("--fixed-size", bench.options.fixed_size, "Size of the set held fixed")->capture_default_str();
    s_bench->add_option("--dims", bench.options.dims, "Feature dimension")->capture_default_str();
    s_bench->add_option("--repetitions", bench.options.repetitions, "Repetitions (median reported)")
        ->capture_default_str();
    s_bench->add_option("--test-sweeps", bench.options.pflicm_test_sweeps, "PFLICM membership sweeps per prediction")
        ->capture_default_str();
    s_bench->add_option("--out", bench.out, "Timing CSV")->required();
    auto bench_flags = add_pipeline_options(s_bench, kPflicm | kPknn);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*s_synth) return cmd_synth(synth, synth_jobs);
        if (*s_feat) return cmd_features(feat, feat_flags->resolve());
        if (*s_sp) return cmd_superpixels(spx, sp_flags->resolve());
        if (*s_tp) return cmd_train_pflicm(tp, tp_flags->resolve());
        if (*s_lab) return cmd_label_clusters(lab, lab_jobs);
        if (*s_tk) return cmd_train_pknn(tk, tk_flags->resolve());
        if (*s_seg) return cmd_segment(seg, seg_jobs);
        if (*s_ev) return cmd_evaluate(ev, ev_flags->resolve());
        if (*s_bench) return cmd_bench(bench, bench_flags->resolve());
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
