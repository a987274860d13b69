// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pseg/pseg.hpp"

using namespace pseg;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, double seconds, double limit, const std::string& detail) {
    const bool in_time = seconds <= limit;
    if (!(ok && in_time)) ++failures;
    std::printf("%s C%d %-32s %8.2fs (limit %.0fs)  %s%s\n", ok && in_time ? "PASS" : "FAIL", id, name.c_str(), seconds,
                limit, detail.c_str(), in_time ? "" : "  [over time limit]");
    std::fflush(stdout);
}

template <typename Fn>
void criterion(int id, const std::string& name, double limit, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = fn(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    report(id, name, ok, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), limit, detail);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

FeatureMatrix uniform(std::size_t n, std::size_t d, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n * d);
    for (double& x : v) x = u(rng);
    return FeatureMatrix(n, d, std::move(v));
}

Matrix stochastic(std::size_t c, std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    Matrix m(c, n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i) s += (m(i, j) = u(rng));
        for (std::size_t i = 0; i < c; ++i) m(i, j) /= s;
    }
    return m;
}

double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// Exhaustive k nearest neighbors ordered by (squared distance, index).
std::vector<std::pair<double, std::size_t>> scan(const Matrix& pts, std::span<const double> q, std::size_t k,
                                                 long skip = -1) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < pts.rows(); ++i)
        if (static_cast<long>(i) != skip) all.emplace_back(dist2(pts.row(i), q), i);
    std::sort(all.begin(), all.end());
    all.resize(k);
    return all;
}

// ---------------------------------------------------------------------------

bool oracles(std::string& detail) {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    const int instances = 120;
    auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
    for (int inst = 0; inst < instances; ++inst) {
        const std::size_t n = 5 + rng() % 46, d = 1 + rng() % 10, c = 1 + rng() % 4;
        const auto x = uniform(n, d, rng);
        PflicmParams p;
        p.a = 0.5 + (rng() % 100) / 10.0;
        p.b = 0.1 + (rng() % 100) / 20.0;
        p.m = 1.2 + (rng() % 100) / 40.0;
        p.q = 1.2 + (rng() % 100) / 40.0;
        const Matrix u = stochastic(c, n, rng);
        Matrix t(c, n);
        for (double& v : t.data()) v = 0.01 + (rng() % 1000) / 1010.0;
        const Matrix prev(c, d, 0.0);

        const auto cu = update_centers(x, u, t, p, prev);
        for (std::size_t ci = 0; ci < c; ++ci) {
            std::vector<long double> num(d, 0.0L);
            long double den = 0.0L;
            for (std::size_t i = 0; i < n; ++i) {
                const long double w = p.a * std::pow(static_cast<long double>(u(ci, i)), p.m) +
                                      p.b * std::pow(static_cast<long double>(t(ci, i)), p.q);
                den += w;
                for (std::size_t k = 0; k < d; ++k) num[k] += w * x(i, k);
            }
            for (std::size_t k = 0; k < d; ++k) track(cu.centers(ci, k), static_cast<double>(num[k] / den));
        }

        const auto g = update_gammas(x, cu.centers, u, p);
        for (std::size_t ci = 0; ci < c; ++ci) {
            long double num = 0.0L, den = 0.0L;
            for (std::size_t i = 0; i < n; ++i) {
                const long double w = std::pow(static_cast<long double>(u(ci, i)), p.m);
                long double dd = 0.0L;
                for (std::size_t k = 0; k < d; ++k) dd += (x(i, k) - cu.centers(ci, k)) * (x(i, k) - cu.centers(ci, k));
                num += w * dd;
                den += w;
            }
            track(g[ci], std::max(1e-12, static_cast<double>(num / den)));
        }

        const int classes = 2 + static_cast<int>(rng() % 3);
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng() % static_cast<unsigned>(classes));
        std::vector<std::string> names;
        for (int l = 0; l < classes; ++l) names.push_back("c" + std::to_string(l));
        PknnParams kp;
        kp.k = 1 + static_cast<int>(rng() % std::min<std::size_t>(10, n - 1));
        kp.m = 1.3 + (rng() % 100) / 40.0;
        kp.eta = (rng() % 10) / 40.0;
        const LabeledDataset data(x, labels, names);
        const auto model = fit_pknn(data, kp);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> cnt(static_cast<std::size_t>(classes), 0.0);
            for (const auto& [dd, j] : scan(x.matrix(), x.row(i), static_cast<std::size_t>(kp.k), static_cast<long>(i)))
                cnt[static_cast<std::size_t>(labels[j])] += 1.0;
            for (int l = 0; l < classes; ++l)
                track(model.train_fuzzy(i, static_cast<std::size_t>(l)),
                      (l == labels[i] ? 0.51 : 0.0) + 0.49 * cnt[static_cast<std::size_t>(l)] / kp.k);
        }
        for (double dd : {0.0, kp.eta, 0.3, 1.7, 9.0}) {
            const double e = dd > kp.eta ? dd - kp.eta : 0.0;
            track(possibilistic_weight(dd, kp), 1.0 / (1.0 + std::pow(e, 2.0 / (kp.m - 1.0))));
        }
        const auto queries = uniform(3, d, rng, -1.5, 1.5);
        for (std::size_t qi = 0; qi < 3; ++qi) {
            std::vector<double> want(static_cast<std::size_t>(classes), 0.0);
            for (const auto& [dd, j] : scan(x.matrix(), queries.row(qi), static_cast<std::size_t>(kp.k))) {
                const double e = std::max(0.0, std::sqrt(dd) - kp.eta);
                const double w = 1.0 / (1.0 + std::pow(e, 2.0 / (kp.m - 1.0)));
                for (int l = 0; l < classes; ++l) want[static_cast<std::size_t>(l)] += model.train_fuzzy(j, static_cast<std::size_t>(l)) * w;
            }
            const auto got = classify(model, queries.row(qi));
            for (int l = 0; l < classes; ++l) track(got[static_cast<std::size_t>(l)], want[static_cast<std::size_t>(l)] / kp.k);
        }
    }
    detail = std::to_string(instances) + " instances, max abs error " + fmt(worst) + " (tol 1e-12)";
    return worst <= 1e-12;
}

bool constraints(std::string& detail) {
    std::mt19937_64 rng(202);
    const std::size_t N = 200, C = 4;
    const auto x = uniform(N, 5, rng);
    std::vector<std::tuple<int, int, double>> edges;
    for (std::size_t i = 0; i + 1 < N; ++i) edges.emplace_back(static_cast<int>(i), static_cast<int>(i + 1), 1.0);
    for (std::size_t i = 0; i + 10 < N; i += 3) edges.emplace_back(static_cast<int>(i), static_cast<int>(i + 10), 2.0);
    const auto graph = NeighborGraph::from_edges(N, edges);
    PflicmParams p;
    p.n_clusters = static_cast<int>(C);

    Matrix centers(C, 5);
    for (std::size_t c = 0; c < C; ++c) std::copy(x.row(c * 37).begin(), x.row(c * 37).end(), centers.row(c).begin());
    Matrix u = update_memberships(x, centers, graph, p, Matrix{});
    auto gammas = update_gammas(x, centers, u, p);
    double worst_sum = 0.0;
    bool ok = true;
    for (int it = 0; it < 50; ++it) {
        Matrix un = update_memberships(x, centers, graph, p, u);
        const Matrix t = update_typicalities(x, centers, gammas, p);
        centers = update_centers(x, un, t, p, centers).centers;
        gammas = update_gammas(x, centers, un, p);
        u = std::move(un);
        const Matrix g = fuzzy_factors(u, center_distances(x, centers), graph, p.m);
        for (std::size_t n = 0; n < N; ++n) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                s += u(c, n);
                ok &= u(c, n) >= 0.0 && u(c, n) <= 1.0;
                ok &= t(c, n) > 0.0 && t(c, n) <= 1.0;
                ok &= g(c, n) >= 0.0;
            }
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
        const double j = objective(x, graph, u, t, centers, gammas, p);
        ok &= std::isfinite(j) && j >= 0.0;
    }
    detail = "50 iterations, max |sum u - 1| " + fmt(worst_sum) + ", bounds " + (ok ? "held" : "violated");
    return ok && worst_sum <= 1e-9;
}

bool kdtree(std::string& detail) {
    std::mt19937_64 rng(303);
    int mismatches = 0, queries = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t n = 30 + rng() % 471;
        // coarse grid values force exact distance ties
        std::vector<double> v(n * 34);
        for (double& e : v) e = inst % 2 ? static_cast<double>(rng() % 3) : std::uniform_real_distribution<double>(-1, 1)(rng);
        const Matrix pts(n, 34, v);
        const KdTree tree(pts);
        for (std::size_t k : {1u, 6u, 25u}) {
            std::vector<double> q(34);
            for (double& e : q) e = inst % 2 ? static_cast<double>(rng() % 3) : std::uniform_real_distribution<double>(-1, 1)(rng);
            const auto got = knn_search(tree, q, k);
            const auto want = scan(pts, q, k);
            ++queries;
            for (std::size_t i = 0; i < k; ++i)
                if (got[i].index != want[i].second || got[i].distance != std::sqrt(want[i].first)) {
                    ++mismatches;
                    break;
                }
        }
    }
    detail = std::to_string(queries) + " queries, " + std::to_string(mismatches) + " mismatches";
    return mismatches == 0;
}

bool outliers(std::string& detail) {
    std::mt19937_64 rng(404);
    const double radius = 0.5, sep = 4.0;
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi), rad(0.0, 1.0);
    std::vector<double> v;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        const double a = ang(rng), r = radius * std::sqrt(rad(rng));
        v.push_back((i < 30 ? 0.0 : sep) + r * std::cos(a));
        v.push_back(r * std::sin(a));
        labels.push_back(i < 30 ? 0 : 1);
    }
    const FeatureMatrix x(60, 2, v);
    const LabeledDataset data(x, labels, {"left", "right"});
    PflicmParams p;
    p.n_clusters = 2;
    const auto fit = fit_pflicm(x, NeighborGraph::from_edges(60, {}), p, 1);
    const auto pknn = fit_pknn(data, PknnParams{});

    // probe on the perpendicular bisector, 20 radii from both cluster centers
    const double far = 20.0 * radius;
    const FeatureMatrix probe(1, 2, {sep / 2.0, std::sqrt(far * far - sep * sep / 4.0)});
    const auto conf = classify(pknn, probe.row(0));
    const auto a = predict_pflicm(fit.model, probe, NeighborGraph::from_edges(1, {}));
    const double max_conf = *std::max_element(conf.begin(), conf.end());
    const double max_t = std::max(a.typicalities(0, 0), a.typicalities(1, 0));

    const auto& c = fit.model.centers;
    const FeatureMatrix mid(1, 2, {(c(0, 0) + c(1, 0)) / 2.0, (c(0, 1) + c(1, 1)) / 2.0});
    const auto am = predict_pflicm(fit.model, mid, NeighborGraph::from_edges(1, {}));
    const double mid_err = std::max(std::abs(am.memberships(0, 0) - 0.5), std::abs(am.memberships(1, 0) - 0.5));
    detail = "far: max conf " + fmt(max_conf) + ", max t " + fmt(max_t) + "; midpoint |u - 0.5| " + fmt(mid_err);
    return max_conf < 0.1 && max_t < 0.1 && mid_err <= 1e-6;
}

bool protocol(std::string& detail) {
    const std::vector<TextureKind> kinds{TextureKind::Flat, TextureKind::Ripple, TextureKind::Rocky, TextureKind::Crater};
    const auto ds = generate_dataset(30, 256, kinds, 3, 42);
    PipelineConfig cfg;
    std::vector<EvalImage> images(ds.images.size(), EvalImage{FeatureMatrix(1, 1, {0.0}), NeighborGraph{}, {}});
    parallel_for(images.size(), 4, [&](std::size_t i) {
        auto prep = prepare_image(ds.images[i].image, cfg);
        auto truth = superpixel_majority_labels(ds.images[i].mask, prep.superpixels, 4);
        images[i] = EvalImage{std::move(prep.features), std::move(prep.graph), std::move(truth)};
    });
    bool ok = true;
    for (auto algo : {Algorithm::Pflicm, Algorithm::Pknn}) {
        const auto pooled = run_cross_validation(images, ds.class_names, ds.plan, algo, cfg.cv_options()).pooled();
        const double acc = pooled.accuracy(), flat = pooled.recall(0);
        detail += std::string(algorithm_name(algo)) + " acc " + fmt(acc) + " flat recall " + fmt(flat) + "; ";
        ok &= acc >= 0.85 && flat >= 0.90;
    }
    return ok;
}

/// Interleaves the timed calls and keeps each one's fastest run, which is
/// the estimate least disturbed by other load on the machine.
std::pair<double, double> interleaved_min(int reps, const std::function<void()>& a, const std::function<void()>& b) {
    double ta = 1e300, tb = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        a();
        ta = std::min(ta, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        t0 = std::chrono::steady_clock::now();
        b();
        tb = std::min(tb, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return {ta, tb};
}

bool scaling(std::string& detail) {
    const std::vector<std::string> names{"c0", "c1", "c2", "c3"};
    CvOptions opt;
    opt.normalize = false;
    const int reps = 9;

    const auto train = detail::benchmark_samples(4000, 34, 4, 7);
    const auto small = detail::benchmark_samples(4000, 34, 4, 8);
    const auto large = detail::benchmark_samples(8000, 34, 4, 9);
    const auto knn = train_segmenter({&train}, names, Algorithm::Pknn, opt);
    volatile std::size_t sink = 0;
    const auto [k1, k2] = interleaved_min(
        reps, [&] { sink = sink + segment_samples(knn, small.features, small.graph).labels.size(); },
        [&] { sink = sink + segment_samples(knn, large.features, large.graph).labels.size(); });
    const double pknn_ratio = k2 / k1;

    // fixed membership sweeps so both predictions do the same amount of work
    const auto tr_small = detail::benchmark_samples(1000, 34, 4, 10);
    const auto tr_large = detail::benchmark_samples(4000, 34, 4, 11);
    const auto test = detail::benchmark_samples(4000, 34, 4, 12);
    const auto m1 = *train_segmenter({&tr_small}, names, Algorithm::Pflicm, opt).pflicm;
    const auto m4 = *train_segmenter({&tr_large}, names, Algorithm::Pflicm, opt).pflicm;
    auto predict = [&](const PflicmModel& m) {
        Matrix u = update_memberships(test.features, m.centers, test.graph, m.params, Matrix{});
        for (int s = 0; s < 10; ++s) u = update_memberships(test.features, m.centers, test.graph, m.params, u);
        AssignmentMaps a{std::move(u), update_typicalities(test.features, m.centers, m.gammas, m.params), {}};
        sink = sink + crisp_labels_pflicm(a, m).size();
    };
    const auto [f1, f4] = interleaved_min(reps, [&] { predict(m1); }, [&] { predict(m4); });
    const double pflicm_ratio = f4 / f1;
    detail = "pknn test x" + fmt(pknn_ratio) + " for 2x test set (<= 2.5); pflicm test x" + fmt(pflicm_ratio) +
             " for 4x train set (0.7..1.3)";
    return pknn_ratio <= 2.5 && std::abs(pflicm_ratio - 1.0) <= 0.3;
}

int sh(const std::string& cmd) {
    const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool determinism(std::string& detail) {
    const auto root = std::filesystem::temp_directory_path() / ("pseg_accept_" + std::to_string(getpid()));
    std::filesystem::remove_all(root);
    const std::string cli = PSEG_CLI_PATH;
    std::vector<std::filesystem::path> runs;
    for (int r = 0; r < 2; ++r) {
        const auto dir = root / ("run" + std::to_string(r));
        const auto data = (dir / "data").string(), manifest = data + "/manifest.csv";
        const std::vector<std::string> steps{
            "synth --out-dir " + data + " --n-images 6 --size 96 --folds 3 --seed 11",
            "evaluate --manifest " + manifest + " --algorithm pflicm --seed 11 --out-dir " + (dir / "eval").string(),
            "evaluate --manifest " + manifest + " --algorithm pknn --out-dir " + (dir / "eval").string(),
            "train-pflicm --manifest " + manifest + " --seed 11 --out " + (dir / "u.json").string() + " --trace " +
                (dir / "trace.csv").string(),
            "label-clusters --model " + (dir / "u.json").string() + " --manifest " + manifest + " --out " +
                (dir / "m.json").string(),
            "segment --model " + (dir / "m.json").string() + " --image " + data + "/images/img_000.png --out-dir " +
                (dir / "seg").string(),
        };
        for (const auto& s : steps)
            if (int rc = sh(cli + " " + s); rc != 0) {
                detail = "step failed (rc " + std::to_string(rc) + "): " + s;
                return false;
            }
        runs.push_back(dir);
    }
    int compared = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(runs[0])) {
        if (e.path().extension() != ".csv") continue;
        const auto other = runs[1] / std::filesystem::relative(e.path(), runs[0]);
        std::ifstream a(e.path(), std::ios::binary), b(other, std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
        if (!b || sa != sb) {
            detail = "differs: " + std::filesystem::relative(e.path(), runs[0]).string();
            return false;
        }
        ++compared;
    }
    std::filesystem::remove_all(root);
    detail = std::to_string(compared) + " CSV artifacts byte-identical across two runs";
    return compared > 0;
}

}  // namespace

int main() {
    criterion(1, "update-equation oracles", 10, oracles);
    criterion(2, "pflicm constraint suite", 30, constraints);
    criterion(3, "kd-tree exactness", 30, kdtree);
    criterion(4, "possibilistic outliers", 10, outliers);
    criterion(5, "synthetic 3-fold protocol", 900, protocol);
    criterion(6, "scaling", 300, scaling);
    criterion(7, "cli determinism", 300, determinism);
    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
