#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "test_util.hpp"

using namespace pseg;
using pseg::testing::empty_graph;
using pseg::testing::random_features;
using pseg::testing::random_graph;
using pseg::testing::random_matrix;
using pseg::testing::random_memberships;

namespace {

PflicmParams params_with(double m, double q = 2.0, double b = 1.0) {
    PflicmParams p;
    p.m = m;
    p.q = q;
    p.b = b;
    return p;
}

FeatureMatrix two_blobs(std::size_t per_blob, double sep, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<double> v;
    for (std::size_t i = 0; i < 2 * per_blob; ++i) {
        v.push_back((i < per_blob ? 0.0 : sep) + noise(rng));
        v.push_back(noise(rng));
    }
    return FeatureMatrix(2 * per_blob, 2, v);
}

}  // namespace

// ---------------------------------------------------------------------------
// Fuzzy factor

TEST(FuzzyFactor, HandEvaluatedExample) {
    const FeatureMatrix x(2, 1, {0.0, 2.0});
    const Matrix centers(1, 1, {0.0});
    const Matrix u(1, 2, {0.5, 0.5});
    const auto g = NeighborGraph::from_edges(2, {{0, 1, 1.0}});
    EXPECT_DOUBLE_EQ(fuzzy_factor(0, 0, u, centers, g, x, 2.0), 0.5);
    EXPECT_DOUBLE_EQ(fuzzy_factors(u, center_distances(x, centers), g, 2.0)(0, 0), 0.5);
}

TEST(FuzzyFactor, FullMembershipNeighborsAndNoNeighborsGiveZero) {
    const FeatureMatrix x(3, 1, {0.0, 2.0, 5.0});
    const Matrix centers(1, 1, {1.0});
    const Matrix u(1, 3, {1.0, 1.0, 1.0});
    const auto g = NeighborGraph::from_edges(3, {{0, 1, 1.0}, {1, 2, 3.0}});
    for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(fuzzy_factor(n, 0, u, centers, g, x, 1.8), 0.0);
    EXPECT_EQ(fuzzy_factor(0, 0, Matrix(1, 3, 0.2), centers, empty_graph(3), x, 2.0), 0.0);
}

TEST(FuzzyFactor, BatchMatchesPerEntryOnRandomGraphs) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_features(25, 4, rng);
        const auto centers = random_matrix(3, 4, rng, -1, 1);
        const auto u = random_memberships(3, 25, rng);
        const auto g = random_graph(25, 0.2, rng);
        const auto all = fuzzy_factors(u, center_distances(x, centers), g, 1.7);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t n = 0; n < 25; ++n) {
                EXPECT_NEAR(all(c, n), fuzzy_factor(n, c, u, centers, g, x, 1.7), 1e-12);
                EXPECT_GE(all(c, n), 0.0);
            }
    }
}

// ---------------------------------------------------------------------------
// Memberships

TEST(Memberships, ClosedFormTwoClusterExample) {
    const auto u = detail::memberships_from_dissimilarity(Matrix(2, 1, {1.0, 3.0}), 2.0);
    EXPECT_NEAR(u(0, 0), 0.75, 1e-15);
    EXPECT_NEAR(u(1, 0), 0.25, 1e-15);
}

TEST(Memberships, ClosedFormMatchesConstrainedMinimizer) {
    // minimize u^2 * 1 + (1-u)^2 * 3 over u in [0,1] by golden-section search
    auto f = [](double u) { return u * u * 1.0 + (1 - u) * (1 - u) * 3.0; };
    double lo = 0.0, hi = 1.0;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int i = 0; i < 200; ++i) {
        const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
        (f(a) < f(b) ? hi : lo) = (f(a) < f(b) ? b : a);
    }
    // golden-section search resolves a minimizer only to about sqrt(epsilon)
    EXPECT_NEAR((lo + hi) / 2.0, 0.75, 1e-7);
}

TEST(Memberships, EqualDissimilarityIsUniformAndZeroPicksLowest) {
    for (double m : {1.2, 2.0, 3.5}) {
        const auto u = detail::memberships_from_dissimilarity(Matrix(2, 1, {2.0, 2.0}), m);
        EXPECT_NEAR(u(0, 0), 0.5, 1e-15);
    }
    const auto z = detail::memberships_from_dissimilarity(Matrix(3, 1, {1.0, 0.0, 0.0}), 2.0);
    EXPECT_EQ(z(1, 0), 1.0);
    EXPECT_EQ(z(0, 0) + z(2, 0), 0.0);
}

TEST(Memberships, SampleAtCenterGetsFullMembership) {
    const FeatureMatrix x(1, 2, {1.0, 2.0});
    const Matrix centers(2, 2, {1.0, 2.0, 5.0, 5.0});
    const auto u = update_memberships(x, centers, empty_graph(1), PflicmParams{}, Matrix{});
    EXPECT_EQ(u(0, 0), 1.0);
}

TEST(Memberships, ColumnsSumToOneWithFuzzyFactor) {
    std::mt19937_64 rng(3);
    const auto x = random_features(40, 3, rng);
    const auto centers = random_matrix(4, 3, rng, -1, 1);
    const auto u = update_memberships(x, centers, random_graph(40, 0.1, rng), PflicmParams{}, random_memberships(4, 40, rng));
    for (std::size_t n = 0; n < 40; ++n) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            s += u(c, n);
            EXPECT_GE(u(c, n), 0.0);
            EXPECT_LE(u(c, n), 1.0);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Typicalities

TEST(Typicalities, UnitRatioGivesHalfAndZeroDistanceGivesOne) {
    const FeatureMatrix x(2, 1, {1.0, 0.0});
    const auto t = update_typicalities(x, Matrix(1, 1, {0.0}), {1.0}, params_with(2.0, 2.0, 1.0));
    EXPECT_DOUBLE_EQ(t(0, 0), 0.5);
    EXPECT_EQ(t(0, 1), 1.0);
}

TEST(Typicalities, StrictlyDecreaseWithDistance) {
    const FeatureMatrix x(3, 1, {std::sqrt(10.0), 10.0, std::sqrt(1000.0)});
    const auto t = update_typicalities(x, Matrix(1, 1, {0.0}), {1.0}, PflicmParams{});
    EXPECT_GT(t(0, 0), t(0, 1));
    EXPECT_GT(t(0, 1), t(0, 2));
    EXPECT_GT(t(0, 2), 0.0);
}

// ---------------------------------------------------------------------------
// Centers and gammas

TEST(Centers, SingleSampleAndMidpoint) {
    const PflicmParams p;
    const auto one = update_centers(FeatureMatrix(1, 2, {3.0, 4.0}), Matrix(1, 1, {1.0}), Matrix(1, 1, {0.5}), p, Matrix{});
    EXPECT_DOUBLE_EQ(one.centers(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(one.centers(0, 1), 4.0);
    const auto mid = update_centers(FeatureMatrix(2, 1, {0.0, 2.0}), Matrix(1, 2, {0.5, 0.5}), Matrix(1, 2, {0.3, 0.3}), p,
                                    Matrix{});
    EXPECT_DOUBLE_EQ(mid.centers(0, 0), 1.0);
}

TEST(Centers, ZeroWeightKeepsPreviousCenterAndFlags) {
    const auto r = update_centers(FeatureMatrix(2, 1, {0.0, 2.0}), Matrix(2, 2, {1.0, 1.0, 0.0, 0.0}),
                                  Matrix(2, 2, {1.0, 1.0, 0.0, 0.0}), PflicmParams{}, Matrix(2, 1, {9.0, 7.0}));
    EXPECT_FALSE(r.stalled[0]);
    EXPECT_TRUE(r.stalled[1]);
    EXPECT_EQ(r.centers(1, 0), 7.0);
}

TEST(Centers, RandomInstanceMatchesDirectSummation) {
    std::mt19937_64 rng(4);
    const auto x = random_features(10, 3, rng);
    const auto u = random_memberships(2, 10, rng);
    const auto t = random_matrix(2, 10, rng);
    const PflicmParams p;
    const auto got = update_centers(x, u, t, p, Matrix{}).centers;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 3; ++k) {
            long double num = 0, den = 0;
            for (std::size_t n = 0; n < 10; ++n) {
                const long double w = p.a * std::pow(static_cast<long double>(u(c, n)), p.m) +
                                      p.b * std::pow(static_cast<long double>(t(c, n)), p.q);
                num += w * x(n, k);
                den += w;
            }
            EXPECT_NEAR(got(c, k), static_cast<double>(num / den), 1e-12);
        }
}

TEST(Gammas, CollapsedClusterIsFloored) {
    const auto g = update_gammas(FeatureMatrix(3, 1, {2.0, 2.0, 2.0}), Matrix(1, 1, {2.0}), Matrix(1, 3, 1.0), PflicmParams{});
    EXPECT_EQ(g[0], kGammaFloor);
}

TEST(Gammas, UniformMembershipsGiveMeanSquaredDistance) {
    const FeatureMatrix x(3, 1, {0.0, 1.0, 3.0});
    const auto g = update_gammas(x, Matrix(1, 1, {1.0}), Matrix(1, 3, 0.4), PflicmParams{});
    EXPECT_NEAR(g[0], (1.0 + 0.0 + 4.0) / 3.0, 1e-15);
}

// ---------------------------------------------------------------------------
// Objective

TEST(Objective, TypicalityUpdateIsMinimizerOfItsTerms) {
    std::mt19937_64 rng(5);
    const auto x = random_features(12, 2, rng);
    const auto centers = random_matrix(2, 2, rng, -1, 1);
    const auto u = random_memberships(2, 12, rng);
    const PflicmParams p;
    const auto gammas = update_gammas(x, centers, u, p);
    const auto t = update_typicalities(x, centers, gammas, p);
    const auto g = empty_graph(12);
    const double j0 = objective(x, g, u, t, centers, gammas, p);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t n = 0; n < 12; ++n)
            for (double step : {-0.1, 0.1}) {
                Matrix tp = t;
                tp(c, n) = std::clamp(t(c, n) + step, 0.0, 1.0);
                if (tp(c, n) == t(c, n)) continue;
                EXPECT_GT(objective(x, g, u, tp, centers, gammas, p), j0);
            }
}

TEST(Objective, MembershipTermIsLinearInA) {
    std::mt19937_64 rng(6);
    const auto x = random_features(15, 3, rng);
    const auto centers = random_matrix(3, 3, rng, -1, 1);
    const auto u = random_memberships(3, 15, rng);
    const auto t = random_matrix(3, 15, rng);
    const auto graph = random_graph(15, 0.3, rng);
    const std::vector<double> gammas{0.5, 1.0, 2.0};
    PflicmParams p;
    PflicmParams p0 = p;
    p0.a = 0.0;
    PflicmParams p2 = p;
    p2.a = 2.0 * p.a;
    const double base = objective(x, graph, u, t, centers, gammas, p0);
    const double term = objective(x, graph, u, t, centers, gammas, p) - base;
    EXPECT_NEAR(objective(x, graph, u, t, centers, gammas, p2) - base, 2.0 * term, 1e-9 * std::abs(term));
}

// ---------------------------------------------------------------------------
// Fit

TEST(Fit, IdenticalSamplesGiveZeroObjective) {
    const FeatureMatrix x(5, 2, std::vector<double>(10, 0.7));
    PflicmParams p;
    p.n_clusters = 1;
    const auto fit = fit_pflicm(x, empty_graph(5), p, 0);
    EXPECT_EQ(fit.model.centers, Matrix(1, 2, {0.7, 0.7}));
    for (std::size_t n = 0; n < 5; ++n) {
        EXPECT_EQ(fit.assignments.memberships(0, n), 1.0);
        EXPECT_EQ(fit.assignments.typicalities(0, n), 1.0);
    }
    EXPECT_EQ(fit.trace.back().objective, 0.0);
}

TEST(Fit, TwoBlobsRecoverBlobMeans) {
    const auto x = two_blobs(30, 4.0, 7);
    PflicmParams p;
    p.n_clusters = 2;
    const auto fit = fit_pflicm(x, empty_graph(60), p, 1);
    EXPECT_TRUE(fit.converged);
    for (std::size_t b = 0; b < 2; ++b) {
        double mx = 0, my = 0;
        for (std::size_t i = b * 30; i < (b + 1) * 30; ++i) mx += x(i, 0) / 30, my += x(i, 1) / 30;
        double best = 1e9;
        for (std::size_t c = 0; c < 2; ++c)
            best = std::min(best, std::hypot(fit.model.centers(c, 0) - mx, fit.model.centers(c, 1) - my));
        EXPECT_LT(best, 0.05 * 4.0);
    }
}

TEST(Fit, SeedsAgreeUpToPermutation) {
    const auto x = two_blobs(25, 3.0, 8);
    PflicmParams p;
    p.n_clusters = 2;
    auto crisp = [&](std::uint64_t seed) {
        const auto f = fit_pflicm(x, empty_graph(50), p, seed);
        std::vector<int> l;
        for (std::size_t n = 0; n < 50; ++n) l.push_back(f.assignments.memberships(0, n) > 0.5 ? 0 : 1);
        return l;
    };
    const auto a = crisp(1);
    for (std::uint64_t s : {2u, 3u, 11u}) {
        const auto b = crisp(s);
        std::map<int, int> mapping;
        for (std::size_t n = 0; n < 50; ++n) {
            auto [it, fresh] = mapping.emplace(a[n], b[n]);
            EXPECT_EQ(it->second, b[n]);
        }
    }
}

TEST(Fit, FewerSamplesThanClustersRejected) {
    PflicmParams p;
    p.n_clusters = 4;
    EXPECT_THROW(fit_pflicm(FeatureMatrix(3, 1, {1, 2, 3}), empty_graph(3), p, 0), ValidationError);
}

TEST(Fit, TraceIsDeterministic) {
    std::mt19937_64 rng(9);
    const auto x = random_features(60, 3, rng);
    const auto g = random_graph(60, 0.05, rng);
    const auto a = fit_pflicm(x, g, PflicmParams{}, 5);
    const auto b = fit_pflicm(x, g, PflicmParams{}, 5);
    EXPECT_EQ(a.model.centers, b.model.centers);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].objective, b.trace[i].objective);
}

// ---------------------------------------------------------------------------
// Labeling and prediction

TEST(LabelClusters, DominantClassAndTies) {
    PflicmModel m;
    m.centers = Matrix(2, 1, {0.0, 1.0});
    m.gammas = {1.0, 1.0};
    const LabeledDataset data(FeatureMatrix(4, 1, {0, 0, 1, 1}), {0, 1, 2, 2}, {"a", "b", "c"});
    AssignmentMaps assign{Matrix(2, 4, {0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0}),
                          Matrix(2, 4, {1.0, 1.0, 0.0, 0.0, 0.1, 0.1, 1.0, 1.0}), {}};
    const auto r = label_clusters(m, data, assign);
    EXPECT_EQ(*r.model.cluster_labels, (std::vector<int>{0, 2}));  // cluster 0 ties a/b -> a
    EXPECT_TRUE(r.fallback_clusters.empty());
}

TEST(LabelClusters, ZeroWeightClusterGetsMajorityAndIsFlagged) {
    PflicmModel m;
    m.centers = Matrix(2, 1, {0.0, 1.0});
    m.gammas = {1.0, 1.0};
    const LabeledDataset data(FeatureMatrix(3, 1, {0, 0, 1}), {1, 1, 0}, {"a", "b"});
    AssignmentMaps assign{Matrix(2, 3, {1, 1, 1, 0, 0, 0}), Matrix(2, 3, {1, 1, 1, 0, 0, 0}), {}};
    const auto r = label_clusters(m, data, assign);
    EXPECT_EQ((*r.model.cluster_labels)[1], 1);
    EXPECT_EQ(r.fallback_clusters, std::vector<int>{1});
}

TEST(LabelClusters, RandomInstancesMatchDirectSums) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 30; ++trial) {
        PflicmModel m;
        m.centers = random_matrix(3, 2, rng);
        m.gammas = {1.0, 1.0, 1.0};
        std::vector<int> labels(20);
        for (auto& l : labels) l = static_cast<int>(rng() % 4);
        const LabeledDataset data(random_features(20, 2, rng), labels, {"a", "b", "c", "d"});
        AssignmentMaps a{random_memberships(3, 20, rng), random_matrix(3, 20, rng), {}};
        const auto got = *label_clusters(m, data, a).model.cluster_labels;
        for (std::size_t c = 0; c < 3; ++c) {
            std::vector<double> w(4, 0.0);
            for (std::size_t n = 0; n < 20; ++n)
                w[static_cast<std::size_t>(labels[n])] += a.memberships(c, n) * a.typicalities(c, n);
            EXPECT_EQ(got[c], std::max_element(w.begin(), w.end()) - w.begin());
        }
    }
}

TEST(Predict, PointAtCenterAndFarPoint) {
    PflicmModel m;
    m.centers = Matrix(2, 2, {0.0, 0.0, 3.0, 0.0});
    m.gammas = {0.5, 1.0};
    const double far = 100.0 * 1.0;
    const FeatureMatrix x(2, 2, {0.0, 0.0, 1.5, far});
    const auto a = predict_pflicm(m, x, empty_graph(2));
    EXPECT_EQ(a.memberships(0, 0), 1.0);
    EXPECT_EQ(a.typicalities(0, 0), 1.0);
    EXPECT_NEAR(a.memberships(0, 1) + a.memberships(1, 1), 1.0, 1e-12);
    EXPECT_LT(a.typicalities(0, 1), 0.1);
    EXPECT_LT(a.typicalities(1, 1), 0.1);
    EXPECT_THROW(predict_pflicm(m, x, empty_graph(2), true), ValidationError);
}

TEST(Predict, TrainingSetReproducesFitMemberships) {
    std::mt19937_64 rng(12);
    const auto x = random_features(80, 3, rng);
    const auto g = random_graph(80, 0.04, rng);
    PflicmParams p;
    p.tol = 1e-9;
    p.max_iters = 3000;
    const auto fit = fit_pflicm(x, g, p, 2);
    ASSERT_TRUE(fit.converged);
    const auto a = predict_pflicm(fit.model, x, g);
    for (std::size_t i = 0; i < a.memberships.data().size(); ++i)
        EXPECT_NEAR(a.memberships.data()[i], fit.assignments.memberships.data()[i], 1e-6);
}

TEST(Predict, ClassProductMapTakesBestClusterPerClass) {
    PflicmModel m;
    m.centers = Matrix(3, 1, {0.0, 1.0, 2.0});
    m.gammas = {1, 1, 1};
    m.cluster_labels = std::vector<int>{0, 1, 0};
    m.class_names = {"a", "b"};
    AssignmentMaps a{Matrix(3, 1, {0.2, 0.3, 0.5}), Matrix(3, 1, {0.9, 0.5, 0.4}), {}};
    const auto s = class_product_maps(a, m);
    EXPECT_DOUBLE_EQ(s(0, 0), 0.2);
    EXPECT_DOUBLE_EQ(s(1, 0), 0.15);
}

TEST(NeighborGraphType, FromEdgesValidatesAndSymmetrizes) {
    const auto g = NeighborGraph::from_edges(3, {{0, 1, 2.0}, {1, 0, 2.0}, {1, 2, 1.0}});
    EXPECT_EQ(g.neighbors(1).size(), 2u);
    EXPECT_EQ(g.edge_count(), 2u);
    EXPECT_THROW(NeighborGraph::from_edges(2, {{0, 0, 1.0}}), ValidationError);
    EXPECT_THROW(NeighborGraph::from_edges(2, {{0, 2, 1.0}}), ValidationError);
    EXPECT_THROW(NeighborGraph::from_edges(2, {{0, 1, -1.0}}), ValidationError);
}

TEST(NeighborGraphType, TwoByTwoGridHasTwoNeighborsEach) {
    LabelImage l(2, 2);
    l.data() = {0, 1, 2, 3};
    const auto g = build_neighbor_graph(relabel_superpixels(l));
    for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(g.neighbors(n).size(), 2u);
    EXPECT_TRUE(build_neighbor_graph(relabel_superpixels(LabelImage(3, 3, 0))).neighbors(0).empty());
}
