// Two tight 2-D clusters and three probes: one inside a cluster, one halfway
// between them, one far from both. Prints PFLICM memberships/typicalities and
// PKNN confidences for each probe.

#include <cstdio>
#include <random>
#include <vector>

#include "pseg/pseg.hpp"

int main() {
    using namespace pseg;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<double> values;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
        const double cx = i < 20 ? 0.0 : 2.0;
        values.push_back(cx + noise(rng));
        values.push_back(noise(rng));
        labels.push_back(i < 20 ? 0 : 1);
    }
    const FeatureMatrix x(40, 2, values);
    const auto empty = NeighborGraph::from_edges(40, {});

    PflicmParams params;
    params.n_clusters = 2;
    const auto fit = fit_pflicm(x, empty, params, 3);
    const auto model = label_clusters(fit.model, LabeledDataset(x, labels, {"left", "right"}), fit.assignments).model;
    const auto pknn = fit_pknn(LabeledDataset(x, labels, {"left", "right"}), PknnParams{});

    const FeatureMatrix probes(3, 2, {0.0, 0.0, 1.0, 0.0, 1.0, 40.0});
    const char* names[] = {"inside left", "midpoint", "far away"};
    const auto assign = predict_pflicm(model, probes, NeighborGraph::from_edges(3, {}), true);
    std::printf("%-12s %20s %20s %20s\n", "probe", "pflicm u (L,R)", "pflicm t (L,R)", "pknn conf (L,R)");
    for (std::size_t p = 0; p < 3; ++p) {
        const auto conf = classify(pknn, probes.row(p));
        const std::size_t l = (*model.cluster_labels)[0] == 0 ? 0 : 1;
        const std::size_t r = 1 - l;
        std::printf("%-12s %9.4f %9.4f  %9.4f %9.4f  %9.4f %9.4f\n", names[p], assign.memberships(l, p),
                    assign.memberships(r, p), assign.typicalities(l, p), assign.typicalities(r, p), conf[0], conf[1]);
    }
    std::printf("\nMemberships always sum to one; typicalities and PKNN confidences\n"
                "fall toward zero for the far probe.\n");
    return 0;
}
