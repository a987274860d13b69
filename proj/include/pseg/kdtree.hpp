#ifndef PSEG_KDTREE_HPP
#define PSEG_KDTREE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/matrix.hpp"

namespace pseg {

struct NeighborHit {
    std::size_t index;
    double distance;
    friend bool operator==(const NeighborHit&, const NeighborHit&) = default;
};

/// Exact k-nearest-neighbor index (Euclidean). Nodes split at the median
/// of their widest-spread dimension; leaves hold at most `leaf_size` points.
/// Results are ordered by (distance, index), so equal distances resolve to
/// the lower index exactly as an exhaustive scan would.
class KdTree {
public:
    static constexpr std::size_t kDefaultLeafSize = 16;

    KdTree() = default;
    explicit KdTree(Matrix points, std::size_t leaf_size = kDefaultLeafSize)
        : points_(std::move(points)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
        order_.resize(points_.rows());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        if (!order_.empty()) build(0, order_.size());
    }

    std::size_t size() const noexcept { return points_.rows(); }
    std::size_t dims() const noexcept { return points_.cols(); }
    const Matrix& points() const noexcept { return points_; }

    std::vector<NeighborHit> knn(std::span<const double> query, std::size_t k) const {
        if (k > size()) throw ValidationError("knn_search: k exceeds number of indexed points");
        detail::require(query.size() == dims(), "knn_search: query dimension differs from index");
        std::vector<NeighborHit> out;
        if (k == 0) return out;
        Heap heap;
        search(0, query, k, heap);
        out.resize(heap.size());
        for (std::size_t i = heap.size(); i-- > 0;) {
            out[i] = {heap.top().second, std::sqrt(heap.top().first)};
            heap.pop();
        }
        return out;
    }

private:
    struct Node {
        std::size_t begin, end;
        std::size_t left = 0, right = 0;  // 0 = none (root is never a child)
        std::vector<double> lo, hi;
    };
    using Entry = std::pair<double, std::size_t>;  // (squared distance, index)
    using Heap = std::priority_queue<Entry>;       // max-heap, lexicographic

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back({begin, end, 0, 0, {}, {}});
        const std::size_t d = dims();
        std::vector<double> lo(d, std::numeric_limits<double>::infinity());
        std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
        for (std::size_t i = begin; i < end; ++i) {
            const auto p = points_.row(order_[i]);
            for (std::size_t k = 0; k < d; ++k) {
                lo[k] = std::min(lo[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        }
        std::size_t split = 0;
        for (std::size_t k = 1; k < d; ++k)
            if (hi[k] - lo[k] > hi[split] - lo[split]) split = k;
        const bool leaf = end - begin <= leaf_size_ || hi[split] == lo[split];
        nodes_[id].lo = std::move(lo);
        nodes_[id].hi = std::move(hi);
        if (leaf) return id;
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                             const double va = points_(a, split), vb = points_(b, split);
                             return va < vb || (va == vb && a < b);
                         });
        const std::size_t l = build(begin, mid);
        const std::size_t r = build(mid, end);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    // Sum of per-dimension gaps in the same index order as
    // squared_distance, so rounding keeps it <= any contained point's value.
    static double box_bound(const Node& node, std::span<const double> q) {
        double s = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) {
            double gap = 0.0;
            if (q[k] < node.lo[k]) gap = node.lo[k] - q[k];
            else if (q[k] > node.hi[k]) gap = q[k] - node.hi[k];
            s += gap * gap;
        }
        return s;
    }

    void search(std::size_t id, std::span<const double> q, std::size_t k, Heap& heap) const {
        const Node& node = nodes_[id];
        if (node.left == 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t idx = order_[i];
                const Entry e{squared_distance(q, points_.row(idx)), idx};
                if (heap.size() < k) {
                    heap.push(e);
                } else if (e < heap.top()) {
                    heap.pop();
                    heap.push(e);
                }
            }
            return;
        }
        const Node& l = nodes_[node.left];
        const Node& r = nodes_[node.right];
        const double bl = box_bound(l, q);
        const double br = box_bound(r, q);
        const std::pair<double, std::size_t> first = bl <= br ? std::pair{bl, node.left} : std::pair{br, node.right};
        const std::pair<double, std::size_t> second = bl <= br ? std::pair{br, node.right} : std::pair{bl, node.left};
        // equal bounds may still hold a lower-index tie, so prune only on >
        if (heap.size() < k || first.first <= heap.top().first) search(first.second, q, k, heap);
        if (heap.size() < k || second.first <= heap.top().first) search(second.second, q, k, heap);
    }

    Matrix points_;
    std::size_t leaf_size_ = kDefaultLeafSize;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace pseg

#endif  // PSEG_KDTREE_HPP
