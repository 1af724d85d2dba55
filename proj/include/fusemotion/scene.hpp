#pragma once

#include "fusemotion/autodiff.hpp"
#include "fusemotion/nn.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <queue>
#include <tuple>
#include <vector>

namespace fusemotion {

/// Scene geometry as a P x 3 world-frame point cloud (meters).
struct ScenePointCloud {
  Eigen::MatrixX3d points;

  Eigen::Index size() const {
    return points.rows();
  }

  Vec3 point(Eigen::Index i) const {
    return points.row(i).transpose();
  }
};

/// Encoded scene condition vector.
struct SceneFeature {
  RowVec vector;
};

struct CropResult {
  ScenePointCloud cloud;
  /// True when nothing fell inside the box and the sentinel point was used.
  bool used_sentinel = false;
};

/// Keeps the points with |p - center|_inf <= half_extent. An empty crop is
/// replaced by one sentinel point 1.1 m below the center.
inline CropResult crop_bounding_box(const ScenePointCloud& cloud, const Vec3& center, double half_extent = 1.0) {
  FUSEMOTION_CHECK(center.allFinite(), ValidationError, "crop center must be finite");
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<size_t>(cloud.size()));
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    if ((cloud.points.row(i).transpose() - center).cwiseAbs().maxCoeff() <= half_extent) {
      keep.push_back(i);
    }
  }
  CropResult out;
  if (keep.empty()) {
    out.cloud.points.resize(1, 3);
    out.cloud.points.row(0) = (center + Vec3(0.0, 0.0, -1.1)).transpose();
    out.used_sentinel = true;
    return out;
  }
  out.cloud.points.resize(static_cast<Eigen::Index>(keep.size()), 3);
  for (size_t k = 0; k < keep.size(); ++k) {
    out.cloud.points.row(static_cast<Eigen::Index>(k)) = cloud.points.row(keep[k]);
  }
  return out;
}

struct Neighbor {
  Eigen::Index index = -1;
  double distance = 0.0;
};

/// Exact k-nearest-neighbor search over a static 3-D point set.
/// Results are sorted by (distance, index), so ties go to the lower index.
class KdTree {
 public:
  explicit KdTree(Eigen::MatrixX3d points) : points_(std::move(points)) {
    FUSEMOTION_CHECK(points_.rows() > 0, ValidationError, "kd-tree needs a nonempty cloud");
    order_.resize(static_cast<size_t>(points_.rows()));
    for (size_t i = 0; i < order_.size(); ++i) {
      order_[i] = static_cast<Eigen::Index>(i);
    }
    nodes_.reserve(order_.size() / kLeafSize * 2 + 2);
    build(0, static_cast<Eigen::Index>(order_.size()));
  }

  Eigen::Index size() const {
    return points_.rows();
  }

  const Eigen::MatrixX3d& points() const {
    return points_;
  }

  std::vector<Neighbor> knn(const Vec3& query, int k) const {
    FUSEMOTION_CHECK(k >= 1, RangeError, "knn: k must be >= 1");
    FUSEMOTION_CHECK(query.allFinite(), ValidationError, "knn: query must be finite");
    const size_t want = std::min<size_t>(static_cast<size_t>(k), static_cast<size_t>(points_.rows()));
    Heap heap;
    search(0, query, want, heap);
    std::vector<Neighbor> out(heap.size());
    for (size_t i = heap.size(); i-- > 0;) {
      const auto [d2, idx] = heap.top();
      heap.pop();
      out[i] = Neighbor{idx, std::sqrt(d2)};
    }
    return out;
  }

 private:
  static constexpr Eigen::Index kLeafSize = 8;

  struct Node {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
    int axis = -1; // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  using Entry = std::pair<double, Eigen::Index>; // (squared distance, index), max-heap
  using Heap = std::priority_queue<Entry>;

  int build(Eigen::Index begin, Eigen::Index end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) {
      return id;
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (Eigen::Index i = begin; i < end; ++i) {
      const Vec3 p = points_.row(order_[static_cast<size_t>(i)]).transpose();
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(
        order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](Eigen::Index a, Eigen::Index b) {
          return std::make_pair(points_(a, axis), a) < std::make_pair(points_(b, axis), b);
        });
    const double split = points_(order_[static_cast<size_t>(mid)], axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<size_t>(id)].axis = axis;
    nodes_[static_cast<size_t>(id)].split = split;
    nodes_[static_cast<size_t>(id)].left = left;
    nodes_[static_cast<size_t>(id)].right = right;
    return id;
  }

  void offer(Heap& heap, size_t want, double d2, Eigen::Index idx) const {
    const Entry e{d2, idx};
    if (heap.size() < want) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }

  void search(int id, const Vec3& q, size_t want, Heap& heap) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.axis < 0) {
      for (Eigen::Index i = n.begin; i < n.end; ++i) {
        const Eigen::Index idx = order_[static_cast<size_t>(i)];
        offer(heap, want, (points_.row(idx).transpose() - q).squaredNorm(), idx);
      }
      return;
    }
    const double diff = q(n.axis) - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    search(near, q, want, heap);
    // Equal distances must still be visited so lower indices can win ties.
    if (heap.size() < want || diff * diff <= heap.top().first) {
      search(far, q, want, heap);
    }
  }

  Eigen::MatrixX3d points_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
};

inline std::vector<Neighbor> knn_query(const KdTree& tree, const Vec3& query, int k) {
  return tree.knn(query, k);
}

inline std::vector<Neighbor> knn_query(const ScenePointCloud& cloud, const Vec3& query, int k) {
  FUSEMOTION_CHECK(cloud.size() > 0, ValidationError, "knn: empty cloud");
  return KdTree(cloud.points).knn(query, k);
}

/// Rows in lexicographic order.
inline Eigen::MatrixX3d sort_points(const Eigen::MatrixX3d& points) {
  std::vector<std::array<double, 3>> sorted(static_cast<size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sorted[static_cast<size_t>(i)] = {points(i, 0), points(i, 1), points(i, 2)};
  }
  std::sort(sorted.begin(), sorted.end());
  Eigen::MatrixX3d out(points.rows(), 3);
  for (size_t i = 0; i < sorted.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) << sorted[i][0], sorted[i][1], sorted[i][2];
  }
  return out;
}

/// Voxel-grid centroids. Points are sorted first so the output does not
/// depend on input order; voxels come out in key order. voxel <= 0 only sorts.
inline Eigen::MatrixX3d voxel_downsample(const Eigen::MatrixX3d& points, double voxel) {
  const Eigen::MatrixX3d sorted = sort_points(points);
  if (voxel <= 0.0 || points.rows() == 0) {
    return sorted;
  }
  std::map<std::array<long, 3>, std::pair<Vec3, int>> cells;
  for (Eigen::Index i = 0; i < sorted.rows(); ++i) {
    const Vec3 p = sorted.row(i).transpose();
    const std::array<long, 3> key{
        static_cast<long>(std::floor(p.x() / voxel)),
        static_cast<long>(std::floor(p.y() / voxel)),
        static_cast<long>(std::floor(p.z() / voxel))};
    auto& cell = cells[key];
    if (cell.second == 0) {
      cell.first.setZero();
    }
    cell.first += p;
    cell.second += 1;
  }
  Eigen::MatrixX3d out(static_cast<Eigen::Index>(cells.size()), 3);
  Eigen::Index row = 0;
  for (const auto& [key, cell] : cells) {
    out.row(row++) = (cell.first / cell.second).transpose();
  }
  return out;
}

/// Set encoder: shared per-point MLP, max-pool over points, then a projection
/// to the feature width. Input rows are canonically sorted before the MLP, so
/// the result is bit-identical under any reordering.
class SceneEncoder {
 public:
  struct Config {
    int hidden1 = 32;
    int hidden2 = 64;
    int feature_width = 256;
    double voxel_m = 0.1;
  };

  SceneEncoder() = default;
  SceneEncoder(nn::ParameterSet& ps, const std::string& name, Config config, Rng& rng)
      : config_(config),
        point1_(ps, name + ".point1", 3, config.hidden1, rng),
        point2_(ps, name + ".point2", config.hidden1, config.hidden2, rng),
        head_(ps, name + ".head", config.hidden2, config.feature_width, rng) {}

  const Config& config() const {
    return config_;
  }

  /// Voxelized points relative to the crop center, as the encoder consumes them.
  Eigen::MatrixX3d prepare(const ScenePointCloud& cloud, const Vec3& center) const {
    FUSEMOTION_CHECK(cloud.size() > 0, ValidationError, "scene encoder: empty cloud");
    Eigen::MatrixX3d rel = cloud.points.rowwise() - center.transpose();
    return voxel_downsample(rel, config_.voxel_m);
  }

  ad::Var forward(ad::Tape& tape, const Eigen::MatrixX3d& prepared) const {
    const ad::Var pts = tape.constant(Mat(prepared));
    const ad::Var h = ad::relu(point2_(tape, ad::relu(point1_(tape, pts))));
    return head_(tape, ad::max_rows(h));
  }

  SceneFeature encode(const ScenePointCloud& cloud, const Vec3& center) const {
    ad::Tape tape;
    return SceneFeature{forward(tape, prepare(cloud, center)).value()};
  }

 private:
  Config config_;
  nn::Linear point1_;
  nn::Linear point2_;
  nn::Linear head_;
};

inline SceneFeature encode_scene(const SceneEncoder& encoder, const ScenePointCloud& cloud, const Vec3& center) {
  return encoder.encode(cloud, center);
}

} // namespace fusemotion
