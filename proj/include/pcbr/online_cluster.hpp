#pragma once

#include <vector>

#include "pcbr/cluster_tree.hpp"

namespace pcbr {

/// Incrementally maintained average-linkage hierarchy.
///
/// Every node caches the sum of its leaves' L2-normalised vectors, so the
/// average cosine linkage between two disjoint subtrees A and B is
/// <sum_A, sum_B> / (|A| |B|). Internal nodes additionally cache the dot
/// product of their two children's sums, updated with sparse arithmetic when a
/// single leaf enters or leaves underneath.
///
/// Insertion places the new leaf next to its nearest leaf, rotates it upward
/// while that strictly raises its sibling linkage, then tries one graft onto
/// the best flat-cluster root (at `tau`) for the leaf or one of its ancestors
/// inside its flat cluster. Deletion removes the leaf and splices its sibling
/// into the parent's place.
class OnlineClusterTree {
 public:
  OnlineClusterTree(std::size_t dimension, double tau);

  /// Rebuilds the incremental structure over an existing dendrogram.
  static OnlineClusterTree from_tree(const ClusterTree& tree, const EntityVectors& vectors, double tau);

  /// Throws PreconditionError if the entity is already a leaf or its vector is empty.
  void insert(const EntityVector& v);
  /// Throws LookupError if the entity is not a leaf.
  void remove(EntityId e);

  [[nodiscard]] bool contains(EntityId e) const;
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] std::size_t dimension() const { return dimension_; }

  [[nodiscard]] ClusterTree snapshot() const;
  [[nodiscard]] FlatClustering flat() const { return extract_flat(snapshot(), tau_); }

  /// Recomputes every cached sum, size and cross product from the leaves and
  /// throws std::logic_error on disagreement beyond `tolerance`.
  void validate(double tolerance = 1e-9) const;

  [[nodiscard]] std::size_t rotations() const { return rotations_; }
  [[nodiscard]] std::size_t grafts() const { return grafts_; }

 private:
  struct Node {
    std::uint32_t parent = kInvalidIndex;
    std::uint32_t left = kInvalidIndex;
    std::uint32_t right = kInvalidIndex;
    EntityId entity;
    std::uint32_t size = 0;
    double cross = 0.0;
    std::vector<double> sum;
    bool alive = false;

    [[nodiscard]] bool is_leaf() const { return left == kInvalidIndex; }
  };

  using SparseVec = std::vector<std::pair<std::uint32_t, double>>;

  std::uint32_t allocate();
  void release(std::uint32_t id);
  std::uint32_t make_leaf(const EntityVector& v);
  [[nodiscard]] SparseVec normalised(const EntityVector& v) const;

  [[nodiscard]] double dot(const std::vector<double>& a, const std::vector<double>& b) const;
  [[nodiscard]] static double dot(const SparseVec& x, const std::vector<double>& b);
  [[nodiscard]] double link(std::uint32_t a, std::uint32_t b) const;
  [[nodiscard]] double linkage(std::uint32_t internal) const;
  [[nodiscard]] std::uint32_t sibling(std::uint32_t id) const;
  void replace_child(std::uint32_t parent, std::uint32_t old_child, std::uint32_t new_child);

  /// Propagates a subtree's arrival (sign=+1) or departure (sign=-1) below
  /// `start` to `start` and all of its ancestors.
  void propagate(std::uint32_t start, std::uint32_t child_on_path, const std::vector<double>& moved_sum,
                 std::uint32_t moved_size, double sign);
  void propagate_sparse(std::uint32_t start, std::uint32_t child_on_path, const SparseVec& x, double sign);

  [[nodiscard]] std::uint32_t nearest_leaf(const SparseVec& x) const;
  void rotate_up(std::uint32_t leaf);
  /// Returns the grafted node, or kInvalidIndex when nothing moved.
  std::uint32_t try_graft(std::uint32_t leaf);
  static constexpr int kMaxGraftRounds = 16;
  [[nodiscard]] std::vector<std::uint32_t> flat_roots() const;
  [[nodiscard]] bool is_ancestor_or_self(std::uint32_t ancestor, std::uint32_t node) const;
  void detach(std::uint32_t v);
  void attach_as_sibling(std::uint32_t v, std::uint32_t target);

  std::size_t dimension_;
  double tau_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> free_;
  std::vector<std::uint32_t> leaf_of_;
  std::uint32_t root_ = kInvalidIndex;
  std::size_t leaves_ = 0;
  std::size_t rotations_ = 0;
  std::size_t grafts_ = 0;
};

}  // namespace pcbr
