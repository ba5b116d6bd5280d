#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pcbr/entity_vectors.hpp"

namespace pcbr {

struct ClusterNode {
  std::uint32_t left = kInvalidIndex;
  std::uint32_t right = kInvalidIndex;
  EntityId entity;       // leaves only
  double linkage = 0.0;  // internal nodes only
  std::uint32_t size = 1;

  [[nodiscard]] bool is_leaf() const { return left == kInvalidIndex; }
};

/// Binary dendrogram. Node ids index `nodes`; children always precede parents.
class ClusterTree {
 public:
  std::uint32_t add_leaf(EntityId e);
  std::uint32_t add_merge(std::uint32_t a, std::uint32_t b, double linkage);

  [[nodiscard]] bool empty() const { return root_ == kInvalidIndex; }
  [[nodiscard]] std::uint32_t root() const { return root_; }
  void set_root(std::uint32_t r) { root_ = r; }
  [[nodiscard]] const ClusterNode& node(std::uint32_t id) const { return nodes_.at(id); }
  [[nodiscard]] std::size_t num_nodes() const { return nodes_.size(); }
  [[nodiscard]] std::size_t num_leaves() const;

  [[nodiscard]] std::vector<EntityId> leaves_under(std::uint32_t id) const;

  /// Throws std::logic_error if a node reachable from the root is malformed or
  /// an entity appears under more than one leaf.
  void validate() const;

 private:
  std::vector<ClusterNode> nodes_;
  std::uint32_t root_ = kInvalidIndex;
};

/// Mean pairwise cosine similarity between two disjoint, non-empty sets.
double avg_linkage(std::span<const EntityId> a, std::span<const EntityId> b, const EntityVectors& vectors);

/// Average-linkage agglomerative clustering of `entities`. Repeatedly merges the
/// active pair with the highest linkage; ties go to the pair with the smallest
/// (min node id, max node id). Entities with identical non-empty vectors are
/// merged first at linkage 1.
ClusterTree hac(const EntityVectors& vectors, std::span<const EntityId> entities);

/// Partition of entities; a cluster is identified by its smallest member.
class FlatClustering {
 public:
  ClusterId add_cluster(std::vector<EntityId> members);

  [[nodiscard]] std::optional<ClusterId> cluster_of(EntityId e) const;
  [[nodiscard]] const std::vector<EntityId>& members(ClusterId c) const { return clusters_.at(c); }
  [[nodiscard]] const std::map<ClusterId, std::vector<EntityId>>& clusters() const { return clusters_; }
  [[nodiscard]] std::size_t size() const { return clusters_.size(); }
  [[nodiscard]] std::size_t num_entities() const { return assigned_; }

 private:
  std::vector<ClusterId> assignment_;
  std::map<ClusterId, std::vector<EntityId>> clusters_;
  std::size_t assigned_ = 0;
};

/// Breadth-first search from the root that stops at leaves and at nodes whose
/// linkage exceeds tau; each stopping node's leaf set becomes a cluster.
FlatClustering extract_flat(const ClusterTree& tree, double tau);

/// Pairwise F1 between two clusterings over the same entities. Two all-singleton
/// clusterings score 1.
double pairwise_f1(const FlatClustering& predicted, const FlatClustering& reference);

}  // namespace pcbr
