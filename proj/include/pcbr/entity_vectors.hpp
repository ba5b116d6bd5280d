#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "pcbr/knowledge_graph.hpp"

namespace pcbr {

/// Binary vector over relation types: `dims` lists the non-zero coordinates,
/// i.e. the entity's outgoing train relation types (inverses included).
struct EntityVector {
  EntityId entity;
  std::vector<RelationId> dims;

  [[nodiscard]] bool empty() const { return dims.empty(); }
};

/// |u ∩ v| / sqrt(|u| |v|), and 0 when either side is empty.
double cosine_sim(std::span<const RelationId> u, std::span<const RelationId> v);
inline double cosine_sim(const EntityVector& u, const EntityVector& v) { return cosine_sim(u.dims, v.dims); }

struct Neighbor {
  EntityId entity;
  double similarity = 0.0;
};

struct ContextualSet {
  EntityId query_entity;
  RelationId query_relation;
  std::vector<Neighbor> members;
};

/// Raised when no entity in the graph carries the query relation.
class EmptyContextError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vectors for every entity plus an inverted index relation -> holders.
class EntityVectors {
 public:
  EntityVectors() = default;
  explicit EntityVectors(const KnowledgeGraph& kg);

  /// Re-reads one entity's vector from the graph, growing the table if needed.
  void refresh(const KnowledgeGraph& kg, EntityId e);

  [[nodiscard]] const EntityVector& operator[](EntityId e) const { return vectors_.at(e.value); }
  [[nodiscard]] std::size_t size() const { return vectors_.size(); }
  [[nodiscard]] std::size_t dimension() const { return holders_.size(); }

  /// Entities whose vector has coordinate r set, ascending.
  [[nodiscard]] std::span<const EntityId> holders(RelationId r) const;

  [[nodiscard]] const std::vector<EntityVector>& all() const { return vectors_; }

 private:
  std::vector<EntityVector> vectors_;
  std::vector<std::vector<EntityId>> holders_;
};

/// Keeps the k best by descending similarity, ties by ascending entity id.
std::vector<Neighbor> select_top_k(std::vector<Neighbor> candidates, std::size_t k);

/// The k entities most similar to `query` among those with an outgoing `rq`
/// edge, excluding `query` itself. Throws EmptyContextError when nobody has rq.
ContextualSet knn_contextual(const EntityVectors& vectors, EntityId query, RelationId rq, std::size_t k);

}  // namespace pcbr
