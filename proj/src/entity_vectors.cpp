#include "pcbr/entity_vectors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pcbr {

double cosine_sim(std::span<const RelationId> u, std::span<const RelationId> v) {
  if (u.empty() || v.empty()) return 0.0;
  std::size_t common = 0;
  auto a = u.begin();
  auto b = v.begin();
  while (a != u.end() && b != v.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++common;
      ++a;
      ++b;
    }
  }
  return static_cast<double>(common) / std::sqrt(static_cast<double>(u.size()) * static_cast<double>(v.size()));
}

EntityVectors::EntityVectors(const KnowledgeGraph& kg) : holders_(kg.num_relations()) {
  vectors_.reserve(kg.num_entities());
  for (std::uint32_t i = 0; i < kg.num_entities(); ++i) {
    EntityId e{i};
    auto rels = kg.out_relations(e);
    vectors_.push_back({e, {rels.begin(), rels.end()}});
    for (RelationId r : rels) holders_[r.value].push_back(e);
  }
}

void EntityVectors::refresh(const KnowledgeGraph& kg, EntityId e) {
  if (holders_.size() < kg.num_relations()) holders_.resize(kg.num_relations());
  while (vectors_.size() <= e.value) {
    vectors_.push_back({EntityId{static_cast<std::uint32_t>(vectors_.size())}, {}});
  }
  auto& vec = vectors_[e.value];
  for (RelationId r : vec.dims) {
    auto& h = holders_[r.value];
    auto it = std::lower_bound(h.begin(), h.end(), e);
    if (it != h.end() && *it == e) h.erase(it);
  }
  auto rels = kg.out_relations(e);
  vec.dims.assign(rels.begin(), rels.end());
  for (RelationId r : vec.dims) {
    auto& h = holders_[r.value];
    h.insert(std::lower_bound(h.begin(), h.end(), e), e);
  }
}

std::span<const EntityId> EntityVectors::holders(RelationId r) const {
  if (r.value >= holders_.size()) return {};
  return holders_[r.value];
}

std::vector<Neighbor> select_top_k(std::vector<Neighbor> candidates, std::size_t k) {
  auto better = [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.entity < b.entity;
  };
  if (candidates.size() > k) {
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), better);
    candidates.resize(k);
  } else {
    std::sort(candidates.begin(), candidates.end(), better);
  }
  return candidates;
}

ContextualSet knn_contextual(const EntityVectors& vectors, EntityId query, RelationId rq, std::size_t k) {
  if (k == 0) throw PreconditionError("knn_contextual: K must be at least 1");
  auto pool = vectors.holders(rq);
  if (pool.empty()) throw EmptyContextError("no entity has relation id " + std::to_string(rq.value));

  static const EntityVector kEmpty{};
  const EntityVector& q = query.value < vectors.size() ? vectors[query] : kEmpty;
  std::vector<Neighbor> candidates;
  candidates.reserve(pool.size());
  for (EntityId e : pool) {
    if (e == query) continue;
    candidates.push_back({e, cosine_sim(q, vectors[e])});
  }
  return {query, rq, select_top_k(std::move(candidates), k)};
}

}  // namespace pcbr
