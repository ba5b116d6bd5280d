#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "pcbr/knowledge_graph.hpp"

namespace pcbr {

/// A path type is the relation sequence of a walk, r1..rk with 1 <= k <= n.
struct PathType {
  std::vector<RelationId> rels;

  auto operator<=>(const PathType&) const = default;
};

/// Path types packed into one integer: key = ((r1+1)*B + r2+1)*B + ... with
/// B = |R|+1. Keys of longer paths are always larger, and among equal lengths
/// numeric order is lexicographic relation order, so sorting keys yields the
/// breadth-first order used everywhere.
using PathKey = std::uint64_t;

class PathCodec {
 public:
  PathCodec() = default;
  /// Throws PreconditionError if max_length is 0 or B^max_length overflows 64 bits.
  PathCodec(std::size_t num_relations, std::size_t max_length);

  [[nodiscard]] PathKey extend(PathKey key, RelationId r) const { return key * base_ + r.value + 1; }
  [[nodiscard]] RelationId last(PathKey key) const { return RelationId{static_cast<std::uint32_t>(key % base_ - 1)}; }
  [[nodiscard]] std::size_t length(PathKey key) const;
  [[nodiscard]] PathKey encode(std::span<const RelationId> rels) const;
  [[nodiscard]] PathKey encode(const PathType& p) const { return encode(p.rels); }
  [[nodiscard]] PathType decode(PathKey key) const;
  [[nodiscard]] std::size_t max_length() const { return max_length_; }

 private:
  std::uint64_t base_ = 1;
  std::size_t max_length_ = 0;
};

struct PathEnd {
  PathKey type;
  EntityId end;
  std::uint64_t count;  // distinct walks of this type from the source to `end`
};

struct PathEnumeration {
  std::vector<PathEnd> ends;  // sorted by (type, end)
  bool truncated = false;
};

struct PathCount {
  PathKey type;
  std::uint64_t count;
};

/// Per-source-entity counts. `totals` holds, for every path type from the
/// entity, the number of walk instances; `successes[rq]` the instances ending
/// in S_{e,rq}. The latter is both the prior contribution and the precision
/// numerator for rq.
struct EntitySlice {
  EntityId entity;
  std::vector<PathCount> totals;
  std::vector<std::pair<RelationId, std::vector<PathCount>>> successes;
  bool truncated = false;

  [[nodiscard]] std::span<const PathCount> success_for(RelationId rq) const;
  [[nodiscard]] std::uint64_t total_for(PathKey type) const;
  [[nodiscard]] std::uint64_t success_total(RelationId rq) const;

  bool operator==(const EntitySlice&) const;
};

inline constexpr std::size_t kDefaultPathBudget = 1'000'000;

/// Bounded-length walk enumeration over train edges.
///
/// Walks may revisit entities but never step straight back across the edge
/// they just used (r followed by r^-1 to the previous entity). Enumeration is
/// level by level; if expanding the next level could push the number of
/// generated walk states past `budget`, it stops and flags truncation.
class PathEngine {
 public:
  PathEngine(const KnowledgeGraph& kg, std::size_t max_length, std::size_t budget = kDefaultPathBudget);

  [[nodiscard]] const PathCodec& codec() const { return codec_; }
  [[nodiscard]] std::size_t max_length() const { return codec_.max_length(); }

  [[nodiscard]] PathEnumeration enumerate_paths(EntityId e) const;
  /// Path type -> instance count over walks from e ending in S_{e,rq}.
  /// Throws PreconditionError when S_{e,rq} is empty.
  [[nodiscard]] std::vector<PathCount> paths_to_answers(EntityId e, RelationId rq) const;
  [[nodiscard]] std::vector<EntityId> traverse(EntityId e, PathKey type) const;
  [[nodiscard]] std::vector<EntityId> traverse(EntityId e, const PathType& type) const {
    return traverse(e, codec_.encode(type));
  }
  [[nodiscard]] EntitySlice per_entity_counts(EntityId e) const;

 private:
  const KnowledgeGraph* kg_;
  PathCodec codec_;
  std::size_t budget_;
};

}  // namespace pcbr
