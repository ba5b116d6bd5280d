#pragma once

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "pcbr/cluster_tree.hpp"
#include "pcbr/entity_vectors.hpp"
#include "pcbr/paths.hpp"

namespace pcbr {

struct ModelConfig {
  std::size_t k = 10;             // contextual entities per query
  std::size_t paths_per_case = 80;  // path types gathered from each contextual entity
  std::size_t max_length = 3;     // longest path considered
  double tau = 0.6;               // linkage threshold for flat clusters
  std::size_t path_budget = kDefaultPathBudget;
  unsigned threads = 0;           // 0 = all cores

  /// Throws PreconditionError for out-of-range hyperparameters.
  void validate() const;
};

/// Statistics of one path type for one (cluster, query relation).
struct PathWeight {
  PathKey type;
  double prior;
  double precision;
  std::uint64_t success;  // instances ending at an answer, summed over the cluster
  std::uint64_t total;    // all instances of the type, summed over the cluster
};

struct RelationStats {
  std::vector<PathWeight> paths;  // sorted by type

  [[nodiscard]] const PathWeight* find(PathKey type) const;
};

using ClusterStats = std::vector<std::pair<RelationId, RelationStats>>;  // sorted by relation

/// Sums entity slices for one cluster and turns them into path priors and
/// precisions.
///
/// prior(p | c, rq)     = sum_e success_e,rq(p) / sum_e sum_p' success_e,rq(p')
/// precision(p | c, rq) = sum_e success_e,rq(p) / sum_e total_e(p)
///
/// Every member contributes to the precision denominator, including members
/// without an rq edge. Precision is reported for the prior's support.
class StatsAccumulator {
 public:
  void add(const EntitySlice& slice);
  [[nodiscard]] ClusterStats finalize() const;

 private:
  std::unordered_map<RelationId, std::unordered_map<PathKey, std::uint64_t>> success_;
  std::unordered_map<PathKey, std::uint64_t> totals_;
};

/// Path types of P_n(e, rq) kept as cases, in breadth-first order, at most N.
struct CaseList {
  std::vector<std::pair<RelationId, std::vector<PathKey>>> by_relation;  // sorted by relation

  [[nodiscard]] std::span<const PathKey> find(RelationId rq) const;
};

CaseList make_cases(const EntitySlice& slice, std::size_t per_relation);

/// Everything needed to answer queries: entity vectors, the flat clustering,
/// per-(cluster, relation) path statistics and each entity's cases.
struct CbrModel {
  ModelConfig config;
  EntityVectors vectors;
  ClusterTree tree;  // over entities with non-empty vectors
  FlatClustering clusters;
  std::unordered_map<ClusterId, ClusterStats> stats;
  std::vector<CaseList> cases;  // indexed by entity id
  std::vector<EntitySlice> slices;  // only populated when built with keep_slices
  std::vector<EntityId> truncated;  // entities whose enumeration hit the path budget, ascending

  [[nodiscard]] const RelationStats* find_stats(ClusterId c, RelationId rq) const;
  [[nodiscard]] std::span<const PathKey> cases_for(EntityId e, RelationId rq) const;
};

/// Members' slices summed over a flat clustering, one stats table per cluster.
std::unordered_map<ClusterId, ClusterStats> summarize_clusters(const FlatClustering& clusters,
                                                               std::span<const EntitySlice> slices);

/// Clusters entities with non-empty vectors by average-linkage HAC; entities
/// with empty vectors become singleton clusters.
FlatClustering cluster_entities(const EntityVectors& vectors, double tau, ClusterTree* tree_out = nullptr);

CbrModel build_model(const KnowledgeGraph& kg, const ModelConfig& config, bool keep_slices = false);

/// Prior over path types for one cluster and relation; empty when no member has rq.
std::vector<std::pair<PathKey, double>> estimate_prior(const PathEngine& engine, std::span<const EntityId> cluster,
                                                       RelationId rq);
/// Precision for every path type that occurs around any member.
std::vector<std::pair<PathKey, double>> estimate_precision(const PathEngine& engine,
                                                           std::span<const EntityId> cluster, RelationId rq);

struct Query {
  EntityId entity;
  RelationId relation;
  std::vector<EntityId> gold;
};

struct ScoredEntity {
  EntityId entity;
  double score;
};

struct RankedAnswers {
  Query query;
  std::vector<ScoredEntity> scored;  // score desc, entity id asc
  std::vector<double> gold_ranks;    // parallel to query.gold, filtered against the other golds
};

/// Scores candidates as sum over gathered path types p of prior(p)·precision(p)
/// for every entity reached from the query entity by p.
RankedAnswers answer_query(const KnowledgeGraph& kg, const CbrModel& model, const Query& query);

}  // namespace pcbr
