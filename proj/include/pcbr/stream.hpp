#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcbr/evaluation.hpp"
#include "pcbr/model.hpp"
#include "pcbr/online_cluster.hpp"

namespace pcbr {

struct StreamConfig {
  double seed_fraction = 0.5;
  double popular_fraction = 0.1;
  std::size_t num_batches = 10;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Entity arrival order for an open-world replay. Stage 0 is the seed KB and
/// stage i (1..num_batches) the i-th batch. A triple belongs to the first
/// stage at which both its endpoints exist.
struct StreamPlan {
  StreamConfig config;
  std::vector<std::uint32_t> stage_of;  // per entity
  std::vector<std::vector<EntityId>> entities;  // per stage, ascending
  std::vector<std::vector<Triple>> train;  // per stage, input order
  std::vector<std::vector<Triple>> dev;
  std::vector<std::vector<Triple>> test;

  [[nodiscard]] std::size_t num_stages() const { return entities.size(); }
};

/// Seeds with the most popular entities (train out-degree, ties by id), fills
/// the seed up to seed_fraction with a seeded shuffle of the rest, then cuts
/// the remaining shuffled entities into num_batches contiguous batches.
StreamPlan make_stream_plan(const KnowledgeGraph& kg, const StreamConfig& config);

/// Entity assignment by label; triple slices are recomputed on load.
nlohmann::json plan_to_json(const KnowledgeGraph& kg, const StreamPlan& plan);
StreamPlan plan_from_json(const KnowledgeGraph& kg, const nlohmann::json& j);

/// Entities whose path statistics can change when `added` (already inserted
/// into kg_after) is added with maximum path length n: for each added edge
/// (u, r, v), every x with d(u, x) + d(v, x) <= n, which is every entity on a
/// closed walk of length <= n+1 through the new edge, plus u and v.
std::vector<EntityId> affected_entities(const KnowledgeGraph& kg_after, std::span<const Triple> added, std::size_t n);

struct UpdateDelta {
  std::vector<EntityId> new_entities;       // ascending
  std::vector<EntityId> modified_entities;  // existing entities incident to an added edge, ascending
  std::vector<Triple> added_edges;
  std::vector<EntityId> affected;           // entities whose slices must be recomputed
};

struct BatchUpdate {
  std::size_t stage = 0;
  std::size_t new_entities = 0;
  std::size_t modified_entities = 0;
  std::size_t added_edges = 0;
  std::size_t affected = 0;
  std::size_t reassigned = 0;
  std::size_t recomputed = 0;
  std::size_t clusters_resummed = 0;
  std::size_t clusters = 0;
};

nlohmann::json to_json(const BatchUpdate& u);

/// Incrementally maintained model over a growing graph.
class StreamState {
 public:
  /// Builds the seed model over stage 0 of the plan.
  StreamState(const KnowledgeGraph& full, const StreamPlan& plan, const ModelConfig& config);
  /// Starts from an arbitrary graph; entities with at least one edge count as
  /// present. Relations used by later edges must already be interned.
  StreamState(KnowledgeGraph seed, const ModelConfig& config);

  /// Inserts a stage's entities and edges and updates vectors, the online
  /// hierarchy, the flat clustering, per-entity slices and cluster sums.
  BatchUpdate apply_batch(std::size_t stage);
  /// Applies an explicit delta. New entities must already be interned in the graph.
  BatchUpdate apply(std::span<const EntityId> new_entities, std::span<const Triple> edges);

  [[nodiscard]] const KnowledgeGraph& graph() const { return kg_; }
  [[nodiscard]] const CbrModel& model() const { return model_; }
  [[nodiscard]] const OnlineClusterTree& tree() const { return tree_; }
  [[nodiscard]] bool present(EntityId e) const { return present_.at(e.value); }
  [[nodiscard]] const UpdateDelta& last_delta() const { return last_delta_; }

 private:
  void initialise();

  const StreamPlan* plan_ = nullptr;
  KnowledgeGraph kg_;
  CbrModel model_;
  OnlineClusterTree tree_;
  std::vector<bool> present_;
  UpdateDelta last_delta_;
};

enum class StreamMode { online, oracle };

std::string_view to_string(StreamMode m);
StreamMode parse_stream_mode(std::string_view text);

struct StreamRecord {
  std::size_t stage;
  std::string eval_set;  // "full" or "new"
  MetricsReport report;
  std::optional<BatchUpdate> update;  // online mode only
};

/// Replays the plan, evaluating after the seed and after every batch on the
/// chosen split: "full" covers all of the split's triples present so far,
/// "new" those arriving at that stage. Oracle mode rebuilds from scratch each
/// stage. `sink` receives each record as soon as it is computed.
std::vector<StreamRecord> run_stream(const KnowledgeGraph& full, const StreamPlan& plan, const ModelConfig& config,
                                     StreamMode mode, std::string_view split, std::span<const Direction> directions,
                                     const std::function<void(const StreamRecord&)>& sink = {});

nlohmann::json to_json(const StreamRecord& r, StreamMode mode);

}  // namespace pcbr
