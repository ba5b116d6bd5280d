#include "pcbr/stream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pcbr/parallel.hpp"

namespace pcbr {

namespace {

std::size_t fraction_of(double fraction, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
}

void assign_triples(const KnowledgeGraph& kg, StreamPlan& plan) {
  const std::size_t stages = plan.entities.size();
  plan.train.assign(stages, {});
  plan.dev.assign(stages, {});
  plan.test.assign(stages, {});
  auto stage = [&](const Triple& t) { return std::max(plan.stage_of[t.head.value], plan.stage_of[t.tail.value]); };
  for (const Triple& t : kg.train()) plan.train[stage(t)].push_back(t);
  for (const Triple& t : kg.dev()) plan.dev[stage(t)].push_back(t);
  for (const Triple& t : kg.test()) plan.test[stage(t)].push_back(t);
}

/// Breadth-first distances from one source up to a depth limit. The dense
/// distance table is reused across calls and only reached entries are reset.
class BoundedBfs {
 public:
  explicit BoundedBfs(std::size_t num_entities) : dist_(num_entities, kFar) {}

  /// Entities within `limit` hops of source, in visit order.
  const std::vector<EntityId>& run(const KnowledgeGraph& kg, EntityId source, std::size_t limit) {
    for (EntityId e : reached_) dist_[e.value] = kFar;
    reached_.assign(1, source);
    dist_[source.value] = 0;
    std::size_t level_begin = 0;
    for (std::uint32_t d = 1; d <= limit; ++d) {
      const std::size_t level_end = reached_.size();
      if (level_begin == level_end) break;
      for (std::size_t i = level_begin; i < level_end; ++i) {
        const EntityId x = reached_[i];
        for (RelationId r : kg.out_relations(x)) {
          for (EntityId y : kg.neighbors(x, r)) {
            if (dist_[y.value] != kFar) continue;
            dist_[y.value] = d;
            reached_.push_back(y);
          }
        }
      }
      level_begin = level_end;
    }
    return reached_;
  }

  [[nodiscard]] std::uint32_t distance(EntityId e) const { return dist_[e.value]; }

 private:
  static constexpr std::uint32_t kFar = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> dist_;
  std::vector<EntityId> reached_;
};

std::vector<EntityId> sorted_unique(std::vector<EntityId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

void StreamConfig::validate() const {
  if (!(seed_fraction > 0.0 && seed_fraction <= 1.0)) throw PreconditionError("seed fraction must lie in (0, 1]");
  if (!(popular_fraction > 0.0 && popular_fraction <= 1.0)) {
    throw PreconditionError("popular fraction must lie in (0, 1]");
  }
  if (num_batches < 1) throw PreconditionError("at least one batch is required");
}

StreamPlan make_stream_plan(const KnowledgeGraph& kg, const StreamConfig& config) {
  config.validate();
  const std::size_t n = kg.num_entities();
  StreamPlan plan;
  plan.config = config;
  plan.stage_of.assign(n, 0);
  plan.entities.assign(config.num_batches + 1, {});

  std::vector<EntityId> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = EntityId{i};
  std::stable_sort(order.begin(), order.end(),
                   [&](EntityId a, EntityId b) { return kg.out_degree(a) > kg.out_degree(b); });

  const std::size_t seed_size = fraction_of(config.seed_fraction, n);
  const std::size_t popular = std::min(seed_size, fraction_of(config.popular_fraction, n));

  // Fisher-Yates over the non-popular entities with a fixed engine so plans
  // do not depend on the standard library's distribution implementations.
  std::vector<EntityId> rest(order.begin() + static_cast<std::ptrdiff_t>(popular), order.end());
  std::sort(rest.begin(), rest.end());
  std::mt19937_64 rng(config.rng_seed);
  for (std::size_t i = rest.size(); i > 1; --i) std::swap(rest[i - 1], rest[rng() % i]);

  std::vector<EntityId> seed(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(popular));
  const std::size_t fill = seed_size - popular;
  seed.insert(seed.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(fill));
  plan.entities[0] = sorted_unique(std::move(seed));

  const std::size_t remaining = rest.size() - fill;
  for (std::size_t b = 0; b < config.num_batches; ++b) {
    const std::size_t lo = fill + b * remaining / config.num_batches;
    const std::size_t hi = fill + (b + 1) * remaining / config.num_batches;
    std::vector<EntityId> batch(rest.begin() + static_cast<std::ptrdiff_t>(lo),
                                rest.begin() + static_cast<std::ptrdiff_t>(hi));
    for (EntityId e : batch) plan.stage_of[e.value] = static_cast<std::uint32_t>(b + 1);
    plan.entities[b + 1] = sorted_unique(std::move(batch));
  }
  assign_triples(kg, plan);
  return plan;
}

nlohmann::json plan_to_json(const KnowledgeGraph& kg, const StreamPlan& plan) {
  nlohmann::json j;
  j["seed_fraction"] = plan.config.seed_fraction;
  j["popular_fraction"] = plan.config.popular_fraction;
  j["num_batches"] = plan.config.num_batches;
  j["rng_seed"] = plan.config.rng_seed;
  j["vocabulary_fingerprint"] = kg.vocabulary_fingerprint();
  auto& stages = j["stages"] = nlohmann::json::array();
  for (std::size_t s = 0; s < plan.num_stages(); ++s) {
    nlohmann::json stage;
    stage["entities"] = nlohmann::json::array();
    for (EntityId e : plan.entities[s]) stage["entities"].push_back(kg.label(e));
    stage["train_edges"] = plan.train[s].size();
    stage["dev_edges"] = plan.dev[s].size();
    stage["test_edges"] = plan.test[s].size();
    stages.push_back(std::move(stage));
  }
  return j;
}

StreamPlan plan_from_json(const KnowledgeGraph& kg, const nlohmann::json& j) {
  StreamPlan plan;
  plan.config.seed_fraction = j.at("seed_fraction").get<double>();
  plan.config.popular_fraction = j.at("popular_fraction").get<double>();
  plan.config.num_batches = j.at("num_batches").get<std::size_t>();
  plan.config.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  const auto& stages = j.at("stages");
  if (stages.size() != plan.config.num_batches + 1) {
    throw PreconditionError("plan lists " + std::to_string(stages.size()) + " stages for " +
                            std::to_string(plan.config.num_batches) + " batches");
  }
  const auto unset = std::numeric_limits<std::uint32_t>::max();
  plan.stage_of.assign(kg.num_entities(), unset);
  plan.entities.assign(stages.size(), {});
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (const auto& label : stages[s].at("entities")) {
      auto e = kg.find_entity(label.get<std::string>());
      if (!e) throw PreconditionError("plan names unknown entity '" + label.get<std::string>() + "'");
      if (plan.stage_of[e->value] != unset) throw PreconditionError("plan lists entity '" + kg.label(*e) + "' twice");
      plan.stage_of[e->value] = static_cast<std::uint32_t>(s);
      plan.entities[s].push_back(*e);
    }
    plan.entities[s] = sorted_unique(std::move(plan.entities[s]));
  }
  for (std::uint32_t i = 0; i < kg.num_entities(); ++i) {
    if (plan.stage_of[i] == unset) throw PreconditionError("plan does not place entity '" + kg.label(EntityId{i}) + "'");
  }
  assign_triples(kg, plan);
  return plan;
}

std::vector<EntityId> affected_entities(const KnowledgeGraph& kg_after, std::span<const Triple> added, std::size_t n) {
  std::vector<bool> hit(kg_after.num_entities(), false);
  BoundedBfs from_u(kg_after.num_entities());
  BoundedBfs from_v(kg_after.num_entities());
  for (const Triple& t : added) {
    hit[t.head.value] = true;
    hit[t.tail.value] = true;
    const auto& near_u = from_u.run(kg_after, t.head, n);
    from_v.run(kg_after, t.tail, n);
    for (EntityId x : near_u) {
      const std::uint64_t dv = from_v.distance(x);
      if (from_u.distance(x) + dv <= n) hit[x.value] = true;
    }
  }
  std::vector<EntityId> out;
  for (std::uint32_t x = 0; x < hit.size(); ++x)
    if (hit[x]) out.push_back(EntityId{x});
  return out;
}

nlohmann::json to_json(const BatchUpdate& u) {
  return {{"stage", u.stage},
          {"new_entities", u.new_entities},
          {"modified_entities", u.modified_entities},
          {"added_edges", u.added_edges},
          {"affected", u.affected},
          {"reassigned", u.reassigned},
          {"recomputed", u.recomputed},
          {"clusters_resummed", u.clusters_resummed},
          {"clusters", u.clusters}};
}

StreamState::StreamState(const KnowledgeGraph& full, const StreamPlan& plan, const ModelConfig& config)
    : plan_(&plan), kg_(full.without_edges()), tree_(full.num_relations(), config.tau) {
  config.validate();
  for (const Triple& t : plan.train.at(0)) kg_.add_train_edge(t);
  present_.assign(kg_.num_entities(), false);
  for (EntityId e : plan.entities.at(0)) present_[e.value] = true;
  model_.config = config;
  initialise();
}

StreamState::StreamState(KnowledgeGraph seed, const ModelConfig& config)
    : kg_(std::move(seed)), tree_(kg_.num_relations(), config.tau) {
  config.validate();
  present_.assign(kg_.num_entities(), false);
  for (std::uint32_t i = 0; i < kg_.num_entities(); ++i) present_[i] = kg_.out_degree(EntityId{i}) > 0;
  model_.config = config;
  initialise();
}

void StreamState::initialise() {
  model_ = build_model(kg_, model_.config, true);
  tree_ = OnlineClusterTree::from_tree(model_.tree, model_.vectors, model_.config.tau);
}

BatchUpdate StreamState::apply_batch(std::size_t stage) {
  if (!plan_) throw PreconditionError("apply_batch needs a state built from a stream plan");
  if (stage == 0 || stage >= plan_->num_stages()) throw PreconditionError("batch index out of range");
  auto update = apply(plan_->entities[stage], plan_->train[stage]);
  update.stage = stage;
  return update;
}

BatchUpdate StreamState::apply(std::span<const EntityId> new_entities, std::span<const Triple> edges) {
  if (kg_.num_relations() > tree_.dimension()) throw PreconditionError("relations were added after the stream started");
  const ModelConfig& config = model_.config;
  UpdateDelta delta;
  delta.new_entities = sorted_unique({new_entities.begin(), new_entities.end()});
  for (EntityId e : delta.new_entities) {
    if (!kg_.contains(e)) throw LookupError("new entity id " + std::to_string(e.value) + " is not interned");
    if (present_[e.value]) throw PreconditionError("entity '" + kg_.label(e) + "' is already present");
  }
  std::vector<bool> was_present = present_;
  for (EntityId e : delta.new_entities) present_[e.value] = true;

  // (a) graph and entity representations
  std::vector<EntityId> touched;
  for (const Triple& t : edges) {
    if (!present_[t.head.value] || !present_[t.tail.value]) {
      present_ = was_present;
      throw PreconditionError("edge endpoint is not present in the stream");
    }
  }
  for (const Triple& t : edges) {
    if (!kg_.add_train_edge(t)) continue;
    delta.added_edges.push_back(t);
    touched.push_back(t.head);
    touched.push_back(t.tail);
  }
  touched = sorted_unique(std::move(touched));
  for (EntityId e : touched)
    if (was_present[e.value]) delta.modified_entities.push_back(e);

  std::vector<EntityId> refreshed = delta.modified_entities;
  refreshed.insert(refreshed.end(), delta.new_entities.begin(), delta.new_entities.end());
  refreshed = sorted_unique(std::move(refreshed));
  for (EntityId e : refreshed) model_.vectors.refresh(kg_, e);

  // (b) cluster assignments: delete changed leaves, then insert changed and new ones
  for (EntityId e : delta.modified_entities)
    if (tree_.contains(e)) tree_.remove(e);
  for (EntityId e : refreshed)
    if (!model_.vectors[e].empty()) tree_.insert(model_.vectors[e]);

  model_.tree = tree_.snapshot();
  FlatClustering flat = model_.tree.empty() ? FlatClustering{} : extract_flat(model_.tree, config.tau);
  for (std::uint32_t i = 0; i < kg_.num_entities(); ++i)
    if (!flat.cluster_of(EntityId{i})) flat.add_cluster({EntityId{i}});

  // An existing entity is reassigned when the set of existing entities it
  // shares a cluster with changes.
  const FlatClustering& old_flat = model_.clusters;
  std::vector<EntityId> reassigned;
  for (const auto& [id, members] : flat.clusters()) {
    std::vector<EntityId> existing;
    for (EntityId e : members)
      if (was_present[e.value]) existing.push_back(e);
    if (existing.empty()) continue;
    const auto owner = old_flat.cluster_of(existing.front());
    std::size_t old_existing = 0;
    if (owner) {
      for (EntityId e : old_flat.members(*owner))
        if (was_present[e.value]) ++old_existing;
    }
    const bool same = owner && old_existing == existing.size() &&
                      std::all_of(existing.begin(), existing.end(), [&](EntityId e) { return old_flat.cluster_of(e) == owner; });
    if (!same) reassigned.insert(reassigned.end(), existing.begin(), existing.end());
  }

  // (c) statistics: recompute slices for the affected set and reassigned entities
  delta.affected = affected_entities(kg_, delta.added_edges, config.max_length);
  std::vector<EntityId> recompute = delta.affected;
  recompute.insert(recompute.end(), reassigned.begin(), reassigned.end());
  recompute = sorted_unique(std::move(recompute));

  if (model_.slices.size() < kg_.num_entities()) model_.slices.resize(kg_.num_entities());
  if (model_.cases.size() < kg_.num_entities()) model_.cases.resize(kg_.num_entities());
  const PathEngine engine(kg_, config.max_length, config.path_budget);
  std::vector<EntitySlice> fresh(recompute.size());
  parallel_for(recompute.size(), config.threads, [&](std::size_t i) { fresh[i] = engine.per_entity_counts(recompute[i]); });
  std::vector<bool> dirty(kg_.num_entities(), false);
  for (auto& slice : fresh) {
    dirty[slice.entity.value] = true;
    auto& cut = model_.truncated;
    auto at = std::lower_bound(cut.begin(), cut.end(), slice.entity);
    const bool listed = at != cut.end() && *at == slice.entity;
    if (slice.truncated && !listed) cut.insert(at, slice.entity);
    if (!slice.truncated && listed) cut.erase(at);
    model_.cases[slice.entity.value] = make_cases(slice, config.paths_per_case);
    model_.slices[slice.entity.value] = std::move(slice);
  }

  std::unordered_map<ClusterId, ClusterStats> stats;
  std::size_t resummed = 0;
  for (const auto& [id, members] : flat.clusters()) {
    const bool unchanged_members = old_flat.cluster_of(members.front()) == id && old_flat.members(id) == members;
    const bool has_dirty = std::any_of(members.begin(), members.end(), [&](EntityId e) { return dirty[e.value]; });
    if (unchanged_members && !has_dirty) {
      auto it = model_.stats.find(id);
      if (it != model_.stats.end()) stats.emplace(id, std::move(it->second));
      continue;
    }
    ++resummed;
    StatsAccumulator acc;
    for (EntityId e : members) acc.add(model_.slices[e.value]);
    auto table = acc.finalize();
    if (!table.empty()) stats.emplace(id, std::move(table));
  }
  model_.stats = std::move(stats);
  model_.clusters = std::move(flat);

  BatchUpdate update;
  update.new_entities = delta.new_entities.size();
  update.modified_entities = delta.modified_entities.size();
  update.added_edges = delta.added_edges.size();
  update.affected = delta.affected.size();
  update.reassigned = reassigned.size();
  update.recomputed = recompute.size();
  update.clusters_resummed = resummed;
  update.clusters = model_.clusters.size();
  last_delta_ = std::move(delta);
  return update;
}

std::string_view to_string(StreamMode m) { return m == StreamMode::online ? "online" : "oracle"; }

StreamMode parse_stream_mode(std::string_view text) {
  if (text == "online") return StreamMode::online;
  if (text == "oracle") return StreamMode::oracle;
  throw PreconditionError("mode must be online or oracle, got '" + std::string(text) + "'");
}

std::vector<StreamRecord> run_stream(const KnowledgeGraph& full, const StreamPlan& plan, const ModelConfig& config,
                                     StreamMode mode, std::string_view split, std::span<const Direction> directions,
                                     const std::function<void(const StreamRecord&)>& sink) {
  if (split != "test" && split != "dev") throw PreconditionError("stream evaluation split must be dev or test");
  const auto& slices = split == "test" ? plan.test : plan.dev;
  const KnownAnswers known(full);
  std::vector<StreamRecord> out;

  std::optional<StreamState> state;
  KnowledgeGraph oracle_kg;
  std::vector<Triple> seen;
  for (std::size_t stage = 0; stage < plan.num_stages(); ++stage) {
    std::optional<BatchUpdate> update;
    std::optional<CbrModel> rebuilt;
    const KnowledgeGraph* kg = nullptr;
    const CbrModel* model = nullptr;
    if (mode == StreamMode::online) {
      if (stage == 0) {
        state.emplace(full, plan, config);
      } else {
        update = state->apply_batch(stage);
      }
      kg = &state->graph();
      model = &state->model();
    } else {
      if (stage == 0) oracle_kg = full.without_edges();
      for (const Triple& t : plan.train[stage]) oracle_kg.add_train_edge(t);
      rebuilt = build_model(oracle_kg, config);
      kg = &oracle_kg;
      model = &*rebuilt;
    }

    seen.insert(seen.end(), slices[stage].begin(), slices[stage].end());
    for (const auto& [name, triples] : {std::pair<std::string, std::span<const Triple>>{"full", seen},
                                        std::pair<std::string, std::span<const Triple>>{"new", slices[stage]}}) {
      StreamRecord record{stage, name, evaluate(*kg, *model, known, triples, directions, config.threads).report, update};
      record.report.tag = "stage-" + std::to_string(stage) + "-" + name;
      if (sink) sink(record);
      out.push_back(std::move(record));
    }
  }
  return out;
}

nlohmann::json to_json(const StreamRecord& r, StreamMode mode) {
  nlohmann::json j = to_json(r.report);
  j.erase("tag");
  j["batch"] = r.stage;
  j["eval_set"] = r.eval_set;
  j["mode"] = to_string(mode);
  if (r.update) j["update"] = to_json(*r.update);
  return j;
}

}  // namespace pcbr
