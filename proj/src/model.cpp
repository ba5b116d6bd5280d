#include "pcbr/model.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

#include "pcbr/evaluation.hpp"
#include "pcbr/parallel.hpp"

namespace pcbr {

void ModelConfig::validate() const {
  if (k < 1) throw PreconditionError("K must be at least 1");
  if (paths_per_case < 1) throw PreconditionError("N must be at least 1");
  if (max_length < 1) throw PreconditionError("max path length must be at least 1");
  if (!(tau >= 0.0 && tau <= 1.0)) throw PreconditionError("tau must lie in [0, 1]");
  if (path_budget < 1) throw PreconditionError("path budget must be positive");
}

const PathWeight* RelationStats::find(PathKey type) const {
  auto it = std::lower_bound(paths.begin(), paths.end(), type,
                             [](const PathWeight& w, PathKey k) { return w.type < k; });
  return it != paths.end() && it->type == type ? &*it : nullptr;
}

void StatsAccumulator::add(const EntitySlice& slice) {
  for (const auto& [rq, counts] : slice.successes) {
    if (counts.empty()) continue;
    auto& bucket = success_[rq];
    for (const auto& c : counts) bucket[c.type] += c.count;
  }
  for (const auto& c : slice.totals) totals_[c.type] += c.count;
}

ClusterStats StatsAccumulator::finalize() const {
  ClusterStats out;
  out.reserve(success_.size());
  for (const auto& [rq, counts] : success_) {
    std::uint64_t denom = 0;
    for (const auto& [type, s] : counts) denom += s;
    if (denom == 0) continue;
    RelationStats rs;
    rs.paths.reserve(counts.size());
    for (const auto& [type, s] : counts) {
      auto it = totals_.find(type);
      const std::uint64_t total = it == totals_.end() ? s : std::max(it->second, s);
      rs.paths.push_back({type, static_cast<double>(s) / static_cast<double>(denom),
                          static_cast<double>(s) / static_cast<double>(total), s, total});
    }
    std::sort(rs.paths.begin(), rs.paths.end(), [](const PathWeight& a, const PathWeight& b) { return a.type < b.type; });
    out.emplace_back(rq, std::move(rs));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::span<const PathKey> CaseList::find(RelationId rq) const {
  auto it = std::lower_bound(by_relation.begin(), by_relation.end(), rq,
                             [](const auto& entry, RelationId r) { return entry.first < r; });
  if (it == by_relation.end() || it->first != rq) return {};
  return it->second;
}

CaseList make_cases(const EntitySlice& slice, std::size_t per_relation) {
  CaseList cases;
  for (const auto& [rq, counts] : slice.successes) {
    if (counts.empty()) continue;
    std::vector<PathKey> keys;
    const std::size_t n = std::min(per_relation, counts.size());
    keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) keys.push_back(counts[i].type);
    cases.by_relation.emplace_back(rq, std::move(keys));
  }
  return cases;
}

const RelationStats* CbrModel::find_stats(ClusterId c, RelationId rq) const {
  auto it = stats.find(c);
  if (it == stats.end()) return nullptr;
  const auto& table = it->second;
  auto rit = std::lower_bound(table.begin(), table.end(), rq, [](const auto& e, RelationId r) { return e.first < r; });
  return rit != table.end() && rit->first == rq ? &rit->second : nullptr;
}

std::span<const PathKey> CbrModel::cases_for(EntityId e, RelationId rq) const {
  if (e.value >= cases.size()) return {};
  return cases[e.value].find(rq);
}

std::unordered_map<ClusterId, ClusterStats> summarize_clusters(const FlatClustering& clusters,
                                                               std::span<const EntitySlice> slices) {
  std::unordered_map<ClusterId, ClusterStats> out;
  for (const auto& [id, members] : clusters.clusters()) {
    StatsAccumulator acc;
    for (EntityId e : members)
      if (e.value < slices.size()) acc.add(slices[e.value]);
    auto table = acc.finalize();
    if (!table.empty()) out.emplace(id, std::move(table));
  }
  return out;
}

FlatClustering cluster_entities(const EntityVectors& vectors, double tau, ClusterTree* tree_out) {
  std::vector<EntityId> clustered;
  std::vector<EntityId> isolated;
  for (const auto& v : vectors.all()) (v.empty() ? isolated : clustered).push_back(v.entity);
  ClusterTree tree = hac(vectors, clustered);
  FlatClustering flat = extract_flat(tree, tau);
  for (EntityId e : isolated) flat.add_cluster({e});
  if (tree_out) *tree_out = std::move(tree);
  return flat;
}

CbrModel build_model(const KnowledgeGraph& kg, const ModelConfig& config, bool keep_slices) {
  config.validate();
  CbrModel model;
  model.config = config;
  model.vectors = EntityVectors(kg);
  model.clusters = cluster_entities(model.vectors, config.tau, &model.tree);
  model.cases.resize(kg.num_entities());

  const PathEngine engine(kg, config.max_length, config.path_budget);
  std::unordered_map<ClusterId, StatsAccumulator> accumulators;
  if (keep_slices) model.slices.resize(kg.num_entities());

  // Slices are computed in parallel chunks and folded into per-cluster sums so
  // that only one chunk of slices is alive at a time.
  constexpr std::size_t kChunk = 2048;
  std::vector<EntitySlice> chunk;
  for (std::size_t begin = 0; begin < kg.num_entities(); begin += kChunk) {
    const std::size_t end = std::min(kg.num_entities(), begin + kChunk);
    chunk.assign(end - begin, EntitySlice{});
    parallel_for(end - begin, config.threads, [&](std::size_t i) {
      EntityId e{static_cast<std::uint32_t>(begin + i)};
      chunk[i] = model.vectors[e].empty() ? EntitySlice{e, {}, {}, false} : engine.per_entity_counts(e);
    });
    for (auto& slice : chunk) {
      if (slice.truncated) model.truncated.push_back(slice.entity);
      if (slice.totals.empty()) {
        if (keep_slices) model.slices[slice.entity.value] = std::move(slice);
        continue;
      }
      model.cases[slice.entity.value] = make_cases(slice, config.paths_per_case);
      accumulators[*model.clusters.cluster_of(slice.entity)].add(slice);
      if (keep_slices) model.slices[slice.entity.value] = std::move(slice);
    }
  }
  for (auto& [id, acc] : accumulators) {
    auto table = acc.finalize();
    if (!table.empty()) model.stats.emplace(id, std::move(table));
  }
  return model;
}

std::vector<std::pair<PathKey, double>> estimate_prior(const PathEngine& engine, std::span<const EntityId> cluster,
                                                       RelationId rq) {
  std::map<PathKey, std::uint64_t> counts;
  std::uint64_t denom = 0;
  for (EntityId e : cluster) {
    const auto slice = engine.per_entity_counts(e);
    for (const auto& c : slice.success_for(rq)) {
      counts[c.type] += c.count;
      denom += c.count;
    }
  }
  std::vector<std::pair<PathKey, double>> out;
  for (const auto& [type, c] : counts) out.emplace_back(type, static_cast<double>(c) / static_cast<double>(denom));
  return out;
}

std::vector<std::pair<PathKey, double>> estimate_precision(const PathEngine& engine,
                                                           std::span<const EntityId> cluster, RelationId rq) {
  std::map<PathKey, std::pair<std::uint64_t, std::uint64_t>> counts;  // success, total
  for (EntityId e : cluster) {
    const auto slice = engine.per_entity_counts(e);
    for (const auto& c : slice.totals) counts[c.type].second += c.count;
    for (const auto& c : slice.success_for(rq)) counts[c.type].first += c.count;
  }
  std::vector<std::pair<PathKey, double>> out;
  for (const auto& [type, st] : counts) {
    if (st.second == 0) continue;
    out.emplace_back(type, static_cast<double>(st.first) / static_cast<double>(st.second));
  }
  return out;
}

RankedAnswers answer_query(const KnowledgeGraph& kg, const CbrModel& model, const Query& query) {
  RankedAnswers result;
  result.query = query;

  ContextualSet context;
  try {
    context = knn_contextual(model.vectors, query.entity, query.relation, model.config.k);
  } catch (const EmptyContextError&) {
    result.gold_ranks.assign(query.gold.size(), static_cast<double>(kg.num_entities()));
    return result;
  }

  // Union of the contextual entities' cases, remembering who contributed first.
  std::vector<std::pair<PathKey, EntityId>> gathered;
  std::unordered_set<PathKey> seen;
  for (const auto& member : context.members) {
    for (PathKey key : model.cases_for(member.entity, query.relation)) {
      if (seen.insert(key).second) gathered.emplace_back(key, member.entity);
    }
  }

  const auto own_cluster = model.clusters.cluster_of(query.entity);
  const RelationStats* own = own_cluster ? model.find_stats(*own_cluster, query.relation) : nullptr;
  const PathEngine engine(kg, model.config.max_length, model.config.path_budget);

  std::unordered_map<EntityId, double> scores;
  for (const auto& [key, source] : gathered) {
    const PathWeight* w = own ? own->find(key) : nullptr;
    if (!w) {
      const auto source_cluster = model.clusters.cluster_of(source);
      const RelationStats* fallback = source_cluster ? model.find_stats(*source_cluster, query.relation) : nullptr;
      w = fallback ? fallback->find(key) : nullptr;
    }
    if (!w) continue;
    const double weight = w->prior * w->precision;
    if (weight <= 0.0) continue;
    for (EntityId end : engine.traverse(query.entity, key)) scores[end] += weight;
  }

  result.scored.reserve(scores.size());
  for (const auto& [e, s] : scores) result.scored.push_back({e, s});
  std::sort(result.scored.begin(), result.scored.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity < b.entity;
  });

  std::vector<EntityId> golds = query.gold;
  std::sort(golds.begin(), golds.end());
  for (EntityId g : query.gold) result.gold_ranks.push_back(filtered_rank(result.scored, g, golds, kg.num_entities()));
  return result;
}

}  // namespace pcbr
