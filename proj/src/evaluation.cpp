#include "pcbr/evaluation.hpp"

#include <algorithm>
#include <ostream>

#include "pcbr/parallel.hpp"

namespace pcbr {

namespace {

std::uint64_t slot(EntityId e, RelationId r) { return (static_cast<std::uint64_t>(e.value) << 32) | r.value; }

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::tail ? "tail" : "head"; }

std::vector<Direction> parse_directions(std::string_view text) {
  if (text == "tail") return {Direction::tail};
  if (text == "head") return {Direction::head};
  if (text == "both") return {Direction::tail, Direction::head};
  throw PreconditionError("directions must be tail, head or both, got '" + std::string(text) + "'");
}

KnownAnswers::KnownAnswers(const KnowledgeGraph& kg) {
  for (const auto* split : {&kg.train(), &kg.dev(), &kg.test()}) {
    for (const Triple& t : *split) {
      index_[slot(t.head, t.rel)].push_back(t.tail);
      index_[slot(t.tail, t.rel.inverse())].push_back(t.head);
    }
  }
  finish();
}

void KnownAnswers::add(const Triple& t) {
  for (auto [key, value] : {std::pair{slot(t.head, t.rel), t.tail}, std::pair{slot(t.tail, t.rel.inverse()), t.head}}) {
    auto& list = index_[key];
    auto it = std::lower_bound(list.begin(), list.end(), value);
    if (it == list.end() || *it != value) list.insert(it, value);
  }
}

void KnownAnswers::finish() {
  for (auto& [key, list] : index_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

std::span<const EntityId> KnownAnswers::answers(EntityId e, RelationId r) const {
  auto it = index_.find(slot(e, r));
  if (it == index_.end()) return {};
  return it->second;
}

double filtered_rank(std::span<const ScoredEntity> scored, EntityId gold, std::span<const EntityId> all_true,
                     std::size_t num_entities) {
  auto g = std::find_if(scored.begin(), scored.end(), [&](const ScoredEntity& s) { return s.entity == gold; });
  if (g == scored.end()) return static_cast<double>(num_entities);
  std::size_t above = 0;
  std::size_t ties = 0;
  for (const ScoredEntity& s : scored) {
    if (s.score < g->score) break;
    if (s.entity == gold || std::binary_search(all_true.begin(), all_true.end(), s.entity)) continue;
    if (s.score > g->score) {
      ++above;
    } else {
      ++ties;
    }
  }
  return 1.0 + static_cast<double>(above) + static_cast<double>(ties) / 2.0;
}

double Metrics::hits_at(int n) const {
  for (std::size_t i = 0; i < kHitsAt.size(); ++i)
    if (kHitsAt[i] == n) return hits[i];
  throw PreconditionError("hits@" + std::to_string(n) + " is not tracked");
}

void MetricsAccumulator::add(double rank) {
  ++count_;
  reciprocal_sum_ += 1.0 / rank;
  for (std::size_t i = 0; i < kHitsAt.size(); ++i)
    if (rank <= kHitsAt[i]) ++hits_[i];
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  count_ += other.count_;
  reciprocal_sum_ += other.reciprocal_sum_;
  for (std::size_t i = 0; i < hits_.size(); ++i) hits_[i] += other.hits_[i];
}

Metrics MetricsAccumulator::finalize() const {
  Metrics m;
  m.query_count = count_;
  if (count_ == 0) return m;
  const auto n = static_cast<double>(count_);
  for (std::size_t i = 0; i < hits_.size(); ++i) m.hits[i] = static_cast<double>(hits_[i]) / n;
  m.mrr = reciprocal_sum_ / n;
  return m;
}

Evaluation evaluate(const KnowledgeGraph& kg, const CbrModel& model, const KnownAnswers& known,
                    std::span<const Triple> split, std::span<const Direction> directions, unsigned threads) {
  struct Pending {
    std::size_t record;
    EntityId gold;
  };
  struct Group {
    EntityId entity;
    RelationId relation;
    std::vector<Pending> pending;
  };

  Evaluation out;
  out.records.reserve(split.size() * directions.size());
  std::unordered_map<std::uint64_t, std::size_t> group_of;
  std::vector<Group> groups;
  for (const Triple& t : split) {
    for (Direction d : directions) {
      const EntityId entity = d == Direction::tail ? t.head : t.tail;
      const RelationId relation = d == Direction::tail ? t.rel : t.rel.inverse();
      const EntityId gold = d == Direction::tail ? t.tail : t.head;
      auto [it, fresh] = group_of.try_emplace(slot(entity, relation), groups.size());
      if (fresh) groups.push_back({entity, relation, {}});
      groups[it->second].pending.push_back({out.records.size(), gold});
      out.records.push_back({t, d, 0.0});
    }
  }

  parallel_for(groups.size(), threads, [&](std::size_t gi) {
    const Group& g = groups[gi];
    Query q{g.entity, g.relation, {}};
    const RankedAnswers ranked = answer_query(kg, model, q);
    const auto truth = known.answers(g.entity, g.relation);
    for (const Pending& p : g.pending) {
      out.records[p.record].rank = filtered_rank(ranked.scored, p.gold, truth, kg.num_entities());
    }
  });

  MetricsAccumulator overall;
  std::map<std::string, MetricsAccumulator> per_direction;
  for (Direction d : directions) per_direction[std::string(to_string(d))];
  for (const QueryRecord& r : out.records) {
    overall.add(r.rank);
    per_direction[std::string(to_string(r.direction))].add(r.rank);
  }
  out.report.overall = overall.finalize();
  for (const auto& [name, acc] : per_direction) out.report.per_direction[name] = acc.finalize();
  return out;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j;
  j["query_count"] = m.query_count;
  if (m.query_count == 0) {
    j["mrr"] = nullptr;
    j["hits_at"] = nullptr;
    return j;
  }
  j["mrr"] = m.mrr;
  auto& hits = j["hits_at"] = nlohmann::json::object();
  for (std::size_t i = 0; i < kHitsAt.size(); ++i) hits[std::to_string(kHitsAt[i])] = m.hits[i];
  return j;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  if (!r.tag.empty()) j["tag"] = r.tag;
  j["metrics"] = to_json(r.overall);
  auto& dirs = j["per_direction"] = nlohmann::json::object();
  for (const auto& [name, m] : r.per_direction) dirs[name] = to_json(m);
  return j;
}

void write_rank_dump(std::ostream& os, const KnowledgeGraph& kg, std::span<const QueryRecord> records) {
  os << "head\trelation\ttail\tdirection\trank\n";
  for (const QueryRecord& r : records) {
    os << kg.label(r.triple.head) << '\t' << kg.label(r.triple.rel) << '\t' << kg.label(r.triple.tail) << '\t'
       << to_string(r.direction) << '\t' << r.rank << '\n';
  }
}

}  // namespace pcbr
