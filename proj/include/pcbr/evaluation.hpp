#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcbr/model.hpp"

namespace pcbr {

enum class Direction { tail, head };

std::string_view to_string(Direction d);
/// Parses "tail", "head" or "both". Throws PreconditionError otherwise.
std::vector<Direction> parse_directions(std::string_view text);

/// Known true answers for every (entity, relation) over train, dev and test,
/// inverse relations included.
class KnownAnswers {
 public:
  KnownAnswers() = default;
  explicit KnownAnswers(const KnowledgeGraph& kg);

  void add(const Triple& t);
  [[nodiscard]] std::span<const EntityId> answers(EntityId e, RelationId r) const;

 private:
  void finish();

  std::unordered_map<std::uint64_t, std::vector<EntityId>> index_;
};

/// Filtered rank of `gold` in a score-sorted candidate list. Candidates in
/// `all_true` other than gold are skipped; ties with the gold count half.
/// An unscored gold gets rank num_entities.
double filtered_rank(std::span<const ScoredEntity> scored, EntityId gold, std::span<const EntityId> all_true,
                     std::size_t num_entities);

inline constexpr std::array<int, 4> kHitsAt{1, 3, 5, 10};

struct Metrics {
  std::size_t query_count = 0;
  std::array<double, 4> hits{};  // parallel to kHitsAt
  double mrr = 0.0;

  [[nodiscard]] double hits_at(int n) const;
};

class MetricsAccumulator {
 public:
  void add(double rank);
  void merge(const MetricsAccumulator& other);
  [[nodiscard]] Metrics finalize() const;

 private:
  std::size_t count_ = 0;
  std::array<std::size_t, 4> hits_{};
  double reciprocal_sum_ = 0.0;
};

struct MetricsReport {
  std::string tag;
  Metrics overall;
  std::map<std::string, Metrics> per_direction;
};

struct QueryRecord {
  Triple triple;
  Direction direction;
  double rank;
};

struct Evaluation {
  MetricsReport report;
  std::vector<QueryRecord> records;  // split order, tail before head per triple
};

/// Issues a tail query (h, r, ?) for every triple and, when requested, a head
/// query (t, r^-1, ?). Triples sharing a query entity and relation share one
/// scoring pass.
Evaluation evaluate(const KnowledgeGraph& kg, const CbrModel& model, const KnownAnswers& known,
                    std::span<const Triple> split, std::span<const Direction> directions, unsigned threads = 0);

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const MetricsReport& r);
/// Writes "head\trelation\ttail\tdirection\trank" lines with a header row.
void write_rank_dump(std::ostream& os, const KnowledgeGraph& kg, std::span<const QueryRecord> records);

}  // namespace pcbr
