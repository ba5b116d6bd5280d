#include "pcbr/paths.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <tuple>

namespace pcbr {

namespace {

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  const std::uint64_t s = a + b;
  return s < a ? std::numeric_limits<std::uint64_t>::max() : s;
}

struct WalkState {
  PathKey type;
  EntityId cur;
  EntityId prev;
  std::uint64_t count;
};

const EntityId kNoEntity{kInvalidIndex};

}  // namespace

PathCodec::PathCodec(std::size_t num_relations, std::size_t max_length)
    : base_(num_relations + 1), max_length_(max_length) {
  if (max_length == 0) throw PreconditionError("max path length must be at least 1");
  std::uint64_t limit = 1;
  for (std::size_t i = 0; i < max_length; ++i) {
    if (limit > std::numeric_limits<std::uint64_t>::max() / base_) {
      throw PreconditionError("path length " + std::to_string(max_length) + " with " +
                              std::to_string(num_relations) + " relations does not fit a 64-bit path key");
    }
    limit *= base_;
  }
}

std::size_t PathCodec::length(PathKey key) const {
  std::size_t len = 0;
  for (; key != 0; key /= base_) ++len;
  return len;
}

PathKey PathCodec::encode(std::span<const RelationId> rels) const {
  if (rels.empty() || rels.size() > max_length_) throw PreconditionError("path type length out of range");
  PathKey key = 0;
  for (RelationId r : rels) {
    if (r.value + 1 >= base_) throw PreconditionError("relation id outside codec range");
    key = extend(key, r);
  }
  return key;
}

PathType PathCodec::decode(PathKey key) const {
  PathType p;
  for (; key != 0; key /= base_) p.rels.push_back(RelationId{static_cast<std::uint32_t>(key % base_ - 1)});
  std::reverse(p.rels.begin(), p.rels.end());
  return p;
}

std::span<const PathCount> EntitySlice::success_for(RelationId rq) const {
  auto it = std::lower_bound(successes.begin(), successes.end(), rq,
                             [](const auto& entry, RelationId r) { return entry.first < r; });
  if (it == successes.end() || it->first != rq) return {};
  return it->second;
}

std::uint64_t EntitySlice::total_for(PathKey type) const {
  auto it = std::lower_bound(totals.begin(), totals.end(), type,
                             [](const PathCount& c, PathKey k) { return c.type < k; });
  return it != totals.end() && it->type == type ? it->count : 0;
}

std::uint64_t EntitySlice::success_total(RelationId rq) const {
  std::uint64_t s = 0;
  for (const auto& c : success_for(rq)) s = saturating_add(s, c.count);
  return s;
}

bool EntitySlice::operator==(const EntitySlice& o) const {
  auto same = [](std::span<const PathCount> a, std::span<const PathCount> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end(),
                      [](const PathCount& x, const PathCount& y) { return x.type == y.type && x.count == y.count; });
  };
  if (entity != o.entity || truncated != o.truncated || !same(totals, o.totals)) return false;
  if (successes.size() != o.successes.size()) return false;
  for (std::size_t i = 0; i < successes.size(); ++i) {
    if (successes[i].first != o.successes[i].first || !same(successes[i].second, o.successes[i].second)) return false;
  }
  return true;
}

PathEngine::PathEngine(const KnowledgeGraph& kg, std::size_t max_length, std::size_t budget)
    : kg_(&kg), codec_(kg.num_relations(), max_length), budget_(budget) {}

PathEnumeration PathEngine::enumerate_paths(EntityId e) const {
  PathEnumeration out;
  std::vector<WalkState> level{{0, e, kNoEntity, 1}};
  std::vector<WalkState> next;
  std::size_t generated = 0;

  for (std::size_t len = 1; len <= codec_.max_length() && !level.empty(); ++len) {
    std::size_t planned = 0;
    for (const auto& st : level) planned += kg_->out_degree(st.cur);
    if (generated + planned > budget_) {
      out.truncated = true;
      break;
    }
    generated += planned;

    next.clear();
    next.reserve(planned);
    for (const auto& st : level) {
      const bool has_last = st.type != 0;
      const RelationId back = has_last ? codec_.last(st.type).inverse() : RelationId{};
      for (RelationId r : kg_->out_relations(st.cur)) {
        const bool echo_possible = has_last && r == back;
        const PathKey type = codec_.extend(st.type, r);
        for (EntityId t : kg_->neighbors(st.cur, r)) {
          if (echo_possible && t == st.prev) continue;
          next.push_back({type, t, st.cur, st.count});
        }
      }
    }
    std::sort(next.begin(), next.end(), [](const WalkState& a, const WalkState& b) {
      return std::tie(a.type, a.cur, a.prev) < std::tie(b.type, b.cur, b.prev);
    });

    level.clear();
    for (const auto& st : next) {
      if (!level.empty() && level.back().type == st.type && level.back().cur == st.cur && level.back().prev == st.prev) {
        level.back().count = saturating_add(level.back().count, st.count);
      } else {
        level.push_back(st);
      }
    }
    for (const auto& st : level) {
      if (!out.ends.empty() && out.ends.back().type == st.type && out.ends.back().end == st.cur) {
        out.ends.back().count = saturating_add(out.ends.back().count, st.count);
      } else {
        out.ends.push_back({st.type, st.cur, st.count});
      }
    }
  }
  return out;
}

EntitySlice PathEngine::per_entity_counts(EntityId e) const {
  EntitySlice slice;
  slice.entity = e;

  // (answer entity, relation) pairs for which e --rel--> answer.
  std::vector<std::pair<EntityId, RelationId>> answers;
  for (RelationId r : kg_->out_relations(e)) {
    for (EntityId t : kg_->neighbors(e, r)) answers.emplace_back(t, r);
    slice.successes.emplace_back(r, std::vector<PathCount>{});
  }
  std::sort(answers.begin(), answers.end());

  auto enumeration = enumerate_paths(e);
  slice.truncated = enumeration.truncated;
  for (const PathEnd& pe : enumeration.ends) {
    if (!slice.totals.empty() && slice.totals.back().type == pe.type) {
      slice.totals.back().count = saturating_add(slice.totals.back().count, pe.count);
    } else {
      slice.totals.push_back({pe.type, pe.count});
    }
    auto it = std::lower_bound(answers.begin(), answers.end(), std::pair{pe.end, RelationId{0}});
    for (; it != answers.end() && it->first == pe.end; ++it) {
      auto& bucket = std::lower_bound(slice.successes.begin(), slice.successes.end(), it->second,
                                      [](const auto& entry, RelationId r) { return entry.first < r; })
                         ->second;
      if (!bucket.empty() && bucket.back().type == pe.type) {
        bucket.back().count = saturating_add(bucket.back().count, pe.count);
      } else {
        bucket.push_back({pe.type, pe.count});
      }
    }
  }
  return slice;
}

std::vector<PathCount> PathEngine::paths_to_answers(EntityId e, RelationId rq) const {
  if (kg_->neighbors(e, rq).empty()) {
    throw PreconditionError("paths_to_answers: entity has no edge of the query relation");
  }
  auto slice = per_entity_counts(e);
  auto s = slice.success_for(rq);
  return {s.begin(), s.end()};
}

std::vector<EntityId> PathEngine::traverse(EntityId e, PathKey type) const {
  const PathType p = codec_.decode(type);
  std::vector<std::pair<EntityId, EntityId>> frontier{{e, kNoEntity}};  // (current, previous)
  std::vector<std::pair<EntityId, EntityId>> next;
  for (std::size_t i = 0; i < p.rels.size() && !frontier.empty(); ++i) {
    const RelationId r = p.rels[i];
    const bool echo_possible = i > 0 && r == p.rels[i - 1].inverse();
    next.clear();
    for (auto [cur, prev] : frontier) {
      for (EntityId t : kg_->neighbors(cur, r)) {
        if (echo_possible && t == prev) continue;
        next.emplace_back(t, cur);
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    frontier.swap(next);
  }
  std::vector<EntityId> ends;
  ends.reserve(frontier.size());
  for (auto [cur, prev] : frontier) ends.push_back(cur);
  std::sort(ends.begin(), ends.end());
  ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
  return ends;
}

}  // namespace pcbr
