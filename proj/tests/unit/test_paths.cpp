#include <doctest.h>

#include <map>

#include "../support/oracle.hpp"
#include "pcbr/paths.hpp"

using namespace pcbr;
using oracle::ent;
using oracle::rel;

namespace {

std::map<oracle::Seq, std::uint64_t> as_map(const PathCodec& codec, std::span<const PathCount> counts) {
  std::map<oracle::Seq, std::uint64_t> out;
  for (const auto& c : counts) out[codec.decode(c.type).rels] = c.count;
  return out;
}

}  // namespace

TEST_CASE("codec round trip and order") {
  PathCodec codec(10, 3);
  std::vector<RelationId> a{RelationId{3}};
  std::vector<RelationId> b{RelationId{0}, RelationId{9}};
  std::vector<RelationId> c{RelationId{1}, RelationId{0}};
  CHECK(codec.decode(codec.encode(b)).rels == b);
  CHECK(codec.encode(a) < codec.encode(b));
  CHECK(codec.encode(b) < codec.encode(c));
  CHECK(codec.length(codec.encode(b)) == 2);
  CHECK(codec.last(codec.encode(c)) == RelationId{0});
  CHECK_THROWS_AS(PathCodec(10, 0), PreconditionError);
  CHECK_THROWS_AS(PathCodec(1u << 20, 4), PreconditionError);
}

TEST_CASE("enumerate on T1") {
  auto kg = oracle::make_t1();
  PathEngine engine(kg, 2);
  const auto& codec = engine.codec();
  auto en = engine.enumerate_paths(ent(kg, "a2"));
  CHECK_FALSE(en.truncated);
  auto has = [&](std::vector<RelationId> type, EntityId end, std::uint64_t count) {
    const PathKey key = codec.encode(type);
    for (const auto& pe : en.ends)
      if (pe.type == key && pe.end == end) return pe.count == count;
    return false;
  };
  CHECK(has({rel(kg, "affiliated"), rel(kg, "located_in")}, ent(kg, "us"), 1));
  CHECK(has({rel(kg, "born_in")}, ent(kg, "hu"), 1));

  PathEngine one(kg, 1);
  auto edges = one.enumerate_paths(ent(kg, "a2"));
  CHECK(edges.ends.size() == kg.out_degree(ent(kg, "a2")));

  auto lonely = kg.intern_entity("lonely");
  CHECK(engine.enumerate_paths(lonely).ends.empty());
}

TEST_CASE("paths to answers on T1") {
  auto kg = oracle::make_t1();
  PathEngine engine(kg, 2);
  const auto pod = rel(kg, "place_of_death");
  const auto born = rel(kg, "born_in");
  using S = oracle::Seq;

  auto a1 = as_map(engine.codec(), engine.paths_to_answers(ent(kg, "a1"), pod));
  CHECK(a1 == std::map<S, std::uint64_t>{{S{born}, 1}, {S{pod}, 1}});

  auto a2 = as_map(engine.codec(), engine.paths_to_answers(ent(kg, "a2"), pod));
  CHECK(a2 == std::map<S, std::uint64_t>{{S{pod}, 1}, {S{rel(kg, "affiliated"), rel(kg, "located_in")}, 1}});

  CHECK_THROWS_AS((void)engine.paths_to_answers(ent(kg, "hu"), pod), PreconditionError);

  std::vector<LabeledTriple> single{{"x", "r", "y"}};
  auto kg2 = build_kg(single);
  PathEngine e2(kg2, 3);
  auto only = as_map(e2.codec(), e2.paths_to_answers(ent(kg2, "x"), rel(kg2, "r")));
  CHECK(only == std::map<S, std::uint64_t>{{S{rel(kg2, "r")}, 1}});
}

TEST_CASE("per entity counts on T1") {
  auto kg = oracle::make_t1();
  PathEngine engine(kg, 2);
  const auto pod = rel(kg, "place_of_death");
  const PathKey born = engine.codec().encode(std::vector{rel(kg, "born_in")});

  auto a1 = engine.per_entity_counts(ent(kg, "a1"));
  CHECK(a1.success_total(pod) == 2);
  CHECK(a1.total_for(born) == 1);
  auto s1 = as_map(engine.codec(), a1.success_for(pod));
  CHECK(s1[{rel(kg, "born_in")}] == 1);

  auto a2 = engine.per_entity_counts(ent(kg, "a2"));
  CHECK(a2.total_for(born) == 1);
  auto s2 = as_map(engine.codec(), a2.success_for(pod));
  CHECK(s2.count({rel(kg, "born_in")}) == 0);

  auto hu = engine.per_entity_counts(ent(kg, "hu"));
  CHECK(hu.success_for(pod).empty());
}

TEST_CASE("traverse") {
  auto kg = oracle::make_t1();
  PathEngine engine(kg, 3);
  PathType p{{rel(kg, "affiliated"), rel(kg, "located_in")}};
  CHECK(engine.traverse(ent(kg, "a2"), p) == std::vector{ent(kg, "us")});
  PathType single{{rel(kg, "profession")}};
  CHECK(engine.traverse(ent(kg, "a1"), single) == std::vector{ent(kg, "scientist")});
  PathType blocked{{rel(kg, "located_in"), rel(kg, "born_in")}};
  CHECK(engine.traverse(ent(kg, "a2"), blocked).empty());
  // Stepping straight back across the same edge is not a walk.
  PathType echo{{rel(kg, "born_in"), rel(kg, "born_in").inverse()}};
  CHECK(engine.traverse(ent(kg, "a2"), echo).empty());
  PathType around{{rel(kg, "place_of_death"), rel(kg, "place_of_death").inverse()}};
  CHECK(engine.traverse(ent(kg, "a1"), around) == std::vector{ent(kg, "a2")});
}

TEST_CASE("budget truncates whole levels") {
  auto kg = oracle::make_t1();
  PathEngine tight(kg, 3, 4);
  auto en = tight.enumerate_paths(ent(kg, "a2"));
  CHECK(en.truncated);
  PathEngine one(kg, 1);
  auto first = one.enumerate_paths(ent(kg, "a2"));
  CHECK(en.ends.size() == first.ends.size());
  PathEngine none(kg, 3, 3);
  CHECK(none.enumerate_paths(ent(kg, "a2")).ends.empty());
}

TEST_CASE("path counts match a depth-first oracle on random graphs") {
  std::mt19937_64 rng(101);
  for (int round = 0; round < 200; ++round) {
    const int edges = 10 + static_cast<int>(rng() % 41);
    auto kg = oracle::random_graph(rng, 10, 3, edges);
    const std::size_t n = 1 + rng() % 3;
    PathEngine engine(kg, n);
    for (std::uint32_t i = 0; i < kg.num_entities(); ++i) {
      EntityId e{i};
      const auto expect = oracle::counts(kg, e, n);
      const auto slice = engine.per_entity_counts(e);
      CHECK_FALSE(slice.truncated);

      std::map<oracle::Seq, std::uint64_t> totals;
      for (const auto& c : slice.totals) totals[engine.codec().decode(c.type).rels] = c.count;
      CHECK(totals == std::map<oracle::Seq, std::uint64_t>(expect.total.begin(), expect.total.end()));

      for (RelationId r : kg.out_relations(e)) {
        auto got = as_map(engine.codec(), slice.success_for(r));
        const auto it = expect.success.find(r);
        REQUIRE(it != expect.success.end());
        CHECK(got == std::map<oracle::Seq, std::uint64_t>(it->second.begin(), it->second.end()));
      }

      // traverse agrees with the end projection of the enumeration
      const auto en = engine.enumerate_paths(e);
      std::map<PathKey, std::vector<EntityId>> ends;
      for (const auto& pe : en.ends) ends[pe.type].push_back(pe.end);
      for (const auto& [type, list] : ends) CHECK(engine.traverse(e, type) == list);
    }
  }
}

TEST_CASE("counts are invariant under relabeling") {
  std::mt19937_64 rng(202);
  for (int round = 0; round < 30; ++round) {
    auto rows = oracle::random_triples(rng, 8, 3, 25);
    auto kg = build_kg(rows);
    auto shuffled = rows;
    for (auto& t : shuffled) {
      t.head = "x" + t.head;
      t.tail = "x" + t.tail;
    }
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto kg2 = build_kg(shuffled);
    PathEngine a(kg, 3);
    PathEngine b(kg2, 3);
    for (std::uint32_t i = 0; i < kg.num_entities(); ++i) {
      EntityId e{i};
      EntityId e2 = *kg2.find_entity("x" + kg.label(e));
      auto sa = a.per_entity_counts(e);
      auto sb = b.per_entity_counts(e2);
      // Relation ids may differ too, so compare by relation labels.
      auto labelled = [](const KnowledgeGraph& g, const PathEngine& eng, const EntitySlice& s) {
        std::map<std::vector<std::string>, std::uint64_t> out;
        for (const auto& c : s.totals) {
          std::vector<std::string> names;
          for (RelationId r : eng.codec().decode(c.type).rels) names.push_back(g.label(r));
          out[names] = c.count;
        }
        return out;
      };
      CHECK(labelled(kg, a, sa) == labelled(kg2, b, sb));
    }
  }
}
