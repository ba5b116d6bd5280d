#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "../support/oracle.hpp"
#include "pcbr/config.hpp"
#include "pcbr/snapshot.hpp"

using namespace pcbr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("pcbr_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ModelConfig small_config() {
  ModelConfig c;
  c.k = 4;
  c.paths_per_case = 6;
  c.max_length = 3;
  c.tau = 0.5;
  c.threads = 1;
  return c;
}

void expect_same_answers(const KnowledgeGraph& kg, const CbrModel& a, const CbrModel& b) {
  for (std::uint32_t e = 0; e < kg.num_entities(); ++e) {
    for (std::uint32_t r = 0; r < kg.num_relations(); ++r) {
      Query q{EntityId{e}, RelationId{r}, {}};
      const auto x = answer_query(kg, a, q);
      const auto y = answer_query(kg, b, q);
      REQUIRE(x.scored.size() == y.scored.size());
      for (std::size_t i = 0; i < x.scored.size(); ++i) {
        CHECK(x.scored[i].entity == y.scored[i].entity);
        CHECK(x.scored[i].score == y.scored[i].score);
      }
    }
  }
}

}  // namespace

TEST_CASE("run config survives a json round trip") {
  RunConfig c;
  c.data = "some/dir";
  c.model.k = 7;
  c.model.paths_per_case = 11;
  c.model.max_length = 2;
  c.model.tau = 0.25;
  c.model.path_budget = 500;
  c.stream.rng_seed = 99;
  c.stream.num_batches = 4;
  c.split = "dev";
  c.directions = "tail";
  c.mode = "oracle";
  c.plan_only = true;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("partial configs keep the base values") {
  RunConfig base;
  base.model.k = 3;
  const RunConfig c = run_config_from_json(nlohmann::json{{"tau", 0.9}}, base);
  CHECK(c.model.k == 3);
  CHECK(c.model.tau == doctest::Approx(0.9));
}

TEST_CASE("bad configs are rejected") {
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"taus", 0.5}}), PreconditionError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"K", -1}}), PreconditionError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::array()), PreconditionError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"tau", 1.5}}).validate(), PreconditionError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"split", "holdout"}}).validate(), PreconditionError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"mode", "lazy"}}).validate(), PreconditionError);

  const auto dir = scratch("config");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << "{ not json";
  CHECK_THROWS_AS(load_run_config(dir / "c.json"), PreconditionError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), PreconditionError);
}

TEST_CASE("snapshot round trip answers every query identically") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto kg = oracle::random_graph(rng, 25, 3, 70);
    const CbrModel model = build_model(kg, small_config());
    const auto dir = scratch("round_trip");
    save_snapshot(dir, kg, model, {{"dataset", "random"}});
    const CbrModel loaded = load_snapshot(dir, kg);
    CHECK(model_summary(loaded) == model_summary(model));
    CHECK(loaded.config.paths_per_case == model.config.paths_per_case);
    CHECK(loaded.config.tau == model.config.tau);
    CHECK(read_manifest(dir).at("dataset") == "random");
    expect_same_answers(kg, model, loaded);
  }
}

TEST_CASE("snapshot refuses a different graph or format") {
  std::mt19937_64 rng(6);
  const auto kg = oracle::random_graph(rng, 20, 3, 50);
  const auto dir = scratch("mismatch");
  save_snapshot(dir, kg, build_model(kg, small_config()));

  const auto other = oracle::random_graph(rng, 20, 3, 50);
  CHECK_THROWS_AS(load_snapshot(dir, other), SnapshotError);
  CHECK_THROWS_AS(load_snapshot(scratch("absent"), kg), SnapshotError);

  auto manifest = read_manifest(dir);
  manifest["format_version"] = kSnapshotVersion + 1;
  std::ofstream(dir / "manifest.json") << manifest.dump();
  CHECK_THROWS_AS(load_snapshot(dir, kg), SnapshotError);

  manifest["format_version"] = kSnapshotVersion;
  std::ofstream(dir / "manifest.json") << manifest.dump();
  CHECK_NOTHROW(load_snapshot(dir, kg));
  std::ofstream(dir / "model.bin", std::ios::trunc) << "garbage";
  CHECK_THROWS_AS(load_snapshot(dir, kg), SnapshotError);
}
