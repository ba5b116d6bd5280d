#include "pcbr/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace pcbr {

void RunConfig::validate() const {
  model.validate();
  stream.validate();
  if (split != "train" && split != "dev" && split != "test") throw PreconditionError("split must be train, dev or test");
  (void)parse_directions(directions);
  (void)parse_stream_mode(mode);
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"data", c.data},
      {"K", c.model.k},
      {"N", c.model.paths_per_case},
      {"max_len", c.model.max_length},
      {"tau", c.model.tau},
      {"path_budget", c.model.path_budget},
      {"threads", c.model.threads},
      {"seed", c.stream.rng_seed},
      {"seed_fraction", c.stream.seed_fraction},
      {"popular_fraction", c.stream.popular_fraction},
      {"num_batches", c.stream.num_batches},
      {"split", c.split},
      {"directions", c.directions},
      {"mode", c.mode},
      {"snapshot", c.snapshot},
      {"out", c.out},
      {"dump_ranks", c.dump_ranks},
      {"plan", c.plan},
      {"log", c.log},
      {"plan_only", c.plan_only},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw PreconditionError("config must be a JSON object");
  static const std::set<std::string> known{"data",        "K",          "N",          "max_len",       "tau",
                                           "path_budget", "threads",    "seed",       "seed_fraction", "popular_fraction",
                                           "num_batches", "split",      "directions", "mode",          "snapshot",
                                           "out",         "dump_ranks", "plan",       "log",           "plan_only"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw PreconditionError("unknown config key '" + key + "'");
  }
  auto read = [&j](const char* key, auto& field) {
    using T = std::decay_t<decltype(field)>;
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) throw PreconditionError(std::string("config key '") + key + "' must be a non-negative integer");
    }
    field = v.get<T>();
  };
  try {
    read("data", c.data);
    read("K", c.model.k);
    read("N", c.model.paths_per_case);
    read("max_len", c.model.max_length);
    read("tau", c.model.tau);
    read("path_budget", c.model.path_budget);
    read("threads", c.model.threads);
    read("seed", c.stream.rng_seed);
    read("seed_fraction", c.stream.seed_fraction);
    read("popular_fraction", c.stream.popular_fraction);
    read("num_batches", c.stream.num_batches);
    read("split", c.split);
    read("directions", c.directions);
    read("mode", c.mode);
    read("snapshot", c.snapshot);
    read("out", c.out);
    read("dump_ranks", c.dump_ranks);
    read("plan", c.plan);
    read("log", c.log);
    read("plan_only", c.plan_only);
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file, RunConfig base) {
  std::ifstream in(file);
  if (!in) throw PreconditionError("cannot open config file " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw PreconditionError("config file " + file.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

}  // namespace pcbr
