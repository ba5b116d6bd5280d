#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "pcbr/model.hpp"
#include "pcbr/stream.hpp"

namespace pcbr {

/// Everything a CLI run needs. Serialized as a flat JSON object whose keys
/// match the long flag names with dashes replaced by underscores.
struct RunConfig {
  std::string data;
  ModelConfig model;
  StreamConfig stream;
  std::string split = "test";
  std::string directions = "both";
  std::string mode = "online";
  std::string snapshot;
  std::string out;
  std::string dump_ranks;
  std::string plan;
  std::string log;
  bool plan_only = false;

  /// Throws PreconditionError for out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Keys absent from `j` keep the values already in `base`; unknown keys throw.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& file, RunConfig base = {});

}  // namespace pcbr
