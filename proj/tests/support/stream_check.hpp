#pragma once

#include <string>
#include <vector>

#include "pcbr/stream.hpp"

namespace oracle {

struct StreamCheck {
  std::size_t prior_mismatches = 0;
  std::size_t precision_below = 0;
  std::size_t table_mismatches = 0;
  std::size_t compared = 0;
  std::string first_problem;
};

/// Recomputes every slice from scratch on the state's current graph, sums them
/// over the state's own clustering and compares with the incremental tables:
/// priors must agree exactly, incremental precisions may only be higher.
inline StreamCheck compare_with_recompute(const pcbr::StreamState& state) {
  using namespace pcbr;
  const auto& model = state.model();
  const PathEngine engine(state.graph(), model.config.max_length, model.config.path_budget);
  std::vector<EntitySlice> fresh;
  for (std::uint32_t i = 0; i < state.graph().num_entities(); ++i) fresh.push_back(engine.per_entity_counts(EntityId{i}));
  const auto expect = summarize_clusters(model.clusters, fresh);

  StreamCheck out;
  auto note = [&](const std::string& what) {
    if (out.first_problem.empty()) out.first_problem = what;
  };
  if (expect.size() != model.stats.size()) {
    ++out.table_mismatches;
    note("cluster table count " + std::to_string(model.stats.size()) + " vs " + std::to_string(expect.size()));
  }
  for (const auto& [cid, table] : expect) {
    auto it = model.stats.find(cid);
    if (it == model.stats.end() || it->second.size() != table.size()) {
      ++out.table_mismatches;
      note("cluster " + std::to_string(cid.value) + " relation set differs");
      continue;
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto& [rq, rs] = table[i];
      const auto& [rq2, rs2] = it->second[i];
      if (rq != rq2 || rs.paths.size() != rs2.paths.size()) {
        ++out.table_mismatches;
        note("cluster " + std::to_string(cid.value) + " path set differs");
        continue;
      }
      for (std::size_t p = 0; p < rs.paths.size(); ++p) {
        ++out.compared;
        if (rs.paths[p].type != rs2.paths[p].type || rs.paths[p].prior != rs2.paths[p].prior) {
          ++out.prior_mismatches;
          note("prior differs in cluster " + std::to_string(cid.value));
        }
        if (rs2.paths[p].precision < rs.paths[p].precision) {
          ++out.precision_below;
          note("precision below recompute in cluster " + std::to_string(cid.value));
        }
      }
    }
  }
  return out;
}

}  // namespace oracle
