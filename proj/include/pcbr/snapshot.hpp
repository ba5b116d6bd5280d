#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pcbr/model.hpp"

namespace pcbr {

inline constexpr int kSnapshotVersion = 1;

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A snapshot directory holds manifest.json (format version, hyperparameters,
/// graph fingerprint, summary counts) and model.bin (clusters, dendrogram,
/// statistics and cases). Entity vectors are rebuilt from the graph on load.
void save_snapshot(const std::filesystem::path& dir, const KnowledgeGraph& kg, const CbrModel& model,
                   const nlohmann::json& extra = {});

nlohmann::json read_manifest(const std::filesystem::path& dir);

/// Throws SnapshotError when the directory is missing or unreadable, the
/// format version differs, or the snapshot was built on a different graph.
CbrModel load_snapshot(const std::filesystem::path& dir, const KnowledgeGraph& kg);

/// Counts used in build summaries and manifests.
nlohmann::json model_summary(const CbrModel& model);

}  // namespace pcbr
