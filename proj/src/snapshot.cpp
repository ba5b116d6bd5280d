#include "pcbr/snapshot.hpp"

#include <fstream>
#include <tuple>

#include <cereal/archives/binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/tuple.hpp>
#include <cereal/types/utility.hpp>
#include <cereal/types/vector.hpp>

namespace pcbr {

namespace {

// Flat mirrors of the model so the archive layout does not depend on the
// in-memory containers.
using StoredWeights = std::vector<std::tuple<std::uint64_t, double, double, std::uint64_t, std::uint64_t>>;

struct StoredModel {
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, double>> tree;  // left, right, entity, linkage
  std::uint32_t root = kInvalidIndex;
  std::vector<std::vector<std::uint32_t>> clusters;
  // cluster, relation, (type, prior, precision, success, total)
  std::vector<std::tuple<std::uint32_t, std::uint32_t, StoredWeights>> stats;
  std::vector<std::vector<std::pair<std::uint32_t, std::vector<std::uint64_t>>>> cases;
  std::vector<std::uint32_t> truncated;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(tree, root, clusters, stats, cases, truncated);
  }
};

nlohmann::json config_json(const ModelConfig& c) {
  return {{"K", c.k}, {"N", c.paths_per_case}, {"max_len", c.max_length}, {"tau", c.tau}, {"path_budget", c.path_budget}};
}

}  // namespace

nlohmann::json model_summary(const CbrModel& model) {
  std::size_t tables = 0;
  std::size_t weights = 0;
  std::size_t non_singleton = 0;
  for (const auto& [id, table] : model.stats) {
    tables += table.size();
    for (const auto& [rq, rs] : table) weights += rs.paths.size();
  }
  for (const auto& [id, members] : model.clusters.clusters())
    if (members.size() > 1) ++non_singleton;
  std::size_t case_lists = 0;
  for (const auto& c : model.cases) case_lists += c.by_relation.size();
  return {{"entities", model.vectors.size()},   {"clusters", model.clusters.size()},
          {"non_singleton_clusters", non_singleton}, {"stat_tables", tables},
          {"path_weights", weights},            {"case_lists", case_lists},
          {"truncated_entities", model.truncated.size()}};
}

void save_snapshot(const std::filesystem::path& dir, const KnowledgeGraph& kg, const CbrModel& model,
                   const nlohmann::json& extra) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  StoredModel stored;
  for (std::uint32_t id = 0; id < model.tree.num_nodes(); ++id) {
    const auto& n = model.tree.node(id);
    stored.tree.emplace_back(n.left, n.right, n.entity.value, n.linkage);
  }
  stored.root = model.tree.root();
  for (const auto& [id, members] : model.clusters.clusters()) {
    auto& out = stored.clusters.emplace_back();
    for (EntityId e : members) out.push_back(e.value);
  }
  std::vector<ClusterId> ids;
  for (const auto& [id, table] : model.stats) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (ClusterId id : ids) {
    for (const auto& [rq, rs] : model.stats.at(id)) {
      auto& entry = stored.stats.emplace_back(id.value, rq.value, StoredWeights{});
      for (const auto& w : rs.paths) std::get<2>(entry).emplace_back(w.type, w.prior, w.precision, w.success, w.total);
    }
  }
  for (const auto& c : model.cases) {
    auto& out = stored.cases.emplace_back();
    for (const auto& [rq, keys] : c.by_relation) out.emplace_back(rq.value, keys);
  }
  for (EntityId e : model.truncated) stored.truncated.push_back(e.value);

  {
    std::ofstream os(dir / "model.bin", std::ios::binary);
    if (!os) throw SnapshotError("cannot write " + (dir / "model.bin").string());
    cereal::BinaryOutputArchive archive(os);
    archive(stored);
  }

  nlohmann::json manifest = {
      {"format_version", kSnapshotVersion},
      {"vocabulary_fingerprint", kg.vocabulary_fingerprint()},
      {"num_entities", kg.num_entities()},
      {"num_relations", kg.num_relations()},
      {"train_edges", kg.num_train_edges()},
      {"config", config_json(model.config)},
      {"summary", model_summary(model)},
  };
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw SnapshotError("no snapshot manifest in " + dir.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SnapshotError("snapshot manifest is not valid JSON: " + std::string(e.what()));
  }
}

CbrModel load_snapshot(const std::filesystem::path& dir, const KnowledgeGraph& kg) {
  const auto manifest = read_manifest(dir);
  const int version = manifest.value("format_version", -1);
  if (version != kSnapshotVersion) {
    throw SnapshotError("snapshot format version " + std::to_string(version) + " does not match this build (" +
                        std::to_string(kSnapshotVersion) + ")");
  }
  if (manifest.value("vocabulary_fingerprint", std::uint64_t{0}) != kg.vocabulary_fingerprint() ||
      manifest.value("train_edges", std::size_t{0}) != kg.num_train_edges()) {
    throw SnapshotError("snapshot was built on a different dataset");
  }

  CbrModel model;
  const auto& cfg = manifest.at("config");
  model.config.k = cfg.at("K").get<std::size_t>();
  model.config.paths_per_case = cfg.at("N").get<std::size_t>();
  model.config.max_length = cfg.at("max_len").get<std::size_t>();
  model.config.tau = cfg.at("tau").get<double>();
  model.config.path_budget = cfg.at("path_budget").get<std::size_t>();

  StoredModel stored;
  {
    std::ifstream is(dir / "model.bin", std::ios::binary);
    if (!is) throw SnapshotError("no model.bin in " + dir.string());
    try {
      cereal::BinaryInputArchive archive(is);
      archive(stored);
    } catch (const std::exception& e) {
      throw SnapshotError("corrupt model.bin: " + std::string(e.what()));
    }
  }

  model.vectors = EntityVectors(kg);
  for (const auto& [left, right, entity, linkage] : stored.tree) {
    if (left == kInvalidIndex) {
      model.tree.add_leaf(EntityId{entity});
    } else {
      model.tree.add_merge(left, right, linkage);
    }
  }
  model.tree.set_root(stored.root);
  for (const auto& members : stored.clusters) {
    std::vector<EntityId> ids;
    for (auto e : members) ids.push_back(EntityId{e});
    model.clusters.add_cluster(std::move(ids));
  }
  for (const auto& [cid, rq, weights] : stored.stats) {
    RelationStats rs;
    for (const auto& [type, prior, precision, success, total] : weights)
      rs.paths.push_back({type, prior, precision, success, total});
    model.stats[ClusterId{cid}].emplace_back(RelationId{rq}, std::move(rs));
  }
  model.cases.resize(stored.cases.size());
  for (std::size_t e = 0; e < stored.cases.size(); ++e) {
    for (auto& [rq, keys] : stored.cases[e]) model.cases[e].by_relation.emplace_back(RelationId{rq}, std::move(keys));
  }
  for (auto e : stored.truncated) model.truncated.push_back(EntityId{e});
  return model;
}

}  // namespace pcbr
