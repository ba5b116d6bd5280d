#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pcbr/types.hpp"

namespace pcbr {

/// Labels starting with this prefix name inverse relations and are rejected
/// in input files.
inline constexpr std::string_view kInversePrefix = "__inv__";

struct LabeledTriple {
  std::string head;
  std::string rel;
  std::string tail;
};

/// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped; any other
/// line without exactly three non-empty fields is a ParseError.
std::vector<LabeledTriple> read_triple_file(const std::filesystem::path& file);

/// Dev/test triples that mention an entity never seen in a train triple.
struct UnseenReport {
  std::vector<Triple> dev;
  std::vector<Triple> test;
};

/// Directed labeled multigraph with inverse augmentation. Only train edges are
/// stored in the adjacency; dev and test are kept as base-direction triple lists.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  EntityId intern_entity(std::string_view label);
  /// Returns the base (non-inverse) id, creating the pair on first sight.
  RelationId intern_relation(std::string_view label);

  [[nodiscard]] std::size_t num_entities() const { return entity_labels_.size(); }
  [[nodiscard]] std::size_t num_relations() const { return relation_labels_.size(); }
  [[nodiscard]] std::size_t num_base_relations() const { return relation_labels_.size() / 2; }

  [[nodiscard]] const std::string& label(EntityId e) const;
  [[nodiscard]] const std::string& label(RelationId r) const;
  [[nodiscard]] std::optional<EntityId> find_entity(std::string_view label) const;
  [[nodiscard]] std::optional<RelationId> find_relation(std::string_view label) const;

  [[nodiscard]] bool contains(EntityId e) const { return e.value < entity_labels_.size(); }
  [[nodiscard]] bool contains(RelationId r) const { return r.value < relation_labels_.size(); }

  /// Adds (h,r,t) and (t,r^-1,h) to the traversable adjacency. Returns false if
  /// the edge was already present.
  bool add_train_edge(const Triple& t);

  /// S_{e,r}: sorted, duplicate-free. Throws LookupError for unknown ids.
  [[nodiscard]] std::span<const EntityId> neighbors(EntityId e, RelationId r) const;
  /// Distinct relations with at least one outgoing train edge from e, sorted.
  [[nodiscard]] std::span<const RelationId> out_relations(EntityId e) const;
  [[nodiscard]] bool has_edge(EntityId h, RelationId r, EntityId t) const;
  [[nodiscard]] std::size_t out_degree(EntityId e) const;
  [[nodiscard]] std::size_t num_train_edges() const { return augmented_edge_count_; }

  [[nodiscard]] const std::vector<Triple>& train() const { return train_; }
  [[nodiscard]] const std::vector<Triple>& dev() const { return dev_; }
  [[nodiscard]] const std::vector<Triple>& test() const { return test_; }
  [[nodiscard]] const UnseenReport& unseen() const { return unseen_; }

  /// Same vocabulary and partitions, empty adjacency. Used to replay streams.
  [[nodiscard]] KnowledgeGraph without_edges() const;

  /// Maps labeled triples onto this graph's vocabulary; unknown labels throw.
  [[nodiscard]] std::vector<Triple> resolve(std::span<const LabeledTriple> triples) const;

  /// FNV-1a over entity then relation labels in id order.
  [[nodiscard]] std::uint64_t vocabulary_fingerprint() const;

 private:
  friend KnowledgeGraph build_kg(std::span<const LabeledTriple>, std::span<const LabeledTriple>,
                                 std::span<const LabeledTriple>);

  struct Adjacency {
    std::vector<RelationId> rels;
    std::vector<std::vector<EntityId>> targets;
  };

  void check(EntityId e) const;
  bool insert_directed(EntityId h, RelationId r, EntityId t);

  std::vector<std::string> entity_labels_;
  std::vector<std::string> relation_labels_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<Adjacency> adjacency_;
  std::size_t augmented_edge_count_ = 0;

  std::vector<Triple> train_;
  std::vector<Triple> dev_;
  std::vector<Triple> test_;
  UnseenReport unseen_;
};

/// Interns entities in first-appearance order over train, then dev, then test,
/// and adds the train triples to the adjacency.
KnowledgeGraph build_kg(std::span<const LabeledTriple> train, std::span<const LabeledTriple> dev = {},
                        std::span<const LabeledTriple> test = {});
KnowledgeGraph load_kg(const std::filesystem::path& train, const std::filesystem::path& dev,
                       const std::filesystem::path& test);

struct DatasetFiles {
  std::filesystem::path train;
  std::filesystem::path dev;
  std::filesystem::path test;
};

/// Locates train.txt, valid.txt and test.txt in `dir`. With `accept_dev_alias`,
/// dev.txt is used when valid.txt is absent. Throws std::runtime_error when a
/// file is missing.
DatasetFiles locate_dataset(const std::filesystem::path& dir, bool accept_dev_alias = true);
KnowledgeGraph load_dataset(const std::filesystem::path& dir, bool accept_dev_alias = true);

}  // namespace pcbr
