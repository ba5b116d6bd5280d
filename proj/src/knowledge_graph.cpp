#include "pcbr/knowledge_graph.hpp"

#include <algorithm>
#include <fstream>

namespace pcbr {

namespace {

const std::vector<EntityId> kNoEntities;

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

bool starts_with_inverse_prefix(std::string_view s) { return s.substr(0, kInversePrefix.size()) == kInversePrefix; }

}  // namespace

std::vector<LabeledTriple> read_triple_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());

  std::vector<LabeledTriple> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_cr(raw);
    if (line.empty()) continue;

    const auto first = line.find('\t');
    const auto second = first == std::string_view::npos ? first : line.find('\t', first + 1);
    if (second == std::string_view::npos || line.find('\t', second + 1) != std::string_view::npos) {
      throw ParseError(file.string(), line_no, "expected three tab-separated fields");
    }
    LabeledTriple t{std::string(line.substr(0, first)), std::string(line.substr(first + 1, second - first - 1)),
                    std::string(line.substr(second + 1))};
    if (t.head.empty() || t.rel.empty() || t.tail.empty()) {
      throw ParseError(file.string(), line_no, "empty label");
    }
    if (starts_with_inverse_prefix(t.rel)) {
      throw ParseError(file.string(), line_no, "relation label uses reserved prefix '" + std::string(kInversePrefix) + "'");
    }
    out.push_back(std::move(t));
  }
  return out;
}

EntityId KnowledgeGraph::intern_entity(std::string_view label) {
  auto it = entity_index_.find(std::string(label));
  if (it != entity_index_.end()) return it->second;
  EntityId id{static_cast<std::uint32_t>(entity_labels_.size())};
  entity_labels_.emplace_back(label);
  entity_index_.emplace(std::string(label), id);
  adjacency_.emplace_back();
  return id;
}

RelationId KnowledgeGraph::intern_relation(std::string_view label) {
  if (starts_with_inverse_prefix(label)) {
    throw PreconditionError("relation label uses reserved inverse prefix: " + std::string(label));
  }
  auto it = relation_index_.find(std::string(label));
  if (it != relation_index_.end()) return it->second;
  RelationId id{static_cast<std::uint32_t>(relation_labels_.size())};
  std::string inverse = std::string(kInversePrefix) + std::string(label);
  relation_labels_.emplace_back(label);
  relation_labels_.push_back(inverse);
  relation_index_.emplace(std::string(label), id);
  relation_index_.emplace(std::move(inverse), id.inverse());
  return id;
}

const std::string& KnowledgeGraph::label(EntityId e) const {
  check(e);
  return entity_labels_[e.value];
}

const std::string& KnowledgeGraph::label(RelationId r) const {
  if (!contains(r)) throw LookupError("unknown relation id " + std::to_string(r.value));
  return relation_labels_[r.value];
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view label) const {
  auto it = entity_index_.find(std::string(label));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view label) const {
  auto it = relation_index_.find(std::string(label));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeGraph::check(EntityId e) const {
  if (!contains(e)) throw LookupError("unknown entity id " + std::to_string(e.value));
}

bool KnowledgeGraph::insert_directed(EntityId h, RelationId r, EntityId t) {
  Adjacency& adj = adjacency_[h.value];
  auto rit = std::lower_bound(adj.rels.begin(), adj.rels.end(), r);
  auto slot = static_cast<std::size_t>(rit - adj.rels.begin());
  if (rit == adj.rels.end() || *rit != r) {
    adj.rels.insert(rit, r);
    adj.targets.insert(adj.targets.begin() + static_cast<std::ptrdiff_t>(slot), std::vector<EntityId>{});
  }
  auto& targets = adj.targets[slot];
  auto tit = std::lower_bound(targets.begin(), targets.end(), t);
  if (tit != targets.end() && *tit == t) return false;
  targets.insert(tit, t);
  ++augmented_edge_count_;
  return true;
}

bool KnowledgeGraph::add_train_edge(const Triple& t) {
  check(t.head);
  check(t.tail);
  if (!contains(t.rel)) throw LookupError("unknown relation id " + std::to_string(t.rel.value));
  const bool added = insert_directed(t.head, t.rel, t.tail);
  if (added) insert_directed(t.tail, t.rel.inverse(), t.head);
  return added;
}

std::span<const EntityId> KnowledgeGraph::neighbors(EntityId e, RelationId r) const {
  check(e);
  if (!contains(r)) throw LookupError("unknown relation id " + std::to_string(r.value));
  const Adjacency& adj = adjacency_[e.value];
  auto it = std::lower_bound(adj.rels.begin(), adj.rels.end(), r);
  if (it == adj.rels.end() || *it != r) return kNoEntities;
  return adj.targets[static_cast<std::size_t>(it - adj.rels.begin())];
}

std::span<const RelationId> KnowledgeGraph::out_relations(EntityId e) const {
  check(e);
  return adjacency_[e.value].rels;
}

bool KnowledgeGraph::has_edge(EntityId h, RelationId r, EntityId t) const {
  auto targets = neighbors(h, r);
  return std::binary_search(targets.begin(), targets.end(), t);
}

std::size_t KnowledgeGraph::out_degree(EntityId e) const {
  check(e);
  std::size_t total = 0;
  for (const auto& targets : adjacency_[e.value].targets) total += targets.size();
  return total;
}

KnowledgeGraph KnowledgeGraph::without_edges() const {
  KnowledgeGraph g = *this;
  for (auto& adj : g.adjacency_) adj = Adjacency{};
  g.augmented_edge_count_ = 0;
  return g;
}

std::vector<Triple> KnowledgeGraph::resolve(std::span<const LabeledTriple> triples) const {
  std::vector<Triple> out;
  out.reserve(triples.size());
  for (const auto& lt : triples) {
    auto h = find_entity(lt.head);
    auto r = find_relation(lt.rel);
    auto t = find_entity(lt.tail);
    if (!h || !r || !t) {
      throw LookupError("triple (" + lt.head + ", " + lt.rel + ", " + lt.tail + ") uses an unknown label");
    }
    out.push_back({*h, *r, *t});
  }
  return out;
}

std::uint64_t KnowledgeGraph::vocabulary_fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (const auto& l : entity_labels_) mix(l);
  mix("\x01");
  for (const auto& l : relation_labels_) mix(l);
  return h;
}

KnowledgeGraph load_kg(const std::filesystem::path& train, const std::filesystem::path& dev,
                       const std::filesystem::path& test) {
  return build_kg(read_triple_file(train), read_triple_file(dev), read_triple_file(test));
}

KnowledgeGraph build_kg(std::span<const LabeledTriple> train_rows, std::span<const LabeledTriple> dev_rows,
                        std::span<const LabeledTriple> test_rows) {
  KnowledgeGraph g;
  auto intern = [&g](const LabeledTriple& lt) {
    Triple t;
    t.head = g.intern_entity(lt.head);
    t.rel = g.intern_relation(lt.rel);
    t.tail = g.intern_entity(lt.tail);
    return t;
  };

  for (const auto& lt : train_rows) g.train_.push_back(intern(lt));
  const std::size_t train_vocab = g.num_entities();
  for (const auto& lt : dev_rows) g.dev_.push_back(intern(lt));
  for (const auto& lt : test_rows) g.test_.push_back(intern(lt));

  for (const auto& t : g.train_) g.add_train_edge(t);

  auto unseen = [train_vocab](const Triple& t) { return t.head.value >= train_vocab || t.tail.value >= train_vocab; };
  for (const auto& t : g.dev_)
    if (unseen(t)) g.unseen_.dev.push_back(t);
  for (const auto& t : g.test_)
    if (unseen(t)) g.unseen_.test.push_back(t);
  return g;
}

DatasetFiles locate_dataset(const std::filesystem::path& dir, bool accept_dev_alias) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  DatasetFiles files{dir / "train.txt", dir / "valid.txt", dir / "test.txt"};
  if (!fs::exists(files.dev) && accept_dev_alias && fs::exists(dir / "dev.txt")) files.dev = dir / "dev.txt";
  for (const auto& f : {files.train, files.dev, files.test}) {
    if (!fs::exists(f)) throw std::runtime_error("missing dataset file: " + f.string());
  }
  return files;
}

KnowledgeGraph load_dataset(const std::filesystem::path& dir, bool accept_dev_alias) {
  const auto files = locate_dataset(dir, accept_dev_alias);
  return load_kg(files.train, files.dev, files.test);
}

}  // namespace pcbr
