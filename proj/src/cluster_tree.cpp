#include "pcbr/cluster_tree.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace pcbr {

std::uint32_t ClusterTree::add_leaf(EntityId e) {
  ClusterNode n;
  n.entity = e;
  nodes_.push_back(n);
  auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  if (root_ == kInvalidIndex) root_ = id;
  return id;
}

std::uint32_t ClusterTree::add_merge(std::uint32_t a, std::uint32_t b, double linkage) {
  ClusterNode n;
  n.left = std::min(a, b);
  n.right = std::max(a, b);
  n.linkage = linkage;
  n.size = nodes_.at(a).size + nodes_.at(b).size;
  nodes_.push_back(n);
  root_ = static_cast<std::uint32_t>(nodes_.size() - 1);
  return root_;
}

std::size_t ClusterTree::num_leaves() const { return empty() ? 0 : nodes_[root_].size; }

std::vector<EntityId> ClusterTree::leaves_under(std::uint32_t id) const {
  std::vector<EntityId> out;
  std::vector<std::uint32_t> stack{id};
  while (!stack.empty()) {
    const ClusterNode& n = nodes_.at(stack.back());
    stack.pop_back();
    if (n.is_leaf()) {
      out.push_back(n.entity);
    } else {
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ClusterTree::validate() const {
  if (empty()) return;
  std::unordered_set<EntityId> seen;
  std::vector<std::uint32_t> stack{root_};
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    const ClusterNode& n = nodes_.at(id);
    if (n.is_leaf()) {
      if (n.right != kInvalidIndex) throw std::logic_error("leaf with one child");
      if (!seen.insert(n.entity).second) throw std::logic_error("entity under two leaves");
      if (n.size != 1) throw std::logic_error("leaf size != 1");
      continue;
    }
    if (n.right == kInvalidIndex) throw std::logic_error("internal node with one child");
    if (n.linkage < -1e-12 || n.linkage > 1.0 + 1e-12) throw std::logic_error("linkage outside [0,1]");
    if (n.size != nodes_.at(n.left).size + nodes_.at(n.right).size) throw std::logic_error("size mismatch");
    stack.push_back(n.left);
    stack.push_back(n.right);
  }
  if (seen.size() != num_leaves()) throw std::logic_error("leaf count mismatch");
}

double avg_linkage(std::span<const EntityId> a, std::span<const EntityId> b, const EntityVectors& vectors) {
  if (a.empty() || b.empty()) throw PreconditionError("avg_linkage: empty cluster");
  double total = 0.0;
  for (EntityId x : a)
    for (EntityId y : b) total += cosine_sim(vectors[x], vectors[y]);
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

namespace {

// Condensed upper-triangular storage for the active-cluster similarity matrix.
class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(std::size_t n) : n_(n), data_(n * (n > 0 ? n - 1 : 0) / 2, 0.0) {}

  double get(std::size_t i, std::size_t j) const { return data_[index(i, j)]; }
  void set(std::size_t i, std::size_t j, double v) { data_[index(i, j)] = v; }

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * n_ - i * (i + 1) / 2 + (j - i - 1);
  }

  std::size_t n_;
  std::vector<double> data_;
};

}  // namespace

ClusterTree hac(const EntityVectors& vectors, std::span<const EntityId> entities) {
  ClusterTree tree;
  std::vector<EntityId> sorted(entities.begin(), entities.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.empty()) return tree;

  std::vector<std::uint32_t> leaf(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) leaf[i] = tree.add_leaf(sorted[i]);

  // Collapse identical supports into weighted groups. Empty vectors are never
  // grouped: their cosine with anything, themselves included, is 0.
  struct Group {
    std::uint32_t node;
    double weight;
    const std::vector<RelationId>* dims;
  };
  std::vector<Group> groups;
  std::map<std::vector<RelationId>, std::size_t> by_support;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& dims = vectors[sorted[i]].dims;
    if (!dims.empty()) {
      auto [it, inserted] = by_support.try_emplace(dims, groups.size());
      if (!inserted) {
        Group& g = groups[it->second];
        g.node = tree.add_merge(g.node, leaf[i], 1.0);
        g.weight += 1.0;
        continue;
      }
    }
    groups.push_back({leaf[i], 1.0, &dims});
  }

  const std::size_t u = groups.size();
  if (u == 1) {
    tree.set_root(groups[0].node);
    return tree;
  }

  SimilarityMatrix sim(u);
  for (std::size_t i = 0; i < u; ++i)
    for (std::size_t j = i + 1; j < u; ++j) sim.set(i, j, cosine_sim(*groups[i].dims, *groups[j].dims));

  std::vector<std::uint32_t> node(u);
  std::vector<double> weight(u);
  std::vector<char> active(u, 1);
  for (std::size_t i = 0; i < u; ++i) {
    node[i] = groups[i].node;
    weight[i] = groups[i].weight;
  }

  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best(u, u);
  std::vector<double> best_sim(u, kNone);

  auto rescan = [&](std::size_t i) {
    best[i] = u;
    best_sim[i] = kNone;
    for (std::size_t j = 0; j < u; ++j) {
      if (j == i || !active[j]) continue;
      const double s = sim.get(i, j);
      if (s > best_sim[i] || (s == best_sim[i] && node[j] < node[best[i]])) {
        best[i] = j;
        best_sim[i] = s;
      }
    }
  };
  for (std::size_t i = 0; i < u; ++i) rescan(i);

  auto pair_key = [&](std::size_t i, std::size_t j) {
    return std::pair{std::min(node[i], node[j]), std::max(node[i], node[j])};
  };

  std::uint32_t last = kInvalidIndex;
  for (std::size_t remaining = u; remaining > 1; --remaining) {
    std::size_t a = u;
    for (std::size_t i = 0; i < u; ++i) {
      if (!active[i] || best[i] == u) continue;
      if (a == u || best_sim[i] > best_sim[a] ||
          (best_sim[i] == best_sim[a] && pair_key(i, best[i]) < pair_key(a, best[a]))) {
        a = i;
      }
    }
    std::size_t b = best[a];
    const double linkage = std::clamp(best_sim[a], 0.0, 1.0);
    if (b < a) std::swap(a, b);

    last = tree.add_merge(node[a], node[b], linkage);
    const double wa = weight[a];
    const double wb = weight[b];
    for (std::size_t x = 0; x < u; ++x) {
      if (!active[x] || x == a || x == b) continue;
      sim.set(a, x, (wa * sim.get(a, x) + wb * sim.get(b, x)) / (wa + wb));
    }
    node[a] = last;
    weight[a] = wa + wb;
    active[b] = 0;

    rescan(a);
    for (std::size_t x = 0; x < u; ++x) {
      if (!active[x] || x == a) continue;
      if (best[x] == a || best[x] == b) {
        rescan(x);
      } else {
        const double s = sim.get(a, x);
        if (s > best_sim[x] || (s == best_sim[x] && node[a] < node[best[x]])) {
          best[x] = a;
          best_sim[x] = s;
        }
      }
    }
  }
  tree.set_root(last);
  return tree;
}

ClusterId FlatClustering::add_cluster(std::vector<EntityId> members) {
  if (members.empty()) throw PreconditionError("add_cluster: empty cluster");
  std::sort(members.begin(), members.end());
  ClusterId id{members.front().value};
  for (EntityId e : members) {
    if (assignment_.size() <= e.value) assignment_.resize(e.value + 1, ClusterId{kInvalidIndex});
    if (assignment_[e.value].value != kInvalidIndex) throw PreconditionError("entity assigned to two clusters");
    assignment_[e.value] = id;
  }
  assigned_ += members.size();
  clusters_.emplace(id, std::move(members));
  return id;
}

std::optional<ClusterId> FlatClustering::cluster_of(EntityId e) const {
  if (e.value >= assignment_.size() || assignment_[e.value].value == kInvalidIndex) return std::nullopt;
  return assignment_[e.value];
}

FlatClustering extract_flat(const ClusterTree& tree, double tau) {
  FlatClustering flat;
  if (tree.empty()) return flat;
  std::deque<std::uint32_t> frontier{tree.root()};
  while (!frontier.empty()) {
    const auto id = frontier.front();
    frontier.pop_front();
    const ClusterNode& n = tree.node(id);
    if (n.is_leaf() || n.linkage > tau) {
      flat.add_cluster(tree.leaves_under(id));
    } else {
      frontier.push_back(n.left);
      frontier.push_back(n.right);
    }
  }
  return flat;
}

double pairwise_f1(const FlatClustering& predicted, const FlatClustering& reference) {
  auto pairs_in = [](const FlatClustering& c) {
    double total = 0.0;
    for (const auto& [id, m] : c.clusters()) total += static_cast<double>(m.size()) * (m.size() - 1) / 2.0;
    return total;
  };
  double shared = 0.0;
  for (const auto& [id, members] : predicted.clusters()) {
    std::map<ClusterId, std::size_t> overlap;
    for (EntityId e : members) {
      auto c = reference.cluster_of(e);
      if (!c) throw PreconditionError("pairwise_f1: clusterings cover different entities");
      ++overlap[*c];
    }
    for (const auto& [c, k] : overlap) shared += static_cast<double>(k) * (k - 1) / 2.0;
  }
  const double p_pairs = pairs_in(predicted);
  const double r_pairs = pairs_in(reference);
  if (p_pairs == 0.0 && r_pairs == 0.0) return 1.0;
  if (p_pairs == 0.0 || r_pairs == 0.0) return 0.0;
  const double precision = shared / p_pairs;
  const double recall = shared / r_pairs;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace pcbr
