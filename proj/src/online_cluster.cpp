#include "pcbr/online_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

namespace pcbr {

OnlineClusterTree::OnlineClusterTree(std::size_t dimension, double tau) : dimension_(dimension), tau_(tau) {}

std::uint32_t OnlineClusterTree::allocate() {
  std::uint32_t id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
  } else {
    id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
  }
  Node& n = nodes_[id];
  n = Node{};
  n.sum.assign(dimension_, 0.0);
  n.alive = true;
  return id;
}

void OnlineClusterTree::release(std::uint32_t id) {
  Node& n = nodes_[id];
  n.alive = false;
  n.sum.clear();
  n.sum.shrink_to_fit();
  free_.push_back(id);
}

OnlineClusterTree::SparseVec OnlineClusterTree::normalised(const EntityVector& v) const {
  SparseVec x;
  const double w = 1.0 / std::sqrt(static_cast<double>(v.dims.size()));
  for (RelationId r : v.dims) {
    if (r.value >= dimension_) throw PreconditionError("relation id beyond tree dimension");
    x.emplace_back(r.value, w);
  }
  return x;
}

std::uint32_t OnlineClusterTree::make_leaf(const EntityVector& v) {
  const auto x = normalised(v);
  const auto id = allocate();
  Node& n = nodes_[id];
  n.entity = v.entity;
  n.size = 1;
  for (auto [d, w] : x) n.sum[d] = w;
  if (leaf_of_.size() <= v.entity.value) leaf_of_.resize(v.entity.value + 1, kInvalidIndex);
  leaf_of_[v.entity.value] = id;
  ++leaves_;
  return id;
}

double OnlineClusterTree::dot(const std::vector<double>& a, const std::vector<double>& b) const {
  double s = 0.0;
  for (std::size_t i = 0; i < dimension_; ++i) s += a[i] * b[i];
  return s;
}

double OnlineClusterTree::dot(const SparseVec& x, const std::vector<double>& b) {
  double s = 0.0;
  for (auto [d, w] : x) s += w * b[d];
  return s;
}

double OnlineClusterTree::link(std::uint32_t a, std::uint32_t b) const {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  return dot(na.sum, nb.sum) / (static_cast<double>(na.size) * nb.size);
}

double OnlineClusterTree::linkage(std::uint32_t internal) const {
  const Node& n = nodes_[internal];
  const double l = n.cross / (static_cast<double>(nodes_[n.left].size) * nodes_[n.right].size);
  return std::clamp(l, 0.0, 1.0);
}

std::uint32_t OnlineClusterTree::sibling(std::uint32_t id) const {
  const auto p = nodes_[id].parent;
  if (p == kInvalidIndex) return kInvalidIndex;
  return nodes_[p].left == id ? nodes_[p].right : nodes_[p].left;
}

void OnlineClusterTree::replace_child(std::uint32_t parent, std::uint32_t old_child, std::uint32_t new_child) {
  Node& p = nodes_[parent];
  if (p.left == old_child) {
    p.left = new_child;
  } else if (p.right == old_child) {
    p.right = new_child;
  } else {
    throw std::logic_error("replace_child: not a child");
  }
  nodes_[new_child].parent = parent;
}

void OnlineClusterTree::propagate(std::uint32_t start, std::uint32_t child_on_path, const std::vector<double>& moved_sum,
                                  std::uint32_t moved_size, double sign) {
  for (auto q = start, child = child_on_path; q != kInvalidIndex; child = q, q = nodes_[q].parent) {
    Node& n = nodes_[q];
    const auto other = n.left == child ? n.right : n.left;
    n.cross += sign * dot(moved_sum, nodes_[other].sum);
    for (std::size_t i = 0; i < dimension_; ++i) n.sum[i] += sign * moved_sum[i];
    n.size = sign > 0 ? n.size + moved_size : n.size - moved_size;
  }
}

void OnlineClusterTree::propagate_sparse(std::uint32_t start, std::uint32_t child_on_path, const SparseVec& x,
                                         double sign) {
  for (auto q = start, child = child_on_path; q != kInvalidIndex; child = q, q = nodes_[q].parent) {
    Node& n = nodes_[q];
    const auto other = n.left == child ? n.right : n.left;
    n.cross += sign * dot(x, nodes_[other].sum);
    for (auto [d, w] : x) n.sum[d] += sign * w;
    n.size = sign > 0 ? n.size + 1 : n.size - 1;
  }
}

bool OnlineClusterTree::contains(EntityId e) const {
  return e.value < leaf_of_.size() && leaf_of_[e.value] != kInvalidIndex;
}

std::size_t OnlineClusterTree::size() const { return leaves_; }

std::uint32_t OnlineClusterTree::nearest_leaf(const SparseVec& x) const {
  std::uint32_t best = kInvalidIndex;
  double best_sim = -1.0;
  for (auto id : leaf_of_) {
    if (id == kInvalidIndex) continue;
    const double s = dot(x, nodes_[id].sum);
    if (s > best_sim) {
      best_sim = s;
      best = id;
    }
  }
  return best;
}

void OnlineClusterTree::insert(const EntityVector& v) {
  if (contains(v.entity)) throw PreconditionError("entity " + std::to_string(v.entity.value) + " is already a leaf");
  if (v.empty()) throw PreconditionError("cannot cluster an entity with an empty vector");
  const auto x = normalised(v);

  if (root_ == kInvalidIndex) {
    root_ = make_leaf(v);
    return;
  }
  const auto near = nearest_leaf(x);
  const auto leaf = make_leaf(v);
  const auto p = allocate();
  const auto g = nodes_[near].parent;
  {
    Node& pn = nodes_[p];
    pn.left = near;
    pn.right = leaf;
    pn.size = 2;
    pn.sum = nodes_[near].sum;
    for (auto [d, w] : x) pn.sum[d] += w;
    pn.cross = dot(x, nodes_[near].sum);
  }
  if (g == kInvalidIndex) {
    root_ = p;
    nodes_[p].parent = kInvalidIndex;
  } else {
    replace_child(g, near, p);
  }
  nodes_[near].parent = p;
  nodes_[leaf].parent = p;
  if (g != kInvalidIndex) propagate_sparse(g, p, x, +1.0);

  rotate_up(leaf);
  // A graft can leave the moved subtree with a better aunt or a better root
  // elsewhere; keep going for a bounded number of rounds.
  auto moved = try_graft(leaf);
  for (int round = 1; moved != kInvalidIndex && round < kMaxGraftRounds; ++round) {
    rotate_up(moved);
    moved = try_graft(moved);
  }
}

void OnlineClusterTree::rotate_up(std::uint32_t v) {
  // While v's sibling is closer to v's aunt than to v, swap v and the aunt:
  // g(p(v, s), a) becomes g(p(a, s), v) and v climbs one level.
  while (true) {
    const auto p = nodes_[v].parent;
    if (p == kInvalidIndex) return;
    const auto g = nodes_[p].parent;
    if (g == kInvalidIndex) return;
    const auto s = sibling(v);
    const auto a = sibling(p);
    if (!(link(s, a) > link(v, s))) return;

    replace_child(p, v, a);
    replace_child(g, a, v);
    Node& pn = nodes_[p];
    const Node& an = nodes_[a];
    const Node& sn = nodes_[s];
    for (std::size_t i = 0; i < dimension_; ++i) pn.sum[i] = an.sum[i] + sn.sum[i];
    pn.size = an.size + sn.size;
    pn.cross = dot(an.sum, sn.sum);
    nodes_[g].cross = dot(pn.sum, nodes_[v].sum);
    ++rotations_;
  }
}

std::vector<std::uint32_t> OnlineClusterTree::flat_roots() const {
  std::vector<std::uint32_t> out;
  if (root_ == kInvalidIndex) return out;
  std::deque<std::uint32_t> frontier{root_};
  while (!frontier.empty()) {
    const auto id = frontier.front();
    frontier.pop_front();
    const Node& n = nodes_[id];
    if (n.is_leaf() || linkage(id) > tau_) {
      out.push_back(id);
    } else {
      frontier.push_back(n.left);
      frontier.push_back(n.right);
    }
  }
  return out;
}

bool OnlineClusterTree::is_ancestor_or_self(std::uint32_t ancestor, std::uint32_t node) const {
  for (auto q = node; q != kInvalidIndex; q = nodes_[q].parent)
    if (q == ancestor) return true;
  return false;
}

void OnlineClusterTree::detach(std::uint32_t v) {
  const auto p = nodes_[v].parent;
  const auto s = sibling(v);
  const auto g = nodes_[p].parent;
  if (g == kInvalidIndex) {
    root_ = s;
    nodes_[s].parent = kInvalidIndex;
  } else {
    replace_child(g, p, s);
  }
  release(p);
  nodes_[v].parent = kInvalidIndex;
  if (g != kInvalidIndex) propagate(g, s, nodes_[v].sum, nodes_[v].size, -1.0);
}

void OnlineClusterTree::attach_as_sibling(std::uint32_t v, std::uint32_t target) {
  const auto q = nodes_[target].parent;
  const auto p = allocate();
  {
    Node& pn = nodes_[p];
    const Node& tn = nodes_[target];
    const Node& vn = nodes_[v];
    pn.left = target;
    pn.right = v;
    pn.size = tn.size + vn.size;
    for (std::size_t i = 0; i < dimension_; ++i) pn.sum[i] = tn.sum[i] + vn.sum[i];
    pn.cross = dot(tn.sum, vn.sum);
  }
  if (q == kInvalidIndex) {
    root_ = p;
    nodes_[p].parent = kInvalidIndex;
  } else {
    replace_child(q, target, p);
  }
  nodes_[target].parent = p;
  nodes_[v].parent = p;
  if (q != kInvalidIndex) propagate(q, p, nodes_[v].sum, nodes_[v].size, +1.0);
}

std::uint32_t OnlineClusterTree::try_graft(std::uint32_t leaf) {
  const auto roots = flat_roots();
  std::vector<char> is_root(nodes_.size(), 0);
  for (auto r : roots) is_root[r] = 1;

  for (auto v = leaf; v != root_; v = nodes_[v].parent) {
    const auto sib = sibling(v);
    std::uint32_t best = kInvalidIndex;
    double best_link = -1.0;
    for (auto r : roots) {
      if (r == sib || is_ancestor_or_self(r, v) || is_ancestor_or_self(v, r)) continue;
      const double l = link(v, r);
      if (l > best_link) {
        best_link = l;
        best = r;
      }
    }
    // Graft only when v and the target each prefer one another over their
    // current siblings.
    if (best != kInvalidIndex && best_link > link(v, sib) && best_link > link(best, sibling(best))) {
      detach(v);
      attach_as_sibling(v, best);
      ++grafts_;
      return v;
    }
    if (is_root[v]) return kInvalidIndex;
  }
  return kInvalidIndex;
}

void OnlineClusterTree::remove(EntityId e) {
  if (!contains(e)) throw LookupError("entity " + std::to_string(e.value) + " is not a leaf");
  const auto leaf = leaf_of_[e.value];
  leaf_of_[e.value] = kInvalidIndex;
  --leaves_;

  const auto p = nodes_[leaf].parent;
  if (p == kInvalidIndex) {
    root_ = kInvalidIndex;
    release(leaf);
    return;
  }
  SparseVec x;
  for (std::uint32_t d = 0; d < dimension_; ++d)
    if (nodes_[leaf].sum[d] != 0.0) x.emplace_back(d, nodes_[leaf].sum[d]);

  const auto s = sibling(leaf);
  const auto g = nodes_[p].parent;
  if (g == kInvalidIndex) {
    root_ = s;
    nodes_[s].parent = kInvalidIndex;
  } else {
    replace_child(g, p, s);
    propagate_sparse(g, s, x, -1.0);
  }
  release(leaf);
  release(p);
}

ClusterTree OnlineClusterTree::snapshot() const {
  ClusterTree tree;
  if (root_ == kInvalidIndex) return tree;
  // Iterative post-order so that children are emitted before parents.
  std::vector<std::uint32_t> mapped(nodes_.size(), kInvalidIndex);
  std::vector<std::pair<std::uint32_t, bool>> stack{{root_, false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    const Node& n = nodes_[id];
    if (n.is_leaf()) {
      mapped[id] = tree.add_leaf(n.entity);
    } else if (expanded) {
      mapped[id] = tree.add_merge(mapped[n.left], mapped[n.right], linkage(id));
    } else {
      stack.emplace_back(id, true);
      stack.emplace_back(n.right, false);
      stack.emplace_back(n.left, false);
    }
  }
  tree.set_root(mapped[root_]);
  return tree;
}

OnlineClusterTree OnlineClusterTree::from_tree(const ClusterTree& tree, const EntityVectors& vectors, double tau) {
  OnlineClusterTree out(vectors.dimension(), tau);
  if (tree.empty()) return out;
  std::vector<std::uint32_t> mapped(tree.num_nodes(), kInvalidIndex);
  std::vector<std::pair<std::uint32_t, bool>> stack{{tree.root(), false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    const ClusterNode& n = tree.node(id);
    if (n.is_leaf()) {
      mapped[id] = out.make_leaf(vectors[n.entity]);
    } else if (expanded) {
      const auto p = out.allocate();
      const auto l = mapped[n.left];
      const auto r = mapped[n.right];
      Node& pn = out.nodes_[p];
      pn.left = l;
      pn.right = r;
      pn.size = out.nodes_[l].size + out.nodes_[r].size;
      for (std::size_t i = 0; i < out.dimension_; ++i) pn.sum[i] = out.nodes_[l].sum[i] + out.nodes_[r].sum[i];
      pn.cross = out.dot(out.nodes_[l].sum, out.nodes_[r].sum);
      out.nodes_[l].parent = p;
      out.nodes_[r].parent = p;
      mapped[id] = p;
    } else {
      stack.emplace_back(id, true);
      stack.emplace_back(n.right, false);
      stack.emplace_back(n.left, false);
    }
  }
  out.root_ = mapped[tree.root()];
  out.nodes_[out.root_].parent = kInvalidIndex;
  return out;
}

void OnlineClusterTree::validate(double tolerance) const {
  if (root_ == kInvalidIndex) {
    if (leaves_ != 0) throw std::logic_error("empty tree with leaves");
    return;
  }
  if (nodes_[root_].parent != kInvalidIndex) throw std::logic_error("root has a parent");
  std::size_t seen_leaves = 0;
  std::vector<std::uint32_t> stack{root_};
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    const Node& n = nodes_[id];
    if (!n.alive) throw std::logic_error("dead node reachable");
    if (n.is_leaf()) {
      if (n.right != kInvalidIndex || n.size != 1) throw std::logic_error("malformed leaf");
      if (!contains(n.entity) || leaf_of_[n.entity.value] != id) throw std::logic_error("leaf index mismatch");
      ++seen_leaves;
      continue;
    }
    if (n.right == kInvalidIndex) throw std::logic_error("internal node with one child");
    const Node& l = nodes_[n.left];
    const Node& r = nodes_[n.right];
    if (l.parent != id || r.parent != id) throw std::logic_error("parent pointer mismatch");
    if (n.size != l.size + r.size) throw std::logic_error("size mismatch");
    for (std::size_t i = 0; i < dimension_; ++i) {
      if (std::abs(n.sum[i] - (l.sum[i] + r.sum[i])) > tolerance) throw std::logic_error("sum mismatch");
    }
    if (std::abs(n.cross - dot(l.sum, r.sum)) > tolerance * std::max(1.0, std::abs(n.cross))) {
      throw std::logic_error("cross product mismatch");
    }
    stack.push_back(n.left);
    stack.push_back(n.right);
  }
  if (seen_leaves != leaves_) throw std::logic_error("leaf count mismatch");
}

}  // namespace pcbr
