#include "l3gs/sched.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

namespace l3gs {

SchedulerKind parse_scheduler(const std::string& name) {
  if (name == "knapsack") return SchedulerKind::knapsack;
  if (name == "progressive") return SchedulerKind::progressive;
  if (name == "progressive-whole") return SchedulerKind::progressive_whole;
  if (name == "sort") return SchedulerKind::sort;
  if (name == "distill") return SchedulerKind::distill;
  if (name == "hierarchy") return SchedulerKind::hierarchy;
  if (name == "preload") return SchedulerKind::preload;
  throw ValidationError("unknown scheduler '" + name +
                        "' (expected knapsack, progressive, progressive-whole, sort, "
                        "distill, hierarchy, preload)");
}

std::string scheduler_name(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::knapsack: return "knapsack";
    case SchedulerKind::progressive: return "progressive";
    case SchedulerKind::progressive_whole: return "progressive-whole";
    case SchedulerKind::sort: return "sort";
    case SchedulerKind::distill: return "distill";
    case SchedulerKind::hierarchy: return "hierarchy";
    case SchedulerKind::preload: return "preload";
  }
  return "?";
}

std::size_t SlotUtilities::slot_of(ObjectId j, int l) const {
  const auto it = std::lower_bound(objects.begin(), objects.end(), j);
  assert(it != objects.end() && *it == j && l >= 1 && l <= num_layers);
  return std::size_t(it - objects.begin()) * num_layers + (l - 1);
}

int DownloadState::layer(ObjectId j) const {
  const auto it = layer_of.find(j);
  return it == layer_of.end() ? 0 : it->second;
}

int DownloadState::best_version(ObjectId j) const {
  if (mode == StateMode::separate_whole)
    return whole_versions.empty() ? 0 : *whole_versions.rbegin();
  const auto it = versions_of.find(j);
  if (it == versions_of.end() || it->second.empty()) return 0;
  return *it->second.rbegin();
}

DownloadState make_initial_state(SchedulerKind kind) {
  DownloadState s;
  switch (kind) {
    case SchedulerKind::knapsack:
    case SchedulerKind::preload: s.mode = StateMode::layered; break;
    case SchedulerKind::progressive: s.mode = StateMode::separate_segmented; break;
    case SchedulerKind::progressive_whole: s.mode = StateMode::separate_whole; break;
    case SchedulerKind::sort: s.mode = StateMode::splat_stream; break;
    case SchedulerKind::distill: s.mode = StateMode::distill; break;
    case SchedulerKind::hierarchy: s.mode = StateMode::hierarchy; break;
  }
  return s;
}

void apply_pick(DownloadState& state, const Pick& pick) {
  switch (pick.form) {
    case PickForm::layer_full:
    case PickForm::layer_compact: {
      const int cur = state.layer(pick.object);
      if (pick.layer != cur + 1)
        throw ValidationError("object " + std::to_string(pick.object) + ": layer " +
                              std::to_string(pick.layer) + " requires layer " +
                              std::to_string(pick.layer - 1) + " first (have " +
                              std::to_string(cur) + ")");
      state.layer_of[pick.object] = pick.layer;
      if (pick.form == PickForm::layer_compact)
        state.compact_layers.insert({pick.object, pick.layer});
      break;
    }
    case PickForm::sh_upgrade: {
      const auto key = std::make_pair(pick.object, pick.layer);
      if (!state.compact_layers.count(key))
        throw ValidationError("object " + std::to_string(pick.object) + ": layer " +
                              std::to_string(pick.layer) +
                              " is not resident in compact form, nothing to refresh");
      state.compact_layers.erase(key);
      break;
    }
    case PickForm::node_expand: {
      if (state.expanded.count(pick.node_id))
        throw ValidationError("node " + std::to_string(pick.node_id) + " already expanded");
      state.expanded.insert(pick.node_id);
      break;
    }
  }
  state.total_bytes += pick.cost_bytes;
}

namespace {

std::uint64_t whole_version_bytes(const CostTable& costs, int v) {
  std::uint64_t sum = 0;
  for (ObjectId j : costs.objects()) sum += costs.cum(j, v);
  return sum;
}

}  // namespace

std::uint64_t advance_version_stream(DownloadState& state, const CostTable& costs,
                                     std::uint64_t budget_bytes) {
  const bool whole = state.mode == StateMode::separate_whole;
  std::uint64_t consumed = 0;
  while (consumed < budget_bytes) {
    if (!state.partial) {
      bool found = false;
      if (whole) {
        for (int v = 1; v <= costs.num_layers() && !found; ++v)
          if (!state.whole_versions.count(v)) {
            state.partial = PartialVersion{0, v, 0};
            found = true;
          }
      } else {
        for (int v = 1; v <= costs.num_layers() && !found; ++v)
          for (ObjectId j : costs.objects())
            if (!state.versions_of[j].count(v)) {
              state.partial = PartialVersion{j, v, 0};
              found = true;
              break;
            }
      }
      if (!found) break;  // everything resident
    }
    const std::uint64_t need = whole ? whole_version_bytes(costs, state.partial->version)
                                     : costs.cum(state.partial->object, state.partial->version);
    const std::uint64_t take =
        std::min(budget_bytes - consumed, need - state.partial->bytes_done);
    state.partial->bytes_done += take;
    consumed += take;
    if (state.partial->bytes_done >= need) {
      if (whole)
        state.whole_versions.insert(state.partial->version);
      else
        state.versions_of[state.partial->object].insert(state.partial->version);
      state.partial.reset();
    }
  }
  state.total_bytes += consumed;
  return consumed;
}

std::uint64_t advance_splat_stream(DownloadState& state, const CostModel& cost,
                                   std::uint64_t total_splats, std::uint64_t budget_bytes) {
  const std::uint64_t full = cost.bytes_full;
  const std::uint64_t have = state.splats_done * full + state.splat_partial_bytes;
  const std::uint64_t want = total_splats * full;
  const std::uint64_t take = std::min(budget_bytes, want - std::min(want, have));
  const std::uint64_t now = have + take;
  state.splats_done = now / full;
  state.splat_partial_bytes = now % full;
  state.total_bytes += take;
  return take;
}

KnapsackInstance build_knapsack_instance(const SlotUtilities& util, const CostTable& costs,
                                         const DownloadState& state,
                                         std::uint64_t budget_bytes,
                                         std::uint64_t resolution) {
  KnapsackInstance inst;
  inst.budget_bytes = budget_bytes;
  inst.resolution = resolution;
  for (ObjectId j : util.objects) {
    KnapsackGroup group;
    group.object = j;
    const int l0 = state.layer(j);
    std::uint64_t cost = 0;
    double value = 0.0;
    for (int l = l0 + 1; l <= util.num_layers; ++l) {
      cost += costs.delta(j, l);
      value += util.cum_delta[util.slot_of(j, l)];
      if (value > 0.0)
        group.options.push_back({j, l0, l, PickForm::layer_full, cost, value});
    }
    if (!group.options.empty()) inst.groups.push_back(std::move(group));
  }
  return inst;
}

namespace {

std::uint64_t cost_cells(const KnapsackOption& o, std::uint64_t resolution) {
  return (o.cost_bytes + resolution - 1) / resolution;
}

}  // namespace

KnapsackSolution solve_knapsack(const KnapsackInstance& inst) {
  const std::uint64_t cells = inst.budget_bytes / inst.resolution;
  const std::size_t n = std::size_t(cells) + 1;
  std::vector<double> val(n, 0.0);
  std::vector<std::uint64_t> bytes(n, 0);
  std::vector<std::vector<std::int32_t>> choice(inst.groups.size());

  std::vector<double> nval;
  std::vector<std::uint64_t> nbytes;
  for (std::size_t g = 0; g < inst.groups.size(); ++g) {
    nval = val;
    nbytes = bytes;
    choice[g].assign(n, -1);
    for (std::size_t oi = 0; oi < inst.groups[g].options.size(); ++oi) {
      const KnapsackOption& o = inst.groups[g].options[oi];
      const std::uint64_t cc = cost_cells(o, inst.resolution);
      if (cc > cells) continue;
      for (std::size_t c = std::size_t(cc); c < n; ++c) {
        const double cv = val[c - cc] + o.value;
        const std::uint64_t cb = bytes[c - cc] + o.cost_bytes;
        // Strict improvement required: on value ties the fewer-bytes
        // solution wins, then whatever was found first stays.
        if (cv > nval[c] || (cv == nval[c] && cb < nbytes[c])) {
          nval[c] = cv;
          nbytes[c] = cb;
          choice[g][c] = std::int32_t(oi);
        }
      }
    }
    val.swap(nval);
    bytes.swap(nbytes);
  }

  KnapsackSolution sol;
  sol.value = val[n - 1];
  sol.cost_bytes = bytes[n - 1];
  std::size_t c = n - 1;
  std::vector<KnapsackOption> rev;
  for (std::size_t g = inst.groups.size(); g-- > 0;) {
    const std::int32_t oi = choice[g][c];
    if (oi >= 0) {
      const KnapsackOption& o = inst.groups[g].options[std::size_t(oi)];
      rev.push_back(o);
      c -= std::size_t(cost_cells(o, inst.resolution));
    }
  }
  sol.chosen.assign(rev.rbegin(), rev.rend());
  return sol;
}

KnapsackSolution solve_knapsack_bruteforce(const KnapsackInstance& inst) {
  const std::uint64_t cells = inst.budget_bytes / inst.resolution;
  KnapsackSolution best;
  std::vector<std::int32_t> pattern(inst.groups.size(), -1);
  std::vector<std::int32_t> best_pattern(inst.groups.size(), -1);

  // The table solver breaks dead ties (equal value and bytes) by preferring,
  // at the highest group where two solutions differ, no pick over any pick
  // and a lower option index over a higher one. Mirror that here so the two
  // solvers agree option-for-option, not just on the objective.
  auto prefers = [&](const std::vector<std::int32_t>& a,
                     const std::vector<std::int32_t>& b) {
    for (std::size_t g = a.size(); g-- > 0;)
      if (a[g] != b[g]) return a[g] < b[g];
    return false;
  };

  auto recurse = [&](auto&& self, std::size_t g, std::uint64_t cells_left, double value,
                     std::uint64_t bytes) -> void {
    if (g == inst.groups.size()) {
      if (value > best.value || (value == best.value && bytes < best.cost_bytes) ||
          (value == best.value && bytes == best.cost_bytes &&
           prefers(pattern, best_pattern))) {
        best.value = value;
        best.cost_bytes = bytes;
        best_pattern = pattern;
        best.chosen.clear();
        for (std::size_t i = 0; i < pattern.size(); ++i)
          if (pattern[i] >= 0)
            best.chosen.push_back(inst.groups[i].options[std::size_t(pattern[i])]);
      }
      return;
    }
    pattern[g] = -1;
    self(self, g + 1, cells_left, value, bytes);
    const auto& options = inst.groups[g].options;
    for (std::size_t oi = 0; oi < options.size(); ++oi) {
      const KnapsackOption& o = options[oi];
      const std::uint64_t cc = cost_cells(o, inst.resolution);
      if (cc > cells_left) continue;
      pattern[g] = std::int32_t(oi);
      self(self, g + 1, cells_left - cc, value + o.value, bytes + o.cost_bytes);
    }
    pattern[g] = -1;
  };
  recurse(recurse, 0, cells, 0.0, 0);
  return best;
}

SlotDecision schedule_knapsack(const SlotUtilities& util, const CostTable& costs,
                               const DownloadState& state, std::uint64_t budget_bytes,
                               std::uint64_t resolution) {
  SlotDecision dec;
  dec.predicted_budget_bytes = budget_bytes;
  const KnapsackInstance inst =
      build_knapsack_instance(util, costs, state, budget_bytes, resolution);
  const KnapsackSolution sol = solve_knapsack(inst);
  for (const KnapsackOption& o : sol.chosen) {
    for (int l = o.from_layer + 1; l <= o.to_layer; ++l) {
      Pick p;
      p.object = o.object;
      p.layer = l;
      p.form = PickForm::layer_full;
      p.cost_bytes = costs.delta(o.object, l);
      p.value = util.cum_delta[util.slot_of(o.object, l)];
      dec.picks.push_back(p);
      dec.bytes_used += p.cost_bytes;
    }
  }
  return dec;
}

SlotDecision schedule_progressive(const DownloadState&, std::uint64_t budget_bytes) {
  SlotDecision dec;
  dec.predicted_budget_bytes = budget_bytes;
  dec.stream_bytes = budget_bytes;
  dec.bytes_used = budget_bytes;
  return dec;
}

SlotDecision schedule_sort(const DownloadState&, std::uint64_t budget_bytes) {
  SlotDecision dec;
  dec.predicted_budget_bytes = budget_bytes;
  dec.stream_bytes = budget_bytes;
  dec.bytes_used = budget_bytes;
  return dec;
}

SlotDecision schedule_distill(const SlotUtilities& util, const CostTable& costs,
                              const Scene& scene, const DownloadState& state,
                              std::uint64_t budget_bytes, double lambda_compact,
                              std::uint64_t resolution) {
  KnapsackInstance inst;
  inst.budget_bytes = budget_bytes;
  inst.resolution = resolution;
  const std::uint64_t sh_delta_bytes =
      scene.cost.bytes_full > scene.cost.bytes_compact
          ? scene.cost.bytes_full - scene.cost.bytes_compact
          : 0;
  for (ObjectId j : util.objects) {
    KnapsackGroup group;
    group.object = j;
    const int l0 = state.layer(j);
    if (l0 < util.num_layers) {
      const int next = l0 + 1;
      const std::uint32_t count = costs.count(j, next);
      const double v = util.cum_delta[util.slot_of(j, next)];
      if (v > 0.0 && count > 0) {
        const std::uint64_t compact_cost =
            std::uint64_t(count) * scene.cost.bytes_compact + scene.cost.header_bytes_per_bundle;
        group.options.push_back(
            {j, l0, next, PickForm::layer_compact, compact_cost, lambda_compact * v});
        group.options.push_back(
            {j, l0, next, PickForm::layer_full, costs.delta(j, next), v});
      }
    }
    for (int l = 1; l <= l0; ++l) {
      if (!state.compact_layers.count({j, l})) continue;
      const double v = (1.0 - lambda_compact) * util.cum_delta[util.slot_of(j, l)];
      if (v <= 0.0) continue;
      const std::uint64_t cost = sh_delta_bytes * costs.count(j, l);
      group.options.push_back({j, l, l, PickForm::sh_upgrade, cost, v});
    }
    if (!group.options.empty()) inst.groups.push_back(std::move(group));
  }

  SlotDecision dec;
  dec.predicted_budget_bytes = budget_bytes;
  const KnapsackSolution sol = solve_knapsack(inst);
  for (const KnapsackOption& o : sol.chosen) {
    Pick p;
    p.object = o.object;
    p.layer = o.to_layer;
    p.form = o.form;
    p.cost_bytes = o.cost_bytes;
    p.value = o.value;
    dec.picks.push_back(p);
    dec.bytes_used += p.cost_bytes;
  }
  return dec;
}

// ---------------------------------------------------------------------------
// Hierarchy

namespace {

struct ProxyAccum {
  double weight = 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double opacity = 0.0;
};

ProxyAccum merge(const ProxyAccum& a, const ProxyAccum& b) {
  ProxyAccum m;
  m.weight = a.weight + b.weight;
  m.mean = (a.weight * a.mean + b.weight * b.mean) / m.weight;
  const Eigen::Vector3d da = a.mean - m.mean;
  const Eigen::Vector3d db = b.mean - m.mean;
  m.cov = (a.weight * (a.cov + da * da.transpose()) +
           b.weight * (b.cov + db * db.transpose())) /
          m.weight;
  m.opacity = (a.weight * a.opacity + b.weight * b.opacity) / m.weight;
  return m;
}

Splat proxy_to_splat(const ProxyAccum& p, ObjectId object, std::uint8_t sh_degree) {
  Splat sp;
  sp.position = p.mean.cast<float>();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(p.cov);
  Eigen::Vector3d evals = es.eigenvalues().cwiseMax(1e-12);
  Eigen::Matrix3d evecs = es.eigenvectors();
  if (evecs.determinant() < 0) evecs.col(0) = -evecs.col(0);
  sp.scale = evals.cwiseSqrt().cast<float>();
  const Eigen::Quaterniond q(evecs);
  sp.rotation = Eigen::Vector4f(float(q.w()), float(q.x()), float(q.y()), float(q.z()));
  sp.opacity = float(std::clamp(p.opacity, 0.0, 1.0));
  sp.sh.assign(3u * (sh_degree + 1u) * (sh_degree + 1u), 0.0f);
  sp.object_id = object;
  sp.layer_id = 1;
  return sp;
}

}  // namespace

HierarchyTree HierarchyTree::build(const Scene& scene) {
  HierarchyTree tree;
  tree.nodes_.push_back(Node{0, -1, {-1, -1}, std::uint32_t(scene.splats.size()), 0});
  tree.proxies_.num_layers = 1;
  tree.proxies_.sh_degree = scene.sh_degree;
  tree.proxies_.cost = scene.cost;

  std::map<ObjectId, std::vector<std::uint32_t>> by_object;
  for (const Splat& sp : scene.splats) by_object[sp.object_id].push_back(sp.splat_index);

  std::vector<ProxyAccum> accums(1);  // super-root's entry unused

  // Builds the subtree over `items`, returns (node id, moments).
  auto subtree = [&](auto&& self, ObjectId object, std::vector<std::uint32_t>& items,
                     int parent) -> std::pair<int, ProxyAccum> {
    const int id = int(tree.nodes_.size());
    tree.nodes_.push_back(Node{id, parent, {-1, -1}, std::uint32_t(items.size()),
                               scene.cost.bytes_full});
    accums.emplace_back();
    if (items.size() == 1) {
      const Splat& sp = scene.splats[items[0]];
      ProxyAccum p;
      p.weight = 1.0;
      p.mean = sp.position.cast<double>();
      const Eigen::Vector4d q = sp.rotation.cast<double>();
      const Eigen::Matrix3d r =
          Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
      p.cov = r * sp.scale.cast<double>().array().square().matrix().asDiagonal() *
              r.transpose();
      p.opacity = sp.opacity;
      accums[id] = p;
      return {id, p};
    }
    // Median split along the widest spatial axis; ties fall back to index
    // order so the tree is reproducible.
    Eigen::Vector3d lo = scene.splats[items[0]].position.cast<double>(), hi = lo;
    for (std::uint32_t i : items) {
      lo = lo.cwiseMin(scene.splats[i].position.cast<double>());
      hi = hi.cwiseMax(scene.splats[i].position.cast<double>());
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    std::sort(items.begin(), items.end(), [&](std::uint32_t a, std::uint32_t b) {
      const float pa = scene.splats[a].position[axis], pb = scene.splats[b].position[axis];
      if (pa != pb) return pa < pb;
      return a < b;
    });
    const std::size_t half = (items.size() + 1) / 2;
    std::vector<std::uint32_t> left(items.begin(), items.begin() + half);
    std::vector<std::uint32_t> right(items.begin() + half, items.end());
    const auto [lid, lp] = self(self, object, left, id);
    const auto [rid, rp] = self(self, object, right, id);
    tree.nodes_[id].child[0] = lid;
    tree.nodes_[id].child[1] = rid;
    const ProxyAccum p = merge(lp, rp);
    accums[id] = p;
    return {id, p};
  };

  std::vector<int> roots;
  for (auto& [object, items] : by_object)
    roots.push_back(subtree(subtree, object, items, 0).first);
  tree.roots_ = roots;

  // Proxy splat for node id k sits at splat index k-1. Ids were assigned
  // depth-first per object in build order, so each object's nodes form a
  // contiguous id range starting at its root.
  std::vector<ObjectId> node_object(tree.nodes_.size(), 0);
  {
    std::size_t r = 0;
    for (auto& [object, items] : by_object) {
      (void)items;
      const int root_id = roots[r++];
      const int end_id = r < roots.size() ? roots[r] : int(tree.nodes_.size());
      for (int id = root_id; id < end_id; ++id) node_object[id] = object;
    }
  }
  for (std::size_t id = 1; id < tree.nodes_.size(); ++id) {
    Splat sp = proxy_to_splat(accums[id], node_object[id], scene.sh_degree);
    sp.splat_index = std::uint32_t(id - 1);
    tree.proxies_.splats.push_back(std::move(sp));
  }
  tree.proxies_.layer_targets = {std::uint32_t(tree.proxies_.splats.size())};
  return tree;
}

bool HierarchyTree::is_leaf(int id) const {
  if (id == 0) return roots_.empty();
  return nodes_[id].child[0] < 0;
}

std::vector<int> HierarchyTree::active_nodes(const DownloadState& state) const {
  std::vector<int> active;
  if (!state.expanded.count(0)) return active;
  for (std::size_t id = 1; id < nodes_.size(); ++id) {
    if (state.expanded.count(int(id))) continue;
    const int parent = nodes_[id].parent;
    if (parent == 0 || state.expanded.count(parent)) active.push_back(int(id));
  }
  return active;
}

double HierarchyTree::active_utility(const DownloadState& state, const Viewport& vp,
                                     const UtilityConfig& cfg) const {
  double sum = 0.0;
  for (int id : active_nodes(state))
    sum += splat_utility(proxies_.splats[id - 1], vp, cfg).utility;
  return sum;
}

SlotDecision HierarchyTree::schedule(const DownloadState& state, const Viewport& vp,
                                     std::uint64_t budget_bytes,
                                     const UtilityConfig& cfg) const {
  SlotDecision dec;
  dec.predicted_budget_bytes = budget_bytes;
  std::uint64_t remaining = budget_bytes;

  std::vector<double> util_cache(nodes_.size(), -1.0);
  auto node_util = [&](int id) {
    if (id == 0) return 0.0;
    if (util_cache[id] < 0.0)
      util_cache[id] = splat_utility(proxies_.splats[id - 1], vp, cfg).utility;
    return util_cache[id];
  };
  auto children_of = [&](int id) -> std::vector<int> {
    if (id == 0) return roots_;
    if (nodes_[id].child[0] < 0) return {};
    return {nodes_[id].child[0], nodes_[id].child[1]};
  };

  struct Candidate {
    double score = 0.0;
    int id = 0;
    std::uint64_t cost = 0;
    double gain = 0.0;
    bool operator<(const Candidate& o) const {
      if (score != o.score) return score < o.score;  // max-heap by score
      return id > o.id;                              // then lowest id first
    }
  };
  std::priority_queue<Candidate> heap;
  auto consider = [&](int id) {
    const auto kids = children_of(id);
    if (kids.empty()) return;
    std::uint64_t cost = 0;
    double gain = -node_util(id);
    for (int k : kids) {
      cost += nodes_[k].bytes;
      gain += node_util(k);
    }
    if (gain > 0.0 && cost > 0)
      heap.push(Candidate{gain / double(cost), id, cost, gain});
  };

  std::set<int> expanded = state.expanded;
  if (!expanded.count(0)) {
    consider(0);
  } else {
    for (int id : active_nodes(state)) consider(id);
  }
  while (!heap.empty()) {
    const Candidate c = heap.top();
    heap.pop();
    if (expanded.count(c.id)) continue;
    if (c.cost > remaining) continue;  // budget only shrinks, drop for good
    expanded.insert(c.id);
    remaining -= c.cost;
    Pick p;
    p.object = c.id == 0 ? 0 : proxies_.splats[c.id - 1].object_id;
    p.form = PickForm::node_expand;
    p.node_id = c.id;
    p.cost_bytes = c.cost;
    p.value = c.gain;
    dec.picks.push_back(p);
    dec.bytes_used += c.cost;
    for (int k : children_of(c.id)) consider(k);
  }
  return dec;
}

}  // namespace l3gs
