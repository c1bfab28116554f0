#include "corrdyn/states.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "corrdyn/error.hpp"

namespace corrdyn {

namespace {

struct Split {
  std::vector<Eigen::Index> first;
  std::vector<Eigen::Index> second;
  double sse = std::numeric_limits<double>::infinity();
  bool converged = true;
};

Eigen::VectorXd mean_of(const Eigen::MatrixXd& vectors, const std::vector<Eigen::Index>& members) {
  Eigen::VectorXd center = Eigen::VectorXd::Zero(vectors.rows());
  for (const auto m : members) center += vectors.col(m);
  return center / static_cast<double>(members.size());
}

Eigen::Index farthest_from(const Eigen::MatrixXd& vectors, const std::vector<Eigen::Index>& members,
                           const Eigen::VectorXd& point, double* best_distance) {
  Eigen::Index best = members.front();
  double best_sq = -1.0;
  for (const auto m : members) {
    const double sq = (vectors.col(m) - point).squaredNorm();
    if (sq > best_sq) {
      best_sq = sq;
      best = m;
    }
  }
  if (best_distance) *best_distance = best_sq;
  return best;
}

// One Lloyd run of 2-means from the given initial centers.
Split lloyd(const Eigen::MatrixXd& vectors, const std::vector<Eigen::Index>& members, Eigen::VectorXd c0,
            Eigen::VectorXd c1, int max_iterations) {
  const std::size_t n = members.size();
  std::vector<std::uint8_t> label(n, 2);
  Split out;
  out.converged = false;
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = vectors.col(members[i]);
      const std::uint8_t l = (x - c1).squaredNorm() < (x - c0).squaredNorm() ? 1 : 0;
      if (l != label[i]) {
        label[i] = l;
        changed = true;
      }
    }
    std::size_t n1 = static_cast<std::size_t>(std::count(label.begin(), label.end(), 1));
    if (n1 == 0 || n1 == n) {
      // Empty cluster: move the member farthest from the occupied center.
      const std::uint8_t occupied = n1 == 0 ? 0 : 1;
      const Eigen::VectorXd& center = occupied == 0 ? c0 : c1;
      std::size_t far = 0;
      double far_sq = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double sq = (vectors.col(members[i]) - center).squaredNorm();
        if (sq > far_sq) {
          far_sq = sq;
          far = i;
        }
      }
      label[far] = static_cast<std::uint8_t>(1 - occupied);
      changed = true;
    }
    c0.setZero();
    c1.setZero();
    n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (label[i] == 1) {
        c1 += vectors.col(members[i]);
        ++n1;
      } else {
        c0 += vectors.col(members[i]);
      }
    }
    c0 /= static_cast<double>(n - n1);
    c1 /= static_cast<double>(n1);
    if (!changed) {
      out.converged = true;
      break;
    }
  }
  out.sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = vectors.col(members[i]);
    if (label[i] == 1) {
      out.second.push_back(members[i]);
      out.sse += (x - c1).squaredNorm();
    } else {
      out.first.push_back(members[i]);
      out.sse += (x - c0).squaredNorm();
    }
  }
  return out;
}

// Best of several farthest-pair initialized 2-means runs. Returns an empty
// split when all members coincide.
Split two_means(const Eigen::MatrixXd& vectors, const std::vector<Eigen::Index>& members,
                std::mt19937_64& rng, const BisectOptions& options, bool* any_nonconverged) {
  Split best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    const Eigen::Index start = members[static_cast<std::size_t>(rng() % members.size())];
    double spread = 0.0;
    const Eigen::Index a = farthest_from(vectors, members, vectors.col(start), nullptr);
    const Eigen::Index b = farthest_from(vectors, members, vectors.col(a), &spread);
    if (!(spread > 0.0)) return Split{};
    Split candidate = lloyd(vectors, members, vectors.col(a), vectors.col(b), options.max_iterations);
    if (!candidate.converged) *any_nonconverged = true;
    if (candidate.sse < best.sse) best = std::move(candidate);
  }
  // Orient so the lower-mean-correlation half comes first.
  if (mean_of(vectors, best.second).mean() < mean_of(vectors, best.first).mean()) {
    std::swap(best.first, best.second);
  }
  return best;
}

ClusterNode make_node(const Eigen::MatrixXd& vectors, std::vector<Eigen::Index> members, int parent, int depth) {
  ClusterNode node;
  std::sort(members.begin(), members.end());
  node.members = std::move(members);
  node.center = mean_of(vectors, node.members);
  node.radius = cluster_radius(vectors, node.members, node.center);
  node.parent = parent;
  node.depth = depth;
  return node;
}

double mean_at(const DatedSeries& cbar, const std::vector<Eigen::Index>& members) {
  double sum = 0.0;
  for (const auto m : members) sum += cbar.values[static_cast<std::size_t>(m)];
  return sum / static_cast<double>(members.size());
}

void collect_members(const ClusterTree& tree, int node, std::vector<int>& leaves) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) {
    leaves.push_back(node);
  } else {
    collect_members(tree, n.left, leaves);
    collect_members(tree, n.right, leaves);
  }
}

}  // namespace

std::vector<int> ClusterTree::leaves() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> ClusterTree::leaf_of_sample() const {
  std::vector<int> out(dates.size(), -1);
  for (const int leaf : leaves()) {
    for (const auto m : nodes[static_cast<std::size_t>(leaf)].members) out[static_cast<std::size_t>(m)] = leaf;
  }
  return out;
}

double cluster_radius(const Eigen::MatrixXd& vectors, const std::vector<Eigen::Index>& members,
                      const Eigen::VectorXd& center) {
  if (members.empty()) return 0.0;
  const double norm = std::sqrt(static_cast<double>(vectors.rows()));
  double sum = 0.0;
  for (const auto m : members) sum += (vectors.col(m) - center).norm() / norm;
  return sum / static_cast<double>(members.size());
}

ClusterTree bisect_kmeans(const Eigen::MatrixXd& vectors, std::vector<std::string> dates,
                          const BisectOptions& options) {
  if (vectors.cols() == 0 || vectors.rows() == 0) throw InsufficientDataError("clustering an empty set");
  if (!(options.threshold > 0.0)) throw ConfigError(fmt::format("threshold must be positive, got {}", options.threshold));
  if (static_cast<Eigen::Index>(dates.size()) != vectors.cols()) {
    throw DimensionError(fmt::format("{} dates for {} vectors", dates.size(), vectors.cols()));
  }
  ClusterTree tree;
  tree.threshold = options.threshold;
  tree.dates = std::move(dates);
  std::vector<Eigen::Index> all(static_cast<std::size_t>(vectors.cols()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  tree.nodes.push_back(make_node(vectors, std::move(all), -1, 0));

  std::mt19937_64 rng(options.seed);
  int rank = 0;
  while (true) {
    int target = -1;
    for (const int leaf : tree.leaves()) {
      const auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
      if (node.radius < options.threshold || node.members.size() < 2) continue;
      if (target < 0) {
        target = leaf;
        continue;
      }
      const auto& best = tree.nodes[static_cast<std::size_t>(target)];
      if (node.radius > best.radius ||
          (node.radius == best.radius && node.mean_coefficient() < best.mean_coefficient())) {
        target = leaf;
      }
    }
    if (target < 0) break;

    bool nonconverged = false;
    Split split = two_means(vectors, tree.nodes[static_cast<std::size_t>(target)].members, rng, options, &nonconverged);
    if (split.first.empty()) {
      // Coincident members have zero radius, so this cannot loop.
      tree.nodes[static_cast<std::size_t>(target)].radius = 0.0;
      continue;
    }
    if (nonconverged) {
      tree.diagnostics.push_back(fmt::format(
          "warning: 2-means on node {} hit the {}-iteration cap; kept the best split found", target,
          options.max_iterations));
    }
    const int depth = tree.nodes[static_cast<std::size_t>(target)].depth + 1;
    tree.nodes.push_back(make_node(vectors, std::move(split.first), target, depth));
    tree.nodes.push_back(make_node(vectors, std::move(split.second), target, depth));
    auto& parent = tree.nodes[static_cast<std::size_t>(target)];
    parent.left = static_cast<int>(tree.nodes.size()) - 2;
    parent.right = static_cast<int>(tree.nodes.size()) - 1;
    parent.split_rank = rank++;
  }
  return tree;
}

const char* to_string(StateClass c) noexcept {
  switch (c) {
    case StateClass::kCalm:
      return "calm";
    case StateClass::kIntermediate:
      return "intermediate";
    case StateClass::kTurbulent:
      return "turbulent";
  }
  return "calm";
}

StateClass parse_state_class(const std::string& name) {
  if (name == "calm") return StateClass::kCalm;
  if (name == "intermediate") return StateClass::kIntermediate;
  if (name == "turbulent") return StateClass::kTurbulent;
  throw DataError(fmt::format("unknown state class '{}'", name));
}

StateAssignment label_states(const ClusterTree& tree, const DatedSeries& cbar) {
  if (cbar.dates != tree.dates) {
    throw DataError(fmt::format("alignment error: cluster tree covers {} dates, mean correlation series {}",
                                tree.dates.size(), cbar.dates.size()));
  }
  const auto leaves = tree.leaves();
  const auto leaf_of = tree.leaf_of_sample();

  // Class groups: subtrees created by the first two splits.
  std::vector<int> group_roots;
  if (!tree.nodes[0].is_leaf()) {
    const auto& root = tree.nodes[0];
    const auto second = std::find_if(tree.nodes.begin(), tree.nodes.end(),
                                     [](const ClusterNode& n) { return n.split_rank == 1; });
    if (second == tree.nodes.end()) {
      group_roots = {root.left, root.right};
    } else {
      const int split_node = static_cast<int>(second - tree.nodes.begin());
      const int other = split_node == root.left ? root.right : root.left;
      group_roots = {second->left, second->right, other};
    }
  }
  std::map<int, StateClass> class_of_leaf;
  if (group_roots.empty()) {
    class_of_leaf[0] = StateClass::kCalm;
  } else {
    std::vector<std::pair<double, std::size_t>> order;
    std::vector<std::vector<int>> group_leaves(group_roots.size());
    for (std::size_t g = 0; g < group_roots.size(); ++g) {
      collect_members(tree, group_roots[g], group_leaves[g]);
      order.emplace_back(mean_at(cbar, tree.nodes[static_cast<std::size_t>(group_roots[g])].members), g);
    }
    std::sort(order.begin(), order.end());
    const std::vector<StateClass> ranks =
        group_roots.size() == 3
            ? std::vector<StateClass>{StateClass::kCalm, StateClass::kIntermediate, StateClass::kTurbulent}
            : std::vector<StateClass>{StateClass::kCalm, StateClass::kTurbulent};
    for (std::size_t r = 0; r < order.size(); ++r) {
      for (const int leaf : group_leaves[order[r].second]) class_of_leaf[leaf] = ranks[r];
    }
  }

  const int first_leaf = leaf_of.front();
  std::vector<std::pair<double, int>> rest;
  for (const int leaf : leaves) {
    if (leaf != first_leaf) rest.emplace_back(mean_at(cbar, tree.nodes[static_cast<std::size_t>(leaf)].members), leaf);
  }
  std::sort(rest.begin(), rest.end());
  std::vector<int> ordered = {first_leaf};
  for (const auto& [mean, leaf] : rest) ordered.push_back(leaf);

  StateAssignment out;
  out.dates = cbar.dates;
  out.labels.assign(cbar.dates.size(), 0);
  for (std::size_t s = 0; s < ordered.size(); ++s) {
    const auto& node = tree.nodes[static_cast<std::size_t>(ordered[s])];
    StateInfo info;
    info.label = static_cast<int>(s) + 1;
    info.node = ordered[s];
    info.days = node.members.size();
    info.mean_cbar = mean_at(cbar, node.members);
    info.state_class = class_of_leaf.at(ordered[s]);
    for (const auto m : node.members) out.labels[static_cast<std::size_t>(m)] = info.label;
    out.states.push_back(info);
  }
  return out;
}

void write_states(const std::filesystem::path& path, const StateAssignment& assign) {
  csv::Writer w(path);
  w.line("date,state,class");
  for (std::size_t t = 0; t < assign.dates.size(); ++t) {
    w.row("{},{},{}", assign.dates[t], assign.labels[t], to_string(assign.class_of(assign.labels[t])));
  }
}

StateAssignment read_states(const std::filesystem::path& path, const DatedSeries& cbar) {
  const auto lines = csv::read_lines(path);
  const std::string file = path.string();
  StateAssignment out;
  std::map<int, StateClass> classes;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (lines[l].empty()) continue;
    const auto cells = csv::split(lines[l]);
    if (cells.size() != 3) throw FormatError(file, l + 1, "expected date,state,class");
    const auto label = static_cast<int>(csv::parse_int(cells[1], file, l + 1, "state"));
    if (label < 1) throw FormatError(file, l + 1, "state labels start at 1");
    out.dates.push_back(cells[0]);
    out.labels.push_back(label);
    classes[label] = parse_state_class(cells[2]);
  }
  if (out.dates != cbar.dates) {
    throw DataError(fmt::format("alignment error: '{}' dates differ from the mean correlation series", file));
  }
  const int count = classes.empty() ? 0 : classes.rbegin()->first;
  out.states.resize(static_cast<std::size_t>(count));
  for (int s = 1; s <= count; ++s) {
    auto& info = out.states[static_cast<std::size_t>(s - 1)];
    info.label = s;
    if (classes.count(s)) info.state_class = classes[s];
  }
  for (std::size_t t = 0; t < out.labels.size(); ++t) {
    auto& info = out.states[static_cast<std::size_t>(out.labels[t] - 1)];
    ++info.days;
    info.mean_cbar += cbar.values[t];
  }
  for (auto& info : out.states) {
    if (info.days > 0) info.mean_cbar /= static_cast<double>(info.days);
  }
  return out;
}

std::string dendrogram_json(const ClusterTree& tree, const StateAssignment& assign) {
  std::map<int, int> label_of_node;
  for (const auto& s : assign.states) label_of_node[s.node] = s.label;
  auto build = [&](auto&& self, int id) -> nlohmann::ordered_json {
    const auto& node = tree.nodes[static_cast<std::size_t>(id)];
    nlohmann::ordered_json j;
    j["node"] = id;
    j["size"] = node.members.size();
    j["radius"] = node.radius;
    j["mean_coefficient"] = node.mean_coefficient();
    if (node.is_leaf()) {
      if (label_of_node.count(id)) {
        const int label = label_of_node[id];
        j["state"] = label;
        j["class"] = to_string(assign.class_of(label));
        j["mean_cbar"] = assign.states[static_cast<std::size_t>(label - 1)].mean_cbar;
      }
    } else {
      j["split_rank"] = node.split_rank;
      j["children"] = nlohmann::ordered_json::array({self(self, node.left), self(self, node.right)});
    }
    return j;
  };
  return build(build, 0).dump(2);
}

PairMask::PairMask(std::vector<int> groups) : groups_(std::move(groups)), run_end_(groups_.size()) {
  for (std::size_t t = groups_.size(); t-- > 0;) {
    const bool joins = t + 1 < groups_.size() && groups_[t] >= 0 && groups_[t] == groups_[t + 1];
    run_end_[t] = joins ? run_end_[t + 1] : t;
  }
}

std::vector<int> PairMask::group_ids() const {
  std::vector<int> ids;
  for (const int g : groups_) {
    if (g >= 0) ids.push_back(g);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

PairMask PairMask::only(int group) const {
  std::vector<int> g = groups_;
  for (int& v : g) {
    if (v != group) v = -1;
  }
  return PairMask(std::move(g));
}

std::size_t PairMask::count(std::size_t tau) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < groups_.size(); ++t) n += admits(t, tau) ? 1 : 0;
  return n;
}

PairMask condition_masks(const StateAssignment& assign, ConditionMode mode, const MergeList& merges) {
  std::vector<int> groups(assign.labels.size());
  if (mode == ConditionMode::kPerClass) {
    for (std::size_t t = 0; t < groups.size(); ++t) groups[t] = static_cast<int>(assign.class_of(assign.labels[t]));
    return PairMask(std::move(groups));
  }
  std::map<int, int> rename;
  for (const auto& group : merges) {
    if (group.empty()) continue;
    const int target = *std::min_element(group.begin(), group.end());
    for (const int label : group) rename[label] = target;
  }
  for (std::size_t t = 0; t < groups.size(); ++t) {
    const auto it = rename.find(assign.labels[t]);
    groups[t] = it == rename.end() ? assign.labels[t] : it->second;
  }
  return PairMask(std::move(groups));
}

MergeList auto_merge(const StateAssignment& assign, std::size_t min_days) {
  const std::size_t s = assign.state_count();
  std::vector<int> parent(s);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (std::size_t i = 0; i < s; ++i) {
    const auto& info = assign.states[i];
    if (info.days >= min_days) continue;
    int partner = -1;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s; ++j) {
      const auto& other = assign.states[j];
      if (j == i || other.state_class != info.state_class) continue;
      const double g = std::abs(other.mean_cbar - info.mean_cbar);
      if (g < gap) {
        gap = g;
        partner = static_cast<int>(j);
      }
    }
    if (partner >= 0) parent[static_cast<std::size_t>(find(static_cast<int>(i)))] = find(partner);
  }
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < s; ++i) groups[find(static_cast<int>(i))].push_back(static_cast<int>(i) + 1);
  MergeList out;
  for (auto& [root, labels] : groups) {
    if (labels.size() > 1) out.push_back(labels);
  }
  std::sort(out.begin(), out.end());
  return out;
}

MergeList parse_merges(const std::string& text) {
  MergeList out;
  std::stringstream groups(text);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<int> labels;
    std::stringstream parts(group);
    std::string part;
    while (std::getline(parts, part, '+')) {
      try {
        std::size_t used = 0;
        const int label = std::stoi(part, &used);
        if (label < 1 || part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
        labels.push_back(label);
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("bad merge list '{}': expected groups like 2+3;4+5", text));
      }
    }
    if (labels.size() < 2) throw ConfigError(fmt::format("merge group '{}' needs at least two states", group));
    out.push_back(labels);
  }
  return out;
}

std::string format_merges(const MergeList& merges) {
  std::vector<std::string> groups;
  for (const auto& g : merges) groups.push_back(fmt::format("{}", fmt::join(g, "+")));
  return fmt::format("{}", fmt::join(groups, ";"));
}

StepSeries steps_and_increments(const Eigen::MatrixXd& vectors, const DatedSeries& cbar,
                                const StateAssignment& assign) {
  const auto n = static_cast<std::size_t>(vectors.cols());
  if (cbar.size() != n || assign.labels.size() != n) {
    throw DimensionError(fmt::format("{} vectors, {} mean correlations, {} state labels", n, cbar.size(),
                                     assign.labels.size()));
  }
  if (n < 2) throw InsufficientDataError("steps need at least 2 dates");
  StepSeries out;
  const double norm = std::sqrt(static_cast<double>(vectors.rows()));
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    out.dates.push_back(cbar.dates[t]);
    out.steps.push_back((vectors.col(ti + 1) - vectors.col(ti)).norm() / norm);
    out.increments.push_back(std::abs(cbar.values[t + 1] - cbar.values[t]));
    out.transition.push_back(assign.labels[t + 1] != assign.labels[t]);
  }
  return out;
}

void write_steps(const std::filesystem::path& path, const StepSeries& steps) {
  csv::Writer w(path);
  w.line("date,step,increment,transition");
  for (std::size_t t = 0; t < steps.dates.size(); ++t) {
    w.row("{},{},{},{}", steps.dates[t], steps.steps[t], steps.increments[t], steps.transition[t] ? 1 : 0);
  }
}

void write_step_histograms(const std::filesystem::path& path, const StepSeries& steps, int bins) {
  if (bins < 1) throw ConfigError("histograms need at least one bin");
  csv::Writer w(path);
  w.line("quantity,group,bin_lower,bin_upper,count");
  auto emit = [&](const char* name, const std::vector<double>& values) {
    const double top = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
    const double width = top > 0.0 ? top / bins : 1.0 / bins;
    std::vector<std::size_t> within(static_cast<std::size_t>(bins), 0);
    std::vector<std::size_t> across(static_cast<std::size_t>(bins), 0);
    for (std::size_t t = 0; t < values.size(); ++t) {
      const auto b = std::min(static_cast<std::size_t>(values[t] / width), static_cast<std::size_t>(bins - 1));
      (steps.transition[t] ? across : within)[b]++;
    }
    for (const auto& [group, counts] : {std::pair{"within", &within}, std::pair{"transition", &across}}) {
      for (int b = 0; b < bins; ++b) {
        w.row("{},{},{},{},{}", name, group, b * width, (b + 1) * width, (*counts)[static_cast<std::size_t>(b)]);
      }
    }
  };
  emit("step", steps.steps);
  emit("increment", steps.increments);
}

}  // namespace corrdyn
