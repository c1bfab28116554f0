#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corrdyn/csv_io.hpp"

namespace corrdyn {

/// One node of the bisection tree. Leaves are the market states.
struct ClusterNode {
  std::vector<Eigen::Index> members;  // ascending sample indices
  Eigen::VectorXd center;             // mean member vector
  double radius = 0.0;                // mean sqrt(d)-normalized distance to center
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  int split_rank = -1;  // 0 for the first split performed, 1 for the second, ...

  bool is_leaf() const noexcept { return left < 0; }
  /// Mean of the center components, i.e. the cluster's mean correlation.
  double mean_coefficient() const { return center.mean(); }
};

struct ClusterTree {
  std::vector<ClusterNode> nodes;  // nodes[0] is the root
  std::vector<std::string> dates;  // one per sample
  double threshold = 0.0;
  std::vector<std::string> diagnostics;

  /// Leaf node ids in creation order.
  std::vector<int> leaves() const;
  /// Leaf node id of every sample.
  std::vector<int> leaf_of_sample() const;
};

struct BisectOptions {
  double threshold = 0.164;
  std::uint64_t seed = 1;
  int restarts = 10;
  int max_iterations = 100;
};

/// Bisecting k-means over the columns of `vectors` (d x N). The leaf with
/// the largest radius (ties: lower mean coefficient) is split by 2-means
/// until every leaf radius is below the threshold. Each 2-means run starts
/// from the farthest pair reached from a seeded random member and the best
/// of `restarts` runs (lowest within-cluster sum of squares) is kept.
ClusterTree bisect_kmeans(const Eigen::MatrixXd& vectors, std::vector<std::string> dates,
                          const BisectOptions& options);

/// Radius of a member set around its own mean.
double cluster_radius(const Eigen::MatrixXd& vectors, const std::vector<Eigen::Index>& members,
                      const Eigen::VectorXd& center);

enum class StateClass { kCalm = 0, kIntermediate = 1, kTurbulent = 2 };

const char* to_string(StateClass c) noexcept;
StateClass parse_state_class(const std::string& name);

struct StateInfo {
  int label = 0;
  int node = -1;
  std::size_t days = 0;
  double mean_cbar = 0.0;
  StateClass state_class = StateClass::kCalm;
};

/// Per-date market state labels 1..S. Label 1 is the state of the first
/// date; the others follow ascending within-state mean correlation.
struct StateAssignment {
  std::vector<std::string> dates;
  std::vector<int> labels;
  std::vector<StateInfo> states;  // states[label - 1]

  std::size_t state_count() const noexcept { return states.size(); }
  StateClass class_of(int label) const { return states.at(static_cast<std::size_t>(label - 1)).state_class; }
};

/// Labels the leaves of `tree`. Classes come from the first two splits: the
/// three subtrees they create are ranked calm / intermediate / turbulent by
/// mean correlation (a single split gives calm and turbulent only).
StateAssignment label_states(const ClusterTree& tree, const DatedSeries& cbar);

void write_states(const std::filesystem::path& path, const StateAssignment& assign);
StateAssignment read_states(const std::filesystem::path& path, const DatedSeries& cbar);

/// Nested JSON description of the tree, leaves annotated with their label.
std::string dendrogram_json(const ClusterTree& tree, const StateAssignment& assign);

/// Admission rule for displacement pairs (t, t + tau): every day of the
/// closed interval must carry the same non-negative group id.
class PairMask {
 public:
  PairMask() = default;
  explicit PairMask(std::vector<int> groups);

  bool admits(std::size_t t, std::size_t tau) const noexcept {
    return t + tau < groups_.size() && groups_[t] >= 0 && run_end_[t] >= t + tau;
  }
  std::size_t size() const noexcept { return groups_.size(); }
  const std::vector<int>& groups() const noexcept { return groups_; }
  /// Group ids present, ascending.
  std::vector<int> group_ids() const;
  /// Copy admitting only pairs that lie inside `group`.
  PairMask only(int group) const;
  std::size_t count(std::size_t tau) const;

 private:
  std::vector<int> groups_;
  std::vector<std::size_t> run_end_;
};

enum class ConditionMode { kPerState, kPerClass };

/// Merge groups of state labels treated as a single state, e.g. {{2,3},{4,5}}.
using MergeList = std::vector<std::vector<int>>;

/// Per-state masks use the state label (merged groups take their smallest
/// label); per-class masks use the class id 0..2.
PairMask condition_masks(const StateAssignment& assign, ConditionMode mode, const MergeList& merges = {});

/// Merges every state with fewer than `min_days` days into the same-class
/// state nearest in mean correlation, when one exists.
MergeList auto_merge(const StateAssignment& assign, std::size_t min_days);

MergeList parse_merges(const std::string& text);  // "2+3;4+5"
std::string format_merges(const MergeList& merges);

/// Daily steps S(t) = |c(t+1) - c(t)| / sqrt(d) and increments
/// D(t) = |cbar(t+1) - cbar(t)|, dated by t.
struct StepSeries {
  std::vector<std::string> dates;
  std::vector<double> steps;
  std::vector<double> increments;
  std::vector<bool> transition;  // state(t+1) != state(t)
};

StepSeries steps_and_increments(const Eigen::MatrixXd& vectors, const DatedSeries& cbar,
                                const StateAssignment& assign);

void write_steps(const std::filesystem::path& path, const StepSeries& steps);

/// Histograms of steps and increments split into within-state and
/// transition days on shared edges. CSV: quantity,group,bin_lower,bin_upper,count.
void write_step_histograms(const std::filesystem::path& path, const StepSeries& steps, int bins = 40);

}  // namespace corrdyn
