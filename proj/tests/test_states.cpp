#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "corrdyn/corrwin.hpp"
#include "corrdyn/error.hpp"
#include "corrdyn/states.hpp"
#include "test_util.hpp"

using namespace corrdyn;

namespace {

struct Blobs {
  Eigen::MatrixXd vectors;
  std::vector<int> truth;
  std::vector<std::string> dates;
};

// Three Gaussian clouds in d = 50 with per-coordinate spread `s`.
Blobs three_blobs(std::uint64_t seed, double s = 0.01, int per = 60) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const Eigen::Index d = 50;
  Blobs b;
  b.vectors.resize(d, 3 * per);
  for (int t = 0; t < 3 * per; ++t) {
    const int k = (t / 7) % 3;  // interleaved runs of 7 days
    b.truth.push_back(k);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double center = 0.2 * k + (i / 16 == k ? 10.0 * s : 0.0);
      b.vectors(i, t) = center + s * z(rng);
    }
    b.dates.push_back("d" + std::to_string(1000 + t));
  }
  return b;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  auto c2 = [](double n) { return n * (n - 1) / 2; };
  double sj = 0, sa = 0, sb = 0;
  for (auto& [k, v] : joint) sj += c2(v);
  for (auto& [k, v] : ra) sa += c2(v);
  for (auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  return (sj - expected) / (0.5 * (sa + sb) - expected);
}

DatedSeries column_means(const Eigen::MatrixXd& v, const std::vector<std::string>& dates) {
  DatedSeries s;
  s.dates = dates;
  for (Eigen::Index t = 0; t < v.cols(); ++t) s.values.push_back(v.col(t).mean());
  return s;
}

StateAssignment manual_assignment(std::vector<int> labels, std::vector<StateClass> classes,
                                  std::vector<double> means) {
  StateAssignment a;
  a.labels = std::move(labels);
  for (std::size_t t = 0; t < a.labels.size(); ++t) a.dates.push_back(std::to_string(t));
  for (std::size_t s = 0; s < classes.size(); ++s) {
    StateInfo info;
    info.label = static_cast<int>(s) + 1;
    info.state_class = classes[s];
    info.mean_cbar = means[s];
    info.days = static_cast<std::size_t>(std::count(a.labels.begin(), a.labels.end(), info.label));
    a.states.push_back(info);
  }
  return a;
}

bool brute_admits(const std::vector<int>& g, std::size_t t, std::size_t tau) {
  if (t + tau >= g.size() || g[t] < 0) return false;
  for (std::size_t s = t; s <= t + tau; ++s) {
    if (g[s] != g[t]) return false;
  }
  return true;
}

}  // namespace

TEST(States, RecoversThreeClusters) {
  const auto b = three_blobs(1);
  const auto tree = bisect_kmeans(b.vectors, b.dates, {0.025, 1, 10, 100});
  const auto leaves = tree.leaves();
  ASSERT_EQ(leaves.size(), 3u);
  const auto leaf_of = tree.leaf_of_sample();
  EXPECT_NEAR(adjusted_rand_index(leaf_of, b.truth), 1.0, 1e-12);
}

TEST(States, PartitionCentersAndRadii) {
  const auto b = three_blobs(2, 0.02, 50);
  const auto tree = bisect_kmeans(b.vectors, b.dates, {0.015, 3, 5, 100});
  std::vector<int> seen(static_cast<std::size_t>(b.vectors.cols()), 0);
  for (const int leaf : tree.leaves()) {
    const auto& node = tree.nodes[static_cast<std::size_t>(leaf)];
    EXPECT_LT(node.radius, 0.015);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(b.vectors.rows());
    for (const auto m : node.members) {
      ++seen[static_cast<std::size_t>(m)];
      mean += b.vectors.col(m);
    }
    mean /= static_cast<double>(node.members.size());
    EXPECT_LT((mean - node.center).cwiseAbs().maxCoeff(), 1e-12);
    double r = 0.0;
    for (const auto m : node.members) r += distance(b.vectors.col(m), mean);
    EXPECT_NEAR(node.radius, r / static_cast<double>(node.members.size()), 1e-12);
  }
  for (const int s : seen) EXPECT_EQ(s, 1);
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const auto& node = tree.nodes[id];
    if (node.is_leaf()) continue;
    const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
    const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
    EXPECT_EQ(l.members.size() + r.members.size(), node.members.size());
    EXPECT_LE(l.mean_coefficient(), r.mean_coefficient());
    EXPECT_EQ(l.parent, static_cast<int>(id));
  }
}

TEST(States, LargeThresholdKeepsRoot) {
  const auto b = three_blobs(3);
  const auto tree = bisect_kmeans(b.vectors, b.dates, {10.0, 1, 10, 100});
  EXPECT_EQ(tree.leaves().size(), 1u);
  const auto assign = label_states(tree, column_means(b.vectors, b.dates));
  EXPECT_EQ(assign.state_count(), 1u);
  EXPECT_EQ(assign.class_of(1), StateClass::kCalm);
}

TEST(States, Deterministic) {
  const auto b = three_blobs(4, 0.03);
  const BisectOptions opts{0.02, 7, 10, 100};
  const auto t1 = bisect_kmeans(b.vectors, b.dates, opts);
  const auto t2 = bisect_kmeans(b.vectors, b.dates, opts);
  EXPECT_EQ(t1.leaf_of_sample(), t2.leaf_of_sample());
}

TEST(States, PermutationInvariantPartition) {
  const auto b = three_blobs(8);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(b.vectors.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(99));
  Eigen::MatrixXd shuffled(b.vectors.rows(), b.vectors.cols());
  std::vector<std::string> dates;
  std::vector<int> truth;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.col(static_cast<Eigen::Index>(i)) = b.vectors.col(perm[i]);
    dates.push_back(b.dates[static_cast<std::size_t>(perm[i])]);
    truth.push_back(b.truth[static_cast<std::size_t>(perm[i])]);
  }
  const auto tree = bisect_kmeans(shuffled, dates, {0.025, 1, 10, 100});
  EXPECT_EQ(tree.leaves().size(), 3u);
  EXPECT_NEAR(adjusted_rand_index(tree.leaf_of_sample(), truth), 1.0, 1e-12);
}

TEST(States, ClusteringErrors) {
  EXPECT_THROW(bisect_kmeans(Eigen::MatrixXd(3, 0), {}, {}), InsufficientDataError);
  EXPECT_THROW(bisect_kmeans(Eigen::MatrixXd::Zero(3, 2), {"a"}, {}), DimensionError);
  EXPECT_THROW(bisect_kmeans(Eigen::MatrixXd::Zero(3, 2), {"a", "b"}, {0.0}), ConfigError);
}

TEST(States, LabelsAndClasses) {
  const auto b = three_blobs(5);
  const auto tree = bisect_kmeans(b.vectors, b.dates, {0.025, 1, 10, 100});
  const auto cbar = column_means(b.vectors, b.dates);
  const auto assign = label_states(tree, cbar);
  ASSERT_EQ(assign.state_count(), 3u);
  EXPECT_EQ(assign.labels.front(), 1);
  for (std::size_t s = 2; s < assign.states.size(); ++s) {
    EXPECT_LE(assign.states[s - 1].mean_cbar, assign.states[s].mean_cbar);
  }
  // Blob k has mean 0.2 k + 32 s / 50 with k = truth, so classes follow truth.
  for (std::size_t t = 0; t < b.truth.size(); ++t) {
    EXPECT_EQ(static_cast<int>(assign.class_of(assign.labels[t])), b.truth[t]);
  }
  std::size_t days = 0;
  for (const auto& s : assign.states) days += s.days;
  EXPECT_EQ(days, b.truth.size());

  auto shifted = cbar;
  shifted.dates.pop_back();
  shifted.values.pop_back();
  try {
    label_states(tree, shifted);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("alignment"), std::string::npos);
  }
}

TEST(States, FilesRoundTrip) {
  corrdyn::testing::TempDir dir;
  const auto b = three_blobs(6);
  const auto tree = bisect_kmeans(b.vectors, b.dates, {0.025, 1, 10, 100});
  const auto cbar = column_means(b.vectors, b.dates);
  const auto assign = label_states(tree, cbar);
  write_states(dir / "s.csv", assign);
  const auto back = read_states(dir / "s.csv", cbar);
  EXPECT_EQ(back.labels, assign.labels);
  for (int label = 1; label <= 3; ++label) EXPECT_EQ(back.class_of(label), assign.class_of(label));

  const auto j = nlohmann::json::parse(dendrogram_json(tree, assign));
  EXPECT_EQ(j["size"], b.truth.size());
  EXPECT_EQ(j["children"].size(), 2u);

  auto other = cbar;
  other.dates[3] = "x";
  EXPECT_THROW(read_states(dir / "s.csv", other), DataError);
}

TEST(States, PairMaskMatchesBruteForce) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> g(-1, 2), len(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> groups;
    while (groups.size() < 200) {
      const int v = g(rng), l = len(rng);
      for (int i = 0; i < l; ++i) groups.push_back(v);
    }
    const PairMask mask(groups);
    std::size_t previous = groups.size();
    for (std::size_t tau = 0; tau <= 8; ++tau) {
      std::size_t n = 0;
      for (std::size_t t = 0; t < groups.size() + 2; ++t) {
        const bool want = t < groups.size() && brute_admits(groups, t, tau);
        ASSERT_EQ(mask.admits(t, tau), want) << "t=" << t << " tau=" << tau;
        n += want;
      }
      EXPECT_EQ(mask.count(tau), n);
      EXPECT_LE(n, previous);
      previous = n;
    }
    const auto only = mask.only(1);
    for (std::size_t t = 0; t < groups.size(); ++t) {
      EXPECT_EQ(only.admits(t, 2), groups[t] == 1 && brute_admits(groups, t, 2));
    }
  }
}

TEST(States, ConditionMasksAndMerges) {
  const auto assign = manual_assignment({1, 1, 2, 3, 3, 2, 4, 4, 1},
                                        {StateClass::kCalm, StateClass::kIntermediate, StateClass::kIntermediate,
                                         StateClass::kTurbulent},
                                        {0.1, 0.3, 0.35, 0.6});
  const auto per_state = condition_masks(assign, ConditionMode::kPerState);
  EXPECT_FALSE(per_state.admits(2, 1));
  const auto merged = condition_masks(assign, ConditionMode::kPerState, {{2, 3}});
  EXPECT_TRUE(merged.admits(2, 3));
  EXPECT_EQ(merged.groups()[3], 2);
  const auto per_class = condition_masks(assign, ConditionMode::kPerClass);
  EXPECT_EQ(per_class.groups(), (std::vector<int>{0, 0, 1, 1, 1, 1, 2, 2, 0}));
  EXPECT_EQ(per_class.group_ids(), (std::vector<int>{0, 1, 2}));

  // State 3 (2 days) joins the nearest intermediate state; state 4 has no partner.
  EXPECT_EQ(auto_merge(assign, 3), (MergeList{{2, 3}}));
  EXPECT_TRUE(auto_merge(assign, 0).empty());
}

TEST(States, MergeListSyntax) {
  EXPECT_EQ(parse_merges("2+3;4+5"), (MergeList{{2, 3}, {4, 5}}));
  EXPECT_EQ(parse_merges(""), MergeList{});
  EXPECT_EQ(format_merges({{2, 3}, {4, 5, 6}}), "2+3;4+5+6");
  EXPECT_THROW(parse_merges("2"), ConfigError);
  EXPECT_THROW(parse_merges("2+x"), ConfigError);
  EXPECT_THROW(parse_merges("0+1"), ConfigError);
  EXPECT_EQ(parse_state_class("turbulent"), StateClass::kTurbulent);
  EXPECT_STREQ(to_string(StateClass::kIntermediate), "intermediate");
  EXPECT_THROW(parse_state_class("stormy"), DataError);
}

TEST(States, StepsBoundIncrements) {
  const auto b = three_blobs(7, 0.05);
  const auto tree = bisect_kmeans(b.vectors, b.dates, {0.06, 1, 10, 100});
  const auto cbar = column_means(b.vectors, b.dates);
  const auto assign = label_states(tree, cbar);
  const auto steps = steps_and_increments(b.vectors, cbar, assign);
  ASSERT_EQ(steps.steps.size(), b.truth.size() - 1);
  const double root_d = std::sqrt(50.0);
  for (std::size_t t = 0; t + 1 < b.truth.size(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    EXPECT_NEAR(steps.steps[t], (b.vectors.col(ti + 1) - b.vectors.col(ti)).norm() / root_d, 1e-14);
    EXPECT_NEAR(steps.increments[t], std::abs(cbar.values[t + 1] - cbar.values[t]), 1e-14);
    EXPECT_LE(steps.increments[t], steps.steps[t] + 1e-15);
    EXPECT_EQ(steps.transition[t], assign.labels[t] != assign.labels[t + 1]);
  }

  corrdyn::testing::TempDir dir;
  write_step_histograms(dir / "h.csv", steps, 12);
  const auto lines = csv::read_lines(dir / "h.csv");
  ASSERT_EQ(lines.front(), "quantity,group,bin_lower,bin_upper,count");
  std::map<std::string, long long> total;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto cells = csv::split(lines[l]);
    total[cells[0]] += std::stoll(cells[4]);
  }
  EXPECT_EQ(total["step"], static_cast<long long>(steps.steps.size()));
  EXPECT_EQ(total["increment"], static_cast<long long>(steps.steps.size()));
}
