#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gaitbridge/error.hpp"
#include "gaitbridge/metrics.hpp"
#include "support.hpp"

using namespace gaitbridge;
using namespace gaitbridge::metrics;

namespace {

EvalRollout rollout_with(std::initializer_list<double> cpd, std::initializer_list<double> root, bool fell = false) {
  EvalRollout r;
  auto c = cpd.begin();
  auto t = root.begin();
  for (; c != cpd.end(); ++c, ++t) {
    TrajectoryStep s;
    s.reward.r_cpd = *c;
    s.reward.r_root = *t;
    r.steps.push_back(s);
  }
  r.fell = fell;
  return r;
}

motion::MotionDataset small_dataset() {
  return motion::MotionDataset({motion::generate_clip(motion::Preset::stand, {0.0, 1.0, 0.0, 1.5}, 0, "stand"),
                                motion::generate_clip(motion::Preset::walk, {1.0, 1.0, 0.5, 2.0}, 1, "walk")});
}

}  // namespace

TEST_CASE("reward averages") {
  const std::vector<EvalRollout> r{rollout_with({1.0, 0.5}, {1.0, 1.0})};
  CHECK(acr(r) == 0.75);
  CHECK(rtr(r) == 1.0);
  const std::vector<EvalRollout> off{rollout_with({0.2}, {std::exp(-1.0)}), rollout_with({0.4, 0.3}, {std::exp(-1.0), std::exp(-1.0)}, true)};
  CHECK(rtr(off) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(acr(off) == doctest::Approx(0.3));
  CHECK(fall_rate(off) == 0.5);
  CHECK_THROWS_AS(acr(std::vector<EvalRollout>{}), InvalidArgument);
  CHECK_THROWS_AS(rtr(std::vector<EvalRollout>{EvalRollout{}}), InvalidArgument);
  CHECK_THROWS_AS(fall_rate(std::vector<EvalRollout>{}), InvalidArgument);
}

TEST_CASE("feature vector") {
  sim::RobotDynState s;
  s.vx = 1;
  s.vz = 2;
  s.pitch_rate = 3;
  for (int j = 0; j < sim::kJointCount; ++j) s.q[j] = 10 + j;
  const Eigen::VectorXd f = feature_vector(s);
  CHECK(f.size() == kFeatureDim);
  CHECK(f[2] == 3);
  CHECK(f[10] == 17);
}

TEST_CASE("diversity of identical features is zero") {
  Rng rng(1);
  CHECK(div(Eigen::MatrixXd::Constant(20, kFeatureDim, 0.7), 5, rng) == 0.0);
}

TEST_CASE("diversity pairs subsets in draw order") {
  Rng data_rng(2);
  const Eigen::MatrixXd pool = testing::random_matrix(12, 3, data_rng);
  // Independent replay: sort rows, partial shuffle with the same seed, average the paired norms.
  std::vector<Eigen::Index> order(12);
  for (Eigen::Index i = 0; i < 12; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::lexicographical_compare(pool.row(a).begin(), pool.row(a).end(), pool.row(b).begin(), pool.row(b).end());
  });
  Rng replay(7);
  for (int i = 0; i < 6; ++i) std::swap(order[i], order[i + replay.index(12 - i)]);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) expected += (pool.row(order[i]) - pool.row(order[3 + i])).norm();
  expected /= 3.0;
  Rng rng(7);
  CHECK(div(pool, 3, rng) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("two pairs with distances one and three average to two") {
  // Points 0, 1, 10, 13 on a line: the matching {0-1, 10-13} averages to 2. Every other matching
  // gives a different value, so some seed must produce exactly that pairing.
  Eigen::MatrixXd pool = Eigen::MatrixXd::Zero(4, 2);
  pool.col(0) << 0, 1, 10, 13;
  bool found = false;
  for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
    Rng rng(seed);
    found = div(pool, 2, rng) == 2.0;
  }
  CHECK(found);
}

TEST_CASE("diversity expectation matches pair enumeration") {
  Rng data_rng(3);
  const Eigen::MatrixXd pool = testing::random_matrix(16, kFeatureDim, data_rng);
  double all_pairs = 0.0;
  int count = 0;
  for (int i = 0; i < 16; ++i)
    for (int j = i + 1; j < 16; ++j) {
      all_pairs += (pool.row(i) - pool.row(j)).norm();
      ++count;
    }
  all_pairs /= count;
  double mc = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    mc += div(pool, 4, rng);
  }
  mc /= 1000.0;
  CHECK(std::abs(mc - all_pairs) / all_pairs < 0.05);
}

TEST_CASE("diversity ignores pooling order and rejects small pools") {
  Rng data_rng(4);
  const Eigen::MatrixXd pool = testing::random_matrix(30, kFeatureDim, data_rng);
  Eigen::MatrixXd reversed = pool.colwise().reverse();
  Rng a(5);
  Rng b(5);
  CHECK(div(pool, 10, a) == div(reversed, 10, b));
  Rng c(5);
  CHECK(div(pool, 10, c) >= 0.0);
  CHECK_THROWS_AS(div(pool, 16, c), InvalidArgument);
  CHECK_THROWS_AS(div(pool, 0, c), InvalidArgument);
}

TEST_CASE("evaluation report") {
  testing::TempDir dir("metrics");
  const TrainConfig cfg = testing::small_config(dir / "data", dir / "run");
  const RunState rs = init_run_state(cfg);
  const PolicyBundle bundle = bundle_from_run(rs, cfg);
  const motion::MotionDataset data = small_dataset();

  std::vector<EvalRollout> rollouts;
  const ReportRow row = eval_report(bundle, data, "init", 16, 3, &rollouts);
  REQUIRE(rollouts.size() == 2);
  CHECK(row.fall_rate >= 0.0);
  CHECK(row.fall_rate <= 1.0);
  CHECK(row.acr > 0.0);
  CHECK(row.acr <= 1.0);
  CHECK(row.subset_size == 16);
  CHECK(row.mode == "full");
  for (const EvalRollout& r : rollouts) {
    const motion::MotionClip& clip = r.clip == "stand" ? data.clips[0] : data.clips[1];
    CHECK(r.steps.size() <= clip.steps());
    if (!r.fell) CHECK(r.steps.size() == clip.steps());
  }

  const ReportRow again = eval_report(bundle, data, "init", 16, 3);
  CHECK(again.acr == row.acr);
  CHECK(again.div == row.div);
  CHECK(again.rtr == row.rtr);

  write_report(dir.path(), {row, again});
  std::istringstream csv(testing::read_file(dir / "report.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "mode,checkpoint,ACR,DIV,RTR,fall_rate,seed");
  CHECK(std::filesystem::exists(dir / "report.txt"));

  // ACR equals the mean of the per-step r_cpd values written to the rollout CSVs.
  write_trajectory_csv(dir / "a.csv", rollouts[0].steps, false);
  write_trajectory_csv(dir / "b.csv", rollouts[1].steps, false);
  double sum = 0.0;
  int n = 0;
  for (const char* name : {"a.csv", "b.csv"}) {
    std::istringstream in(testing::read_file(dir / name));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> cols;
    {
      std::istringstream h(line);
      for (std::string c; std::getline(h, c, ',');) cols.push_back(c);
    }
    const auto at = std::find(cols.begin(), cols.end(), "r_cpd") - cols.begin();
    while (std::getline(in, line)) {
      std::istringstream r(line);
      std::string c;
      for (long k = 0; k <= at; ++k) std::getline(r, c, ',');
      sum += std::stod(c);
      ++n;
    }
  }
  CHECK(std::abs(sum / n - row.acr) < 1e-12);

  const ReportRow shrunk = eval_report(bundle, data, "init", 100000, 3);
  CHECK(shrunk.subset_size == static_cast<int>(feature_pool(rollouts).rows() / 2));
}

TEST_CASE("policy dimension mismatch is rejected") {
  testing::TempDir dir("metrics");
  TrainConfig cfg = testing::small_config(dir / "data", dir / "run");
  RunState rs = init_run_state(cfg);
  PolicyBundle bundle = bundle_from_run(rs, cfg);
  Rng rng(0);
  bundle.policy = rl::PolicyNet::create(50, sim::kActionDim, {8}, -0.5, rng);
  CHECK_THROWS_AS(evaluate_clip(bundle, small_dataset().clips[0]), InvalidArgument);
}
