#include <cmath>

#include "doctest.h"

#include <Eigen/QR>

#include "altirl/diagnostics.hpp"
#include "altirl/environments.hpp"
#include "support.hpp"

using namespace altirl;
using namespace altirl::testing;

namespace {

// Rank by column-pivoted QR, independent of the SVD path.
int qr_rank(const Eigen::MatrixXd& m) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-10);
  return static_cast<int>(qr.rank());
}

double sample_sd(const std::vector<double>& x) {
  double mean = 0.0;
  for (const double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (const double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size() - 1));
}

}  // namespace

TEST_CASE("rank condition") {
  SUBCASE("single state is always satisfied") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const RewardlessGame game = random_game(1, 3, 2, 0.9, seed);
      Rng rng(seed);
      const RankReport r = check_rank_condition(game, random_joint(game, rng), 0, random_joint(game, rng), 1);
      CHECK(r.required == 1);
      CHECK(r.stacked_rank == 1);
      CHECK(r.satisfied);
    }
  }

  SUBCASE("duplicate groups fail") {
    const RewardlessGame game = random_game(3, 2, 2, 0.9, 7);
    Rng rng(7);
    const JointPolicy joint = random_joint(game, rng);
    const RankReport r = check_rank_condition(game, joint, 0, joint, 0);
    CHECK(r.stacked_rank <= 3);
    CHECK_FALSE(r.satisfied);
    CHECK(r.singular_values.size() == 6);
    CHECK(std::is_sorted(r.singular_values.rbegin(), r.singular_values.rend()));
  }

  SUBCASE("distinct random partners satisfy it, matching a QR rank oracle") {
    int satisfied = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const RewardlessGame game = random_game(4, 3, 2, 0.9, 100 + seed);
      Rng rng(seed);
      const JointPolicy a = random_joint(game, rng);
      const JointPolicy b = random_joint(game, rng);
      const RankReport r = check_rank_condition(game, a, 0, b, 0);
      CHECK(r.stacked_rank == qr_rank(rank_condition_matrix(game, a, 0, b, 0)));
      CHECK(r.stacked_rank <= r.required);
      satisfied += r.satisfied;
    }
    CHECK(satisfied >= 95);
  }

  SUBCASE("dropping action blocks never raises the rank") {
    const RewardlessGame game = random_game(4, 3, 2, 0.9, 9);
    Rng rng(9);
    const Eigen::MatrixXd m = rank_condition_matrix(game, random_joint(game, rng), 1, random_joint(game, rng), 0);
    int previous = 0;
    for (Index blocks = 1; blocks <= 3; ++blocks) {
      const Eigen::MatrixXd top = m.topRows(blocks * 4);
      const int rank = numerical_rank(Eigen::JacobiSVD<Eigen::MatrixXd>(top).singularValues(), top.rows(), top.cols());
      CHECK(rank >= previous);
      previous = rank;
    }
  }

  SUBCASE("json report") {
    const RewardlessGame game = random_game(2, 2, 2, 0.9, 3);
    Rng rng(3);
    RankReport r = check_rank_condition(game, random_joint(game, rng), 0, random_joint(game, rng), 1);
    r.agent = 2;
    r.groups = {GroupSpec{{0, 2}}, GroupSpec{{2, 3}}};
    const nlohmann::json j = to_json(r);
    CHECK(j["required"] == 3);
    CHECK(j["groups"][1][0] == 2);
    CHECK(j["satisfied"].get<bool>() == r.satisfied);
  }
}

TEST_CASE("partition estimate") {
  const RewardlessGame game = random_game(2, 2, 2, 0.9, 21);
  Rng rng(21);
  std::vector<AltruismProfile> truth;
  for (int i = 0; i < 3; ++i) truth.push_back({random_matrix(2, 2, rng), -1.0 + 2.0 * uniform01(rng)});
  const GroupSpec group{{0, 2}};
  const JointPolicy joint = random_joint(game, rng);

  SUBCASE("zero concentration returns the prior volume") {
    PartitionConfig cfg;
    cfg.gap.concentration = 0.0;
    cfg.samples = 50;
    const PartitionEstimate z = estimate_partition(game, truth, group, joint, cfg, 1);
    CHECK(z.log_volume == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-14));
    CHECK(z.log_z_self_normalized == doctest::Approx(z.log_volume).epsilon(1e-12));
  }

  SUBCASE("replicates agree and the spread shrinks like 1/sqrt(N)") {
    PartitionConfig cfg;
    std::vector<double> small;
    std::vector<double> large;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      cfg.samples = 250;
      small.push_back(estimate_partition(game, truth, group, joint, cfg, seed).z);
      cfg.samples = 1000;
      large.push_back(estimate_partition(game, truth, group, joint, cfg, 1000 + seed).z);
    }
    const double ratio = sample_sd(small) / sample_sd(large);
    MESSAGE("sd ratio for 4x samples: " << ratio);
    CHECK(ratio > 1.4);
    CHECK(ratio < 2.8);
    double mean_small = 0.0;
    double mean_large = 0.0;
    for (std::size_t k = 0; k < small.size(); ++k) {
      mean_small += small[k] / 40.0;
      mean_large += large[k] / 40.0;
    }
    const double se = std::sqrt((sample_sd(small) * sample_sd(small) + sample_sd(large) * sample_sd(large)) / 40.0);
    CHECK(std::abs(mean_small - mean_large) < 3.0 * se);
  }

  SUBCASE("common seeds give identical estimates") {
    PartitionConfig cfg;
    cfg.samples = 100;
    CHECK(estimate_partition(game, truth, group, joint, cfg, 5).log_z ==
          estimate_partition(game, truth, group, joint, cfg, 5).log_z);
  }
}

TEST_CASE("altruism error") {
  CHECK(lambda_error({1.0, -2.0}, {1.0, -2.0}).mean == 0.0);
  const LambdaError e = lambda_error({5.0}, {0.0});
  CHECK(e.mean == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(uniform_guess_error(0.0, -5.0, 5.0) == doctest::Approx(100.0 / 12.0));

  Rng rng(2);
  const std::vector<double> truth{-4.0, 0.5, 3.0};
  double acc = 0.0;
  const int draws = 200000;
  for (int k = 0; k < draws; ++k) {
    std::vector<double> guess;
    for (std::size_t i = 0; i < truth.size(); ++i) guess.push_back(-5.0 + 10.0 * uniform01(rng));
    acc += lambda_error(guess, truth).mean;
  }
  CHECK(acc / draws == doctest::Approx(1.0).epsilon(0.01));

  const LambdaError a = lambda_error({1.0, 2.0, -3.0}, {0.0, 2.5, -1.0});
  const LambdaError b = lambda_error({-3.0, 1.0, 2.0}, {-1.0, 0.0, 2.5});
  CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-15));
  CHECK_THROWS_AS(lambda_error({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(lambda_error({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("reward error") {
  Rng rng(3);
  const Eigen::MatrixXd truth = (random_matrix(5, 3, rng).array() < 0.3).cast<double>();
  const std::vector<Eigen::MatrixXd> t{truth};

  CHECK(reward_error(t, t, RewardAlignment::raw).mean == 0.0);
  CHECK(reward_error(t, t, RewardAlignment::mean_shift).mean == 0.0);

  const std::vector<Eigen::MatrixXd> shifted{truth.array() + 0.3};
  const double baseline = truth.unaryExpr([](double r) { return 1.0 / 3.0 - r + r * r; }).mean();
  CHECK(reward_error(shifted, t, RewardAlignment::mean_shift).mean < 1e-28);
  CHECK(reward_error(shifted, t, RewardAlignment::raw).mean == doctest::Approx(0.09 / baseline).epsilon(1e-12));

  // Binary truth: every entry's baseline is 1/3 whether it is 0 or 1.
  CHECK(baseline == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  double acc = 0.0;
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) {
    acc += reward_error({random_matrix(5, 3, rng)}, t, RewardAlignment::raw).mean;
  }
  CHECK(acc / draws == doctest::Approx(1.0).epsilon(0.01));

  const std::vector<Eigen::MatrixXd> t2{truth, Eigen::MatrixXd::Ones(5, 3) - truth};
  const std::vector<Eigen::MatrixXd> e2{random_matrix(5, 3, rng), random_matrix(5, 3, rng)};
  const std::vector<Eigen::MatrixXd> t2r{t2[1], t2[0]};
  const std::vector<Eigen::MatrixXd> e2r{e2[1], e2[0]};
  CHECK(reward_error(e2, t2, RewardAlignment::mean_shift).mean ==
        doctest::Approx(reward_error(e2r, t2r, RewardAlignment::mean_shift).mean).epsilon(1e-14));
  CHECK_THROWS_AS(reward_error({Eigen::MatrixXd::Zero(2, 2)}, t, RewardAlignment::raw), std::invalid_argument);

  const ErrorReport report = error_report({{truth, 1.0}}, {{truth, 0.0}});
  const nlohmann::json j = to_json(report);
  CHECK(j["lambda_mse_rescaled"]["mean"].get<double>() == doctest::Approx(1.0 / (100.0 / 12.0)));
  CHECK(j["reward_mse_rescaled"]["mean_shift"]["mean"].get<double>() == 0.0);
}

TEST_CASE("policy divergence") {
  PolicyMatrix oracle(1, 2);
  oracle << 0.5, 0.5;
  PolicyMatrix candidate(1, 2);
  candidate << 0.75, 0.25;
  CHECK(policy_kl(oracle, oracle) == 0.0);
  CHECK(policy_kl(oracle, candidate) == doctest::Approx(0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0)).epsilon(1e-14));
  CHECK(policy_kl(oracle, candidate) == doctest::Approx(0.1438).epsilon(1e-3));

  PolicyMatrix o2(2, 2);
  o2 << 0.5, 0.5, 0.5, 0.5;
  PolicyMatrix c2(2, 2);
  c2 << 0.75, 0.25, 0.75, 0.25;
  CHECK(policy_kl(o2, c2) == doctest::Approx(policy_kl(oracle, candidate)).epsilon(1e-15));

  PolicyMatrix zero(1, 2);
  zero << 1.0, 0.0;
  CHECK(std::isinf(policy_kl(oracle, zero)));
  CHECK(policy_kl(zero, oracle) == doctest::Approx(std::log(2.0)));

  JointPolicy jo{{oracle, zero}};
  JointPolicy jc{{candidate, zero}};
  CHECK(policy_kl(jo, jc) == doctest::Approx(0.5 * policy_kl(oracle, candidate)).epsilon(1e-14));
}

TEST_CASE("partner synthesis") {
  const RewardlessGame game = random_game(4, 2, 2, 0.9, 31);
  Rng rng(31);
  const Eigen::MatrixXd ai = random_matrix(4, 2, rng);
  const Eigen::MatrixXd chef = random_matrix(4, 2, rng);
  const double beta = 0.5;

  SUBCASE("zero target altruism is the egoistic game") {
    const SynthesisResult s = synthesize_partner(game, ai, chef, chef, 0, 0.0, beta);
    const GroupReward ego = compose_group_reward({{ai, 0.0}, {chef, 0.0}}, GroupSpec{{0, 1}});
    const QreResult eq = solve_qre(game, ego, beta);
    CHECK(policy_kl(eq.policy, s.policy) < 1e-8);
    const ValueBundle vb = soft_policy_evaluation(game, ego, s.policy, beta);
    CHECK(s.chef_value == doctest::Approx(game.initial_dist().dot(vb.values[1])).epsilon(1e-12));
  }

  SUBCASE("the AI seat matches the composed reward of altruism target_lambda") {
    const SynthesisResult s = synthesize_partner(game, ai, chef, chef, 1, 0.7, beta);
    const GroupReward composed = compose_group_reward({{chef, 0.0}, {ai, 0.7}}, GroupSpec{{0, 1}});
    CHECK(policy_kl(solve_qre(game, composed, beta).policy, s.policy) < 1e-8);
  }

  SUBCASE("identical inputs give identical partners") {
    for (const double lambda : {-1.0, 0.0, 1.0, 2.0}) {
      const SynthesisResult a = synthesize_partner(game, ai, chef, chef, 0, lambda, beta);
      const SynthesisResult b = synthesize_partner(game, ai, chef, chef, 0, lambda, beta);
      CHECK(policy_kl(a.policy, b.policy) < 1e-8);
    }
  }

  CHECK_THROWS_AS(synthesize_partner(random_game(2, 2, 3, 0.9, 1), ai, chef, chef, 0, 0.0, beta),
                  std::invalid_argument);
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 25, 100}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ranks of y with the tie: 1, 2.5, 2.5, 4.
  CHECK(spearman({1, 2, 3, 4}, {1, 2, 2, 3}) == doctest::Approx(4.5 / std::sqrt(5.0 * 4.5)));
  CHECK_THROWS_AS(spearman({1}, {1}), std::invalid_argument);
}
