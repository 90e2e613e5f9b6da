#include <algorithm>
#include <numeric>
#include <sstream>

#include "doctest.h"

#include "altirl/harness.hpp"
#include "support.hpp"

using namespace altirl;
using namespace altirl::testing;

namespace {

ExperimentConfig small_config(std::uint64_t seed) {
  Json j{{"seed", seed},
         {"environment", {{"kind", "random_mg"}, {"num_states", 4}, {"num_actions", 2}, {"num_players", 2}}},
         {"num_agents", 3},
         {"demos", {{"total", 6}, {"length", 30}}},
         {"policy_schedule", {{"iterations", 60}, {"warmup", 30}, {"thin", 3}}},
         {"reward_schedule", {{"iterations", 40}, {"warmup", 20}, {"thin", 2}}}};
  return ExperimentConfig::from_json(j);
}

bool same_transition(const RewardlessGame& a, const RewardlessGame& b) {
  return Eigen::MatrixXd(a.transition()) == Eigen::MatrixXd(b.transition());
}

}  // namespace

TEST_CASE("game json round trip") {
  SUBCASE("random game") {
    const RewardlessGame game = random_game(5, 3, 2, 0.9, 4);
    const RewardlessGame back = game_from_json(Json::parse(game_to_json(game).dump()));
    CHECK(back.num_states() == 5);
    CHECK(back.discount() == 0.9);
    CHECK(same_transition(game, back));
    CHECK(back.initial_dist() == game.initial_dist());
  }
  SUBCASE("kitchen keeps its seat views") {
    const Kitchen k = build_kitchen(load_layout(std::string(ALTIRL_DATA_DIR) + "/layouts/reduced.txt"));
    const RewardlessGame back = game_from_json(game_to_json(k.game));
    CHECK(back.seat_views() == k.game.seat_views());
    CHECK(same_transition(k.game, back));
  }
  SUBCASE("sparse triplet form") {
    const Json j{{"num_states", 2},
                 {"num_actions", 1},
                 {"num_players", 1},
                 {"discount", 0.5},
                 {"initial_dist", {1.0, 0.0}},
                 {"transition_sparse", {{0, 1, 1.0}, {1, 0, 0.25}, {1, 1, 0.75}}}};
    const RewardlessGame g = game_from_json(j);
    CHECK(g.transition().coeff(1, 1) == 0.75);
    CHECK(g.transition().coeff(0, 0) == 0.0);
  }
  SUBCASE("missing transition throws") {
    CHECK_THROWS_AS(game_from_json(Json{{"num_states", 1}, {"num_actions", 1}, {"num_players", 1}}),
                    std::invalid_argument);
  }
}

TEST_CASE("profile and demonstration round trips") {
  Rng rng(8);
  std::vector<AltruismProfile> profiles;
  for (int i = 0; i < 3; ++i) profiles.push_back({random_matrix(4, 2, rng), -5.0 + 10.0 * uniform01(rng)});
  const auto back = profiles_from_json(Json::parse(profiles_to_json(profiles, {}).dump()));
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].intrinsic == profiles[i].intrinsic);
    CHECK(back[i].altruism == profiles[i].altruism);
  }

  const RewardlessGame game = random_game(4, 2, 2, 0.9, 1);
  const JointPolicy joint = random_joint(game, rng);
  DemonstrationSet demos{{GroupSpec{{0, 2}}, {}}, {GroupSpec{{1, 2}}, {}}};
  for (std::uint64_t k = 0; k < 3; ++k) {
    demos[0].trajectories.push_back(sample_trajectory(game, joint, 10, k));
    demos[1].trajectories.push_back(sample_trajectory(game, joint, 5, 10 + k));
  }
  std::stringstream io;
  write_demonstrations(io, demos);
  const DemonstrationSet read = read_demonstrations(io);
  REQUIRE(read.size() == 2);
  for (std::size_t g = 0; g < 2; ++g) {
    CHECK(read[g].group == demos[g].group);
    REQUIRE(read[g].trajectories.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& a = read[g].trajectories[k].steps;
      const auto& b = demos[g].trajectories[k].steps;
      REQUIRE(a.size() == b.size());
      for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].state == b[t].state);
        CHECK(a[t].actions == b[t].actions);
      }
    }
  }
}

TEST_CASE("budget split and group resolution") {
  CHECK(split_budget(200, 4) == std::vector<int>{50, 50, 50, 50});
  CHECK(split_budget(60, 1) == std::vector<int>{60});
  const auto uneven = split_budget(61, 6);
  CHECK(*std::max_element(uneven.begin(), uneven.end()) - *std::min_element(uneven.begin(), uneven.end()) <= 1);
  CHECK(std::accumulate(uneven.begin(), uneven.end(), 0) == 61);
  CHECK_THROWS_AS(split_budget(10, 0), std::invalid_argument);

  CHECK(resolve_groups({"all", 0, {}}, 4, 3).size() == 4);
  CHECK(resolve_groups({"first", 2, {}}, 4, 2) == std::vector<GroupSpec>{{{0, 1}}, {{0, 2}}});
  CHECK(resolve_groups({"explicit", 0, {{2, 0}, {0, 2}}}, 3, 2) == std::vector<GroupSpec>{{{0, 2}}, {{0, 2}}});
  CHECK_THROWS_AS(resolve_groups({"explicit", 0, {{0, 0}}}, 3, 2), std::invalid_argument);
  CHECK_THROWS_AS(resolve_groups({"first", 9, {}}, 3, 2), std::invalid_argument);
  CHECK_THROWS_AS(resolve_groups({"some", 0, {}}, 3, 2), std::invalid_argument);
}

TEST_CASE("config defaults and round trip") {
  SUBCASE("bare config carries the reference hyperparameters") {
    const ExperimentConfig c = ExperimentConfig::from_json(Json::object());
    CHECK(c.environment.discount == 0.9);
    CHECK(c.environment.dirichlet_alpha == 0.3);
    CHECK(c.demos.beta == 0.1);
    CHECK(c.prior.beta_min == 0.05);
    CHECK(c.prior.beta_rate == 10.0);
    CHECK(c.gap.concentration == 500.0);
    CHECK(c.prior.reward_sigma == doctest::Approx(1.0 / 6.0));
    CHECK_FALSE(c.prior.policy_sigma.has_value());
    CHECK(c.policy_schedule.epsilon0 == 0.2);
    CHECK(c.policy_schedule.alpha == 0.0);
    CHECK(c.reward_schedule.epsilon0 == 1.5);
    CHECK(c.reward_schedule.alpha == 0.5);
    CHECK(c.bounds.lambda_min == -5.0);
    CHECK(c.bounds.lambda_max == 5.0);
  }
  SUBCASE("kitchen and method switches") {
    const ExperimentConfig k = ExperimentConfig::from_json(Json{{"environment", {{"kind", "kitchen"}}}});
    CHECK(k.demos.beta == 0.05);
    CHECK(k.prior.beta_min == 0.03);
    CHECK(*k.prior.policy_sigma == doctest::Approx(1.0 / 40.0));
    CHECK(k.reward_schedule.epsilon0 == 5.0);
    CHECK(k.num_agents == 3);
    const ExperimentConfig q = ExperimentConfig::from_json(Json{{"method", "porp_qig"}});
    CHECK(q.gap.concentration == 50000.0);
    const ExperimentConfig d = ExperimentConfig::from_json(Json{{"method", "drp"}});
    CHECK(d.prior.reward_sigma == doctest::Approx(1.0 / 40.0));
    CHECK(d.reward_schedule.epsilon0 == 0.1);
    CHECK(d.reward_schedule.alpha == 0.05);
  }
  SUBCASE("explicit fields override defaults") {
    const ExperimentConfig c = ExperimentConfig::from_json(Json{{"gap", {{"concentration", 7.0}}}, {"demos", {{"beta", 0.3}}}});
    CHECK(c.gap.concentration == 7.0);
    CHECK(c.demos.beta == 0.3);
  }
  SUBCASE("canonical form is a fixed point") {
    for (const char* kind : {"random_mg", "kitchen"}) {
      for (const char* method : {"drp", "porp_psg", "porp_qig"}) {
        const Json first = ExperimentConfig::from_json(Json{{"environment", {{"kind", kind}}}, {"method", method}}).to_json();
        CHECK(ExperimentConfig::from_json(first).to_json() == first);
      }
    }
  }
  SUBCASE("rejects bad input") {
    CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"sed", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"method", "mcmc"}}), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"demos", {{"total", 0}}}}), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"environment", {{"truth_lambda", {-6.0, 0.0}}}}}),
                    std::invalid_argument);
  }
}

TEST_CASE("pipeline stages") {
  const ExperimentConfig cfg = small_config(3);
  const Environment env = build_environment(cfg);
  CHECK(env.groups.size() == 3);

  SUBCASE("environment and demos are reproducible") {
    const Environment again = build_environment(cfg);
    CHECK(same_transition(env.game, again.game));
    CHECK(profiles_to_json(env.truth, cfg.bounds) == profiles_to_json(again.truth, cfg.bounds));
    std::ostringstream a;
    std::ostringstream b;
    write_demonstrations(a, generate_demos(env, cfg).demos);
    write_demonstrations(b, generate_demos(again, cfg).demos);
    CHECK(a.str() == b.str());
    ExperimentConfig other = cfg;
    other.seed = 4;
    std::ostringstream c;
    write_demonstrations(c, generate_demos(env, other).demos);
    CHECK(a.str() != c.str());
  }

  SUBCASE("each group receives its share of the budget") {
    const DemoBundle bundle = generate_demos(env, cfg);
    REQUIRE(bundle.demos.size() == 3);
    for (const auto& gd : bundle.demos) {
      CHECK(gd.trajectories.size() == 2);
      CHECK(gd.trajectories[0].steps.size() == 30);
    }
  }

  SUBCASE("solver failure names the group") {
    ExperimentConfig failing = cfg;
    failing.qre.max_iters = 1;
    try {
      generate_demos(env, failing);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("group {0,1}") != std::string::npos);
    }
  }

  SUBCASE("inference is bit-reproducible and the method only changes that stage") {
    const DemoBundle bundle = generate_demos(env, cfg);
    const InferenceResult a = run_inference(env, bundle.demos, cfg);
    const InferenceResult b = run_inference(env, bundle.demos, cfg);
    CHECK(a.chain.draws.size() == 10);
    CHECK(a.policies.size() == 3);
    CHECK(profiles_to_json(a.estimate, cfg.bounds) == profiles_to_json(b.estimate, cfg.bounds));
    ExperimentConfig drp = cfg;
    drp.method = Method::drp;
    const InferenceResult d = run_inference(env, bundle.demos, drp);
    CHECK(d.policies.empty());
    CHECK(d.chain.draws.size() == 10);
  }

  SUBCASE("evaluating the truth against itself is exact") {
    const ErrorReport r = error_report(env.truth, env.truth, cfg.bounds);
    CHECK(r.lambda.mean == 0.0);
    CHECK(r.reward_mean_shift.mean == 0.0);
  }

  SUBCASE("duplicate groups fail the rank check") {
    ExperimentConfig dup = cfg;
    dup.groups = {"explicit", 0, {{0, 1}, {0, 1}}};
    const Environment e2 = build_environment(dup);
    const DemoBundle bundle = generate_demos(e2, dup);
    const auto reports = rank_reports(e2, bundle.equilibria);
    REQUIRE(reports.size() == 2);
    for (const auto& r : reports) CHECK_FALSE(r.satisfied);
  }

  SUBCASE("partition study uses common random numbers") {
    ExperimentConfig z = cfg;
    z.z_study.num_policies = 4;
    z.z_study.samples = 50;
    const DemoBundle bundle = generate_demos(env, z);
    const auto rows = z_study(env, bundle.demos, z);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].policy_index == 0);
    CHECK(rows[3].policy_index == 7);
    for (const auto& r : rows) CHECK(std::isfinite(r.estimate.log_z));
  }
}

TEST_CASE("empirical action frequencies approach the equilibrium") {
  Json j{{"seed", 11},
         {"environment", {{"kind", "random_mg"}, {"num_states", 3}, {"num_actions", 3}, {"num_players", 2}}},
         {"num_agents", 2},
         {"demos", {{"total", 40}, {"length", 500}}}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  const Environment env = build_environment(cfg);
  const DemoBundle bundle = generate_demos(env, cfg);
  const auto counts = action_counts(env.game, bundle.demos[0].trajectories);
  int checked = 0;
  for (int seat = 0; seat < 2; ++seat) {
    for (int s = 0; s < 3; ++s) {
      const double visits = counts[static_cast<std::size_t>(seat)].row(s).sum();
      if (visits < 500) continue;
      const Eigen::RowVectorXd freq = counts[static_cast<std::size_t>(seat)].row(s) / visits;
      CHECK(0.5 * (freq - bundle.equilibria[0][seat].row(s)).cwiseAbs().sum() < 0.05);
      ++checked;
    }
  }
  CHECK(checked >= 2);
}

TEST_CASE("imitation with the true rewards reproduces the oracle") {
  Json j{{"seed", 2}, {"environment", {{"kind", "kitchen"}, {"layout", std::string(ALTIRL_DATA_DIR) + "/layouts/reduced.txt"}}}};
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  cfg.imitate.target_lambdas = {-1.0, 0.0, 1.0};
  const Environment env = build_environment(cfg);
  const auto rows = imitation_sweep(env, env.truth, cfg);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.kl_to_oracle < 1e-12);
    CHECK(r.chef_value == r.oracle_chef_value);
  }
  CHECK_THROWS_AS(imitation_sweep(env, {env.truth[0]}, cfg), std::invalid_argument);
}
