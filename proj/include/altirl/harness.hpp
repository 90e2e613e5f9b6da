#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "altirl/diagnostics.hpp"
#include "altirl/environments.hpp"
#include "altirl/inference.hpp"
#include "altirl/io.hpp"

namespace altirl {

enum class Method { drp, porp_psg, porp_qig };
Method parse_method(const std::string& name);
std::string to_string(Method method);

enum class EnvironmentKind { random_mg, kitchen };

struct EnvironmentConfig {
  EnvironmentKind kind = EnvironmentKind::random_mg;
  // Random Markov games.
  int num_states = 8;
  int num_actions = 3;
  int num_players = 2;
  double dirichlet_alpha = 0.3;
  std::optional<int> reward_count;
  // Kitchen.
  std::string layout = "data/layouts/reduced.txt";
  std::vector<ChefKind> chefs{ChefKind::deliver, ChefKind::both, ChefKind::cook};

  double discount = 0.9;
  std::array<double, 2> truth_lambda{-5.0, 5.0};  // ground-truth altruism ~ U(range)
};

struct GroupsConfig {
  std::string mode = "all";  // all, first, explicit
  int count = 0;             // for "first"
  std::vector<std::vector<int>> list;  // for "explicit", duplicates allowed
};

struct DemoConfig {
  int total = 200;
  int length = 1000;
  double beta = 0.1;  // true entropy parameter
};

struct ImitateConfig {
  int ai_agent = 0;    // the chef whose role the synthesized partner takes
  int chef_agent = 1;  // the partner that keeps its true reward and no altruism
  std::vector<double> target_lambdas{-1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
};

struct ZStudyConfig {
  int group_index = 0;
  int num_policies = 50;
  int samples = 20000;
  double proposal_variance = 0.16;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  EnvironmentConfig environment;
  int num_agents = 4;
  std::optional<std::string> profiles_path;  // explicit ground truth instead of generation
  GroupsConfig groups;
  DemoConfig demos;
  Method method = Method::porp_psg;
  RewardBounds bounds;
  PriorConfig prior;
  SgldSchedule policy_schedule;
  SgldSchedule reward_schedule;
  GapConfig gap;
  QreConfig qre;
  int unroll = 50;
  PointEstimate point = PointEstimate::mean;
  ImitateConfig imitate;
  ZStudyConfig z_study;
  std::string output_dir = "out";

  // Defaults for the environment kind and method in `j`, overridden by every field present.
  // Unknown keys are rejected.
  static ExperimentConfig from_json(const Json& j);
  static ExperimentConfig defaults(EnvironmentKind kind, Method method);
  int group_size() const;
  Json to_json() const;
  void validate() const;
};

// Per-group trajectory counts differing by at most one, earlier groups first.
std::vector<int> split_budget(int total, int num_groups);

std::vector<GroupSpec> resolve_groups(const GroupsConfig& cfg, int num_agents, int group_size);

// Named substreams of the master seed.
std::uint64_t substream(std::uint64_t master, const char* name);

struct Environment {
  RewardlessGame game;
  std::vector<AltruismProfile> truth;
  std::vector<GroupSpec> groups;
  std::optional<KitchenCodec> kitchen;
};

Environment build_environment(const ExperimentConfig& cfg, const std::string& base_dir = ".");

struct DemoBundle {
  DemonstrationSet demos;
  std::vector<JointPolicy> equilibria;  // per group, the policy the demonstrations were drawn from
};

// QRE of each group's composed true rewards at the configured beta, then trajectories.
DemoBundle generate_demos(const Environment& env, const ExperimentConfig& cfg);

struct InferenceResult {
  RewardChainSamples chain;
  std::vector<PolicyChainSamples> policies;  // PORP only
  std::vector<AltruismProfile> estimate;
  double seconds = 0.0;
};

InferenceResult run_inference(const Environment& env, const DemonstrationSet& demos, const ExperimentConfig& cfg);

// Every agent seen in two of the given groups, with the groups' equilibria as partners.
std::vector<RankReport> rank_reports(const Environment& env, const std::vector<JointPolicy>& equilibria);

struct ZStudyRow {
  int policy_index = 0;
  PartitionEstimate estimate;
};

std::vector<ZStudyRow> z_study(const Environment& env, const DemonstrationSet& demos, const ExperimentConfig& cfg);

struct ImitationRow {
  double target_lambda = 0.0;
  double oracle_chef_value = 0.0;
  double chef_value = 0.0;
  double kl_to_oracle = 0.0;  // synthesized partner seat only
};

// The partner sits in seat 0 and the chef in seat 1.
std::vector<ImitationRow> imitation_sweep(const Environment& env, const std::vector<AltruismProfile>& estimate,
                                          const ExperimentConfig& cfg);

}  // namespace altirl
