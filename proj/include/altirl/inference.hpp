#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "altirl/gaps.hpp"
#include "altirl/qre.hpp"
#include "altirl/rewards.hpp"
#include "altirl/rng.hpp"

namespace altirl {

struct PriorConfig {
  double reward_sigma = 1.0 / 6.0;     // Gaussian on psi_r
  std::optional<double> policy_sigma;  // Gaussian on policy logits; empty means flat
  double beta_rate = 10.0;
  double beta_min = 0.05;

  void validate() const;
};

struct SgldSchedule {
  double epsilon0 = 0.1;
  double alpha = 0.05;
  int iterations = 1000;
  int warmup = 500;
  double momentum = 0.99;
  double precondition_epsilon = 1e-8;
  int thin = 1;  // keep every thin-th post-warmup draw

  double step_size(int t) const;
  void validate() const;
};

// Demonstrations of one group, seats in sorted member order.
struct GroupDemonstrations {
  GroupSpec group;
  std::vector<Trajectory> trajectories;
};

using DemonstrationSet = std::vector<GroupDemonstrations>;

// Per-seat visit counts of (state, own action), each (|S|, |A|).
std::vector<Eigen::MatrixXd> action_counts(const RewardlessGame& game, const std::vector<Trajectory>& trajectories);

// sum_i sum_{s,a} counts_i(s, a) log pi_i(a | s).
double log_likelihood(const std::vector<Eigen::MatrixXd>& counts, const JointPolicy& joint);

// Log prior of all agents' reward parameters: Gaussian on psi_r, uniform on
// lambda over its bounds including the Jacobian of the sigmoid map.
double log_prior_reward(const std::vector<AgentRewardParams>& params, const PriorConfig& cfg);
std::vector<ParamGradient> log_prior_reward_gradient(const std::vector<AgentRewardParams>& params,
                                                     const PriorConfig& cfg);

// Exponential(beta_rate) conditioned on beta >= beta_min, by inverse CDF.
double sample_beta(const PriorConfig& cfg, Rng& rng);

// Running state of the RMSProp preconditioner.
struct SgldState {
  Eigen::VectorXd second_moment;
  bool primed = false;
};

// One preconditioned Langevin step on `x` given the log-posterior gradient and
// a standard normal draw `noise` of the same size. The second-moment average
// starts at the first squared gradient, or at 1 where that gradient is zero. When `clip` is set, x is clamped to
// [-clip, clip] afterwards. Throws std::runtime_error on a non-finite gradient.
void sgld_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, const Eigen::VectorXd& noise, SgldState& state,
               const SgldSchedule& schedule, int t, std::optional<double> clip = std::nullopt);

// Stream keys for agents. Defaults to the agent indices.
std::vector<std::uint64_t> default_agent_keys(int num_agents);
std::uint64_t group_key(const GroupSpec& group, const std::vector<std::uint64_t>& agent_keys);

struct PolicyChainSamples {
  GroupSpec group;
  std::vector<JointPolicy> samples;
};

PolicyChainSamples policy_posterior_chain(const RewardlessGame& game, const GroupDemonstrations& demos,
                                          const PriorConfig& prior, const SgldSchedule& schedule,
                                          std::uint64_t seed);

struct ChainDraw {
  int step = 0;
  Eigen::VectorXd psi;               // flattened parameters of every agent at the start of the step
  std::vector<double> betas;         // per group
  std::vector<double> diagnostics;   // per group: gap value (PORP) or log-likelihood (DRP)
  double log_posterior = 0.0;        // unnormalized
};

struct RewardChainSamples {
  std::vector<AgentRewardParams> layout;  // shapes and bounds of the parameters
  std::vector<ChainDraw> draws;

  std::vector<AgentRewardParams> params_of(const ChainDraw& draw) const;
};

// psi_r ~ N(0, reward_sigma^2) and lambda ~ U(bounds), one keyed stream per agent.
std::vector<AgentRewardParams> initial_params(int num_agents, int num_states, int num_actions,
                                              const RewardBounds& bounds, const PriorConfig& prior,
                                              std::uint64_t seed, const std::vector<std::uint64_t>& agent_keys);

struct PorpConfig {
  GapConfig gap;
  PriorConfig prior;
  SgldSchedule schedule;
};

RewardChainSamples porp_reward_chain(const RewardlessGame& game, const std::vector<PolicyChainSamples>& policies,
                                     const PorpConfig& cfg, std::vector<AgentRewardParams> init, std::uint64_t seed,
                                     const std::vector<std::uint64_t>& agent_keys);

struct QreLikelihood {
  double log_likelihood = 0.0;
  JointPolicy policy;                    // policy after the unrolled iterations
  std::vector<Eigen::MatrixXd> reward_gradient;  // per seat, (|S|, |A|^n)
};

// Log-likelihood of `counts` under `unroll` damped soft-response iterations
// started from `start`, and its gradient with respect to the effective
// rewards by reverse accumulation. `start` is treated as a constant.
QreLikelihood unrolled_log_likelihood(const RewardlessGame& game, const GroupReward& reward, double beta,
                                      const JointPolicy& start, const std::vector<Eigen::MatrixXd>& counts,
                                      int unroll, double damping);

struct DrpConfig {
  PriorConfig prior;
  SgldSchedule schedule;
  QreConfig qre;
  int unroll = 50;
};

RewardChainSamples drp_chain(const RewardlessGame& game, const DemonstrationSet& demos, const DrpConfig& cfg,
                             std::vector<AgentRewardParams> init, std::uint64_t seed,
                             const std::vector<std::uint64_t>& agent_keys);

enum class PointEstimate { mean, map };

// Chain mean of psi (or the highest recorded log-posterior draw), materialized.
std::vector<AgentRewardParams> posterior_point_params(const RewardChainSamples& chain, PointEstimate mode);
std::vector<AltruismProfile> posterior_point_estimate(const RewardChainSamples& chain, PointEstimate mode);

}  // namespace altirl
