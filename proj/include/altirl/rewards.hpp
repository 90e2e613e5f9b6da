#pragma once

#include <vector>

#include <Eigen/Core>

#include "altirl/game.hpp"

namespace altirl {

struct RewardBounds {
  double r_min = 0.0;
  double r_max = 1.0;
  double lambda_min = -5.0;
  double lambda_max = 5.0;
};

// Unconstrained parameters of one agent. Entries stay in [-kPsiClip, kPsiClip].
struct AgentRewardParams {
  static constexpr double kPsiClip = 9.0;

  Eigen::MatrixXd psi_r;  // (|S|, |A|)
  double psi_lambda = 0.0;
  RewardBounds bounds;

  void clip();
};

struct AltruismProfile {
  Eigen::MatrixXd intrinsic;  // (|S|, |A|)
  double altruism = 0.0;
};

// Gradient with respect to AgentRewardParams, same layout.
struct ParamGradient {
  Eigen::MatrixXd psi_r;
  double psi_lambda = 0.0;

  static ParamGradient zeros_like(const AgentRewardParams& params);
  ParamGradient& operator+=(const ParamGradient& other);
  ParamGradient& operator*=(double scale);
};

// Sorted, distinct agent indices. Seat k of a group is members[k].
struct GroupSpec {
  std::vector<int> members;

  int size() const { return static_cast<int>(members.size()); }
  int seat_of(int agent) const;  // -1 if not a member
  bool operator==(const GroupSpec&) const = default;
};

// Throws std::invalid_argument unless the members are sorted, distinct and < num_agents.
void validate_group(const GroupSpec& group, int num_agents);

// All size-n subsets of {0, ..., m-1} in lexicographic order.
std::vector<GroupSpec> all_groups(int num_agents, int group_size);

AltruismProfile materialize(const AgentRewardParams& params);
std::vector<AltruismProfile> materialize(const std::vector<AgentRewardParams>& params);

// Inverse of materialize, up to the clip range.
AgentRewardParams parametrize(const AltruismProfile& profile, const RewardBounds& bounds);

// Per-seat state permutations (see RewardlessGame::seat_views). Empty means identity.
using SeatViews = std::vector<std::vector<int>>;

// R_{g,i}(s, a) = r_i(s, a_i) + lambda_i / (n - 1) * sum_{k != i} r_k(s, a_k), for every seat,
// where the seat-k table is read through views[k]. `profiles` is indexed by agent id.
GroupReward compose_group_reward(const std::vector<AltruismProfile>& profiles, const GroupSpec& group,
                                 const RewardBounds& bounds = {}, const SeatViews& views = {});

// table(s, a) lifted to (|S|, |A|^n) as table(view[s], a_seat).
Eigen::MatrixXd lift_to_joint(const JointActionCodec& codec, const Eigen::MatrixXd& table, int seat,
                              const std::vector<int>* view = nullptr);

// Sum over joint actions sharing the seat's own action, scattered to view[s]. Adjoint of lift_to_joint.
Eigen::MatrixXd reduce_to_seat(const JointActionCodec& codec, const Eigen::MatrixXd& joint_table, int seat,
                               const std::vector<int>* view = nullptr);

struct CompositionAdjoint {
  std::vector<Eigen::MatrixXd> intrinsic;  // per seat, (|S|, |A|)
  std::vector<double> altruism;            // per seat
};

// Pulls a cotangent on the effective rewards (per seat, (|S|, |A|^n)) back to
// the members' intrinsic tables and altruism levels.
CompositionAdjoint compose_adjoint(const std::vector<AltruismProfile>& profiles, const GroupSpec& group,
                                   const std::vector<Eigen::MatrixXd>& reward_adjoint, const SeatViews& views = {});

// Chain rule through materialize for one agent.
ParamGradient materialize_adjoint(const AgentRewardParams& params, const Eigen::MatrixXd& intrinsic_adjoint,
                                  double altruism_adjoint);

// Flattened view used by the samplers: per agent psi_r (column-major), then psi_lambda.
Eigen::VectorXd flatten(const std::vector<AgentRewardParams>& params);
void unflatten(const Eigen::VectorXd& flat, std::vector<AgentRewardParams>& params);
Eigen::VectorXd flatten(const std::vector<ParamGradient>& grads);

}  // namespace altirl
