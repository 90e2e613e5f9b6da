#pragma once

#include <vector>

#include "altirl/game.hpp"
#include "altirl/rewards.hpp"

namespace altirl {

enum class GapKind { psg, qig };

struct GapConfig {
  GapKind kind = GapKind::psg;
  double concentration = 500.0;  // c in exp(-c * gap)
};

// Defaults for c: 500 for PSG, 50000 for QIG.
GapConfig default_gap_config(GapKind kind);

// Boltzmann policy of seat `agent_seat`'s expected Q-values under `joint`.
PolicyMatrix soft_response(const RewardlessGame& game, const GroupReward& reward, const JointPolicy& joint,
                           double beta, int agent_seat);

// Per-seat sum over states of KL(pi_i || sigma_i). A seat whose policy puts
// mass where its soft response has none reports +infinity.
std::vector<double> psg_per_agent(const RewardlessGame& game, const PolicyContext& ctx, const JointPolicy& joint,
                                  const GroupReward& reward, double beta);

// Per-seat sum over states of V_i^BR - V_i^pi.
std::vector<double> qig_per_agent(const RewardlessGame& game, const PolicyContext& ctx, const JointPolicy& joint,
                                  const GroupReward& reward, double beta);

double psg(const RewardlessGame& game, const GroupReward& reward, const JointPolicy& joint, double beta);
double qig(const RewardlessGame& game, const GroupReward& reward, const JointPolicy& joint, double beta);
double gap_value(const RewardlessGame& game, GapKind kind, const GroupReward& reward, const JointPolicy& joint,
                 double beta);

// Gap value (max over seats) and its gradient with respect to every seat's
// effective reward table. Seats whose gaps are within kTieTolerance of the
// maximum share the gradient equally.
struct RewardGradient {
  static constexpr double kTieTolerance = 1e-10;

  double value = 0.0;
  std::vector<Eigen::MatrixXd> per_seat;  // (|S|, |A|^n)
};

RewardGradient gap_reward_gradient(const RewardlessGame& game, GapKind kind, const PolicyContext& ctx,
                                   const JointPolicy& joint, const GroupReward& reward, double beta);

struct GapGradient {
  double value = 0.0;                  // unscaled gap
  std::vector<ParamGradient> members;  // gradient of c * gap, one entry per group seat
};

// Gradient of c * gap with respect to the reward parameters of the group's
// members. `params` is indexed by agent id. Pass `ctx` to reuse a prepared
// policy context for `joint`.
GapGradient gap_gradient(const RewardlessGame& game, const GapConfig& cfg,
                         const std::vector<AgentRewardParams>& params, const GroupSpec& group,
                         const JointPolicy& joint, double beta, const PolicyContext* ctx = nullptr);

}  // namespace altirl
