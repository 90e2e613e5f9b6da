#include "altirl/gaps.hpp"

#include <algorithm>
#include <stdexcept>

#include "altirl/qre.hpp"

namespace altirl {

GapConfig default_gap_config(GapKind kind) {
  return {kind, kind == GapKind::psg ? 500.0 : 50000.0};
}

PolicyMatrix soft_response(const RewardlessGame& game, const GroupReward& reward, const JointPolicy& joint,
                           double beta, int agent_seat) {
  if (agent_seat < 0 || agent_seat >= game.num_players()) throw std::out_of_range("agent seat out of range");
  const ValueBundle vb = soft_policy_evaluation(game, reward, joint, beta);
  return boltzmann(vb.expected_q[static_cast<std::size_t>(agent_seat)], beta);
}

std::vector<double> psg_per_agent(const RewardlessGame& game, const PolicyContext& ctx, const JointPolicy& joint,
                                  const GroupReward& reward, double beta) {
  const ValueBundle vb = soft_policy_evaluation(game, ctx, reward, beta);
  std::vector<double> out;
  for (int i = 0; i < game.num_players(); ++i) {
    out.push_back(kl_rows(joint[i], boltzmann(vb.expected_q[static_cast<std::size_t>(i)], beta)).sum());
  }
  return out;
}

std::vector<double> qig_per_agent(const RewardlessGame& game, const PolicyContext& ctx, const JointPolicy& joint,
                                  const GroupReward& reward, double beta) {
  const ValueBundle vb = soft_policy_evaluation(game, ctx, reward, beta);
  std::vector<double> out;
  for (int i = 0; i < game.num_players(); ++i) {
    const SoftBestResponse br = soft_best_response(game, reward, joint, i, beta);
    out.push_back(br.values.sum() - vb.values[static_cast<std::size_t>(i)].sum());
  }
  return out;
}

double psg(const RewardlessGame& game, const GroupReward& reward, const JointPolicy& joint, double beta) {
  const auto per = psg_per_agent(game, make_policy_context(game, joint), joint, reward, beta);
  return *std::max_element(per.begin(), per.end());
}

double qig(const RewardlessGame& game, const GroupReward& reward, const JointPolicy& joint, double beta) {
  const auto per = qig_per_agent(game, make_policy_context(game, joint), joint, reward, beta);
  return *std::max_element(per.begin(), per.end());
}

double gap_value(const RewardlessGame& game, GapKind kind, const GroupReward& reward, const JointPolicy& joint,
                 double beta) {
  return kind == GapKind::psg ? psg(game, reward, joint, beta) : qig(game, reward, joint, beta);
}

namespace {

// Seats attaining the maximum within the tie tolerance.
std::vector<int> argmax_seats(const std::vector<double>& per_seat, double& best) {
  best = *std::max_element(per_seat.begin(), per_seat.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < per_seat.size(); ++i) {
    if (per_seat[i] >= best - RewardGradient::kTieTolerance) out.push_back(static_cast<int>(i));
  }
  return out;
}

// d/dR_i of sum_s KL(pi_i || softmax(beta Qbar_i)) at fixed pi.
Eigen::MatrixXd psg_seat_gradient(const RewardlessGame& game, const PolicyContext& ctx, const JointPolicy& joint,
                                  const ValueBundle& vb, int seat, double beta) {
  const JointActionCodec& codec = game.codec();
  const auto si = static_cast<std::size_t>(seat);
  const Eigen::MatrixXd response = boltzmann(vb.expected_q[si], beta);
  const Eigen::MatrixXd expected_q_adj = beta * (response - joint[seat]);
  const Eigen::MatrixXd q_adj = lift_to_joint(codec, expected_q_adj, seat).cwiseProduct(ctx.others_probs[si]);

  // Q = R + gamma T V, V = (I - gamma T^pi)^{-1} (sum_j piJ R + H / beta).
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor q_adj_rows = q_adj;
  const Eigen::Map<const Eigen::VectorXd> flat(q_adj_rows.data(), q_adj_rows.size());
  const Eigen::VectorXd value_adj = game.discount() * (game.transition().transpose() * flat);
  const Eigen::VectorXd u = ctx.system->solve_transpose(value_adj);
  return q_adj + (ctx.joint_probs.array().colwise() * u.array()).matrix();
}

// d/dR of sum_s V(s) for a fixed joint policy with context `ctx`.
Eigen::MatrixXd value_sum_gradient(const PolicyContext& ctx) {
  const Eigen::VectorXd occupancy =
      ctx.system->solve_transpose(Eigen::VectorXd::Ones(ctx.joint_probs.rows()));
  return (ctx.joint_probs.array().colwise() * occupancy.array()).matrix();
}

}  // namespace

RewardGradient gap_reward_gradient(const RewardlessGame& game, GapKind kind, const PolicyContext& ctx,
                                   const JointPolicy& joint, const GroupReward& reward, double beta) {
  const int n = game.num_players();
  RewardGradient out;
  out.per_seat.assign(static_cast<std::size_t>(n),
                      Eigen::MatrixXd::Zero(game.num_states(), game.num_joint_actions()));
  const ValueBundle vb = soft_policy_evaluation(game, ctx, reward, beta);

  if (kind == GapKind::psg) {
    std::vector<double> per;
    for (int i = 0; i < n; ++i) {
      per.push_back(kl_rows(joint[i], boltzmann(vb.expected_q[static_cast<std::size_t>(i)], beta)).sum());
    }
    const std::vector<int> seats = argmax_seats(per, out.value);
    if (!(out.value < kInf)) throw std::domain_error("policy stability gap is infinite; gradient undefined");
    for (const int i : seats) {
      out.per_seat[static_cast<std::size_t>(i)] =
          psg_seat_gradient(game, ctx, joint, vb, i, beta) / static_cast<double>(seats.size());
    }
    return out;
  }

  std::vector<double> per;
  std::vector<JointPolicy> deviations;
  for (int i = 0; i < n; ++i) {
    const SoftBestResponse br = soft_best_response(game, reward, joint, i, beta);
    per.push_back(br.values.sum() - vb.values[static_cast<std::size_t>(i)].sum());
    JointPolicy dev = joint;
    dev[i] = br.policy;
    deviations.push_back(std::move(dev));
  }
  const std::vector<int> seats = argmax_seats(per, out.value);
  const Eigen::MatrixXd on_policy = value_sum_gradient(ctx);
  for (const int i : seats) {
    const PolicyContext dev_ctx = make_policy_context(game, deviations[static_cast<std::size_t>(i)]);
    out.per_seat[static_cast<std::size_t>(i)] =
        (value_sum_gradient(dev_ctx) - on_policy) / static_cast<double>(seats.size());
  }
  return out;
}

GapGradient gap_gradient(const RewardlessGame& game, const GapConfig& cfg,
                         const std::vector<AgentRewardParams>& params, const GroupSpec& group,
                         const JointPolicy& joint, double beta, const PolicyContext* ctx) {
  if (!(cfg.concentration > 0.0)) throw std::invalid_argument("gap concentration must be positive");
  if (group.size() != game.num_players()) throw std::invalid_argument("group size does not match the game");
  const std::vector<AltruismProfile> profiles = materialize(params);
  const GroupReward reward = compose_group_reward(profiles, group, params.front().bounds, game.seat_views());

  std::optional<PolicyContext> local;
  if (!ctx) {
    local = make_policy_context(game, joint);
    ctx = &*local;
  }
  const RewardGradient rg = gap_reward_gradient(game, cfg.kind, *ctx, joint, reward, beta);
  const CompositionAdjoint adj = compose_adjoint(profiles, group, rg.per_seat, game.seat_views());

  GapGradient out;
  out.value = rg.value;
  for (int k = 0; k < group.size(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    ParamGradient g = materialize_adjoint(params[static_cast<std::size_t>(group.members[ks])], adj.intrinsic[ks],
                                          adj.altruism[ks]);
    g *= cfg.concentration;
    out.members.push_back(std::move(g));
  }
  return out;
}

}  // namespace altirl
