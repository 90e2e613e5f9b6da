#include "altirl/rewards.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace altirl {

void AgentRewardParams::clip() {
  psi_r = psi_r.cwiseMax(-kPsiClip).cwiseMin(kPsiClip);
  psi_lambda = std::clamp(psi_lambda, -kPsiClip, kPsiClip);
}

ParamGradient ParamGradient::zeros_like(const AgentRewardParams& params) {
  return {Eigen::MatrixXd::Zero(params.psi_r.rows(), params.psi_r.cols()), 0.0};
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
  psi_r += other.psi_r;
  psi_lambda += other.psi_lambda;
  return *this;
}

ParamGradient& ParamGradient::operator*=(double scale) {
  psi_r *= scale;
  psi_lambda *= scale;
  return *this;
}

int GroupSpec::seat_of(int agent) const {
  const auto it = std::lower_bound(members.begin(), members.end(), agent);
  if (it == members.end() || *it != agent) return -1;
  return static_cast<int>(it - members.begin());
}

void validate_group(const GroupSpec& group, int num_agents) {
  if (group.members.empty()) throw std::invalid_argument("group has no members");
  for (std::size_t k = 0; k < group.members.size(); ++k) {
    const int a = group.members[k];
    if (a < 0 || a >= num_agents) {
      throw std::invalid_argument("group member " + std::to_string(a) + " out of range");
    }
    if (k > 0 && group.members[k - 1] >= a) {
      throw std::invalid_argument("group members must be sorted and distinct");
    }
  }
}

std::vector<GroupSpec> all_groups(int num_agents, int group_size) {
  if (group_size < 1 || group_size > num_agents) throw std::invalid_argument("invalid group size");
  std::vector<GroupSpec> out;
  std::vector<int> idx(static_cast<std::size_t>(group_size));
  for (int k = 0; k < group_size; ++k) idx[static_cast<std::size_t>(k)] = k;
  while (true) {
    out.push_back({idx});
    int k = group_size - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == num_agents - group_size + k) --k;
    if (k < 0) break;
    ++idx[static_cast<std::size_t>(k)];
    for (int l = k + 1; l < group_size; ++l) idx[static_cast<std::size_t>(l)] = idx[static_cast<std::size_t>(l - 1)] + 1;
  }
  return out;
}

AltruismProfile materialize(const AgentRewardParams& params) {
  const RewardBounds& b = params.bounds;
  AltruismProfile out;
  out.intrinsic = params.psi_r.unaryExpr([](double x) { return sigmoid(x); }) * (b.r_max - b.r_min);
  out.intrinsic.array() += b.r_min;
  out.altruism = sigmoid(params.psi_lambda) * (b.lambda_max - b.lambda_min) + b.lambda_min;
  return out;
}

std::vector<AltruismProfile> materialize(const std::vector<AgentRewardParams>& params) {
  std::vector<AltruismProfile> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(materialize(p));
  return out;
}

AgentRewardParams parametrize(const AltruismProfile& profile, const RewardBounds& bounds) {
  const auto to_psi = [](double value, double lo, double hi) {
    const double u = std::clamp((value - lo) / (hi - lo), 1e-12, 1.0 - 1e-12);
    return std::clamp(logit(u), -AgentRewardParams::kPsiClip, AgentRewardParams::kPsiClip);
  };
  AgentRewardParams out;
  out.bounds = bounds;
  out.psi_r = profile.intrinsic.unaryExpr([&](double r) { return to_psi(r, bounds.r_min, bounds.r_max); });
  out.psi_lambda = to_psi(profile.altruism, bounds.lambda_min, bounds.lambda_max);
  return out;
}

Eigen::MatrixXd lift_to_joint(const JointActionCodec& codec, const Eigen::MatrixXd& table, int seat,
                              const std::vector<int>* view) {
  Eigen::MatrixXd out(table.rows(), codec.size());
  if (view) {
    for (Index j = 0; j < codec.size(); ++j) out.col(j) = table.col(codec.action(j, seat))(*view);
  } else {
    for (Index j = 0; j < codec.size(); ++j) out.col(j) = table.col(codec.action(j, seat));
  }
  return out;
}

Eigen::MatrixXd reduce_to_seat(const JointActionCodec& codec, const Eigen::MatrixXd& joint_table, int seat,
                               const std::vector<int>* view) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(joint_table.rows(), codec.num_actions());
  for (Index j = 0; j < codec.size(); ++j) out.col(codec.action(j, seat)) += joint_table.col(j);
  if (!view) return out;
  Eigen::MatrixXd scattered(out.rows(), out.cols());
  scattered(*view, Eigen::all) = out;
  return scattered;
}

namespace {

std::vector<const AltruismProfile*> member_profiles(const std::vector<AltruismProfile>& profiles,
                                                    const GroupSpec& group) {
  if (group.size() < 2) throw std::invalid_argument("altruism composition needs at least two members");
  validate_group(group, static_cast<int>(profiles.size()));
  std::vector<const AltruismProfile*> out;
  for (const int agent : group.members) {
    const AltruismProfile& p = profiles[static_cast<std::size_t>(agent)];
    if (p.intrinsic.size() == 0) {
      throw std::invalid_argument("missing profile for agent " + std::to_string(agent));
    }
    if (!out.empty() && (p.intrinsic.rows() != out.front()->intrinsic.rows() ||
                         p.intrinsic.cols() != out.front()->intrinsic.cols())) {
      throw std::invalid_argument("intrinsic reward shapes differ across group members");
    }
    out.push_back(&p);
  }
  return out;
}

const std::vector<int>* view_of(const SeatViews& views, int seat) {
  if (views.empty()) return nullptr;
  if (seat >= static_cast<int>(views.size())) throw std::invalid_argument("missing state view for a seat");
  return &views[static_cast<std::size_t>(seat)];
}

std::vector<Eigen::MatrixXd> lift_members(const std::vector<const AltruismProfile*>& members,
                                          const JointActionCodec& codec, const SeatViews& views) {
  std::vector<Eigen::MatrixXd> lifted;
  lifted.reserve(members.size());
  for (int k = 0; k < codec.num_players(); ++k) {
    lifted.push_back(lift_to_joint(codec, members[static_cast<std::size_t>(k)]->intrinsic, k, view_of(views, k)));
  }
  return lifted;
}

}  // namespace

GroupReward compose_group_reward(const std::vector<AltruismProfile>& profiles, const GroupSpec& group,
                                 const RewardBounds& bounds, const SeatViews& views) {
  const auto members = member_profiles(profiles, group);
  const int n = group.size();
  const JointActionCodec codec(static_cast<int>(members.front()->intrinsic.cols()), n);
  const std::vector<Eigen::MatrixXd> lifted = lift_members(members, codec, views);
  Eigen::MatrixXd total = lifted.front();
  for (int k = 1; k < n; ++k) total += lifted[static_cast<std::size_t>(k)];

  GroupReward out;
  out.per_agent.reserve(static_cast<std::size_t>(n));
  double lo = kInf;
  double hi = -kInf;
  for (int i = 0; i < n; ++i) {
    const double lambda = members[static_cast<std::size_t>(i)]->altruism;
    const double weight = lambda / (n - 1);
    const Eigen::MatrixXd& own = lifted[static_cast<std::size_t>(i)];
    out.per_agent.push_back(own + weight * (total - own));
    const double partner_lo = std::min(lambda * bounds.r_min, lambda * bounds.r_max);
    const double partner_hi = std::max(lambda * bounds.r_min, lambda * bounds.r_max);
    lo = std::min(lo, bounds.r_min + partner_lo);
    hi = std::max(hi, bounds.r_max + partner_hi);
  }
  out.min_value = lo;
  out.max_value = hi;
  return out;
}

CompositionAdjoint compose_adjoint(const std::vector<AltruismProfile>& profiles, const GroupSpec& group,
                                   const std::vector<Eigen::MatrixXd>& reward_adjoint, const SeatViews& views) {
  const auto members = member_profiles(profiles, group);
  const int n = group.size();
  if (static_cast<int>(reward_adjoint.size()) != n) throw std::invalid_argument("adjoint seat count mismatch");
  const JointActionCodec codec(static_cast<int>(members.front()->intrinsic.cols()), n);

  // Each r_k enters R_k with weight 1 and R_i (i != k) with weight lambda_i / (n - 1).
  Eigen::MatrixXd weighted_total = Eigen::MatrixXd::Zero(reward_adjoint.front().rows(), reward_adjoint.front().cols());
  for (int i = 0; i < n; ++i) {
    weighted_total += (members[static_cast<std::size_t>(i)]->altruism / (n - 1)) * reward_adjoint[static_cast<std::size_t>(i)];
  }
  const std::vector<Eigen::MatrixXd> lifted = lift_members(members, codec, views);
  Eigen::MatrixXd total = lifted.front();
  for (int k = 1; k < n; ++k) total += lifted[static_cast<std::size_t>(k)];

  CompositionAdjoint out;
  for (int k = 0; k < n; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const double own_weight = members[ks]->altruism / (n - 1);
    const Eigen::MatrixXd through =
        reward_adjoint[ks] + (weighted_total - own_weight * reward_adjoint[ks]);
    out.intrinsic.push_back(reduce_to_seat(codec, through, k, view_of(views, k)));
    out.altruism.push_back(reward_adjoint[ks].cwiseProduct(total - lifted[ks]).sum() / (n - 1));
  }
  return out;
}

ParamGradient materialize_adjoint(const AgentRewardParams& params, const Eigen::MatrixXd& intrinsic_adjoint,
                                  double altruism_adjoint) {
  const RewardBounds& b = params.bounds;
  const auto slope = [](double x) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
  };
  ParamGradient out;
  out.psi_r = intrinsic_adjoint.cwiseProduct(params.psi_r.unaryExpr(slope)) * (b.r_max - b.r_min);
  out.psi_lambda = altruism_adjoint * slope(params.psi_lambda) * (b.lambda_max - b.lambda_min);
  return out;
}

Eigen::VectorXd flatten(const std::vector<AgentRewardParams>& params) {
  Index size = 0;
  for (const auto& p : params) size += p.psi_r.size() + 1;
  Eigen::VectorXd out(size);
  Index offset = 0;
  for (const auto& p : params) {
    out.segment(offset, p.psi_r.size()) = p.psi_r.reshaped();
    offset += p.psi_r.size();
    out(offset++) = p.psi_lambda;
  }
  return out;
}

void unflatten(const Eigen::VectorXd& flat, std::vector<AgentRewardParams>& params) {
  Index offset = 0;
  for (auto& p : params) {
    if (offset + p.psi_r.size() + 1 > flat.size()) throw std::invalid_argument("flat parameter vector too short");
    p.psi_r.reshaped() = flat.segment(offset, p.psi_r.size());
    offset += p.psi_r.size();
    p.psi_lambda = flat(offset++);
  }
  if (offset != flat.size()) throw std::invalid_argument("flat parameter vector too long");
}

Eigen::VectorXd flatten(const std::vector<ParamGradient>& grads) {
  Index size = 0;
  for (const auto& g : grads) size += g.psi_r.size() + 1;
  Eigen::VectorXd out(size);
  Index offset = 0;
  for (const auto& g : grads) {
    out.segment(offset, g.psi_r.size()) = g.psi_r.reshaped();
    offset += g.psi_r.size();
    out(offset++) = g.psi_lambda;
  }
  return out;
}

}  // namespace altirl
