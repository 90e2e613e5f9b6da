#include "altirl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace altirl {

void PriorConfig::validate() const {
  if (!(reward_sigma > 0.0)) throw std::invalid_argument("reward_sigma must be positive");
  if (policy_sigma && !(*policy_sigma > 0.0)) throw std::invalid_argument("policy_sigma must be positive");
  if (!(beta_rate > 0.0)) throw std::invalid_argument("beta_rate must be positive");
  if (!(beta_min > 0.0)) throw std::invalid_argument("beta_min must be positive");
}

double SgldSchedule::step_size(int t) const { return epsilon0 / std::pow(1.0 + t, alpha); }

void SgldSchedule::validate() const {
  if (!(epsilon0 > 0.0)) throw std::invalid_argument("epsilon0 must be positive");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be nonnegative");
  if (iterations < 0 || warmup < 0) throw std::invalid_argument("iterations and warmup must be nonnegative");
  if (warmup >= iterations && iterations > 0) throw std::invalid_argument("warmup must be below iterations");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (thin < 1) throw std::invalid_argument("thin must be at least 1");
}

std::vector<Eigen::MatrixXd> action_counts(const RewardlessGame& game, const std::vector<Trajectory>& trajectories) {
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(game.num_players()),
                                   Eigen::MatrixXd::Zero(game.num_states(), game.num_actions()));
  for (const Trajectory& traj : trajectories) {
    for (const Step& step : traj.steps) {
      if (step.state < 0 || step.state >= game.num_states() ||
          static_cast<int>(step.actions.size()) != game.num_players()) {
        throw std::invalid_argument("demonstration step does not fit the game");
      }
      for (int i = 0; i < game.num_players(); ++i) {
        const int a = step.actions[static_cast<std::size_t>(i)];
        if (a < 0 || a >= game.num_actions()) throw std::invalid_argument("demonstration action out of range");
        out[static_cast<std::size_t>(i)](step.state, a) += 1.0;
      }
    }
  }
  return out;
}

double log_likelihood(const std::vector<Eigen::MatrixXd>& counts, const JointPolicy& joint) {
  double total = 0.0;
  for (int i = 0; i < joint.num_players(); ++i) {
    const Eigen::MatrixXd& c = counts[static_cast<std::size_t>(i)];
    const PolicyMatrix& p = joint[i];
    for (Index s = 0; s < c.rows(); ++s)
      for (Index a = 0; a < c.cols(); ++a)
        if (c(s, a) > 0.0) total += c(s, a) * std::log(p(s, a));
  }
  return total;
}

double log_prior_reward(const std::vector<AgentRewardParams>& params, const PriorConfig& cfg) {
  const double var = cfg.reward_sigma * cfg.reward_sigma;
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * var);
  double total = 0.0;
  for (const auto& p : params) {
    total += p.psi_r.size() * log_norm - 0.5 * p.psi_r.squaredNorm() / var;
    // Uniform density 1 / (hi - lo) times |d lambda / d psi| = (hi - lo) s (1 - s).
    const double s = sigmoid(p.psi_lambda);
    total += std::log(s) + std::log1p(-s);
  }
  return total;
}

std::vector<ParamGradient> log_prior_reward_gradient(const std::vector<AgentRewardParams>& params,
                                                     const PriorConfig& cfg) {
  const double var = cfg.reward_sigma * cfg.reward_sigma;
  std::vector<ParamGradient> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({-p.psi_r / var, 1.0 - 2.0 * sigmoid(p.psi_lambda)});
  }
  return out;
}

double sample_beta(const PriorConfig& cfg, Rng& rng) {
  return cfg.beta_min - std::log1p(-uniform01(rng)) / cfg.beta_rate;
}

void sgld_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, const Eigen::VectorXd& noise, SgldState& state,
               const SgldSchedule& schedule, int t, std::optional<double> clip) {
  if (grad.size() != x.size() || noise.size() != x.size()) throw std::invalid_argument("SGLD shape mismatch");
  if (!grad.allFinite()) throw std::runtime_error("non-finite gradient at step " + std::to_string(t));
  const Eigen::ArrayXd g2 = grad.array().square();
  if (!state.primed) {
    // Coordinates without gradient information start from a unit preconditioner.
    state.second_moment = (g2 > 0.0).select(g2, 1.0);
    state.primed = true;
  } else {
    state.second_moment = schedule.momentum * state.second_moment.array() + (1.0 - schedule.momentum) * g2;
  }
  const double eps = schedule.step_size(t);
  const Eigen::ArrayXd precond = 1.0 / (state.second_moment.array().sqrt() + schedule.precondition_epsilon);
  x.array() += 0.5 * eps * precond * grad.array() + (eps * precond).sqrt() * noise.array();
  if (clip) x = x.cwiseMax(-*clip).cwiseMin(*clip);
}

std::vector<std::uint64_t> default_agent_keys(int num_agents) {
  std::vector<std::uint64_t> out;
  for (int a = 0; a < num_agents; ++a) out.push_back(static_cast<std::uint64_t>(a));
  return out;
}

std::uint64_t group_key(const GroupSpec& group, const std::vector<std::uint64_t>& agent_keys) {
  std::uint64_t h = stream_tag("group");
  for (const int a : group.members) h = splitmix64(h ^ agent_keys.at(static_cast<std::size_t>(a)));
  return h;
}

namespace {

Eigen::VectorXd normal_vector(Index size, Rng& rng) {
  Eigen::VectorXd out(size);
  for (Index k = 0; k < size; ++k) out(k) = standard_normal(rng);
  return out;
}

bool keep_draw(const SgldSchedule& schedule, int t) {
  return t >= schedule.warmup && (t - schedule.warmup) % schedule.thin == 0;
}

// Noise for the flattened reward parameters, one keyed stream per agent.
Eigen::VectorXd agent_noise(const std::vector<AgentRewardParams>& params, std::uint64_t seed,
                            const std::vector<std::uint64_t>& agent_keys, int t) {
  Index size = 0;
  for (const auto& p : params) size += p.psi_r.size() + 1;
  Eigen::VectorXd out(size);
  Index offset = 0;
  for (std::size_t a = 0; a < params.size(); ++a) {
    Rng rng(derive_seed(seed, {stream_tag("reward-noise"), agent_keys[a], static_cast<std::uint64_t>(t)}));
    const Index block = params[a].psi_r.size() + 1;
    out.segment(offset, block) = normal_vector(block, rng);
    offset += block;
  }
  return out;
}

void check_keys(std::size_t num_agents, const std::vector<std::uint64_t>& agent_keys) {
  if (agent_keys.size() != num_agents) throw std::invalid_argument("one stream key per agent is required");
}

// Scatter per-seat gradients of a group into the all-agent gradient list.
void accumulate(std::vector<ParamGradient>& total, const GroupSpec& group, const std::vector<ParamGradient>& members,
                double sign) {
  for (int k = 0; k < group.size(); ++k) {
    ParamGradient g = members[static_cast<std::size_t>(k)];
    g *= sign;
    total[static_cast<std::size_t>(group.members[static_cast<std::size_t>(k)])] += g;
  }
}

std::vector<ParamGradient> member_gradients(const std::vector<AgentRewardParams>& params,
                                            const std::vector<AltruismProfile>& profiles, const GroupSpec& group,
                                            const std::vector<Eigen::MatrixXd>& reward_gradient,
                                            const SeatViews& views) {
  const CompositionAdjoint adj = compose_adjoint(profiles, group, reward_gradient, views);
  std::vector<ParamGradient> out;
  for (int k = 0; k < group.size(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    out.push_back(materialize_adjoint(params[static_cast<std::size_t>(group.members[ks])], adj.intrinsic[ks],
                                      adj.altruism[ks]));
  }
  return out;
}

}  // namespace

PolicyChainSamples policy_posterior_chain(const RewardlessGame& game, const GroupDemonstrations& demos,
                                          const PriorConfig& prior, const SgldSchedule& schedule,
                                          std::uint64_t seed) {
  if (demos.trajectories.empty()) throw std::invalid_argument("policy posterior needs at least one trajectory");
  if (prior.policy_sigma && !(*prior.policy_sigma > 0.0)) throw std::invalid_argument("policy_sigma must be positive");
  schedule.validate();
  const int n = game.num_players();
  const Index ns = game.num_states();
  const Index na = game.num_actions();
  const Index block = ns * na;
  const std::vector<Eigen::MatrixXd> counts = action_counts(game, demos.trajectories);
  std::vector<Eigen::VectorXd> visits;
  for (const auto& c : counts) visits.emplace_back(c.rowwise().sum());

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n * block);
  Eigen::VectorXd grad(theta.size());
  SgldState state;
  PolicyChainSamples out;
  out.group = demos.group;
  JointPolicy joint;
  joint.policies.resize(static_cast<std::size_t>(n));
  const auto refresh = [&] {
    for (int i = 0; i < n; ++i) {
      const Eigen::Map<const Eigen::MatrixXd> logits(theta.data() + i * block, ns, na);
      joint[i] = softmax_rows(logits);
    }
  };
  for (int t = 0; t < schedule.iterations; ++t) {
    refresh();
    for (int i = 0; i < n; ++i) {
      const auto is = static_cast<std::size_t>(i);
      Eigen::Map<Eigen::MatrixXd> g(grad.data() + i * block, ns, na);
      g = counts[is] - (joint[i].array().colwise() * visits[is].array()).matrix();
      if (prior.policy_sigma) {
        const Eigen::Map<const Eigen::MatrixXd> logits(theta.data() + i * block, ns, na);
        g -= logits / (*prior.policy_sigma * *prior.policy_sigma);
      }
    }
    Rng rng(derive_seed(seed, {stream_tag("policy-noise"), static_cast<std::uint64_t>(t)}));
    sgld_step(theta, grad, normal_vector(theta.size(), rng), state, schedule, t);
    if (keep_draw(schedule, t)) {
      refresh();
      out.samples.push_back(joint);
    }
  }
  return out;
}

std::vector<AgentRewardParams> RewardChainSamples::params_of(const ChainDraw& draw) const {
  std::vector<AgentRewardParams> out = layout;
  unflatten(draw.psi, out);
  return out;
}

std::vector<AgentRewardParams> initial_params(int num_agents, int num_states, int num_actions,
                                              const RewardBounds& bounds, const PriorConfig& prior,
                                              std::uint64_t seed, const std::vector<std::uint64_t>& agent_keys) {
  check_keys(static_cast<std::size_t>(num_agents), agent_keys);
  std::vector<AgentRewardParams> out;
  for (int a = 0; a < num_agents; ++a) {
    Rng rng(derive_seed(seed, {stream_tag("init"), agent_keys[static_cast<std::size_t>(a)]}));
    AgentRewardParams p;
    p.bounds = bounds;
    p.psi_r.resize(num_states, num_actions);
    for (Index k = 0; k < p.psi_r.size(); ++k) p.psi_r.data()[k] = prior.reward_sigma * standard_normal(rng);
    p.psi_lambda = logit(std::clamp(uniform01(rng), 1e-6, 1.0 - 1e-6));
    p.clip();
    out.push_back(std::move(p));
  }
  return out;
}

RewardChainSamples porp_reward_chain(const RewardlessGame& game, const std::vector<PolicyChainSamples>& policies,
                                     const PorpConfig& cfg, std::vector<AgentRewardParams> init, std::uint64_t seed,
                                     const std::vector<std::uint64_t>& agent_keys) {
  cfg.prior.validate();
  cfg.schedule.validate();
  check_keys(init.size(), agent_keys);
  std::vector<std::vector<PolicyContext>> contexts;
  std::vector<std::uint64_t> gkeys;
  for (const auto& pcs : policies) {
    if (pcs.samples.empty()) throw std::invalid_argument("every group needs at least one policy sample");
    validate_group(pcs.group, static_cast<int>(init.size()));
    std::vector<PolicyContext> group_contexts;
    group_contexts.reserve(pcs.samples.size());
    for (const auto& joint : pcs.samples) group_contexts.push_back(make_policy_context(game, joint));
    contexts.push_back(std::move(group_contexts));
    gkeys.push_back(group_key(pcs.group, agent_keys));
  }

  RewardChainSamples out;
  out.layout = init;
  std::vector<AgentRewardParams> params = std::move(init);
  Eigen::VectorXd psi = flatten(params);
  SgldState state;
  for (int t = 0; t < cfg.schedule.iterations; ++t) {
    std::vector<ParamGradient> grad = log_prior_reward_gradient(params, cfg.prior);
    ChainDraw draw;
    draw.step = t;
    double log_post = log_prior_reward(params, cfg.prior);
    for (std::size_t g = 0; g < policies.size(); ++g) {
      Rng rng(derive_seed(seed, {stream_tag("porp-group"), gkeys[g], static_cast<std::uint64_t>(t)}));
      const std::size_t pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(contexts[g].size()));
      const double beta = sample_beta(cfg.prior, rng);
      GapGradient res;
      try {
        res = gap_gradient(game, cfg.gap, params, policies[g].group, policies[g].samples[pick], beta, &contexts[g][pick]);
      } catch (const std::exception& e) {
        throw std::runtime_error("reward chain failed at step " + std::to_string(t) + ": " + e.what());
      }
      accumulate(grad, policies[g].group, res.members, -1.0);
      draw.betas.push_back(beta);
      draw.diagnostics.push_back(res.value);
      log_post -= cfg.gap.concentration * res.value;
    }
    if (keep_draw(cfg.schedule, t)) {
      draw.psi = psi;
      draw.log_posterior = log_post;
      out.draws.push_back(std::move(draw));
    }
    sgld_step(psi, flatten(grad), agent_noise(params, seed, agent_keys, t), state, cfg.schedule, t,
              AgentRewardParams::kPsiClip);
    unflatten(psi, params);
  }
  return out;
}

namespace {

// Product of pi_l(s, a_l) over the seats other than `skip_a` and `skip_b`, as (|S|, |A|^n).
Eigen::MatrixXd product_excluding(const JointActionCodec& codec, const JointPolicy& joint, int skip_a, int skip_b) {
  const Index ns = joint[0].rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Ones(ns, codec.size());
  for (int l = 0; l < codec.num_players(); ++l) {
    if (l == skip_a || l == skip_b) continue;
    out = out.cwiseProduct(lift_to_joint(codec, joint[l], l));
  }
  return out;
}

}  // namespace

QreLikelihood unrolled_log_likelihood(const RewardlessGame& game, const GroupReward& reward, double beta,
                                      const JointPolicy& start, const std::vector<Eigen::MatrixXd>& counts,
                                      int unroll, double damping) {
  if (unroll < 1) throw std::invalid_argument("unroll must be at least 1");
  const int n = game.num_players();
  const JointActionCodec& codec = game.codec();
  const double gamma = game.discount();

  // Forward pass, keeping every iterate.
  std::vector<std::vector<Eigen::MatrixXd>> logp(static_cast<std::size_t>(unroll) + 1);
  std::vector<JointPolicy> iterates(static_cast<std::size_t>(unroll) + 1);
  std::vector<PolicyContext> contexts;
  std::vector<ValueBundle> bundles;
  contexts.reserve(static_cast<std::size_t>(unroll));
  bundles.reserve(static_cast<std::size_t>(unroll));
  for (int i = 0; i < n; ++i) {
    logp[0].emplace_back(start[i].array().log().matrix());
  }
  iterates[0] = start;
  for (int t = 0; t < unroll; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    contexts.push_back(make_policy_context(game, iterates[ts]));
    bundles.push_back(soft_policy_evaluation(game, contexts.back(), reward, beta));
    JointPolicy next;
    for (int i = 0; i < n; ++i) {
      const auto is = static_cast<std::size_t>(i);
      Eigen::MatrixXd z = (1.0 - damping) * logp[ts][is] + (damping * beta) * bundles.back().expected_q[is];
      z.colwise() -= logsumexp_rows(z);
      next.policies.emplace_back(z.array().exp().matrix());
      logp[ts + 1].push_back(std::move(z));
    }
    iterates[ts + 1] = std::move(next);
  }

  QreLikelihood out;
  out.policy = iterates.back();
  out.log_likelihood = 0.0;
  for (int i = 0; i < n; ++i) {
    out.log_likelihood += counts[static_cast<std::size_t>(i)].cwiseProduct(logp.back()[static_cast<std::size_t>(i)]).sum();
  }
  out.reward_gradient.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(game.num_states(), codec.size()));

  // Reverse pass. `logp_adj` is the cotangent of the normalized log-policies.
  std::vector<Eigen::MatrixXd> logp_adj = counts;
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (int t = unroll - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    const JointPolicy& pi = iterates[ts];
    const JointPolicy& pi_next = iterates[ts + 1];
    const PolicyContext& ctx = contexts[ts];
    const ValueBundle& vb = bundles[ts];
    std::vector<Eigen::MatrixXd> pi_adj(static_cast<std::size_t>(n),
                                        Eigen::MatrixXd::Zero(game.num_states(), game.num_actions()));
    std::vector<Eigen::MatrixXd> next_adj(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto is = static_cast<std::size_t>(i);
      const Eigen::MatrixXd& g = logp_adj[is];
      const Eigen::MatrixXd z_adj = g - (pi_next[i].array().colwise() * g.rowwise().sum().array()).matrix();
      next_adj[is] = (1.0 - damping) * z_adj;
      const Eigen::MatrixXd lifted_adj = lift_to_joint(codec, (damping * beta) * z_adj, i);

      // Qbar_i = sum over partners of others_i * Q_i.
      const Eigen::MatrixXd q_adj = lifted_adj.cwiseProduct(ctx.others_probs[is]);
      const Eigen::MatrixXd others_adj = lifted_adj.cwiseProduct(vb.q_values[is]);
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        pi_adj[static_cast<std::size_t>(k)] +=
            reduce_to_seat(codec, others_adj.cwiseProduct(product_excluding(codec, pi, i, k)), k);
      }

      // Q_i = R_i + gamma T V_i with V_i = (I - gamma T^pi)^{-1} (sum_j piJ R_i + H_i / beta).
      out.reward_gradient[is] += q_adj;
      const RowMajor q_rows = q_adj;
      const Eigen::Map<const Eigen::VectorXd> flat(q_rows.data(), q_rows.size());
      const Eigen::VectorXd u = ctx.system->solve_transpose(gamma * (game.transition().transpose() * flat));
      out.reward_gradient[is] += (ctx.joint_probs.array().colwise() * u.array()).matrix();
      pi_adj[is] += ((-pi[i].array().log() - 1.0).colwise() * (u.array() / beta)).matrix();
      const Eigen::MatrixXd joint_adj = (vb.q_values[is].array().colwise() * u.array()).matrix();
      for (int k = 0; k < n; ++k) {
        pi_adj[static_cast<std::size_t>(k)] +=
            reduce_to_seat(codec, joint_adj.cwiseProduct(ctx.others_probs[static_cast<std::size_t>(k)]), k);
      }
    }
    for (int k = 0; k < n; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      next_adj[ks] += pi[k].cwiseProduct(pi_adj[ks]);
    }
    logp_adj = std::move(next_adj);
  }
  return out;
}

RewardChainSamples drp_chain(const RewardlessGame& game, const DemonstrationSet& demos, const DrpConfig& cfg,
                             std::vector<AgentRewardParams> init, std::uint64_t seed,
                             const std::vector<std::uint64_t>& agent_keys) {
  cfg.prior.validate();
  cfg.schedule.validate();
  check_keys(init.size(), agent_keys);
  if (demos.empty()) throw std::invalid_argument("DRP needs demonstrations");
  std::vector<std::vector<Eigen::MatrixXd>> counts;
  std::vector<std::uint64_t> gkeys;
  std::vector<JointPolicy> warm;
  for (const auto& gd : demos) {
    validate_group(gd.group, static_cast<int>(init.size()));
    if (gd.trajectories.empty()) throw std::invalid_argument("DRP needs demonstrations for every group");
    counts.push_back(action_counts(game, gd.trajectories));
    gkeys.push_back(group_key(gd.group, agent_keys));
    warm.push_back(JointPolicy::uniform(game.num_states(), game.num_actions(), game.num_players()));
  }

  RewardChainSamples out;
  out.layout = init;
  std::vector<AgentRewardParams> params = std::move(init);
  Eigen::VectorXd psi = flatten(params);
  SgldState state;
  for (int t = 0; t < cfg.schedule.iterations; ++t) {
    std::vector<ParamGradient> grad = log_prior_reward_gradient(params, cfg.prior);
    const std::vector<AltruismProfile> profiles = materialize(params);
    ChainDraw draw;
    draw.step = t;
    double log_post = log_prior_reward(params, cfg.prior);
    for (std::size_t g = 0; g < demos.size(); ++g) {
      const GroupSpec& group = demos[g].group;
      Rng rng(derive_seed(seed, {stream_tag("drp-group"), gkeys[g], static_cast<std::uint64_t>(t)}));
      const double beta = sample_beta(cfg.prior, rng);
      const GroupReward reward = compose_group_reward(profiles, group, params.front().bounds, game.seat_views());
      QreResult eq = solve_qre(game, reward, beta, cfg.qre, &warm[g]);
      double damping = cfg.qre.damping;
      if (!eq.converged) {
        QreConfig retry = cfg.qre;
        retry.damping = 0.5 * cfg.qre.damping;
        eq = solve_qre(game, reward, beta, retry, &eq.policy);
        damping = retry.damping;
        if (!eq.converged) {
          throw std::runtime_error("equilibrium did not converge at step " + std::to_string(t) + " for group " +
                                   std::to_string(g) + " (residual " + std::to_string(eq.residual) + ")");
        }
      }
      warm[g] = eq.policy;
      const QreLikelihood lik = unrolled_log_likelihood(game, reward, beta, eq.policy, counts[g], cfg.unroll, damping);
      accumulate(grad, group, member_gradients(params, profiles, group, lik.reward_gradient, game.seat_views()), 1.0);
      draw.betas.push_back(beta);
      draw.diagnostics.push_back(lik.log_likelihood);
      log_post += lik.log_likelihood;
    }
    if (keep_draw(cfg.schedule, t)) {
      draw.psi = psi;
      draw.log_posterior = log_post;
      out.draws.push_back(std::move(draw));
    }
    sgld_step(psi, flatten(grad), agent_noise(params, seed, agent_keys, t), state, cfg.schedule, t,
              AgentRewardParams::kPsiClip);
    unflatten(psi, params);
  }
  return out;
}

std::vector<AgentRewardParams> posterior_point_params(const RewardChainSamples& chain, PointEstimate mode) {
  if (chain.draws.empty()) throw std::invalid_argument("empty chain");
  Eigen::VectorXd psi;
  if (mode == PointEstimate::mean) {
    psi = Eigen::VectorXd::Zero(chain.draws.front().psi.size());
    for (const auto& d : chain.draws) psi += d.psi;
    psi /= static_cast<double>(chain.draws.size());
  } else {
    const ChainDraw* best = &chain.draws.front();
    for (const auto& d : chain.draws)
      if (d.log_posterior > best->log_posterior) best = &d;
    psi = best->psi;
  }
  std::vector<AgentRewardParams> out = chain.layout;
  unflatten(psi, out);
  return out;
}

std::vector<AltruismProfile> posterior_point_estimate(const RewardChainSamples& chain, PointEstimate mode) {
  return materialize(posterior_point_params(chain, mode));
}

}  // namespace altirl
