#include "altirl/qre.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace altirl {

SoftBestResponse soft_best_response(const RewardlessGame& game, const GroupReward& reward,
                                    const JointPolicy& joint, int agent_seat, double beta, double tolerance,
                                    int max_iters) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  const std::vector<SparseMatrix> induced = induced_transition(game, joint, agent_seat);
  const Eigen::MatrixXd others = others_probabilities(game, joint, agent_seat);
  const Eigen::MatrixXd expected_reward = marginalize_to_seat(game.codec(), others, reward[agent_seat], agent_seat);

  const Index num_states = game.num_states();
  const int num_actions = game.num_actions();
  const double gamma = game.discount();
  Eigen::VectorXd values = Eigen::VectorXd::Zero(num_states);
  Eigen::MatrixXd q(num_states, num_actions);
  SoftBestResponse out;
  for (int it = 1; it <= max_iters; ++it) {
    for (int a = 0; a < num_actions; ++a) {
      q.col(a) = expected_reward.col(a) + gamma * (induced[static_cast<std::size_t>(a)] * values);
    }
    const Eigen::VectorXd next = logsumexp_rows((beta * q).eval()) / beta;
    const double change = (next - values).cwiseAbs().maxCoeff();
    values = next;
    if (change < tolerance) {
      for (int a = 0; a < num_actions; ++a) {
        q.col(a) = expected_reward.col(a) + gamma * (induced[static_cast<std::size_t>(a)] * values);
      }
      out.policy = boltzmann(q, beta);
      out.values = std::move(values);
      out.iterations = it;
      return out;
    }
  }
  throw std::runtime_error("soft value iteration did not converge within " + std::to_string(max_iters) +
                           " iterations");
}

QreResult solve_qre(const RewardlessGame& game, const GroupReward& reward, double beta, const QreConfig& cfg,
                    const JointPolicy* init) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) throw std::invalid_argument("damping must lie in (0, 1]");
  const int n = game.num_players();
  JointPolicy current = init ? *init : JointPolicy::uniform(game.num_states(), game.num_actions(), n);
  validate_policy(game, current);

  std::vector<Eigen::MatrixXd> log_policy;
  log_policy.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) log_policy.emplace_back(current[i].array().log().matrix());

  QreResult result;
  double damping = cfg.damping;
  double previous = kInf;
  for (int it = 0; it <= cfg.max_iters; ++it) {
    const PolicyContext ctx = make_policy_context(game, current);
    const ValueBundle vb = soft_policy_evaluation(game, ctx, reward, beta);
    double residual = 0.0;
    std::vector<Eigen::MatrixXd> responses;
    responses.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      responses.push_back(boltzmann(vb.expected_q[static_cast<std::size_t>(i)], beta));
      residual = std::max(residual, kl_rows(current[i], responses.back()).sum());
    }
    if (residual < result.residual) {
      result.residual = residual;
      result.policy = current;
      result.iterations = it;
    }
    if (residual < cfg.tolerance) {
      result.converged = true;
      return result;
    }
    if (it == cfg.max_iters) break;
    if (residual > previous) damping = std::max(cfg.min_damping, 0.5 * damping);
    previous = residual;

    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd& lp = log_policy[static_cast<std::size_t>(i)];
      lp = (1.0 - damping) * lp + (damping * beta) * vb.expected_q[static_cast<std::size_t>(i)];
      const Eigen::VectorXd norm = logsumexp_rows(lp);
      lp.colwise() -= norm;
      current[i] = lp.array().exp().matrix();
      current[i].array().colwise() /= current[i].rowwise().sum().array();
    }
  }
  result.iterations = cfg.max_iters;
  return result;
}

}  // namespace altirl
