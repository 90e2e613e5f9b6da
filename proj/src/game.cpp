#include "altirl/game.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace altirl {

JointActionCodec::JointActionCodec(int num_actions, int num_players)
    : num_actions_(num_actions), num_players_(num_players) {
  if (num_actions < 1 || num_players < 1) {
    throw std::invalid_argument("joint action space needs at least one action and one player");
  }
  size_ = 1;
  for (int k = 0; k < num_players; ++k) size_ *= num_actions;
  strides_.assign(static_cast<std::size_t>(num_players), 1);
  for (int k = num_players - 2; k >= 0; --k) {
    strides_[static_cast<std::size_t>(k)] = strides_[static_cast<std::size_t>(k + 1)] * num_actions;
  }
  table_.resize(static_cast<std::size_t>(size_ * num_players));
  for (Index j = 0; j < size_; ++j) {
    for (int k = 0; k < num_players; ++k) {
      table_[static_cast<std::size_t>(j * num_players + k)] =
          static_cast<int>((j / strides_[static_cast<std::size_t>(k)]) % num_actions);
    }
  }
}

Index JointActionCodec::encode(const std::vector<int>& actions) const {
  if (static_cast<int>(actions.size()) != num_players_) {
    throw std::invalid_argument("joint action has the wrong number of seats");
  }
  Index j = 0;
  for (int k = 0; k < num_players_; ++k) {
    const int a = actions[static_cast<std::size_t>(k)];
    if (a < 0 || a >= num_actions_) throw std::out_of_range("action index out of range");
    j += a * strides_[static_cast<std::size_t>(k)];
  }
  return j;
}

std::vector<int> JointActionCodec::decode(Index joint) const {
  std::vector<int> out(static_cast<std::size_t>(num_players_));
  for (int k = 0; k < num_players_; ++k) out[static_cast<std::size_t>(k)] = action(joint, k);
  return out;
}

RewardlessGame::RewardlessGame(int num_states, int num_actions, int num_players, SparseMatrix transition,
                               double discount, Eigen::VectorXd initial_dist)
    : num_states_(num_states),
      num_actions_(num_actions),
      num_players_(num_players),
      discount_(discount),
      initial_dist_(std::move(initial_dist)),
      transition_(std::move(transition)),
      codec_(num_actions, num_players) {
  if (num_states < 1) throw std::invalid_argument("game needs at least one state");
  if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
  if (transition_.rows() != num_states * codec_.size() || transition_.cols() != num_states) {
    throw std::invalid_argument("transition has shape " + std::to_string(transition_.rows()) + "x" +
                                std::to_string(transition_.cols()) + ", expected " +
                                std::to_string(num_states * codec_.size()) + "x" + std::to_string(num_states));
  }
  if (initial_dist_.size() != num_states) throw std::invalid_argument("initial distribution has the wrong size");
  if ((initial_dist_.array() < 0.0).any() || std::abs(initial_dist_.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("initial distribution is not a probability vector");
  }
  transition_.makeCompressed();
  for (Index r = 0; r < transition_.rows(); ++r) {
    double total = 0.0;
    for (SparseMatrix::InnerIterator it(transition_, r); it; ++it) {
      if (it.value() < 0.0) throw std::invalid_argument("negative transition probability");
      total += it.value();
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("transition row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
  }
}

void RewardlessGame::set_seat_views(std::vector<std::vector<int>> views) {
  if (!views.empty() && static_cast<int>(views.size()) != num_players_) {
    throw std::invalid_argument("one state view per seat is required");
  }
  for (const auto& view : views) {
    if (static_cast<int>(view.size()) != num_states_) throw std::invalid_argument("state view has the wrong size");
    std::vector<char> seen(view.size(), 0);
    for (const int s : view) {
      if (s < 0 || s >= num_states_ || seen[static_cast<std::size_t>(s)]) {
        throw std::invalid_argument("state view is not a permutation");
      }
      seen[static_cast<std::size_t>(s)] = 1;
    }
  }
  seat_views_ = std::move(views);
}

JointPolicy JointPolicy::uniform(int num_states, int num_actions, int num_players) {
  JointPolicy out;
  out.policies.assign(static_cast<std::size_t>(num_players),
                      PolicyMatrix::Constant(num_states, num_actions, 1.0 / num_actions));
  return out;
}

void validate_policy(const RewardlessGame& game, const JointPolicy& joint, double tolerance) {
  if (joint.num_players() != game.num_players()) {
    throw std::invalid_argument("joint policy has " + std::to_string(joint.num_players()) + " seats, game has " +
                                std::to_string(game.num_players()));
  }
  for (int i = 0; i < joint.num_players(); ++i) {
    const PolicyMatrix& p = joint[i];
    if (p.rows() != game.num_states() || p.cols() != game.num_actions()) {
      throw std::invalid_argument("policy of seat " + std::to_string(i) + " has the wrong shape");
    }
    if ((p.array() < 0.0).any() || !p.allFinite()) {
      throw std::invalid_argument("policy of seat " + std::to_string(i) + " has invalid entries");
    }
    if (((p.rowwise().sum().array() - 1.0).abs() > tolerance).any()) {
      throw std::invalid_argument("policy of seat " + std::to_string(i) + " is not row-stochastic");
    }
  }
}

GroupReward GroupReward::from_tables(std::vector<Eigen::MatrixXd> tables) {
  GroupReward out;
  out.per_agent = std::move(tables);
  if (!out.per_agent.empty()) {
    out.min_value = kInf;
    out.max_value = -kInf;
    for (const auto& t : out.per_agent) {
      if (!t.allFinite()) throw std::invalid_argument("reward table has non-finite entries");
      out.min_value = std::min(out.min_value, t.minCoeff());
      out.max_value = std::max(out.max_value, t.maxCoeff());
    }
  }
  return out;
}

GroupReward GroupReward::zeros(const RewardlessGame& game) {
  return from_tables(std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(game.num_players()),
                                                  Eigen::MatrixXd::Zero(game.num_states(), game.num_joint_actions())));
}

DiscountedSystem::DiscountedSystem(const SparseMatrix& chain, double discount) : size_(chain.rows()) {
  if (size_ <= kDenseLimit) {
    Eigen::MatrixXd a = -discount * Eigen::MatrixXd(chain);
    a.diagonal().array() += 1.0;
    dense_.compute(a);
    return;
  }
  Eigen::SparseMatrix<double> a = -discount * Eigen::SparseMatrix<double>(chain);
  Eigen::SparseMatrix<double> eye(size_, size_);
  eye.setIdentity();
  a += eye;
  a.makeCompressed();
  sparse_ = std::make_unique<SparseLu>();
  sparse_->analyzePattern(a);
  sparse_->factorize(a);
  if (sparse_->info() != Eigen::Success) {
    throw std::runtime_error("sparse factorization of the discounted system failed");
  }
}

Eigen::MatrixXd DiscountedSystem::solve(const Eigen::MatrixXd& rhs) const {
  if (sparse_) return sparse_->solve(rhs);
  return dense_.solve(rhs);
}

Eigen::MatrixXd DiscountedSystem::solve_transpose(const Eigen::MatrixXd& rhs) const {
  if (sparse_) return sparse_->transpose().solve(rhs);
  return dense_.transpose().solve(rhs);
}

namespace {

Eigen::MatrixXd product_over_seats(const RewardlessGame& game, const JointPolicy& joint, int skip_seat) {
  const JointActionCodec& codec = game.codec();
  const Index num_joint = codec.size();
  Eigen::MatrixXd out(game.num_states(), num_joint);
  for (Index s = 0; s < game.num_states(); ++s) {
    for (Index j = 0; j < num_joint; ++j) {
      double p = 1.0;
      for (int k = 0; k < codec.num_players(); ++k) {
        if (k == skip_seat) continue;
        p *= joint[k](s, codec.action(j, k));
      }
      out(s, j) = p;
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd others_probabilities(const RewardlessGame& game, const JointPolicy& joint, int seat) {
  return product_over_seats(game, joint, seat);
}

Eigen::MatrixXd marginalize_to_seat(const JointActionCodec& codec, const Eigen::MatrixXd& others,
                                    const Eigen::MatrixXd& table, int seat) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(table.rows(), codec.num_actions());
  for (Index s = 0; s < table.rows(); ++s) {
    for (Index j = 0; j < codec.size(); ++j) {
      out(s, codec.action(j, seat)) += others(s, j) * table(s, j);
    }
  }
  return out;
}

PolicyContext make_policy_context(const RewardlessGame& game, const JointPolicy& joint) {
  validate_policy(game, joint);
  const int n = game.num_players();
  const Index num_states = game.num_states();
  const Index num_joint = game.num_joint_actions();
  const SparseMatrix& transition = game.transition();

  PolicyContext ctx;
  ctx.joint_probs = product_over_seats(game, joint, -1);
  ctx.others_probs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ctx.others_probs.push_back(product_over_seats(game, joint, i));

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(transition.nonZeros()));
  for (Index s = 0; s < num_states; ++s) {
    for (Index j = 0; j < num_joint; ++j) {
      const double w = ctx.joint_probs(s, j);
      if (w == 0.0) continue;
      for (SparseMatrix::InnerIterator it(transition, game.row(s, j)); it; ++it) {
        triplets.emplace_back(s, it.col(), w * it.value());
      }
    }
  }
  ctx.chain.resize(num_states, num_states);
  ctx.chain.setFromTriplets(triplets.begin(), triplets.end());
  ctx.system = std::make_shared<const DiscountedSystem>(ctx.chain, game.discount());

  ctx.entropy.resize(num_states, n);
  for (int i = 0; i < n; ++i) ctx.entropy.col(i) = entropy_rows(joint[i]);
  return ctx;
}

std::vector<SparseMatrix> induced_transition(const RewardlessGame& game, const JointPolicy& joint,
                                             int agent_seat) {
  if (agent_seat < 0 || agent_seat >= game.num_players()) throw std::out_of_range("agent seat out of range");
  if (joint.num_players() != game.num_players()) {
    throw std::invalid_argument("policy seats do not match the game's player count");
  }
  for (int k = 0; k < game.num_players(); ++k) {
    if (k == agent_seat) continue;
    if (joint[k].rows() != game.num_states() || joint[k].cols() != game.num_actions()) {
      throw std::invalid_argument("policy of seat " + std::to_string(k) + " has the wrong shape");
    }
  }
  const JointActionCodec& codec = game.codec();
  const Index num_states = game.num_states();
  const Eigen::MatrixXd others = product_over_seats(game, joint, agent_seat);

  std::vector<std::vector<Eigen::Triplet<double>>> triplets(static_cast<std::size_t>(game.num_actions()));
  for (Index s = 0; s < num_states; ++s) {
    for (Index j = 0; j < codec.size(); ++j) {
      const double w = others(s, j);
      if (w == 0.0) continue;
      auto& bucket = triplets[static_cast<std::size_t>(codec.action(j, agent_seat))];
      for (SparseMatrix::InnerIterator it(game.transition(), game.row(s, j)); it; ++it) {
        bucket.emplace_back(s, it.col(), w * it.value());
      }
    }
  }
  std::vector<SparseMatrix> out;
  out.reserve(triplets.size());
  for (const auto& bucket : triplets) {
    SparseMatrix m(num_states, num_states);
    m.setFromTriplets(bucket.begin(), bucket.end());
    out.push_back(std::move(m));
  }
  return out;
}

ValueBundle soft_policy_evaluation(const RewardlessGame& game, const GroupReward& reward,
                                   const JointPolicy& joint, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  return soft_policy_evaluation(game, make_policy_context(game, joint), reward, beta);
}

ValueBundle soft_policy_evaluation(const RewardlessGame& game, const PolicyContext& ctx,
                                   const GroupReward& reward, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  const int n = game.num_players();
  if (reward.num_players() != n) throw std::invalid_argument("reward seats do not match the game");
  const Index num_states = game.num_states();
  const Index num_joint = game.num_joint_actions();

  Eigen::MatrixXd rhs(num_states, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd& r = reward[i];
    if (r.rows() != num_states || r.cols() != num_joint) throw std::invalid_argument("reward table has the wrong shape");
    rhs.col(i) = ctx.joint_probs.cwiseProduct(r).rowwise().sum() + ctx.entropy.col(i) / beta;
  }

  ValueBundle out;
  out.beta = beta;
  const Eigen::MatrixXd values = ctx.system->solve(rhs);
  const Eigen::MatrixXd next_values = game.transition() * values;  // (|S| |A|^n, n)
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (int i = 0; i < n; ++i) {
    out.values.emplace_back(values.col(i));
    Eigen::Map<const RowMajor> cont(next_values.col(i).data(), num_states, num_joint);
    out.q_values.emplace_back(reward[i] + game.discount() * cont);
    out.expected_q.push_back(marginalize_to_seat(game.codec(), ctx.others_probs[static_cast<std::size_t>(i)],
                                                 out.q_values.back(), i));
  }
  return out;
}

PolicyMatrix boltzmann(const Eigen::MatrixXd& expected_q, double beta) {
  return softmax_rows(expected_q, beta);
}

Trajectory sample_trajectory(const RewardlessGame& game, const JointPolicy& joint, std::size_t length,
                             std::uint64_t seed) {
  if (length < 1) throw std::invalid_argument("trajectory length must be at least 1");
  validate_policy(game, joint);
  Rng rng(seed);
  const int n = game.num_players();
  Trajectory out;
  out.steps.reserve(length);
  Index state = sample_categorical(game.initial_dist(), rng);
  std::vector<int> actions(static_cast<std::size_t>(n));
  for (std::size_t t = 0; t < length; ++t) {
    for (int i = 0; i < n; ++i) {
      actions[static_cast<std::size_t>(i)] = static_cast<int>(sample_categorical(joint[i].row(state), rng));
    }
    out.steps.push_back(Step{static_cast<int>(state), actions});
    const Index r = game.row(state, game.codec().encode(actions));
    const double u = uniform01(rng);
    double acc = 0.0;
    Index next = -1;
    Index last = -1;
    for (SparseMatrix::InnerIterator it(game.transition(), r); it; ++it) {
      if (it.value() <= 0.0) continue;
      last = it.col();
      acc += it.value();
      if (u < acc) {
        next = it.col();
        break;
      }
    }
    state = next >= 0 ? next : last;
  }
  return out;
}

}  // namespace altirl
