#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "altirl/numerics.hpp"
#include "altirl/rng.hpp"

namespace altirl {

// Per-seat stochastic matrix of shape (|S|, |A|).
using PolicyMatrix = Eigen::MatrixXd;

// A Markov game without rewards. Transitions are stored as a row-major
// sparse matrix with one row per (state, joint action), row index
// state * |A|^n + joint, and one column per next state.
class RewardlessGame {
 public:
  RewardlessGame() = default;
  RewardlessGame(int num_states, int num_actions, int num_players, SparseMatrix transition,
                 double discount, Eigen::VectorXd initial_dist);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int num_players() const { return num_players_; }
  Index num_joint_actions() const { return codec_.size(); }
  double discount() const { return discount_; }
  const Eigen::VectorXd& initial_dist() const { return initial_dist_; }
  const SparseMatrix& transition() const { return transition_; }
  const JointActionCodec& codec() const { return codec_; }

  Index row(Index state, Index joint) const { return state * codec_.size() + joint; }

  // Optional per-seat state permutations: an agent seated at k reads its
  // intrinsic reward at state view[k][s]. Empty means the identity for every seat.
  const std::vector<std::vector<int>>& seat_views() const { return seat_views_; }
  void set_seat_views(std::vector<std::vector<int>> views);

  double probability(Index state, Index joint, Index next) const {
    return transition_.coeff(row(state, joint), next);
  }

 private:
  int num_states_ = 0;
  int num_actions_ = 0;
  int num_players_ = 0;
  double discount_ = 0.0;
  Eigen::VectorXd initial_dist_;
  SparseMatrix transition_;
  JointActionCodec codec_;
  std::vector<std::vector<int>> seat_views_;
};

struct JointPolicy {
  std::vector<PolicyMatrix> policies;

  int num_players() const { return static_cast<int>(policies.size()); }
  const PolicyMatrix& operator[](int seat) const { return policies[static_cast<std::size_t>(seat)]; }
  PolicyMatrix& operator[](int seat) { return policies[static_cast<std::size_t>(seat)]; }

  static JointPolicy uniform(int num_states, int num_actions, int num_players);
};

// Throws std::invalid_argument unless `joint` is a valid joint policy for `game`.
void validate_policy(const RewardlessGame& game, const JointPolicy& joint, double tolerance = 1e-10);

// Per-seat effective rewards over (state, joint action).
struct GroupReward {
  std::vector<Eigen::MatrixXd> per_agent;  // each (|S|, |A|^n)
  double min_value = 0.0;
  double max_value = 0.0;

  int num_players() const { return static_cast<int>(per_agent.size()); }
  const Eigen::MatrixXd& operator[](int seat) const { return per_agent[static_cast<std::size_t>(seat)]; }

  static GroupReward from_tables(std::vector<Eigen::MatrixXd> tables);
  static GroupReward zeros(const RewardlessGame& game);
};

struct ValueBundle {
  std::vector<Eigen::VectorXd> values;        // V_i over states
  std::vector<Eigen::MatrixXd> q_values;      // Q_i over (state, joint action)
  std::vector<Eigen::MatrixXd> expected_q;    // Qbar_i over (state, own action)
  double beta = 1.0;
};

struct Step {
  int state = 0;
  std::vector<int> actions;
};

struct Trajectory {
  std::vector<Step> steps;
  std::size_t length() const { return steps.size(); }
};

// Solves (I - gamma P) x = b for a fixed chain P. Dense LU for small chains,
// sparse LU above `kDenseLimit` states.
class DiscountedSystem {
 public:
  static constexpr Index kDenseLimit = 256;

  DiscountedSystem(const SparseMatrix& chain, double discount);
  DiscountedSystem(DiscountedSystem&&) noexcept = default;
  DiscountedSystem& operator=(DiscountedSystem&&) noexcept = default;

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  Eigen::MatrixXd solve_transpose(const Eigen::MatrixXd& rhs) const;

 private:
  using SparseLu = Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>;
  Index size_ = 0;
  Eigen::PartialPivLU<Eigen::MatrixXd> dense_;
  std::unique_ptr<SparseLu> sparse_;
};

// Everything about a joint policy that does not depend on rewards.
struct PolicyContext {
  Eigen::MatrixXd joint_probs;                 // (|S|, |A|^n)
  std::vector<Eigen::MatrixXd> others_probs;   // per seat, product over the other seats
  SparseMatrix chain;                          // T^pi
  std::shared_ptr<const DiscountedSystem> system;
  Eigen::MatrixXd entropy;                     // (|S|, n) entropies of every seat
};

PolicyContext make_policy_context(const RewardlessGame& game, const JointPolicy& joint);

// Product over the seats other than `seat` of pi_k(a_k | s), as (|S|, |A|^n).
Eigen::MatrixXd others_probabilities(const RewardlessGame& game, const JointPolicy& joint, int seat);

// sum over a_{-i} of pi_{-i} * table(s, (a, a_{-i})), as (|S|, |A|).
Eigen::MatrixXd marginalize_to_seat(const JointActionCodec& codec, const Eigen::MatrixXd& others,
                                    const Eigen::MatrixXd& table, int seat);

// Transition matrices of `agent_seat` induced by the other seats' policies, one
// per own action. The policy stored at `agent_seat` in `joint` is ignored.
std::vector<SparseMatrix> induced_transition(const RewardlessGame& game, const JointPolicy& joint,
                                             int agent_seat);

ValueBundle soft_policy_evaluation(const RewardlessGame& game, const GroupReward& reward,
                                   const JointPolicy& joint, double beta);
ValueBundle soft_policy_evaluation(const RewardlessGame& game, const PolicyContext& context,
                                   const GroupReward& reward, double beta);

// Boltzmann policy of `beta * expected_q`.
PolicyMatrix boltzmann(const Eigen::MatrixXd& expected_q, double beta);

Trajectory sample_trajectory(const RewardlessGame& game, const JointPolicy& joint, std::size_t length,
                             std::uint64_t seed);

}  // namespace altirl
