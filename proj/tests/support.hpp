#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "altirl/game.hpp"
#include "altirl/rng.hpp"

namespace altirl::testing {

// Dense random game with Dirichlet(1) rows, built independently of the environments module.
inline RewardlessGame random_game(int num_states, int num_actions, int num_players, double discount,
                                  std::uint64_t seed) {
  Rng rng(seed);
  const JointActionCodec codec(num_actions, num_players);
  std::exponential_distribution<double> expo(1.0);
  std::vector<Eigen::Triplet<double>> triplets;
  for (int s = 0; s < num_states; ++s) {
    for (Index j = 0; j < codec.size(); ++j) {
      Eigen::VectorXd row(num_states);
      for (int k = 0; k < num_states; ++k) row(k) = expo(rng);
      row /= row.sum();
      for (int k = 0; k < num_states; ++k) triplets.emplace_back(s * codec.size() + j, k, row(k));
    }
  }
  SparseMatrix t(num_states * codec.size(), num_states);
  t.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::VectorXd init = Eigen::VectorXd::Constant(num_states, 1.0 / num_states);
  return {num_states, num_actions, num_players, std::move(t), discount, init};
}

inline PolicyMatrix random_policy(int num_states, int num_actions, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  PolicyMatrix p(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) p(s, a) = expo(rng) + 0.05;
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

inline JointPolicy random_joint(const RewardlessGame& game, Rng& rng) {
  JointPolicy out;
  for (int i = 0; i < game.num_players(); ++i) out.policies.push_back(random_policy(game.num_states(), game.num_actions(), rng));
  return out;
}

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = lo + (hi - lo) * uniform01(rng);
  return m;
}

inline GroupReward random_reward(const RewardlessGame& game, Rng& rng) {
  std::vector<Eigen::MatrixXd> tables;
  for (int i = 0; i < game.num_players(); ++i) {
    tables.push_back(random_matrix(game.num_states(), game.num_joint_actions(), rng, -1.0, 1.0));
  }
  return GroupReward::from_tables(std::move(tables));
}

// Dense transition slice T(. | s, joint) as a row vector.
inline Eigen::RowVectorXd transition_row(const RewardlessGame& game, Index s, Index joint) {
  return Eigen::RowVectorXd(game.transition().row(game.row(s, joint)));
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Central finite difference of f along coordinate k of x.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                 Index k, double h) {
  const double x0 = x(k);
  x(k) = x0 + h;
  const double up = f(x);
  x(k) = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

}  // namespace altirl::testing
