#pragma once

#include "altirl/game.hpp"

namespace altirl {

struct SoftBestResponse {
  PolicyMatrix policy;
  Eigen::VectorXd values;  // optimal soft values V* of the induced MDP
  int iterations = 0;
};

// Soft value iteration for `agent_seat` against the other seats of `joint`.
// Throws std::runtime_error when the sup-norm change does not fall below
// `tolerance` within `max_iters` sweeps.
SoftBestResponse soft_best_response(const RewardlessGame& game, const GroupReward& reward,
                                    const JointPolicy& joint, int agent_seat, double beta,
                                    double tolerance = 1e-10, int max_iters = 200000);

struct QreConfig {
  double damping = 0.5;      // geometric step towards the soft response, in (0, 1]
  int max_iters = 20000;
  double tolerance = 1e-8;   // on the policy stability gap
  double min_damping = 1e-3; // floor for the automatic damping reduction
};

struct QreResult {
  JointPolicy policy;  // best iterate seen
  double residual = kInf;
  int iterations = 0;
  bool converged = false;
};

// Damped simultaneous soft-response iteration:
//   pi_i <- normalize(pi_i^(1 - d) * sigma_i^d)
// stopping once max_i sum_s KL(pi_i || sigma_i) < tolerance. The damping is
// halved whenever the residual grows. Starts from uniform unless `init` is given.
QreResult solve_qre(const RewardlessGame& game, const GroupReward& reward, double beta,
                    const QreConfig& cfg = {}, const JointPolicy* init = nullptr);

}  // namespace altirl
