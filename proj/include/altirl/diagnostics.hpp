#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "altirl/gaps.hpp"
#include "altirl/qre.hpp"
#include "altirl/rewards.hpp"

namespace altirl {

// One agent observed in two groups of the same game.
struct RankReport {
  int agent = -1;
  std::vector<GroupSpec> groups;        // the two groups, when known
  int stacked_rank = 0;
  int required = 0;                     // 2 |S| - 1
  bool satisfied = false;               // stacked_rank == required
  std::vector<double> singular_values;  // descending
  double tolerance = 0.0;

  // sigma_{required} - sigma_{required + 1}, both 1-based, missing values read as 0.
  double margin() const;
};

// Stacks, for every own action a, the row block
//   [ I - gamma T_a(first) | I - gamma T_a(second) ]
// where T_a(.) is the agent's transition induced by its partners in that group.
// Numerical rank uses the cutoff max(rows, cols) * eps * sigma_max.
RankReport check_rank_condition(const RewardlessGame& game, const JointPolicy& first, int first_seat,
                                const JointPolicy& second, int second_seat);

// The stacked matrix itself, (|A| |S|, 2 |S|).
Eigen::MatrixXd rank_condition_matrix(const RewardlessGame& game, const JointPolicy& first, int first_seat,
                                      const JointPolicy& second, int second_seat);

// Numerical rank with the same cutoff as check_rank_condition.
int numerical_rank(const Eigen::VectorXd& singular_values, Index rows, Index cols, double* tolerance = nullptr);

struct PartitionConfig {
  GapConfig gap;
  double beta = 0.1;
  int samples = 20000;
  double proposal_variance = 0.16;
  RewardBounds bounds;
};

struct PartitionEstimate {
  double log_z = 0.0;                  // log of (1/N) sum exp(-c gap) / q
  double z = 0.0;
  double log_z_self_normalized = 0.0;  // log of volume * sum (exp(-c gap) / q) / sum (1 / q)
  double log_volume = 0.0;
  double effective_sample_size = 0.0;  // of the exp(-c gap) / q weights
  double min_gap = 0.0;
};

// Importance sampling of the integral of exp(-c gap) over the prior box of the
// group's reward parameters, with a product of truncated normals centered on
// `truth` as the proposal q. Equal seeds give common random numbers across
// policies, under which both estimates give the same ratios between policies.
PartitionEstimate estimate_partition(const RewardlessGame& game, const std::vector<AltruismProfile>& truth,
                                     const GroupSpec& group, const JointPolicy& joint, const PartitionConfig& cfg,
                                     std::uint64_t seed);

// Expected squared error of a uniform guess on [lo, hi] against `truth`.
double uniform_guess_error(double truth, double lo, double hi);

struct LambdaError {
  std::vector<double> per_agent;  // each rescaled by its own baseline
  double mean = 0.0;              // mean error over mean baseline
};

LambdaError lambda_error(const std::vector<double>& estimate, const std::vector<double>& truth,
                         const RewardBounds& bounds = {});

enum class RewardAlignment { raw, mean_shift };

struct RewardError {
  std::vector<double> per_agent;
  double mean = 0.0;
};

RewardError reward_error(const std::vector<Eigen::MatrixXd>& estimate, const std::vector<Eigen::MatrixXd>& truth,
                         RewardAlignment align, const RewardBounds& bounds = {});

struct ErrorReport {
  LambdaError lambda;
  RewardError reward_raw;
  RewardError reward_mean_shift;
};

ErrorReport error_report(const std::vector<AltruismProfile>& estimate, const std::vector<AltruismProfile>& truth,
                         const RewardBounds& bounds = {});

// Mean over states of KL(oracle(.|s) || candidate(.|s)). Infinite on a support violation.
double policy_kl(const PolicyMatrix& oracle, const PolicyMatrix& candidate);
// Mean over seats of the per-seat value.
double policy_kl(const JointPolicy& oracle, const JointPolicy& candidate);

struct SynthesisResult {
  JointPolicy policy;
  double chef_value = 0.0;  // regularized value of the chef's seat under the initial distribution
  double residual = 0.0;
};

// Two-player game where the seat `ai_seat` optimizes
//   ai_intrinsic(s, a_ai) + target_lambda * chef_estimate(s, a_chef)
// and the other seat optimizes chef_truth with no altruism. Tables are read through the game's seat views.
SynthesisResult synthesize_partner(const RewardlessGame& game, const Eigen::MatrixXd& ai_intrinsic,
                                   const Eigen::MatrixXd& chef_estimate, const Eigen::MatrixXd& chef_truth,
                                   int ai_seat, double target_lambda, double beta, const QreConfig& qre = {});

// Sample Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json to_json(const RankReport& report);
nlohmann::json to_json(const ErrorReport& report);

}  // namespace altirl
