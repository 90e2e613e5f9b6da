#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "altirl/inference.hpp"

namespace altirl {

using Json = nlohmann::json;

Json to_json(const Eigen::MatrixXd& m);  // [rows][cols]
Eigen::MatrixXd matrix_from_json(const Json& j);
Json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

// {num_states, num_actions, num_players, discount, initial_dist, transition[S][A^n][S]}.
// Games whose dense tensor would exceed kDenseTransitionLimit entries carry
// "transition_sparse": [[row, next_state, p], ...] instead, row = s * A^n + joint.
inline constexpr Index kDenseTransitionLimit = 4'000'000;
Json game_to_json(const RewardlessGame& game);
RewardlessGame game_from_json(const Json& j);

// {"bounds": {...}, "agents": [{agent_id, lambda, intrinsic, psi_lambda, psi_r}]}.
Json profiles_to_json(const std::vector<AltruismProfile>& profiles, const RewardBounds& bounds);
std::vector<AltruismProfile> profiles_from_json(const Json& j);
RewardBounds bounds_from_json(const Json& j);
Json to_json(const RewardBounds& bounds);

Json joint_policy_to_json(const JointPolicy& joint);
JointPolicy joint_policy_from_json(const Json& j);

// One JSON line per trajectory: {group, trajectory_index, steps: [{state, actions}]}.
void write_demonstrations(std::ostream& out, const DemonstrationSet& demos);
DemonstrationSet read_demonstrations(std::istream& in);

// One JSON line per draw: {step, beta_samples, psi: {agent_id: {psi_lambda, psi_r}}, diagnostics, log_posterior}.
void write_chain(std::ostream& out, const RewardChainSamples& chain);
Json chain_layout_json(const RewardChainSamples& chain);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace altirl
