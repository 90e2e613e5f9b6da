#include "altirl/io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace altirl {

Json to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("matrix must be a nested array");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw std::invalid_argument("ragged matrix");
    for (Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
}

Json game_to_json(const RewardlessGame& game) {
  Json out{{"num_states", game.num_states()},
           {"num_actions", game.num_actions()},
           {"num_players", game.num_players()},
           {"discount", game.discount()},
           {"joint_action_order", "lexicographic, seat 0 slowest-varying"},
           {"initial_dist", to_json(game.initial_dist())}};
  const SparseMatrix& t = game.transition();
  const Index ns = game.num_states();
  const Index joints = game.num_joint_actions();
  if (ns * joints * ns <= kDenseTransitionLimit) {
    Json tensor = Json::array();
    for (Index s = 0; s < ns; ++s) {
      Json per_state = Json::array();
      for (Index j = 0; j < joints; ++j) {
        std::vector<double> row(static_cast<std::size_t>(ns), 0.0);
        for (SparseMatrix::InnerIterator it(t, game.row(s, j)); it; ++it) row[static_cast<std::size_t>(it.col())] = it.value();
        per_state.push_back(std::move(row));
      }
      tensor.push_back(std::move(per_state));
    }
    out["transition"] = std::move(tensor);
  } else {
    Json entries = Json::array();
    for (Index r = 0; r < t.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(t, r); it; ++it) entries.push_back(Json::array({r, it.col(), it.value()}));
    }
    out["transition_sparse"] = std::move(entries);
  }
  if (!game.seat_views().empty()) out["seat_views"] = game.seat_views();
  return out;
}

RewardlessGame game_from_json(const Json& j) {
  const int ns = j.at("num_states").get<int>();
  const int na = j.at("num_actions").get<int>();
  const int np = j.at("num_players").get<int>();
  const JointActionCodec codec(na, np);
  std::vector<Eigen::Triplet<double>> triplets;
  if (j.contains("transition")) {
    const Json& tensor = j["transition"];
    if (static_cast<int>(tensor.size()) != ns) throw std::invalid_argument("transition has the wrong state count");
    for (int s = 0; s < ns; ++s) {
      const Json& per_state = tensor[static_cast<std::size_t>(s)];
      if (static_cast<Index>(per_state.size()) != codec.size()) throw std::invalid_argument("transition has the wrong joint-action count");
      for (Index a = 0; a < codec.size(); ++a) {
        const Json& row = per_state[static_cast<std::size_t>(a)];
        if (static_cast<int>(row.size()) != ns) throw std::invalid_argument("transition row has the wrong length");
        for (int n = 0; n < ns; ++n) {
          const double p = row[static_cast<std::size_t>(n)].get<double>();
          if (p != 0.0) triplets.emplace_back(s * codec.size() + a, n, p);
        }
      }
    }
  } else if (j.contains("transition_sparse")) {
    for (const Json& e : j["transition_sparse"]) {
      triplets.emplace_back(e.at(0).get<Index>(), e.at(1).get<Index>(), e.at(2).get<double>());
    }
  } else {
    throw std::invalid_argument("game JSON has no transition");
  }
  SparseMatrix t(ns * codec.size(), ns);
  t.setFromTriplets(triplets.begin(), triplets.end());
  t.makeCompressed();
  RewardlessGame game(ns, na, np, std::move(t), j.at("discount").get<double>(), vector_from_json(j.at("initial_dist")));
  if (j.contains("seat_views")) game.set_seat_views(j["seat_views"].get<std::vector<std::vector<int>>>());
  return game;
}

Json to_json(const RewardBounds& b) {
  return {{"r_min", b.r_min}, {"r_max", b.r_max}, {"lambda_min", b.lambda_min}, {"lambda_max", b.lambda_max}};
}

RewardBounds bounds_from_json(const Json& j) {
  RewardBounds b;
  b.r_min = j.value("r_min", b.r_min);
  b.r_max = j.value("r_max", b.r_max);
  b.lambda_min = j.value("lambda_min", b.lambda_min);
  b.lambda_max = j.value("lambda_max", b.lambda_max);
  if (!(b.r_min < b.r_max) || !(b.lambda_min < b.lambda_max)) throw std::invalid_argument("empty reward bounds");
  return b;
}

Json profiles_to_json(const std::vector<AltruismProfile>& profiles, const RewardBounds& bounds) {
  Json agents = Json::array();
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const AgentRewardParams psi = parametrize(profiles[i], bounds);
    agents.push_back({{"agent_id", i},
                      {"lambda", profiles[i].altruism},
                      {"intrinsic", to_json(profiles[i].intrinsic)},
                      {"psi_lambda", psi.psi_lambda},
                      {"psi_r", to_json(psi.psi_r)}});
  }
  return {{"bounds", to_json(bounds)}, {"agents", agents}};
}

std::vector<AltruismProfile> profiles_from_json(const Json& j) {
  const Json& agents = j.at("agents");
  std::vector<AltruismProfile> out(agents.size());
  for (const Json& a : agents) {
    const auto id = a.at("agent_id").get<std::size_t>();
    if (id >= out.size()) throw std::invalid_argument("agent_id out of range");
    out[id] = {matrix_from_json(a.at("intrinsic")), a.at("lambda").get<double>()};
  }
  return out;
}

Json joint_policy_to_json(const JointPolicy& joint) {
  Json out = Json::array();
  for (const auto& p : joint.policies) out.push_back(to_json(p));
  return out;
}

JointPolicy joint_policy_from_json(const Json& j) {
  JointPolicy out;
  for (const Json& p : j) out.policies.push_back(matrix_from_json(p));
  return out;
}

void write_demonstrations(std::ostream& out, const DemonstrationSet& demos) {
  for (const auto& gd : demos) {
    for (std::size_t k = 0; k < gd.trajectories.size(); ++k) {
      Json steps = Json::array();
      for (const Step& s : gd.trajectories[k].steps) steps.push_back({{"state", s.state}, {"actions", s.actions}});
      out << Json{{"group", gd.group.members}, {"trajectory_index", k}, {"steps", steps}}.dump() << '\n';
    }
  }
}

DemonstrationSet read_demonstrations(std::istream& in) {
  DemonstrationSet out;
  std::map<std::vector<int>, std::size_t> slot;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    const auto members = j.at("group").get<std::vector<int>>();
    auto it = slot.find(members);
    if (it == slot.end()) {
      it = slot.emplace(members, out.size()).first;
      out.push_back({GroupSpec{members}, {}});
    }
    Trajectory traj;
    for (const Json& s : j.at("steps")) traj.steps.push_back({s.at("state").get<int>(), s.at("actions").get<std::vector<int>>()});
    out[it->second].trajectories.push_back(std::move(traj));
  }
  return out;
}

void write_chain(std::ostream& out, const RewardChainSamples& chain) {
  for (const ChainDraw& d : chain.draws) {
    const std::vector<AgentRewardParams> params = chain.params_of(d);
    Json psi = Json::object();
    for (std::size_t i = 0; i < params.size(); ++i) {
      psi[std::to_string(i)] = {{"psi_lambda", params[i].psi_lambda}, {"psi_r", to_json(params[i].psi_r)}};
    }
    out << Json{{"step", d.step},
                {"beta_samples", d.betas},
                {"psi", psi},
                {"diagnostics", d.diagnostics},
                {"log_posterior", d.log_posterior}}
               .dump()
        << '\n';
  }
}

Json chain_layout_json(const RewardChainSamples& chain) {
  Json agents = Json::array();
  for (const auto& p : chain.layout) {
    agents.push_back({{"num_states", p.psi_r.rows()}, {"num_actions", p.psi_r.cols()}, {"bounds", to_json(p.bounds)}});
  }
  return {{"agents", agents}, {"draws", chain.draws.size()}};
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

Json read_json_file(const std::string& path) { return Json::parse(read_text_file(path)); }

void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(1) + "\n"); }

}  // namespace altirl
