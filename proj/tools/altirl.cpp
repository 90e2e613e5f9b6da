// Command-line front end. Every subcommand reads the same JSON config and
// works on files under the output directory:
//
//   gen-env     game.json, profiles.json, manifest.json, config.json
//   gen-demos   demos.jsonl, equilibria.json
//   infer       <method>/chain.jsonl, chain_layout.json, estimate.json, policies.json, timing.json
//   evaluate    <method>/errors.json
//   rank-check  rank.json
//   z-study     z_study.csv, z_study.json
//   imitate     <method>/imitation.csv
//
// timing.json is the only output that depends on wall-clock time.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "altirl/harness.hpp"

namespace fs = std::filesystem;
using namespace altirl;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  std::string estimate_path;
  std::string truth_path;
};

struct Context {
  ExperimentConfig cfg;
  fs::path out;
  fs::path base_dir;
};

Context load(const Options& o) {
  Context c;
  Json j = Json::object();
  if (!o.config_path.empty()) {
    j = read_json_file(o.config_path);
    c.base_dir = fs::path(o.config_path).parent_path();
  } else {
    c.base_dir = fs::current_path();
  }
  if (!o.method.empty()) j["method"] = o.method;
  c.cfg = ExperimentConfig::from_json(j);
  if (o.seed) c.cfg.seed = *o.seed;
  if (!o.out.empty()) c.cfg.output_dir = o.out;
  c.out = c.cfg.output_dir;
  fs::create_directories(c.out);
  return c;
}

fs::path method_dir(const Context& c) {
  const fs::path dir = c.out / to_string(c.cfg.method);
  fs::create_directories(dir);
  return dir;
}

std::string seat_name(const GroupSpec& g) {
  std::string out;
  for (const int m : g.members) out += (out.empty() ? "" : "-") + std::to_string(m);
  return out;
}

// Environment as written by gen-env, groups resolved from the config.
Environment load_environment(const Context& c) {
  Environment env{game_from_json(read_json_file((c.out / "game.json").string())),
                  profiles_from_json(read_json_file((c.out / "profiles.json").string())),
                  {},
                  std::nullopt};
  env.groups = resolve_groups(c.cfg.groups, static_cast<int>(env.truth.size()), c.cfg.group_size());
  return env;
}

DemonstrationSet load_demos(const Context& c) {
  std::ifstream in(c.out / "demos.jsonl");
  if (!in) throw std::runtime_error("missing " + (c.out / "demos.jsonl").string() + "; run gen-demos first");
  return read_demonstrations(in);
}

std::vector<AltruismProfile> load_estimate(const Context& c, const std::string& override_path) {
  const fs::path path = override_path.empty() ? c.out / to_string(c.cfg.method) / "estimate.json" : fs::path(override_path);
  return profiles_from_json(read_json_file(path.string()));
}

std::string csv_number(double x) {
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
  return s.str();
}

void gen_env(const Context& c) {
  const Environment env = build_environment(c.cfg, c.base_dir.string());
  write_json_file((c.out / "game.json").string(), game_to_json(env.game));
  write_json_file((c.out / "profiles.json").string(), profiles_to_json(env.truth, c.cfg.bounds));
  Json resolved = c.cfg.to_json();
  resolved.erase("output_dir");  // location only, so relocated runs stay byte-identical
  write_json_file((c.out / "config.json").string(), resolved);
  Json groups = Json::array();
  for (const auto& g : env.groups) groups.push_back(g.members);
  Json manifest{{"master_seed", c.cfg.seed},
                {"substreams",
                 {{"env", substream(c.cfg.seed, "env")},
                  {"demos", substream(c.cfg.seed, "demos")},
                  {"policy", substream(c.cfg.seed, "policy")},
                  {"init", substream(c.cfg.seed, "init")},
                  {"chain", substream(c.cfg.seed, "chain")},
                  {"zstudy", substream(c.cfg.seed, "zstudy")}}},
                {"num_states", env.game.num_states()},
                {"num_actions", env.game.num_actions()},
                {"num_players", env.game.num_players()},
                {"num_agents", env.truth.size()},
                {"groups", groups}};
  if (env.kitchen) {
    manifest["layout"] = env.kitchen->layout().to_string();
    write_text_file((c.out / "kitchen_states.json").string(), env.kitchen->manifest_json() + "\n");
  }
  write_json_file((c.out / "manifest.json").string(), manifest);
}

void gen_demos(const Context& c) {
  const Environment env = load_environment(c);
  const DemoBundle bundle = generate_demos(env, c.cfg);
  std::ostringstream text;
  write_demonstrations(text, bundle.demos);
  write_text_file((c.out / "demos.jsonl").string(), text.str());
  Json eq = Json::array();
  for (std::size_t g = 0; g < env.groups.size(); ++g) {
    eq.push_back({{"group", env.groups[g].members}, {"policy", joint_policy_to_json(bundle.equilibria[g])}});
  }
  write_json_file((c.out / "equilibria.json").string(), eq);
}

void infer(const Context& c) {
  const Environment env = load_environment(c);
  const InferenceResult r = run_inference(env, load_demos(c), c.cfg);
  const fs::path dir = method_dir(c);
  std::ostringstream chain;
  write_chain(chain, r.chain);
  write_text_file((dir / "chain.jsonl").string(), chain.str());
  write_json_file((dir / "chain_layout.json").string(), chain_layout_json(r.chain));
  write_json_file((dir / "estimate.json").string(), profiles_to_json(r.estimate, c.cfg.bounds));
  Json policies = Json::array();
  for (const auto& p : r.policies) {
    Json samples = Json::array();
    for (const auto& joint : p.samples) samples.push_back(joint_policy_to_json(joint));
    policies.push_back({{"group", p.group.members}, {"samples", samples}});
  }
  write_json_file((dir / "policies.json").string(), policies);
  write_json_file((dir / "timing.json").string(), {{"seconds", r.seconds}, {"method", to_string(c.cfg.method)}});
  std::cout << to_string(c.cfg.method) << ": " << r.chain.draws.size() << " draws in " << r.seconds << " s\n";
}

void evaluate(const Context& c, const Options& o) {
  const std::vector<AltruismProfile> truth = profiles_from_json(
      read_json_file(o.truth_path.empty() ? (c.out / "profiles.json").string() : o.truth_path));
  const ErrorReport report = error_report(load_estimate(c, o.estimate_path), truth, c.cfg.bounds);
  Json j = to_json(report);
  j["method"] = to_string(c.cfg.method);
  write_json_file((method_dir(c) / "errors.json").string(), j);
  std::cout << "lambda " << report.lambda.mean << ", reward (raw) " << report.reward_raw.mean << ", reward (mean-shift) "
            << report.reward_mean_shift.mean << "\n";
}

void rank_check(const Context& c) {
  const Environment env = load_environment(c);
  std::vector<JointPolicy> eq;
  const Json stored = read_json_file((c.out / "equilibria.json").string());
  for (const auto& g : env.groups) {
    bool found = false;
    for (const Json& e : stored) {
      if (e.at("group").get<std::vector<int>>() == g.members) {
        eq.push_back(joint_policy_from_json(e.at("policy")));
        found = true;
        break;
      }
    }
    if (!found) throw std::runtime_error("no stored equilibrium for group " + seat_name(g));
  }
  Json reports = Json::array();
  for (const RankReport& r : rank_reports(env, eq)) reports.push_back(to_json(r));
  write_json_file((c.out / "rank.json").string(), {{"reports", reports}});
}

void run_z_study(const Context& c) {
  const Environment env = load_environment(c);
  const std::vector<ZStudyRow> rows = z_study(env, load_demos(c), c.cfg);
  const std::string kind = c.cfg.method == Method::porp_qig ? "qig" : "psg";
  std::ostringstream csv;
  csv << "policy_index,Z_estimate,gap_kind\n";
  Json j = Json::array();
  for (const ZStudyRow& r : rows) {
    csv << r.policy_index << ',' << csv_number(r.estimate.z) << ',' << kind << '\n';
    j.push_back({{"policy_index", r.policy_index},
                 {"log_z", r.estimate.log_z},
                 {"log_z_self_normalized", r.estimate.log_z_self_normalized},
                 {"effective_sample_size", r.estimate.effective_sample_size},
                 {"min_gap", r.estimate.min_gap}});
  }
  write_text_file((c.out / "z_study.csv").string(), csv.str());
  write_json_file((c.out / "z_study.json").string(), j);
}

void imitate(const Context& c, const Options& o) {
  const Environment env = load_environment(c);
  const std::vector<ImitationRow> rows = imitation_sweep(env, load_estimate(c, o.estimate_path), c.cfg);
  std::ostringstream csv;
  csv << "target_lambda,chef_value,kl_to_oracle,method\n";
  for (const ImitationRow& r : rows) {
    csv << csv_number(r.target_lambda) << ',' << csv_number(r.oracle_chef_value) << ",0,oracle\n";
  }
  for (const ImitationRow& r : rows) {
    csv << csv_number(r.target_lambda) << ',' << csv_number(r.chef_value) << ',' << csv_number(r.kl_to_oracle) << ','
        << to_string(c.cfg.method) << '\n';
  }
  write_text_file((method_dir(c) / "imitation.csv").string(), csv.str());
}

void report_error(const std::string& command, const std::string& message) {
  std::cerr << Json{{"error", message}, {"command", command}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Altruism-structured inverse reinforcement learning"};
  app.require_subcommand(1);
  Options o;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "experiment config (JSON)");
    sub->add_option("--seed", o.seed, "override the master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--method", o.method, "drp, porp_psg or porp_qig");
    return sub;
  };
  add_common(app.add_subcommand("gen-env", "write the game and ground-truth profiles"));
  add_common(app.add_subcommand("gen-demos", "solve each group's equilibrium and sample demonstrations"));
  add_common(app.add_subcommand("infer", "run the selected posterior sampler"));
  CLI::App* eval = add_common(app.add_subcommand("evaluate", "rescaled errors of an estimate against the truth"));
  eval->add_option("--estimate", o.estimate_path, "estimate profiles (default <out>/<method>/estimate.json)");
  eval->add_option("--truth", o.truth_path, "truth profiles (default <out>/profiles.json)");
  add_common(app.add_subcommand("rank-check", "rank condition for agents seen in two groups"));
  add_common(app.add_subcommand("z-study", "partition estimates across posterior policy samples"));
  CLI::App* im = add_common(app.add_subcommand("imitate", "partner synthesis sweep over target altruism"));
  im->add_option("--estimate", o.estimate_path, "estimate profiles (default <out>/<method>/estimate.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("parse", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Context c = load(o);
    if (command == "gen-env") gen_env(c);
    else if (command == "gen-demos") gen_demos(c);
    else if (command == "infer") infer(c);
    else if (command == "evaluate") evaluate(c, o);
    else if (command == "rank-check") rank_check(c);
    else if (command == "z-study") run_z_study(c);
    else if (command == "imitate") imitate(c, o);
  } catch (const std::exception& e) {
    report_error(command, e.what());
    return 1;
  }
  return EXIT_SUCCESS;
}
