#include "altirl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <stdexcept>

namespace altirl {

Method parse_method(const std::string& name) {
  if (name == "drp") return Method::drp;
  if (name == "porp_psg") return Method::porp_psg;
  if (name == "porp_qig") return Method::porp_qig;
  throw std::invalid_argument("unknown method '" + name + "' (expected drp, porp_psg or porp_qig)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::drp: return "drp";
    case Method::porp_psg: return "porp_psg";
    case Method::porp_qig: return "porp_qig";
  }
  return "drp";
}

namespace {

EnvironmentKind parse_kind(const std::string& name) {
  if (name == "random_mg") return EnvironmentKind::random_mg;
  if (name == "kitchen") return EnvironmentKind::kitchen;
  throw std::invalid_argument("unknown environment kind '" + name + "' (expected random_mg or kitchen)");
}

std::string kind_name(EnvironmentKind kind) { return kind == EnvironmentKind::kitchen ? "kitchen" : "random_mg"; }

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      throw std::invalid_argument("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

Json schedule_json(const SgldSchedule& s) {
  return {{"epsilon0", s.epsilon0}, {"alpha", s.alpha},         {"iterations", s.iterations},
          {"warmup", s.warmup},     {"momentum", s.momentum},   {"precondition_epsilon", s.precondition_epsilon},
          {"thin", s.thin}};
}

void read_schedule(const Json& j, SgldSchedule& s, const std::string& where) {
  reject_unknown(j, {"epsilon0", "alpha", "iterations", "warmup", "momentum", "precondition_epsilon", "thin"}, where);
  read(j, "epsilon0", s.epsilon0);
  read(j, "alpha", s.alpha);
  read(j, "iterations", s.iterations);
  read(j, "warmup", s.warmup);
  read(j, "momentum", s.momentum);
  read(j, "precondition_epsilon", s.precondition_epsilon);
  read(j, "thin", s.thin);
}

GapKind gap_kind_of(Method method) { return method == Method::porp_qig ? GapKind::qig : GapKind::psg; }

}  // namespace

int ExperimentConfig::group_size() const {
  return environment.kind == EnvironmentKind::kitchen ? 2 : environment.num_players;
}

ExperimentConfig ExperimentConfig::defaults(EnvironmentKind kind, Method method) {
  ExperimentConfig c;
  c.environment.kind = kind;
  c.method = method;
  const bool kitchen = kind == EnvironmentKind::kitchen;
  if (kitchen) {
    c.num_agents = static_cast<int>(c.environment.chefs.size());
    c.environment.truth_lambda = {-0.25, 0.0};
  }
  c.demos.beta = kitchen ? 0.05 : 0.1;
  c.prior.beta_min = kitchen ? 0.03 : 0.05;
  c.prior.beta_rate = 10.0;
  c.gap = default_gap_config(gap_kind_of(method));

  if (method == Method::drp) {
    c.prior.reward_sigma = 1.0 / 40.0;
    c.reward_schedule.epsilon0 = 0.1;
    c.reward_schedule.alpha = 0.05;
    c.reward_schedule.iterations = 1000;
    c.reward_schedule.warmup = 500;
    c.reward_schedule.thin = 5;
  } else {
    c.prior.reward_sigma = 1.0 / 6.0;
    if (kitchen) c.prior.policy_sigma = 1.0 / 40.0;
    c.policy_schedule.epsilon0 = 0.2;
    c.policy_schedule.alpha = 0.0;
    c.policy_schedule.iterations = 2000;
    c.policy_schedule.warmup = 1000;
    c.policy_schedule.thin = 10;
    c.reward_schedule.epsilon0 = kitchen ? 5.0 : 1.5;
    c.reward_schedule.alpha = 0.5;
    c.reward_schedule.iterations = 3000;
    c.reward_schedule.warmup = 1500;
    c.reward_schedule.thin = 5;
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  reject_unknown(j,
                 {"seed", "environment", "num_agents", "profiles_path", "groups", "demos", "method", "bounds", "prior",
                  "policy_schedule", "reward_schedule", "gap", "qre", "unroll", "point", "imitate", "z_study",
                  "output_dir"},
                 "config");
  const Json env_j = j.value("environment", Json::object());
  reject_unknown(env_j,
                 {"kind", "num_states", "num_actions", "num_players", "dirichlet_alpha", "reward_count", "layout",
                  "chefs", "discount", "truth_lambda"},
                 "environment");
  const EnvironmentKind kind = parse_kind(env_j.value("kind", std::string("random_mg")));
  ExperimentConfig c = defaults(kind, parse_method(j.value("method", std::string("porp_psg"))));

  EnvironmentConfig& e = c.environment;
  read(env_j, "num_states", e.num_states);
  read(env_j, "num_actions", e.num_actions);
  read(env_j, "num_players", e.num_players);
  read(env_j, "dirichlet_alpha", e.dirichlet_alpha);
  if (env_j.contains("reward_count") && !env_j["reward_count"].is_null()) e.reward_count = env_j["reward_count"].get<int>();
  read(env_j, "layout", e.layout);
  if (env_j.contains("chefs")) {
    e.chefs.clear();
    for (const Json& k : env_j["chefs"]) e.chefs.push_back(parse_chef_kind(k.get<std::string>()));
    if (kind == EnvironmentKind::kitchen && !j.contains("num_agents")) c.num_agents = static_cast<int>(e.chefs.size());
  }
  read(env_j, "discount", e.discount);
  read(env_j, "truth_lambda", e.truth_lambda);

  read(j, "seed", c.seed);
  read(j, "num_agents", c.num_agents);
  if (j.contains("profiles_path") && !j["profiles_path"].is_null()) c.profiles_path = j["profiles_path"].get<std::string>();
  read(j, "output_dir", c.output_dir);

  if (j.contains("groups")) {
    const Json& g = j["groups"];
    reject_unknown(g, {"mode", "count", "list"}, "groups");
    read(g, "mode", c.groups.mode);
    read(g, "count", c.groups.count);
    read(g, "list", c.groups.list);
  }
  if (j.contains("demos")) {
    const Json& d = j["demos"];
    reject_unknown(d, {"total", "length", "beta"}, "demos");
    read(d, "total", c.demos.total);
    read(d, "length", c.demos.length);
    read(d, "beta", c.demos.beta);
  }
  if (j.contains("bounds")) c.bounds = bounds_from_json(j["bounds"]);
  if (j.contains("prior")) {
    const Json& p = j["prior"];
    reject_unknown(p, {"reward_sigma", "policy_sigma", "beta_rate", "beta_min"}, "prior");
    read(p, "reward_sigma", c.prior.reward_sigma);
    if (p.contains("policy_sigma")) {
      c.prior.policy_sigma = p["policy_sigma"].is_null() ? std::nullopt : std::optional<double>(p["policy_sigma"].get<double>());
    }
    read(p, "beta_rate", c.prior.beta_rate);
    read(p, "beta_min", c.prior.beta_min);
  }
  if (j.contains("policy_schedule")) read_schedule(j["policy_schedule"], c.policy_schedule, "policy_schedule");
  if (j.contains("reward_schedule")) read_schedule(j["reward_schedule"], c.reward_schedule, "reward_schedule");
  if (j.contains("gap")) {
    reject_unknown(j["gap"], {"concentration"}, "gap");
    read(j["gap"], "concentration", c.gap.concentration);
  }
  if (j.contains("qre")) {
    const Json& q = j["qre"];
    reject_unknown(q, {"damping", "max_iters", "tolerance", "min_damping"}, "qre");
    read(q, "damping", c.qre.damping);
    read(q, "max_iters", c.qre.max_iters);
    read(q, "tolerance", c.qre.tolerance);
    read(q, "min_damping", c.qre.min_damping);
  }
  read(j, "unroll", c.unroll);
  if (j.contains("point")) {
    const auto p = j["point"].get<std::string>();
    if (p != "mean" && p != "map") throw std::invalid_argument("point must be mean or map");
    c.point = p == "map" ? PointEstimate::map : PointEstimate::mean;
  }
  if (j.contains("imitate")) {
    const Json& m = j["imitate"];
    reject_unknown(m, {"ai_agent", "chef_agent", "target_lambdas"}, "imitate");
    read(m, "ai_agent", c.imitate.ai_agent);
    read(m, "chef_agent", c.imitate.chef_agent);
    read(m, "target_lambdas", c.imitate.target_lambdas);
  }
  if (j.contains("z_study")) {
    const Json& z = j["z_study"];
    reject_unknown(z, {"group_index", "num_policies", "samples", "proposal_variance"}, "z_study");
    read(z, "group_index", c.z_study.group_index);
    read(z, "num_policies", c.z_study.num_policies);
    read(z, "samples", c.z_study.samples);
    read(z, "proposal_variance", c.z_study.proposal_variance);
  }
  c.validate();
  return c;
}

Json ExperimentConfig::to_json() const {
  std::vector<std::string> chefs;
  for (const ChefKind k : environment.chefs) chefs.push_back(altirl::to_string(k));
  Json env{{"kind", kind_name(environment.kind)},
           {"num_states", environment.num_states},
           {"num_actions", environment.num_actions},
           {"num_players", environment.num_players},
           {"dirichlet_alpha", environment.dirichlet_alpha},
           {"reward_count", environment.reward_count ? Json(*environment.reward_count) : Json(nullptr)},
           {"layout", environment.layout},
           {"chefs", chefs},
           {"discount", environment.discount},
           {"truth_lambda", environment.truth_lambda}};
  return {{"seed", seed},
          {"environment", env},
          {"num_agents", num_agents},
          {"profiles_path", profiles_path ? Json(*profiles_path) : Json(nullptr)},
          {"groups", Json{{"mode", groups.mode}, {"count", groups.count}, {"list", groups.list}}},
          {"demos", {{"total", demos.total}, {"length", demos.length}, {"beta", demos.beta}}},
          {"method", altirl::to_string(method)},
          {"bounds", altirl::to_json(bounds)},
          {"prior",
           {{"reward_sigma", prior.reward_sigma},
            {"policy_sigma", prior.policy_sigma ? Json(*prior.policy_sigma) : Json(nullptr)},
            {"beta_rate", prior.beta_rate},
            {"beta_min", prior.beta_min}}},
          {"policy_schedule", schedule_json(policy_schedule)},
          {"reward_schedule", schedule_json(reward_schedule)},
          {"gap", {{"concentration", gap.concentration}}},
          {"qre",
           {{"damping", qre.damping},
            {"max_iters", qre.max_iters},
            {"tolerance", qre.tolerance},
            {"min_damping", qre.min_damping}}},
          {"unroll", unroll},
          {"point", std::string(point == PointEstimate::map ? "map" : "mean")},
          {"imitate",
           {{"ai_agent", imitate.ai_agent},
            {"chef_agent", imitate.chef_agent},
            {"target_lambdas", imitate.target_lambdas}}},
          {"z_study",
           {{"group_index", z_study.group_index},
            {"num_policies", z_study.num_policies},
            {"samples", z_study.samples},
            {"proposal_variance", z_study.proposal_variance}}},
          {"output_dir", output_dir}};
}

void ExperimentConfig::validate() const {
  if (num_agents < group_size()) throw std::invalid_argument("fewer agents than seats in a group");
  if (environment.kind == EnvironmentKind::kitchen && environment.chefs.empty()) {
    throw std::invalid_argument("kitchen needs at least one chef kind");
  }
  if (environment.truth_lambda[0] > environment.truth_lambda[1]) throw std::invalid_argument("empty truth_lambda range");
  if (environment.truth_lambda[0] < bounds.lambda_min || environment.truth_lambda[1] > bounds.lambda_max) {
    throw std::invalid_argument("truth_lambda must lie inside the altruism bounds");
  }
  if (demos.total < 1 || demos.length < 1) throw std::invalid_argument("demo budget and length must be positive");
  if (!(demos.beta > 0.0)) throw std::invalid_argument("demo beta must be positive");
  if (groups.mode != "all" && groups.mode != "first" && groups.mode != "explicit") {
    throw std::invalid_argument("groups.mode must be all, first or explicit");
  }
  if (unroll < 1) throw std::invalid_argument("unroll must be positive");
  if (!(gap.concentration >= 0.0)) throw std::invalid_argument("gap concentration must be nonnegative");
  prior.validate();
  policy_schedule.validate();
  reward_schedule.validate();
  if (z_study.num_policies < 1 || z_study.samples < 1 || !(z_study.proposal_variance > 0.0)) {
    throw std::invalid_argument("invalid z_study settings");
  }
}

std::vector<int> split_budget(int total, int num_groups) {
  if (num_groups < 1) throw std::invalid_argument("need at least one group");
  if (total < 0) throw std::invalid_argument("negative budget");
  std::vector<int> out(static_cast<std::size_t>(num_groups), total / num_groups);
  for (int g = 0; g < total % num_groups; ++g) ++out[static_cast<std::size_t>(g)];
  return out;
}

std::vector<GroupSpec> resolve_groups(const GroupsConfig& cfg, int num_agents, int group_size) {
  std::vector<GroupSpec> out;
  if (cfg.mode == "explicit") {
    if (cfg.list.empty()) throw std::invalid_argument("explicit groups need a non-empty list");
    for (auto members : cfg.list) {
      std::sort(members.begin(), members.end());
      GroupSpec g{members};
      validate_group(g, num_agents);
      if (g.size() != group_size) throw std::invalid_argument("group size must equal the number of seats");
      out.push_back(std::move(g));
    }
    return out;
  }
  out = all_groups(num_agents, group_size);
  if (cfg.mode == "first") {
    if (cfg.count < 1 || cfg.count > static_cast<int>(out.size())) throw std::invalid_argument("groups.count out of range");
    out.resize(static_cast<std::size_t>(cfg.count));
  } else if (cfg.mode != "all") {
    throw std::invalid_argument("unknown groups mode '" + cfg.mode + "'");
  }
  return out;
}

std::uint64_t substream(std::uint64_t master, const char* name) { return derive_seed(master, {stream_tag(name)}); }

Environment build_environment(const ExperimentConfig& cfg, const std::string& base_dir) {
  cfg.validate();
  const EnvironmentConfig& e = cfg.environment;
  const std::uint64_t seed = substream(cfg.seed, "env");
  const auto resolve = [&](const std::string& path) {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p).string();
  };

  std::optional<Environment> env;
  if (e.kind == EnvironmentKind::random_mg) {
    RandomMgConfig rc;
    rc.num_states = e.num_states;
    rc.num_actions = e.num_actions;
    rc.num_players = e.num_players;
    rc.num_agents = cfg.num_agents;
    rc.dirichlet_alpha = e.dirichlet_alpha;
    rc.reward_count = e.reward_count;
    rc.discount = e.discount;
    rc.bounds = cfg.bounds;
    rc.bounds.lambda_min = e.truth_lambda[0];
    rc.bounds.lambda_max = e.truth_lambda[1];
    rc.seed = seed;
    RandomMg mg = generate_random_mg(rc);
    env = Environment{std::move(mg.game), std::move(mg.profiles), {}, std::nullopt};
  } else {
    Kitchen k = build_kitchen(load_layout(resolve(e.layout)), e.discount);
    std::vector<AltruismProfile> truth;
    Rng rng(seed);
    for (int i = 0; i < cfg.num_agents; ++i) {
      const ChefKind kind = e.chefs[static_cast<std::size_t>(i) % e.chefs.size()];
      const double lambda = e.truth_lambda[0] + (e.truth_lambda[1] - e.truth_lambda[0]) * uniform01(rng);
      truth.push_back({chef_intrinsic_reward(k.codec, kind), lambda});
    }
    env = Environment{std::move(k.game), std::move(truth), {}, std::move(k.codec)};
  }

  if (cfg.profiles_path) {
    env->truth = profiles_from_json(read_json_file(resolve(*cfg.profiles_path)));
    if (static_cast<int>(env->truth.size()) != cfg.num_agents) throw std::invalid_argument("profiles file has the wrong agent count");
    for (const auto& p : env->truth) {
      if (p.intrinsic.rows() != env->game.num_states() || p.intrinsic.cols() != env->game.num_actions()) {
        throw std::invalid_argument("profiles file has the wrong reward shape");
      }
    }
  }
  env->groups = resolve_groups(cfg.groups, cfg.num_agents, cfg.group_size());
  return std::move(*env);
}

DemoBundle generate_demos(const Environment& env, const ExperimentConfig& cfg) {
  const std::vector<int> budget = split_budget(cfg.demos.total, static_cast<int>(env.groups.size()));
  const std::vector<std::uint64_t> keys = default_agent_keys(static_cast<int>(env.truth.size()));
  const std::uint64_t seed = substream(cfg.seed, "demos");
  DemoBundle out;
  for (std::size_t g = 0; g < env.groups.size(); ++g) {
    const GroupSpec& group = env.groups[g];
    const GroupReward reward = compose_group_reward(env.truth, group, cfg.bounds, env.game.seat_views());
    const QreResult eq = solve_qre(env.game, reward, cfg.demos.beta, cfg.qre);
    if (!eq.converged) {
      std::string id;
      for (const int m : group.members) id += (id.empty() ? "" : ",") + std::to_string(m);
      throw std::runtime_error("equilibrium solver did not converge for group {" + id + "}, residual " +
                               std::to_string(eq.residual));
    }
    GroupDemonstrations gd{group, {}};
    const std::uint64_t gk = group_key(group, keys);
    for (int k = 0; k < budget[g]; ++k) {
      gd.trajectories.push_back(sample_trajectory(env.game, eq.policy, static_cast<std::size_t>(cfg.demos.length),
                                                  derive_seed(seed, {gk, static_cast<std::uint64_t>(k)})));
    }
    out.demos.push_back(std::move(gd));
    out.equilibria.push_back(eq.policy);
  }
  return out;
}

InferenceResult run_inference(const Environment& env, const DemonstrationSet& demos, const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const int m = static_cast<int>(env.truth.size());
  const std::vector<std::uint64_t> keys = default_agent_keys(m);
  std::vector<AgentRewardParams> init = initial_params(m, env.game.num_states(), env.game.num_actions(), cfg.bounds,
                                                       cfg.prior, substream(cfg.seed, "init"), keys);
  const std::uint64_t chain_seed = substream(cfg.seed, "chain");
  InferenceResult out;
  if (cfg.method == Method::drp) {
    const DrpConfig dc{cfg.prior, cfg.reward_schedule, cfg.qre, cfg.unroll};
    out.chain = drp_chain(env.game, demos, dc, std::move(init), chain_seed, keys);
  } else {
    const std::uint64_t policy_seed = substream(cfg.seed, "policy");
    for (const auto& gd : demos) {
      out.policies.push_back(policy_posterior_chain(env.game, gd, cfg.prior, cfg.policy_schedule,
                                                    derive_seed(policy_seed, {group_key(gd.group, keys)})));
    }
    PorpConfig pc{cfg.gap, cfg.prior, cfg.reward_schedule};
    pc.gap.kind = gap_kind_of(cfg.method);
    out.chain = porp_reward_chain(env.game, out.policies, pc, std::move(init), chain_seed, keys);
  }
  out.estimate = posterior_point_estimate(out.chain, cfg.point);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<RankReport> rank_reports(const Environment& env, const std::vector<JointPolicy>& equilibria) {
  if (equilibria.size() != env.groups.size()) throw std::invalid_argument("one equilibrium per group is required");
  std::vector<RankReport> out;
  const int m = static_cast<int>(env.truth.size());
  for (int agent = 0; agent < m; ++agent) {
    std::vector<std::size_t> hits;
    for (std::size_t g = 0; g < env.groups.size() && hits.size() < 2; ++g) {
      if (env.groups[g].seat_of(agent) >= 0) hits.push_back(g);
    }
    if (hits.size() < 2) continue;
    const GroupSpec& a = env.groups[hits[0]];
    const GroupSpec& b = env.groups[hits[1]];
    RankReport r = check_rank_condition(env.game, equilibria[hits[0]], a.seat_of(agent), equilibria[hits[1]],
                                        b.seat_of(agent));
    r.agent = agent;
    r.groups = {a, b};
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ZStudyRow> z_study(const Environment& env, const DemonstrationSet& demos, const ExperimentConfig& cfg) {
  const ZStudyConfig& z = cfg.z_study;
  if (z.group_index < 0 || z.group_index >= static_cast<int>(demos.size())) {
    throw std::out_of_range("z_study.group_index has no demonstrations");
  }
  const GroupDemonstrations& gd = demos[static_cast<std::size_t>(z.group_index)];
  const std::vector<std::uint64_t> keys = default_agent_keys(static_cast<int>(env.truth.size()));
  const PolicyChainSamples chain = policy_posterior_chain(
      env.game, gd, cfg.prior, cfg.policy_schedule,
      derive_seed(substream(cfg.seed, "policy"), {group_key(gd.group, keys)}));
  if (static_cast<int>(chain.samples.size()) < z.num_policies) {
    throw std::invalid_argument("policy chain kept fewer draws than z_study.num_policies");
  }
  PartitionConfig pc;
  pc.gap = cfg.gap;
  pc.gap.kind = gap_kind_of(cfg.method);
  pc.beta = cfg.demos.beta;
  pc.samples = z.samples;
  pc.proposal_variance = z.proposal_variance;
  pc.bounds = cfg.bounds;
  // Evenly spaced draws; one shared seed gives common random numbers across policies.
  const std::uint64_t seed = substream(cfg.seed, "zstudy");
  const std::size_t kept = chain.samples.size();
  std::vector<ZStudyRow> out;
  for (int k = 0; k < z.num_policies; ++k) {
    const std::size_t pick = static_cast<std::size_t>(k) * kept / static_cast<std::size_t>(z.num_policies);
    out.push_back({static_cast<int>(pick), estimate_partition(env.game, env.truth, gd.group, chain.samples[pick], pc, seed)});
  }
  return out;
}

std::vector<ImitationRow> imitation_sweep(const Environment& env, const std::vector<AltruismProfile>& estimate,
                                          const ExperimentConfig& cfg) {
  const int m = static_cast<int>(env.truth.size());
  const ImitateConfig& im = cfg.imitate;
  if (im.ai_agent < 0 || im.ai_agent >= m || im.chef_agent < 0 || im.chef_agent >= m || im.ai_agent == im.chef_agent) {
    throw std::out_of_range("imitate agents must be two distinct agents");
  }
  if (static_cast<int>(estimate.size()) != m) throw std::invalid_argument("estimate has the wrong agent count");
  const auto ai = static_cast<std::size_t>(im.ai_agent);
  const auto chef = static_cast<std::size_t>(im.chef_agent);
  std::vector<ImitationRow> out;
  for (const double target : im.target_lambdas) {
    const SynthesisResult oracle = synthesize_partner(env.game, env.truth[ai].intrinsic, env.truth[chef].intrinsic,
                                                      env.truth[chef].intrinsic, 0, target, cfg.demos.beta, cfg.qre);
    const SynthesisResult cand = synthesize_partner(env.game, estimate[ai].intrinsic, estimate[chef].intrinsic,
                                                    env.truth[chef].intrinsic, 0, target, cfg.demos.beta, cfg.qre);
    out.push_back({target, oracle.chef_value, cand.chef_value, policy_kl(oracle.policy[0], cand.policy[0])});
  }
  return out;
}

}  // namespace altirl
