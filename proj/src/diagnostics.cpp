#include "altirl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/SVD>

namespace altirl {

double RankReport::margin() const {
  const auto at = [&](int k) {
    return k >= 0 && k < static_cast<int>(singular_values.size()) ? singular_values[static_cast<std::size_t>(k)] : 0.0;
  };
  return at(required - 1) - at(required);
}

Eigen::MatrixXd rank_condition_matrix(const RewardlessGame& game, const JointPolicy& first, int first_seat,
                                      const JointPolicy& second, int second_seat) {
  validate_policy(game, first);
  validate_policy(game, second);
  const int ns = game.num_states();
  const int na = game.num_actions();
  const std::vector<SparseMatrix> t1 = induced_transition(game, first, first_seat);
  const std::vector<SparseMatrix> t2 = induced_transition(game, second, second_seat);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(ns, ns);
  Eigen::MatrixXd out(static_cast<Index>(na) * ns, 2 * ns);
  for (int a = 0; a < na; ++a) {
    const auto as = static_cast<std::size_t>(a);
    out.block(static_cast<Index>(a) * ns, 0, ns, ns) = eye - game.discount() * Eigen::MatrixXd(t1[as]);
    out.block(static_cast<Index>(a) * ns, ns, ns, ns) = eye - game.discount() * Eigen::MatrixXd(t2[as]);
  }
  return out;
}

int numerical_rank(const Eigen::VectorXd& singular_values, Index rows, Index cols, double* tolerance) {
  const double sigma_max = singular_values.size() > 0 ? singular_values.maxCoeff() : 0.0;
  const double cutoff =
      static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * sigma_max;
  if (tolerance) *tolerance = cutoff;
  return static_cast<int>((singular_values.array() > cutoff).count());
}

RankReport check_rank_condition(const RewardlessGame& game, const JointPolicy& first, int first_seat,
                                const JointPolicy& second, int second_seat) {
  const Eigen::MatrixXd m = rank_condition_matrix(game, first, first_seat, second, second_seat);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd sv = svd.singularValues();
  RankReport out;
  out.singular_values.assign(sv.data(), sv.data() + sv.size());
  out.stacked_rank = numerical_rank(sv, m.rows(), m.cols(), &out.tolerance);
  out.required = 2 * game.num_states() - 1;
  out.satisfied = out.stacked_rank == out.required;
  return out;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct TruncatedNormal {
  double mean;
  double sigma;
  double lo;
  double hi;

  double log_mass() const { return std::log(normal_cdf((hi - mean) / sigma) - normal_cdf((lo - mean) / sigma)); }

  // By rejection; the center lies inside [lo, hi] so acceptance stays high.
  double draw(Rng& rng) const {
    while (true) {
      const double x = mean + sigma * standard_normal(rng);
      if (x >= lo && x <= hi) return x;
    }
  }

  double log_density(double x, double log_z) const {
    const double z = (x - mean) / sigma;
    return -0.5 * z * z - std::log(sigma * std::sqrt(2.0 * M_PI)) - log_z;
  }
};

double log_sum_exp(const std::vector<double>& x) {
  const double top = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (const double v : x) acc += std::exp(v - top);
  return top + std::log(acc);
}

}  // namespace

PartitionEstimate estimate_partition(const RewardlessGame& game, const std::vector<AltruismProfile>& truth,
                                     const GroupSpec& group, const JointPolicy& joint, const PartitionConfig& cfg,
                                     std::uint64_t seed) {
  if (cfg.samples < 1) throw std::invalid_argument("need at least one importance sample");
  if (!(cfg.proposal_variance > 0.0)) throw std::invalid_argument("proposal variance must be positive");
  const RewardBounds& b = cfg.bounds;
  const double sigma = std::sqrt(cfg.proposal_variance);
  const int n = group.size();
  const int ns = game.num_states();
  const int na = game.num_actions();

  PartitionEstimate out;
  out.log_volume = n * (static_cast<double>(ns) * na * std::log(b.r_max - b.r_min) + std::log(b.lambda_max - b.lambda_min));

  // Per-coordinate proposal normalizers, fixed by the truth.
  std::vector<std::vector<double>> reward_log_mass(static_cast<std::size_t>(n));
  std::vector<double> lambda_log_mass(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const AltruismProfile& t = truth[static_cast<std::size_t>(group.members[static_cast<std::size_t>(k)])];
    for (Index e = 0; e < t.intrinsic.size(); ++e) {
      const double center = std::clamp(t.intrinsic.reshaped()(e), b.r_min, b.r_max);
      reward_log_mass[static_cast<std::size_t>(k)].push_back(TruncatedNormal{center, sigma, b.r_min, b.r_max}.log_mass());
    }
    const double center = std::clamp(t.altruism, b.lambda_min, b.lambda_max);
    lambda_log_mass[static_cast<std::size_t>(k)] = TruncatedNormal{center, sigma, b.lambda_min, b.lambda_max}.log_mass();
  }

  const PolicyContext ctx = make_policy_context(game, joint);
  Rng rng(derive_seed(seed, {stream_tag("partition")}));
  std::vector<AltruismProfile> profiles = truth;
  std::vector<double> log_w(static_cast<std::size_t>(cfg.samples));
  std::vector<double> log_wf(static_cast<std::size_t>(cfg.samples));
  out.min_gap = kInf;
  for (int t = 0; t < cfg.samples; ++t) {
    double log_q = 0.0;
    for (int k = 0; k < n; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const AltruismProfile& center = truth[static_cast<std::size_t>(group.members[ks])];
      AltruismProfile& p = profiles[static_cast<std::size_t>(group.members[ks])];
      for (Index e = 0; e < p.intrinsic.size(); ++e) {
        const TruncatedNormal tn{std::clamp(center.intrinsic.reshaped()(e), b.r_min, b.r_max), sigma, b.r_min, b.r_max};
        const double x = tn.draw(rng);
        p.intrinsic.reshaped()(e) = x;
        log_q += tn.log_density(x, reward_log_mass[ks][static_cast<std::size_t>(e)]);
      }
      const TruncatedNormal tn{std::clamp(center.altruism, b.lambda_min, b.lambda_max), sigma, b.lambda_min, b.lambda_max};
      p.altruism = tn.draw(rng);
      log_q += tn.log_density(p.altruism, lambda_log_mass[ks]);
    }
    const GroupReward reward = compose_group_reward(profiles, group, b, game.seat_views());
    const auto per = cfg.gap.kind == GapKind::psg ? psg_per_agent(game, ctx, joint, reward, cfg.beta)
                                                  : qig_per_agent(game, ctx, joint, reward, cfg.beta);
    const double gap = *std::max_element(per.begin(), per.end());
    out.min_gap = std::min(out.min_gap, gap);
    log_w[static_cast<std::size_t>(t)] = -log_q;
    log_wf[static_cast<std::size_t>(t)] = -log_q - cfg.gap.concentration * gap;
  }
  const double top = log_sum_exp(log_wf);
  out.log_z = top - std::log(static_cast<double>(cfg.samples));
  out.z = std::exp(out.log_z);
  out.log_z_self_normalized = out.log_volume + top - log_sum_exp(log_w);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const double v : log_wf) {
    const double u = std::exp(v - top);
    sum += u;
    sum_sq += u * u;
  }
  out.effective_sample_size = sum * sum / sum_sq;
  return out;
}

double uniform_guess_error(double truth, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  return (hi - lo) * (hi - lo) / 12.0 + (mid - truth) * (mid - truth);
}

LambdaError lambda_error(const std::vector<double>& estimate, const std::vector<double>& truth,
                         const RewardBounds& bounds) {
  if (estimate.empty() || estimate.size() != truth.size()) {
    throw std::invalid_argument("altruism estimate and truth must be non-empty and equally long");
  }
  LambdaError out;
  double err = 0.0;
  double base = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
    const double g = uniform_guess_error(truth[i], bounds.lambda_min, bounds.lambda_max);
    out.per_agent.push_back(e / g);
    err += e;
    base += g;
  }
  out.mean = err / base;
  return out;
}

RewardError reward_error(const std::vector<Eigen::MatrixXd>& estimate, const std::vector<Eigen::MatrixXd>& truth,
                         RewardAlignment align, const RewardBounds& bounds) {
  if (estimate.empty() || estimate.size() != truth.size()) {
    throw std::invalid_argument("reward estimate and truth must be non-empty and equally long");
  }
  RewardError out;
  double err = 0.0;
  double base = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (estimate[i].rows() != truth[i].rows() || estimate[i].cols() != truth[i].cols()) {
      throw std::invalid_argument("reward table shapes differ");
    }
    Eigen::MatrixXd aligned = estimate[i];
    if (align == RewardAlignment::mean_shift) aligned.array() += (truth[i] - estimate[i]).mean();
    const double e = (aligned - truth[i]).squaredNorm();
    const double g = truth[i].unaryExpr([&](double r) { return uniform_guess_error(r, bounds.r_min, bounds.r_max); }).sum();
    out.per_agent.push_back(e / g);
    err += e;
    base += g;
  }
  out.mean = err / base;
  return out;
}

ErrorReport error_report(const std::vector<AltruismProfile>& estimate, const std::vector<AltruismProfile>& truth,
                         const RewardBounds& bounds) {
  std::vector<double> le;
  std::vector<double> lt;
  std::vector<Eigen::MatrixXd> re;
  std::vector<Eigen::MatrixXd> rt;
  for (const auto& p : estimate) {
    le.push_back(p.altruism);
    re.push_back(p.intrinsic);
  }
  for (const auto& p : truth) {
    lt.push_back(p.altruism);
    rt.push_back(p.intrinsic);
  }
  return {lambda_error(le, lt, bounds), reward_error(re, rt, RewardAlignment::raw, bounds),
          reward_error(re, rt, RewardAlignment::mean_shift, bounds)};
}

double policy_kl(const PolicyMatrix& oracle, const PolicyMatrix& candidate) {
  if (oracle.rows() != candidate.rows() || oracle.cols() != candidate.cols() || oracle.rows() == 0) {
    throw std::invalid_argument("policy shapes differ");
  }
  return kl_rows(oracle, candidate).mean();
}

double policy_kl(const JointPolicy& oracle, const JointPolicy& candidate) {
  if (oracle.num_players() != candidate.num_players() || oracle.num_players() == 0) {
    throw std::invalid_argument("joint policies have different seat counts");
  }
  double total = 0.0;
  for (int i = 0; i < oracle.num_players(); ++i) total += policy_kl(oracle[i], candidate[i]);
  return total / oracle.num_players();
}

SynthesisResult synthesize_partner(const RewardlessGame& game, const Eigen::MatrixXd& ai_intrinsic,
                                   const Eigen::MatrixXd& chef_estimate, const Eigen::MatrixXd& chef_truth,
                                   int ai_seat, double target_lambda, double beta, const QreConfig& qre) {
  if (game.num_players() != 2) throw std::invalid_argument("partner synthesis needs a two-player game");
  if (ai_seat != 0 && ai_seat != 1) throw std::out_of_range("ai seat must be 0 or 1");
  const int chef_seat = 1 - ai_seat;
  const auto& views = game.seat_views();
  const auto view = [&](int seat) { return views.empty() ? nullptr : &views[static_cast<std::size_t>(seat)]; };
  const JointActionCodec& codec = game.codec();

  std::vector<Eigen::MatrixXd> tables(2);
  tables[static_cast<std::size_t>(ai_seat)] = lift_to_joint(codec, ai_intrinsic, ai_seat, view(ai_seat)) +
                                              target_lambda * lift_to_joint(codec, chef_estimate, chef_seat, view(chef_seat));
  tables[static_cast<std::size_t>(chef_seat)] = lift_to_joint(codec, chef_truth, chef_seat, view(chef_seat));
  const GroupReward reward = GroupReward::from_tables(std::move(tables));

  const QreResult eq = solve_qre(game, reward, beta, qre);
  if (!eq.converged) throw std::runtime_error("equilibrium solver did not converge during partner synthesis");
  const ValueBundle vb = soft_policy_evaluation(game, reward, eq.policy, beta);
  return {eq.policy, game.initial_dist().dot(vb.values[static_cast<std::size_t>(chef_seat)]), eq.residual};
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two equal series of length >= 2");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const Eigen::Map<const Eigen::VectorXd> a(rx.data(), static_cast<Index>(rx.size()));
  const Eigen::Map<const Eigen::VectorXd> b(ry.data(), static_cast<Index>(ry.size()));
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  const double denom = ca.norm() * cb.norm();
  return denom > 0.0 ? ca.dot(cb) / denom : 0.0;
}

nlohmann::json to_json(const RankReport& report) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.groups) groups.push_back(g.members);
  return {{"agent", report.agent},
          {"groups", groups},
          {"stacked_rank", report.stacked_rank},
          {"required", report.required},
          {"satisfied", report.satisfied},
          {"tolerance", report.tolerance},
          {"margin", report.margin()},
          {"singular_values", report.singular_values}};
}

nlohmann::json to_json(const ErrorReport& report) {
  return {{"lambda_mse_rescaled", {{"per_agent", report.lambda.per_agent}, {"mean", report.lambda.mean}}},
          {"reward_mse_rescaled",
           {{"raw", {{"per_agent", report.reward_raw.per_agent}, {"mean", report.reward_raw.mean}}},
            {"mean_shift",
             {{"per_agent", report.reward_mean_shift.per_agent}, {"mean", report.reward_mean_shift.mean}}}}},
          {"baseline_definition",
           "expected squared error of a uniform guess over the parameter range: (hi - lo)^2 / 12 + (mid - truth)^2; "
           "rescaled error = sum of squared errors / sum of baselines"}};
}

}  // namespace altirl
