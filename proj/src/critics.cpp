#include "gopolab/critics.hpp"

#include <algorithm>
#include <numbers>

namespace gopolab {

namespace {

double lse(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  if (m == -kInf) return -kInf;
  return m + std::log((x.array() - m).exp().sum());
}

void finish_potential(ChainPotential& pot) {
  require(!pot.loss.empty(), "potential needs at least one stage");
  const int H = pot.horizon();
  require(pot.loss[H - 1].cols() == 1, "last stage must have a single (zero) column");
  for (int h = 0; h + 1 < H; ++h)
    require(pot.loss[h].cols() == pot.loss[h + 1].rows(), "loss matrix shapes do not chain");
  require(pot.initial_value.size() == pot.loss[0].rows(), "initial values do not match stage 1");
  pot.column_min.clear();
  for (const auto& L : pot.loss) pot.column_min.push_back(L.colwise().minCoeff().transpose());
  if (pot.log_prior.empty()) {
    for (const auto& L : pot.loss)
      pot.log_prior.push_back(
          Eigen::VectorXd::Constant(L.rows(), -std::log(static_cast<double>(L.rows()))));
  } else {
    require(static_cast<int>(pot.log_prior.size()) == H, "prior needs one vector per stage");
    for (int h = 0; h < H; ++h) {
      require(pot.log_prior[h].size() == pot.loss[h].rows(), "prior size mismatch");
      require(std::abs(lse(pot.log_prior[h])) <= 1e-10, "prior is not normalized");
    }
  }
}

}  // namespace

ChainPotential make_potential(std::vector<Eigen::MatrixXd> loss, Eigen::VectorXd initial_value,
                              std::vector<Eigen::VectorXd> log_prior) {
  ChainPotential pot;
  pot.loss = std::move(loss);
  pot.initial_value = std::move(initial_value);
  pot.log_prior = std::move(log_prior);
  finish_potential(pot);
  return pot;
}

ChainPotential make_potential(const TdLossMatrix& td, const FunctionClass& cls, const Policy& pi,
                              int initial_state, std::vector<Eigen::VectorXd> log_prior) {
  require(td.horizon() == cls.horizon(), "TD matrix and class disagree on the horizon");
  Eigen::VectorXd v1(cls.size(0));
  for (int i = 0; i < cls.size(0); ++i) v1[i] = pi.average(0, cls.candidate(0, i), initial_state);
  return make_potential(td.loss, std::move(v1), std::move(log_prior));
}

nlohmann::json to_json(const CriticOutput& out) {
  nlohmann::json j;
  j["kind"] = out.kind;
  j["chain"] = out.chain;
  j["objective"] = out.objective;
  j["parameters"] = out.parameters;
  if (!out.version_space_sizes.empty()) j["version_space_sizes"] = out.version_space_sizes;
  if (out.kind == "psc") j["log_partition"] = out.log_partition;
  return j;
}

// ---- version space ----------------------------------------------------------

CriticOutput vsc(const ChainPotential& pot, double beta) {
  require(beta >= 0.0, "beta must be nonnegative");
  const int H = pot.horizon();
  auto feasible = [&](int h, int i, int j) {
    return pot.loss[h](i, j) <= pot.column_min[h][j] + beta;
  };
  // ok[h][i]: candidate i at stage h has a feasible suffix.
  std::vector<std::vector<char>> ok(H);
  for (int h = H - 1; h >= 0; --h) {
    ok[h].assign(pot.size(h), 0);
    for (int i = 0; i < pot.size(h); ++i)
      for (int j = 0; j < pot.next_size(h) && !ok[h][i]; ++j)
        ok[h][i] = feasible(h, i, j) && (h == H - 1 || ok[h + 1][j]);
  }
  // reach[h][i]: candidate i at stage h has a feasible prefix and suffix.
  std::vector<std::vector<char>> reach(H);
  reach[0] = ok[0];
  for (int h = 0; h + 1 < H; ++h) {
    reach[h + 1].assign(pot.size(h + 1), 0);
    for (int i = 0; i < pot.size(h); ++i)
      if (reach[h][i])
        for (int j = 0; j < pot.next_size(h); ++j)
          if (feasible(h, i, j) && ok[h + 1][j]) reach[h + 1][j] = 1;
  }

  CriticOutput out;
  out.kind = "vsc";
  out.parameters = {{"beta", beta}};
  for (const auto& r : reach) out.version_space_sizes.push_back(
      static_cast<int>(std::count(r.begin(), r.end(), 1)));

  int first = -1;
  for (int i = 0; i < pot.size(0); ++i)
    if (ok[0][i] && (first < 0 || pot.initial_value[i] < pot.initial_value[first])) first = i;
  if (first < 0) throw EmptyVersionSpace("empty version space (beta = " + format_double(beta) + ")");
  out.chain.push_back(first);
  for (int h = 0; h + 1 < H; ++h) {
    const int i = out.chain.back();
    int next = -1;
    for (int j = 0; j < pot.next_size(h) && next < 0; ++j)
      if (feasible(h, i, j) && ok[h + 1][j]) next = j;
    out.chain.push_back(next);
  }
  out.objective = pot.initial_value[first];
  return out;
}

// ---- regularized optimization ----------------------------------------------

CriticOutput roc(const ChainPotential& pot, double lambda) {
  require(lambda >= 0.0, "lambda must be nonnegative");
  const int H = pot.horizon();
  // cost[h][i]: minimal sum of excess losses over stages h..H-1 given i_h = i.
  // Accumulation order (term_h + suffix) matches the enumeration oracle.
  std::vector<Eigen::VectorXd> cost(H);
  std::vector<std::vector<int>> arg(H);
  for (int h = H - 1; h >= 0; --h) {
    cost[h].resize(pot.size(h));
    arg[h].assign(pot.size(h), 0);
    for (int i = 0; i < pot.size(h); ++i) {
      if (h == H - 1) {
        cost[h][i] = pot.excess(h, i, 0);
        continue;
      }
      double best = kInf;
      for (int j = 0; j < pot.next_size(h); ++j) {
        const double c = pot.excess(h, i, j) + cost[h + 1][j];
        if (c < best) {
          best = c;
          arg[h][i] = j;
        }
      }
      cost[h][i] = best;
    }
  }
  CriticOutput out;
  out.kind = "roc";
  out.parameters = {{"lambda", lambda}};
  int first = 0;
  double best = kInf;
  for (int i = 0; i < pot.size(0); ++i) {
    const double total = lambda * pot.initial_value[i] + cost[0][i];
    if (total < best) {
      best = total;
      first = i;
    }
  }
  out.chain.push_back(first);
  for (int h = 0; h + 1 < H; ++h) out.chain.push_back(arg[h][out.chain.back()]);
  out.objective = best;
  return out;
}

// ---- posterior sampling -----------------------------------------------------

namespace {

// psi[h](i, j) = logp0[h][i] - gamma L[h](i,j) - log sum_i' p0[h][i'] exp(-gamma L[h](i',j))
std::vector<Eigen::MatrixXd> pairwise_log_potentials(const ChainPotential& pot, double gamma) {
  std::vector<Eigen::MatrixXd> psi;
  for (int h = 0; h < pot.horizon(); ++h) {
    Eigen::MatrixXd m(pot.size(h), pot.next_size(h));
    for (int j = 0; j < pot.next_size(h); ++j) {
      // Shift by the column minimum; it cancels in the normalized ratio.
      Eigen::VectorXd col = pot.log_prior[h].array() -
                            gamma * (pot.loss[h].col(j).array() - pot.column_min[h][j]);
      m.col(j) = col.array() - lse(col);
    }
    psi.push_back(std::move(m));
  }
  return psi;
}

// beta[h][i] = log sum over suffixes from i_h = i of exp(sum of psi).
std::vector<Eigen::VectorXd> backward_messages(const std::vector<Eigen::MatrixXd>& psi) {
  const int H = static_cast<int>(psi.size());
  std::vector<Eigen::VectorXd> beta(H);
  for (int h = H - 1; h >= 0; --h) {
    beta[h].resize(psi[h].rows());
    for (int i = 0; i < psi[h].rows(); ++i) {
      if (h == H - 1) {
        beta[h][i] = psi[h](i, 0);
      } else {
        beta[h][i] = lse((psi[h].row(i).transpose() + beta[h + 1]).eval());
      }
    }
  }
  return beta;
}

}  // namespace

ChainMarginals psc_marginals(const ChainPotential& pot, double lambda, double gamma) {
  require(lambda >= 0.0 && gamma >= 0.0, "lambda and gamma must be nonnegative");
  const int H = pot.horizon();
  const auto psi = pairwise_log_potentials(pot, gamma);
  const auto beta = backward_messages(psi);
  std::vector<Eigen::VectorXd> alpha(H);
  alpha[0] = -lambda * pot.initial_value;
  for (int h = 0; h + 1 < H; ++h) {
    alpha[h + 1].resize(pot.size(h + 1));
    for (int j = 0; j < pot.size(h + 1); ++j)
      alpha[h + 1][j] = lse((alpha[h] + psi[h].col(j)).eval());
  }
  ChainMarginals out;
  out.log_partition = lse((alpha[0] + beta[0]).eval());
  for (int h = 0; h < H; ++h)
    out.stage.push_back(((alpha[h] + beta[h]).array() - out.log_partition).exp().matrix().eval());
  return out;
}

CriticOutput psc(const ChainPotential& pot, double lambda, double gamma, std::uint64_t seed) {
  require(lambda >= 0.0 && gamma >= 0.0, "lambda and gamma must be nonnegative");
  const int H = pot.horizon();
  const auto psi = pairwise_log_potentials(pot, gamma);
  const auto beta = backward_messages(psi);
  CounterRng rng(seed);

  auto draw = [&](const Eigen::VectorXd& logw) {
    const double z = lse(logw);
    std::vector<double> p(logw.size());
    for (int i = 0; i < logw.size(); ++i) p[i] = std::exp(logw[i] - z);
    return rng.categorical(p);
  };

  CriticOutput out;
  out.kind = "psc";
  out.parameters = {{"lambda", lambda}, {"gamma", gamma}, {"seed", seed}};
  const Eigen::VectorXd first = -lambda * pot.initial_value + beta[0];
  out.log_partition = lse(first);
  out.chain.push_back(draw(first));
  for (int h = 0; h + 1 < H; ++h) {
    const Eigen::VectorXd w = psi[h].row(out.chain.back()).transpose() + beta[h + 1];
    out.chain.push_back(draw(w));
  }
  // Unnormalized log posterior weight of the drawn chain.
  double logw = -lambda * pot.initial_value[out.chain[0]];
  for (int h = 0; h < H; ++h)
    logw += psi[h](out.chain[h], h + 1 < H ? out.chain[h + 1] : 0);
  out.objective = logw - out.log_partition;  // log posterior probability of the draw
  return out;
}

// ---- enumeration oracle -----------------------------------------------------

namespace {

std::size_t chain_count(const ChainPotential& pot) {
  double n = 1.0;
  for (int h = 0; h < pot.horizon(); ++h) n *= pot.size(h);
  if (n > kBruteForceLimit)
    throw ContractViolation("brute force refuses " + format_double(n) + " chains");
  return static_cast<std::size_t>(n);
}

}  // namespace

std::vector<int> decode_chain(const ChainPotential& pot, std::size_t flat) {
  std::vector<int> chain(pot.horizon());
  for (int h = pot.horizon() - 1; h >= 0; --h) {
    chain[h] = static_cast<int>(flat % pot.size(h));
    flat /= pot.size(h);
  }
  return chain;
}

BruteForceResult brute_force_vsc(const ChainPotential& pot, double beta) {
  const std::size_t n = chain_count(pot);
  const int H = pot.horizon();
  BruteForceResult res;
  res.best.kind = "vsc";
  res.best.parameters = {{"beta", beta}};
  bool found = false;
  for (std::size_t c = 0; c < n; ++c) {  // flat order is lexicographic
    const auto chain = decode_chain(pot, c);
    bool feasible = true;
    for (int h = 0; h < H && feasible; ++h) {
      const int j = h + 1 < H ? chain[h + 1] : 0;
      feasible = pot.loss[h](chain[h], j) <= pot.column_min[h][j] + beta;
    }
    if (!feasible) continue;
    const double v = pot.initial_value[chain[0]];
    if (!found || v < res.best.objective) {
      res.best.chain = chain;
      res.best.objective = v;
      found = true;
    }
  }
  if (!found) throw EmptyVersionSpace("empty version space (enumeration)");
  return res;
}

BruteForceResult brute_force_roc(const ChainPotential& pot, double lambda) {
  const std::size_t n = chain_count(pot);
  const int H = pot.horizon();
  BruteForceResult res;
  res.best.kind = "roc";
  res.best.parameters = {{"lambda", lambda}};
  res.best.objective = kInf;
  for (std::size_t c = 0; c < n; ++c) {
    const auto chain = decode_chain(pot, c);
    double suffix = pot.excess(H - 1, chain[H - 1], 0);
    for (int h = H - 2; h >= 0; --h) suffix = pot.excess(h, chain[h], chain[h + 1]) + suffix;
    const double total = lambda * pot.initial_value[chain[0]] + suffix;
    if (total < res.best.objective) {
      res.best.objective = total;
      res.best.chain = chain;
    }
  }
  return res;
}

BruteForceResult brute_force_psc(const ChainPotential& pot, double lambda, double gamma) {
  const std::size_t n = chain_count(pot);
  const int H = pot.horizon();
  BruteForceResult res;
  std::vector<double> logw(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto chain = decode_chain(pot, c);
    double w = -lambda * pot.initial_value[chain[0]];
    for (int h = 0; h < H; ++h) {
      const int j = h + 1 < H ? chain[h + 1] : 0;
      // Direct normalizer sum over the stage-h prior, without log-space shifts.
      double norm = 0.0;
      for (int i = 0; i < pot.size(h); ++i)
        norm += std::exp(pot.log_prior[h][i] - gamma * (pot.loss[h](i, j) - pot.loss[h](chain[h], j)));
      w += pot.log_prior[h][chain[h]] - std::log(norm);
    }
    logw[c] = w;
  }
  const double z = log_sum_exp(logw);
  res.probability.resize(n);
  for (std::size_t c = 0; c < n; ++c) res.probability[c] = std::exp(logw[c] - z);
  return res;
}

// ---- theorem-derived parameters ---------------------------------------------

double theorem_beta(double b, int K, double epsilon, double xi_max, int H, double d_tilde,
                    double delta, double multiplier) {
  require(b >= 0 && K >= 0 && epsilon >= 0 && xi_max >= 0 && H >= 1 && d_tilde >= 0,
          "theorem_beta: arguments must be nonnegative");
  require(delta > 0.0 && delta <= 1.0, "theorem_beta: delta must lie in (0, 1]");
  return multiplier * (b * b * K * epsilon + b * K * xi_max +
                       H * b * b * std::max(d_tilde, std::log(H / delta)));
}

double theorem_lambda_roc(double b, int K, double epsilon, int H, double d_tilde, double delta,
                          double assumed_diversity, double multiplier) {
  require(assumed_diversity > 0.0, "assumed diversity must be positive");
  // Balances A / lambda against lambda H C / (2K).
  const double A = H * b * b * std::max(d_tilde, std::log(H / delta)) + b * b * K * H * epsilon;
  return multiplier * std::sqrt(2.0 * K * A / (H * assumed_diversity));
}

double theorem_gamma_psc(double b) {
  return 1.0 / (144.0 * (std::numbers::e - 2.0) * b * b);
}

double theorem_lambda_psc(double b, int K, double epsilon, int H, double d_tilde_ps,
                          double delta, double gamma, double assumed_diversity,
                          double multiplier) {
  require(assumed_diversity > 0.0, "assumed diversity must be positive");
  const double log_term = std::log(std::max(std::log(K * b * b), 1.0) / delta);
  // Balances gamma A / lambda against lambda H C / (K gamma).
  const double A = H * b * b * std::max(d_tilde_ps, log_term) +
                   b * b * K * H * std::max(epsilon, delta);
  return multiplier * gamma * std::sqrt(K * A / (H * assumed_diversity));
}

}  // namespace gopolab
