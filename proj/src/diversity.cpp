#include "gopolab/diversity.hpp"

#include <algorithm>
#include <sstream>

namespace gopolab {

namespace {

void require_same_domain(const StageTable& a, const StageTable& b) {
  require(a.same_shape(b), "distributions live on different domains");
}

void require_same_domain(const StageSequence& a, const StageSequence& b) {
  require(a.size() == b.size(), "occupancies have different horizons");
  for (std::size_t h = 0; h < a.size(); ++h) require_same_domain(a[h], b[h]);
}

// Ratio term for one witness, with the documented conventions.
double chi_term(const StageTable& g, const StageTable& q, const StageTable& p, double epsilon) {
  double mean_q = 0.0;
  double second_p = 0.0;
  for (std::size_t x = 0; x < g.size(); ++x) {
    mean_q += q.values[x] * g.values[x];
    second_p += p.values[x] * g.values[x] * g.values[x];
  }
  const double num = mean_q * mean_q - epsilon;
  if (num <= 0.0) return 0.0;
  if (second_p == 0.0) return kInf;
  return num / second_p;
}

Eigen::MatrixXd second_moment(const Eigen::MatrixXd& phi, const StageTable& d) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(phi.cols(), phi.cols());
  for (std::size_t x = 0; x < d.size(); ++x)
    if (d.values[x] != 0.0) m += d.values[x] * phi.row(x).transpose() * phi.row(x);
  return m;
}

Eigen::VectorXd mean_feature(const Eigen::MatrixXd& phi, const StageTable& d) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(phi.cols());
  for (std::size_t x = 0; x < d.size(); ++x) m += d.values[x] * phi.row(x).transpose();
  return m;
}

// Symmetric whitening of b restricted to its numerical range.
struct Whitening {
  Eigen::MatrixXd range_map;  // columns u_i / sqrt(lambda_i)
  Eigen::MatrixXd null_basis;
};

Whitening whiten(const Eigen::MatrixXd& b) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cut = 1e-10 * std::max(ev.maxCoeff(), 0.0);
  std::vector<int> keep, drop;
  for (int i = 0; i < ev.size(); ++i) (ev[i] > cut && ev[i] > 0.0 ? keep : drop).push_back(i);
  Whitening w;
  w.range_map.resize(b.rows(), static_cast<int>(keep.size()));
  w.null_basis.resize(b.rows(), static_cast<int>(drop.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    w.range_map.col(c) = es.eigenvectors().col(keep[c]) / std::sqrt(ev[keep[c]]);
  for (std::size_t c = 0; c < drop.size(); ++c) w.null_basis.col(c) = es.eigenvectors().col(drop[c]);
  return w;
}

// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
double lambda_max(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}

bool has_null_energy(const Eigen::MatrixXd& a, const Whitening& w) {
  if (w.null_basis.cols() == 0) return false;
  const double scale = std::max(1.0, a.norm());
  return lambda_max(w.null_basis.transpose() * a * w.null_basis) > 1e-10 * scale;
}

double ball_diversity_stage(const Eigen::MatrixXd& phi, double ball_radius, const StageTable& d_pi,
                            const StageTable& d_mu, double epsilon) {
  const Eigen::VectorXd mean = mean_feature(phi, d_pi);
  const Eigen::MatrixXd sigma = second_moment(phi, d_mu);
  const Eigen::MatrixXd outer = mean * mean.transpose();
  const double r2 = ball_radius * ball_radius;
  if (r2 * mean.squaredNorm() <= epsilon) return 0.0;
  // Feasible C: sup_{||w|| <= R} (w'mean)^2 - C w'Sigma w <= eps.
  auto excess = [&](double c) { return r2 * std::max(0.0, lambda_max(outer - c * sigma)) - epsilon; };

  const Whitening w = whiten(sigma);
  double hi;
  if (!has_null_energy(outer, w)) {
    const Eigen::VectorXd z = w.range_map.transpose() * mean;
    hi = z.squaredNorm();  // value at eps = 0, always feasible
    if (epsilon == 0.0) return hi;
  } else {
    if (epsilon == 0.0) return kInf;
    hi = 1.0;
    while (excess(hi) > 0.0) {
      hi *= 2.0;
      if (hi > 1e300) return kInf;
    }
  }
  double lo = 0.0;
  while (hi - lo > 1e-8 * hi) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return hi;
}

std::string cell(double v) { return format_double(v); }

}  // namespace

ChiResult chi_discrepancy(const std::vector<StageTable>& witnesses, const StageTable& q,
                          const StageTable& p, double epsilon) {
  require(epsilon >= 0.0, "epsilon must be nonnegative");
  require_same_domain(q, p);
  ChiResult out;
  for (std::size_t i = 0; i < witnesses.size(); ++i) {
    require_same_domain(witnesses[i], q);
    const double v = chi_term(witnesses[i], q, p, epsilon);
    if (v > out.value) {
      out.value = v;
      out.witness = static_cast<int>(i);
    }
  }
  return out;
}

DiversityValue data_diversity(const FunctionClass& cls, const StageSequence& d_pi,
                              const StageSequence& d_mu, double epsilon) {
  require(epsilon >= 0.0, "epsilon must be nonnegative");
  require_same_domain(d_pi, d_mu);
  require(static_cast<int>(d_pi.size()) == cls.horizon(), "class and occupancy horizons differ");
  DiversityValue out;
  for (int h = 0; h < cls.horizon(); ++h) {
    double best = 0.0;
    std::pair<int, int> arg{-1, -1};
    for (int i = 0; i < cls.size(h); ++i)
      for (int j = 0; j < cls.size(h); ++j) {
        if (i == j) continue;
        const double v = chi_term(cls.candidate(h, i) - cls.candidate(h, j), d_pi[h], d_mu[h], epsilon);
        if (v > best) {
          best = v;
          arg = {i, j};
        }
      }
    out.per_stage.push_back(best);
    out.witness.push_back(arg);
    out.value = std::max(out.value, best);
  }
  return out;
}

double concentrability(const StageSequence& d_pi, const StageSequence& d_mu) {
  require_same_domain(d_pi, d_mu);
  double out = 0.0;
  for (std::size_t h = 0; h < d_pi.size(); ++h)
    for (std::size_t x = 0; x < d_pi[h].size(); ++x) {
      const double num = d_pi[h].values[x];
      const double den = d_mu[h].values[x];
      if (num == 0.0) continue;
      out = std::max(out, den == 0.0 ? kInf : num / den);
    }
  return out;
}

std::vector<double> relative_condition_number(const std::vector<Eigen::MatrixXd>& phi,
                                              const StageSequence& d_pi,
                                              const StageSequence& d_mu) {
  require_same_domain(d_pi, d_mu);
  require(phi.size() == d_pi.size(), "feature map and occupancy horizons differ");
  std::vector<double> out;
  for (std::size_t h = 0; h < phi.size(); ++h) {
    require(static_cast<std::size_t>(phi[h].rows()) == d_pi[h].size(), "feature rows mismatch");
    const Eigen::MatrixXd a = second_moment(phi[h], d_pi[h]);
    const Whitening w = whiten(second_moment(phi[h], d_mu[h]));
    if (has_null_energy(a, w)) {
      out.push_back(kInf);
      continue;
    }
    out.push_back(std::max(0.0, lambda_max(w.range_map.transpose() * a * w.range_map)));
  }
  return out;
}

std::vector<double> linear_ball_diversity(const std::vector<Eigen::MatrixXd>& phi,
                                          const std::vector<double>& radius,
                                          const StageSequence& d_pi, const StageSequence& d_mu,
                                          double epsilon) {
  require(epsilon >= 0.0, "epsilon must be nonnegative");
  require_same_domain(d_pi, d_mu);
  require(phi.size() == d_pi.size() && radius.size() == phi.size(), "horizon mismatch");
  std::vector<double> out;
  for (std::size_t h = 0; h < phi.size(); ++h)
    out.push_back(ball_diversity_stage(phi[h], 2.0 * radius[h], d_pi[h], d_mu[h], epsilon));
  return out;
}

LinearCoverage linear_coverage_report(const OfflineDataset& data,
                                      const std::vector<Eigen::MatrixXd>& phi,
                                      const PolicyEvaluation& pi_eval, const EpisodicMdp& mdp,
                                      const StageSequence& d_mu, double lambda_reg) {
  require(lambda_reg > 0.0, "lambda_reg must be positive");
  const int H = mdp.horizon();
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  require(static_cast<int>(phi.size()) == H && data.horizon == H, "horizon mismatch");
  const double noise_var = mdp.noise().kind == NoiseModel::Kind::kUniform
                               ? mdp.noise().half_width * mdp.noise().half_width / 3.0
                               : 0.0;
  LinearCoverage out;
  out.lambda_reg = lambda_reg;
  for (int h = 0; h < H; ++h) {
    const int d = static_cast<int>(phi[h].cols());
    // Conditional variance of r_h + V^pi_{h+1}(s') per (s, a).
    StageTable var(S, A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double m1 = 0.0, m2 = 0.0;
        if (h + 1 < H) {
          const auto next = mdp.next_state_distribution(h, s, a);
          for (int sn = 0; sn < S; ++sn) {
            const double v = pi_eval.v[h + 1][sn];
            m1 += next[sn] * v;
            m2 += next[sn] * v * v;
          }
        }
        var(s, a) = std::max(0.0, m2 - m1 * m1) + noise_var;
      }

    Eigen::MatrixXd sigma = lambda_reg * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd lambda_w = sigma;
    for (const auto& ep : data.episodes) {
      const auto& z = ep[h];
      const Eigen::VectorXd x = phi[h].row(z.s * A + z.a).transpose();
      double w = var(z.s, z.a);
      if (w < 1e-12) {
        w = 1e-12;
        ++out.variance_clamps;
      }
      sigma += x * x.transpose();
      lambda_w += x * x.transpose() / w;
    }
    const Eigen::LLT<Eigen::MatrixXd> sigma_inv(sigma), lambda_inv(lambda_w);
    if (sigma_inv.info() != Eigen::Success || lambda_inv.info() != Eigen::Success)
      throw std::logic_error("regularized covariance is not positive definite");
    const Eigen::MatrixXd bar_sigma = second_moment(phi[h], d_mu[h]);
    const StageTable& occ = pi_eval.occupancy[h];

    double e_pevi = 0.0, e_adv = 0.0, e_bcp = 0.0;
    for (std::size_t x = 0; x < occ.size(); ++x) {
      if (occ.values[x] == 0.0) continue;
      const Eigen::VectorXd f = phi[h].row(x).transpose();
      e_pevi += occ.values[x] * std::sqrt(f.dot(sigma_inv.solve(f)));
      e_adv += occ.values[x] * std::sqrt(f.dot(lambda_inv.solve(f)));
      e_bcp += occ.values[x] * std::sqrt(std::max(0.0, f.dot(bar_sigma * f)));
    }
    const Eigen::VectorXd mean = mean_feature(phi[h], occ);
    out.c_pevi = std::max(out.c_pevi, e_pevi * e_pevi);
    out.c_pevi_adv = std::max(out.c_pevi_adv, e_adv * e_adv);
    out.c_bcp = std::max(out.c_bcp, e_bcp * e_bcp);
    out.c_pacle = std::max(out.c_pacle, mean.dot(sigma_inv.solve(mean)));
  }
  return out;
}

DecouplingCheck check_decoupling(const FunctionClass& cls, const EpisodicMdp& mdp,
                                 const Policy& pi, const Policy& pi_tilde,
                                 const std::vector<int>& f, const StageSequence& d_mu, int K,
                                 const std::vector<double>& nu, double lambda, double epsilon) {
  const int H = mdp.horizon();
  require(cls.horizon() == H && static_cast<int>(f.size()) == H &&
              static_cast<int>(nu.size()) == H && static_cast<int>(d_mu.size()) == H,
          "decoupling inputs disagree on the horizon");
  require(K >= 1 && lambda > 0.0 && epsilon >= 0.0, "decoupling needs K >= 1, lambda > 0, eps >= 0");
  const double b = mdp.bound();
  const PolicyEvaluation eval = evaluate_policy(mdp, pi);

  DecouplingCheck out;
  double in_dist = 0.0;
  double nu_sum = 0.0;
  for (int h = 0; h < H; ++h) {
    const StageTable& next = h + 1 < H ? cls.candidate(h + 1, f[h + 1]) : mdp.zero_table();
    const StageTable err = bellman_error(mdp, pi_tilde, cls.candidate(h, f[h]), next, h);
    double sq_mu = 0.0;
    for (std::size_t x = 0; x < err.size(); ++x) {
      out.lhs += eval.occupancy[h].values[x] * err.values[x];
      sq_mu += d_mu[h].values[x] * err.values[x] * err.values[x];
    }
    in_dist += K * sq_mu + K * nu[h] * nu[h] + 4.0 * b * K * nu[h];
    nu_sum += nu[h];
  }
  out.diversity = data_diversity(cls, eval.occupancy, d_mu, epsilon).value;
  out.rhs = in_dist / (2.0 * lambda) + lambda * H * out.diversity / (2.0 * K) + H * epsilon + nu_sum;
  out.margin = out.rhs - out.lhs;
  return out;
}

DiversityReport diversity_report(const FunctionClass& cls, const EpisodicMdp& mdp,
                                 const Policy& pi, const StageSequence& d_mu,
                                 const std::vector<double>& epsilons, const OfflineDataset* data,
                                 double lambda_reg) {
  const PolicyEvaluation eval = evaluate_policy(mdp, pi);
  DiversityReport out;
  out.epsilons = epsilons;
  for (double eps : epsilons) out.diversity.push_back(data_diversity(cls, eval.occupancy, d_mu, eps));
  out.concentrability = concentrability(eval.occupancy, d_mu);
  if (const auto& lin = cls.linear()) {
    out.relative_condition = relative_condition_number(lin->phi, eval.occupancy, d_mu);
    for (double eps : epsilons) {
      const auto per = linear_ball_diversity(lin->phi, lin->radius, eval.occupancy, d_mu, eps);
      out.ball_diversity.push_back(*std::max_element(per.begin(), per.end()));
    }
    if (data) out.linear = linear_coverage_report(*data, lin->phi, eval, mdp, d_mu, lambda_reg);
  }
  return out;
}

std::string diversity_csv_header() {
  return "pi,mu,epsilon,diversity,witness_h,witness_i,witness_j,concentrability,"
         "relative_condition,ball_diversity,c_pevi,c_pacle,c_bcp,c_pevi_adv,lambda_reg,"
         "variance_clamps";
}

std::vector<std::string> diversity_csv_rows(const DiversityReport& report,
                                            const std::string& pi_label,
                                            const std::string& mu_label) {
  std::vector<std::string> rows;
  for (std::size_t e = 0; e < report.epsilons.size(); ++e) {
    const DiversityValue& dv = report.diversity[e];
    int wh = -1;
    for (std::size_t h = 0; h < dv.per_stage.size(); ++h)
      if (dv.witness[h].first >= 0 && dv.per_stage[h] == dv.value) {
        wh = static_cast<int>(h);
        break;
      }
    std::ostringstream os;
    os << pi_label << ',' << mu_label << ',' << cell(report.epsilons[e]) << ',' << cell(dv.value)
       << ',' << wh << ',' << (wh >= 0 ? dv.witness[wh].first : -1) << ','
       << (wh >= 0 ? dv.witness[wh].second : -1) << ',' << cell(report.concentrability) << ',';
    if (!report.relative_condition.empty())
      os << cell(*std::max_element(report.relative_condition.begin(),
                                   report.relative_condition.end()));
    os << ',';
    if (!report.ball_diversity.empty()) os << cell(report.ball_diversity[e]);
    os << ',';
    if (report.linear) {
      const LinearCoverage& c = *report.linear;
      os << cell(c.c_pevi) << ',' << cell(c.c_pacle) << ',' << cell(c.c_bcp) << ','
         << cell(c.c_pevi_adv) << ',' << cell(c.lambda_reg) << ',' << c.variance_clamps;
    } else {
      os << ",,,,,";
    }
    rows.push_back(os.str());
  }
  return rows;
}

}  // namespace gopolab
