#include "gopolab/instances.hpp"

namespace gopolab {

namespace {

std::vector<double> random_simplex(int n, CounterRng& rng) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& x : p) {
    x = -std::log(1.0 - rng.uniform());  // Dirichlet(1, ..., 1)
    sum += x;
  }
  for (auto& x : p) x /= sum;
  return p;
}

std::size_t index(int S, int A, int h, int s, int a) {
  return ((static_cast<std::size_t>(h) * S + s) * A + a) * S;
}

}  // namespace

EpisodicMdp random_mdp(int num_states, int num_actions, int horizon, double b,
                       std::uint64_t seed, double noise_half_width) {
  require(num_states >= 1 && num_actions >= 1 && horizon >= 1, "sizes must be positive");
  const double top = b / horizon - noise_half_width;
  require(top >= 0.0, "noise half-width exceeds the per-step reward budget");
  CounterRng rng(derive_seed(seed, 0x6d6470));
  const int S = num_states, A = num_actions, H = horizon;
  std::vector<double> P(static_cast<std::size_t>(H) * S * A * S);
  StageSequence r(H, StageTable(S, A));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const auto row = random_simplex(S, rng);
        std::copy(row.begin(), row.end(), P.begin() + index(S, A, h, s, a));
        r[h](s, a) = rng.uniform(0.0, top);
      }
  NoiseModel noise;
  if (noise_half_width > 0.0) noise = {NoiseModel::Kind::kUniform, noise_half_width};
  return EpisodicMdp(S, A, H, std::move(P), std::move(r), noise, 0, b);
}

EpisodicMdp gridworld_chain(int length, int horizon, double b, double slip) {
  require(length >= 2 && horizon >= 1, "chain needs two states and a positive horizon");
  require(slip >= 0.0 && slip <= 1.0, "slip must be a probability");
  const int S = length, A = 2, H = horizon;
  std::vector<double> P(static_cast<std::size_t>(H) * S * A * S, 0.0);
  StageSequence r(H, StageTable(S, A));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const int intended = std::clamp(s + (a == 1 ? 1 : -1), 0, S - 1);
        const int other = std::clamp(s + (a == 1 ? -1 : 1), 0, S - 1);
        P[index(S, A, h, s, a) + intended] += 1.0 - slip;
        P[index(S, A, h, s, a) + other] += slip;
        if (s == S - 1) r[h](s, a) = b / H;
      }
  return EpisodicMdp(S, A, H, std::move(P), std::move(r), {}, 0, b);
}

EpisodicMdp corridor(int horizon, double b, int num_actions) {
  require(horizon >= 1 && num_actions >= 2, "corridor needs two actions");
  const int S = 3, A = num_actions, H = horizon;
  std::vector<double> P(static_cast<std::size_t>(H) * S * A * S, 0.0);
  StageSequence r(H, StageTable(S, A));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const int next = s == 0 ? (a == 1 ? 2 : 1) : s;
        P[index(S, A, h, s, a) + next] = 1.0;
        if (s == 1) r[h](s, a) = 0.5 * b / H;
        if (s == 2) r[h](s, a) = b / H;
      }
  return EpisodicMdp(S, A, H, std::move(P), std::move(r), {}, 0, b);
}

Policy corridor_behavior(int horizon, double coverage, int num_actions) {
  require(coverage >= 0.0 && coverage <= 1.0, "coverage must be a probability");
  StageSequence t(horizon, StageTable(3, num_actions, 1.0 / num_actions));
  for (int a = 0; a < num_actions; ++a) t[0](0, a) = a == 1 ? coverage : (1.0 - coverage) / (num_actions - 1);
  return Policy(std::move(t));
}

Policy random_policy(int num_states, int num_actions, int horizon, CounterRng& rng) {
  StageSequence t(horizon, StageTable(num_states, num_actions));
  for (auto& stage : t)
    for (int s = 0; s < num_states; ++s) {
      const auto p = random_simplex(num_actions, rng);
      for (int a = 0; a < num_actions; ++a) stage(s, a) = p[a];
    }
  return Policy(std::move(t));
}

StageSequence random_q(int num_states, int num_actions, int horizon, double bound,
                       CounterRng& rng) {
  StageSequence q(horizon, StageTable(num_states, num_actions));
  for (auto& stage : q)
    for (auto& v : stage.values) v = rng.uniform(-bound, bound);
  return q;
}

EpisodicMdp closed_tail_mdp() {
  const int S = 4, A = 2, H = 3;
  const double first_reward[2] = {0.5, 0.0};
  const double later_reward[2][4] = {{0.1, 0.175, 0.05, 0.125}, {0.15, 0.05, 0.175, 0.1}};
  const double first_next[4] = {0.0, 0.5, 0.3, 0.2};
  const double later_next[4][4] = {
      {0.25, 0.25, 0.25, 0.25}, {0.1, 0.2, 0.3, 0.4}, {0.4, 0.3, 0.2, 0.1}, {0.2, 0.3, 0.3, 0.2}};
  std::vector<double> P(static_cast<std::size_t>(H) * S * A * S);
  StageSequence r(H, StageTable(S, A));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        for (int sn = 0; sn < S; ++sn)
          P[index(S, A, h, s, a) + sn] = h == 0 ? first_next[sn] : later_next[s][sn];
        r[h](s, a) = h == 0 ? first_reward[a] : later_reward[h - 1][s];
      }
  return EpisodicMdp(S, A, H, std::move(P), std::move(r), {NoiseModel::Kind::kUniform, 0.05}, 0,
                     1.0);
}

FunctionClass closed_tail_class(const EpisodicMdp& mdp) {
  // Q^pi does not depend on pi here, so any policy gives the same tables.
  const StageSequence q =
      evaluate_policy(mdp, Policy::uniform(mdp.num_states(), mdp.num_actions(), mdp.horizon())).q;
  const int s1 = mdp.initial_state();
  std::vector<std::vector<StageTable>> cands(mdp.horizon());
  for (int h = 0; h < mdp.horizon(); ++h)
    for (double c : {-0.1, 0.0, 0.1}) {
      StageTable f = q[h];
      for (auto& v : f.values) v += c;
      cands[h].push_back(std::move(f));
    }
  for (int a = 0; a < mdp.num_actions(); ++a)
    for (double delta : {0.25, 0.18, 0.12, 0.08, 0.05, 0.03}) {
      StageTable f = q[0];
      f(s1, a) -= delta;
      cands[0].push_back(std::move(f));
    }
  StageTable optimistic = q[0];
  optimistic(s1, 1) += 0.2;
  cands[0].push_back(std::move(optimistic));
  return FunctionClass(mdp.bound(), std::move(cands));
}

FunctionClass bellman_closed_class(const EpisodicMdp& mdp, const Policy& pi_tilde,
                                   int random_per_stage, CounterRng& rng) {
  const int H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  const double b = mdp.bound();
  require(random_per_stage >= 0, "random_per_stage must be nonnegative");
  std::vector<std::vector<StageTable>> cands(H);
  for (int h = H - 1; h >= 0; --h) {
    const double range = b * (H - h) / (H + 1);
    for (int i = 0; i < random_per_stage; ++i) {
      StageTable f(S, A);
      for (auto& v : f.values) v = rng.uniform(-range, range);
      cands[h].push_back(std::move(f));
    }
    if (h == H - 1) {
      cands[h].push_back(bellman_apply(mdp, pi_tilde, mdp.zero_table(), h));
    } else {
      for (const auto& next : cands[h + 1]) cands[h].push_back(bellman_apply(mdp, pi_tilde, next, h));
    }
  }
  return FunctionClass(b, std::move(cands));
}

LinearInstance linear_mdp(int num_states, int num_actions, int horizon, int dim, double b,
                          std::uint64_t seed, double theta_max, double margin, double shrink) {
  require(dim >= 1 && theta_max >= 0.0 && margin >= 0.0, "invalid linear MDP parameters");
  require(shrink >= 0.0 && shrink <= 1.0, "shrink must lie in [0, 1]");
  const int S = num_states, A = num_actions, H = horizon, d = dim;
  CounterRng rng(derive_seed(seed, 0x6c696e));
  std::vector<Eigen::MatrixXd> phi(H, Eigen::MatrixXd(S * A, d));
  std::vector<double> P(static_cast<std::size_t>(H) * S * A * S);
  StageSequence r(H, StageTable(S, A));
  std::vector<double> theta_norm(H);
  for (int h = 0; h < H; ++h) {
    Eigen::MatrixXd mu(d, S);
    for (int i = 0; i < d; ++i) {
      const auto row = random_simplex(S, rng);
      for (int sn = 0; sn < S; ++sn) mu(i, sn) = row[sn];
    }
    Eigen::VectorXd theta(d);
    for (int i = 0; i < d; ++i) theta[i] = rng.uniform(0.0, theta_max);
    theta_norm[h] = theta.norm();
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const auto x = random_simplex(d, rng);
        for (int i = 0; i < d; ++i) phi[h](s * A + a, i) = (1.0 - shrink) * x[i] + shrink / d;
        const Eigen::VectorXd f = phi[h].row(s * A + a).transpose();
        const Eigen::VectorXd next = mu.transpose() * f;
        for (int sn = 0; sn < S; ++sn) P[index(S, A, h, s, a) + sn] = next[sn];
        r[h](s, a) = f.dot(theta);
      }
  }
  std::vector<double> radius(H);
  for (int h = H - 1; h >= 0; --h) {
    radius[h] = theta_norm[h] + margin + (h + 1 < H ? std::sqrt(static_cast<double>(d)) * radius[h + 1] : 0.0);
    require(radius[h] <= b, "linear MDP radius exceeds b; lower theta_max or margin");
  }
  return {EpisodicMdp(S, A, H, std::move(P), std::move(r), {}, 0, b), std::move(phi),
          std::move(radius)};
}

Eigen::VectorXd fit_linear(const Eigen::MatrixXd& phi, const StageTable& q) {
  const Eigen::Map<const Eigen::VectorXd> y(q.values.data(), static_cast<Eigen::Index>(q.size()));
  return phi.colPivHouseholderQr().solve(y);
}

}  // namespace gopolab
