#pragma once

// Closed-form quantities for a (MDP, target, behavior) triple.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absope/error.hpp"
#include "absope/mdp.hpp"

namespace absope {

using Notes = std::vector<std::string>;

enum class QMethod { Auto, LinearSolve, ValueIteration };

struct SolveOptions {
  double tol = 1e-12;
  std::size_t max_iter = 1'000'000;
  QMethod method = QMethod::Auto;
  /// Auto picks the direct solve up to this many (state, action) unknowns.
  std::size_t direct_limit = 4096;
};

namespace detail {

inline Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

// (T V)(a, s) = sum_s' T(s'|a,s) V(s')
inline Matrix expected_next(const MdpModel& mdp, const Vector& v) {
  Matrix out(ix(mdp.n_actions), ix(mdp.n_states));
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double* row = mdp.row(s, a);
      double acc = 0.0;
      for (std::size_t n = 0; n < mdp.n_states; ++n) acc += row[n] * v(ix(n));
      out(ix(a), ix(s)) = acc;
    }
  return out;
}

}  // namespace detail

/// V(s) = sum_a pi(a|s) Q(a,s).
inline Vector state_values(const PolicyTable& pi, const Matrix& q) {
  Vector v(q.cols());
  for (Eigen::Index s = 0; s < q.cols(); ++s) v(s) = pi.probs.row(s).dot(q.col(s));
  return v;
}

/// Sup-norm residual of the Bellman evaluation equation.
inline double bellman_residual(const MdpModel& mdp, const PolicyTable& pi,
                               const Matrix& q) {
  const Matrix target =
      mdp.reward + mdp.gamma * detail::expected_next(mdp, state_values(pi, q));
  return (target - q).cwiseAbs().maxCoeff();
}

/// Q^pi as a table Q(a, s).
inline Matrix q_function(const MdpModel& mdp, const PolicyTable& pi,
                         const SolveOptions& opts = {}) {
  require_valid(pi, mdp);
  if (!(opts.tol > 0.0)) throw InvalidInput("q_function: tol must be positive");
  const bool direct =
      opts.method == QMethod::LinearSolve ||
      (opts.method == QMethod::Auto &&
       mdp.n_states * mdp.n_actions <= opts.direct_limit);
  if (direct) {
    const Matrix chain = chain_under_policy(mdp, pi);
    Vector reward_pi(detail::ix(mdp.n_states));
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      reward_pi(detail::ix(s)) =
          pi.probs.row(detail::ix(s)).dot(mdp.reward.col(detail::ix(s)));
    const Matrix system =
        Matrix::Identity(chain.rows(), chain.cols()) - mdp.gamma * chain;
    const Vector v = system.partialPivLu().solve(reward_pi);
    return mdp.reward + mdp.gamma * detail::expected_next(mdp, v);
  }
  // Fixed-point iteration. ||T Q_{k+1} - Q_{k+1}|| <= gamma ||Q_{k+1} - Q_k||,
  // so stopping on gamma * step <= tol bounds the Bellman residual by tol.
  Matrix q = Matrix::Zero(mdp.reward.rows(), mdp.reward.cols());
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    Matrix next = mdp.reward + mdp.gamma * detail::expected_next(mdp, state_values(pi, q));
    const double step = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (mdp.gamma * step <= opts.tol) return q;
  }
  throw ConvergenceError("q_function: value iteration did not reach tol " +
                         std::to_string(opts.tol) + " within " +
                         std::to_string(opts.max_iter) + " iterations");
}

/// J(pi) = sum_s rho0(s) sum_a pi(a|s) Q(a,s).
inline double policy_value(const MdpModel& mdp, const PolicyTable& pi,
                           const SolveOptions& opts = {}) {
  require_valid(mdp);
  return mdp.initial.dot(state_values(pi, q_function(mdp, pi, opts)));
}

/// rho(a, s) = pi(a|s) / b(a|s); 0/0 is defined as 0 and noted.
inline Matrix is_ratio(const PolicyTable& pi, const PolicyTable& b,
                       Notes* notes = nullptr) {
  if (pi.probs.rows() != b.probs.rows() || pi.probs.cols() != b.probs.cols())
    throw InvalidInput("is_ratio: policy shapes differ");
  Matrix rho(pi.probs.cols(), pi.probs.rows());
  for (Eigen::Index s = 0; s < pi.probs.rows(); ++s)
    for (Eigen::Index a = 0; a < pi.probs.cols(); ++a) {
      const double num = pi.probs(s, a);
      const double den = b.probs(s, a);
      if (den > 0.0) {
        rho(a, s) = num / den;
      } else if (num > 0.0) {
        std::ostringstream os;
        os << "coverage violated: pi(a=" << a << "|s=" << s << ")=" << num
           << " but b(a|s)=0";
        throw CoverageError(os.str());
      } else {
        rho(a, s) = 0.0;
        if (notes)
          notes->push_back("rho(a=" + std::to_string(a) + ",s=" + std::to_string(s) +
                           ") is 0/0, set to 0");
      }
    }
  return rho;
}

// ---------------------------------------------------------------------------
// Chain structure

struct ChainAnalysis {
  std::vector<std::vector<std::size_t>> recurrent_classes;  // closed SCCs
  std::vector<std::size_t> periods;                         // one per class
  std::vector<std::size_t> transient;
};

/// Strongly connected components of the support graph of a stochastic
/// matrix, keeping only the closed ones.
inline ChainAnalysis analyze_chain(const Matrix& chain) {
  const auto n = static_cast<std::size_t>(chain.rows());
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      if (chain(detail::ix(u), detail::ix(v)) > 0.0) adj[u].push_back(v);

  // Iterative Tarjan.
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnset), low(n, 0), comp(n, kUnset);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> comps;
  std::size_t counter = 0;
  struct Frame {
    std::size_t node;
    std::size_t edge;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnset) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.edge < adj[f.node].size()) {
        const std::size_t w = adj[f.node][f.edge++];
        if (index[w] == kUnset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.node] = std::min(low[f.node], index[w]);
        }
        continue;
      }
      const std::size_t v = f.node;
      if (low[v] == index[v]) {
        std::vector<std::size_t> members;
        std::size_t w = kUnset;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = comps.size();
          members.push_back(w);
        } while (w != v);
        std::sort(members.begin(), members.end());
        comps.push_back(std::move(members));
      }
      call.pop_back();
      if (!call.empty()) low[call.back().node] = std::min(low[call.back().node], low[v]);
    }
  }

  ChainAnalysis out;
  std::vector<bool> closed(comps.size(), true);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v : adj[u])
      if (comp[u] != comp[v]) closed[comp[u]] = false;
  std::vector<std::size_t> order(comps.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return comps[x].front() < comps[y].front(); });
  for (std::size_t c : order) {
    if (!closed[c]) {
      out.transient.insert(out.transient.end(), comps[c].begin(), comps[c].end());
      continue;
    }
    // Period: gcd of level differences along edges inside the class.
    const auto& members = comps[c];
    std::vector<std::size_t> level(n, kUnset);
    std::vector<std::size_t> queue{members.front()};
    level[members.front()] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t u = queue[head];
      for (std::size_t v : adj[u])
        if (level[v] == kUnset) {
          level[v] = level[u] + 1;
          queue.push_back(v);
        }
    }
    std::size_t period = 0;
    for (std::size_t u : members)
      for (std::size_t v : adj[u]) {
        const auto lhs = static_cast<long long>(level[u]) + 1;
        const auto rhs = static_cast<long long>(level[v]);
        period = std::gcd(period, static_cast<std::size_t>(std::llabs(lhs - rhs)));
      }
    out.recurrent_classes.push_back(members);
    out.periods.push_back(period == 0 ? 1 : period);
  }
  std::sort(out.transient.begin(), out.transient.end());
  return out;
}

struct StationaryResult {
  Vector distribution;
  std::size_t period = 1;
  std::vector<std::size_t> transient;
};

inline StationaryResult stationary_analysis(const Matrix& chain) {
  const ChainAnalysis structure = analyze_chain(chain);
  if (structure.recurrent_classes.size() != 1) {
    std::ostringstream os;
    os << "behavior chain has " << structure.recurrent_classes.size()
       << " recurrent classes; a unique stationary distribution needs exactly one:";
    for (const auto& cls : structure.recurrent_classes) {
      os << " {";
      for (std::size_t i = 0; i < cls.size(); ++i) os << (i ? "," : "") << cls[i];
      os << "}";
    }
    throw ChainStructureError(os.str());
  }
  const auto& members = structure.recurrent_classes.front();
  const auto m = static_cast<Eigen::Index>(members.size());
  // Solve p (P_C - I) = 0 with sum(p) = 1 on the closed class; one balance
  // equation is redundant and is replaced by the normalization.
  Matrix system(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      system(j, i) = chain(detail::ix(members[static_cast<std::size_t>(i)]),
                           detail::ix(members[static_cast<std::size_t>(j)])) -
                     (i == j ? 1.0 : 0.0);
  system.row(m - 1).setOnes();
  Vector rhs = Vector::Zero(m);
  rhs(m - 1) = 1.0;
  const Vector local = system.colPivHouseholderQr().solve(rhs);

  StationaryResult out;
  out.distribution = Vector::Zero(chain.rows());
  for (Eigen::Index i = 0; i < m; ++i)
    out.distribution(detail::ix(members[static_cast<std::size_t>(i)])) =
        std::max(0.0, local(i));
  out.distribution /= out.distribution.sum();
  const double residual =
      (out.distribution.transpose() * chain - out.distribution.transpose())
          .cwiseAbs()
          .maxCoeff();
  if (!(residual <= 1e-10))
    throw ChainStructureError("stationary solve residual " + std::to_string(residual) +
                              " exceeds 1e-10");
  out.period = structure.periods.front();
  out.transient = structure.transient;
  return out;
}

/// Stationary state distribution of the chain induced by b.
inline Vector stationary_distribution(const MdpModel& mdp, const PolicyTable& b) {
  return stationary_analysis(chain_under_policy(mdp, b)).distribution;
}

/// d(s) = (1 - gamma) sum_t gamma^{t-1} P^pi(S_t = s).
inline Vector discounted_state_visitation(const MdpModel& mdp, const PolicyTable& pi) {
  const Matrix chain = chain_under_policy(mdp, pi);
  const Matrix system =
      Matrix::Identity(chain.rows(), chain.cols()) - mdp.gamma * chain.transpose();
  return system.partialPivLu().solve((1.0 - mdp.gamma) * mdp.initial);
}

/// d^pi(a, s) = d(s) pi(a|s); sums to 1.
inline Matrix discounted_visitation(const MdpModel& mdp, const PolicyTable& pi) {
  require_valid(pi, mdp);
  const Vector d = discounted_state_visitation(mdp, pi);
  Matrix out(detail::ix(mdp.n_actions), detail::ix(mdp.n_states));
  for (Eigen::Index s = 0; s < out.cols(); ++s)
    for (Eigen::Index a = 0; a < out.rows(); ++a) out(a, s) = d(s) * pi.probs(s, a);
  return out;
}

/// w(a, s) = d^pi(a, s) / (p_inf(s) b(a|s)).
inline Matrix mis_ratio(const Matrix& d_pi, const Vector& p_inf, const PolicyTable& b,
                        Notes* notes = nullptr) {
  // Visitation mass below this is rounding noise from the linear solve.
  constexpr double kNegligible = 1e-14;
  Matrix w(d_pi.rows(), d_pi.cols());
  for (Eigen::Index s = 0; s < d_pi.cols(); ++s)
    for (Eigen::Index a = 0; a < d_pi.rows(); ++a) {
      const double den = p_inf(s) * b.probs(s, a);
      const double num = d_pi(a, s);
      if (den > 0.0) {
        w(a, s) = num / den;
      } else if (num > kNegligible) {
        std::ostringstream os;
        os << "MIS support violated at (a=" << a << ",s=" << s << "): d_pi=" << num
           << " but p_inf(s) b(a|s)=0";
        throw CoverageError(os.str());
      } else {
        w(a, s) = 0.0;
        if (notes)
          notes->push_back("w(a=" + std::to_string(a) + ",s=" + std::to_string(s) +
                           ") is 0/0, set to 0");
      }
    }
  return w;
}

inline Matrix mis_ratio(const MdpModel& mdp, const PolicyTable& pi, const PolicyTable& b,
                        Notes* notes = nullptr) {
  require_valid(b, mdp);
  return mis_ratio(discounted_visitation(mdp, pi), stationary_distribution(mdp, b), b,
                   notes);
}

/// Time-reversed state-action kernel B[s'][a][s] = P(A_t=a, S_t=s | S_{t+1}=s')
/// under the stationary behavior process.
struct BackwardKernel {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> values;  // flat [s'][a][s]

  double operator()(std::size_t next, std::size_t a, std::size_t s) const {
    return values[(next * n_actions + a) * n_states + s];
  }
  double& operator()(std::size_t next, std::size_t a, std::size_t s) {
    return values[(next * n_actions + a) * n_states + s];
  }
};

inline BackwardKernel backward_kernel(const MdpModel& mdp, const PolicyTable& b,
                                      const Vector& p_inf) {
  BackwardKernel out{mdp.n_states, mdp.n_actions,
                     std::vector<double>(mdp.n_states * mdp.n_actions * mdp.n_states, 0.0)};
  for (std::size_t next = 0; next < mdp.n_states; ++next) {
    const double mass = p_inf(detail::ix(next));
    if (!(mass > 0.0))
      throw ChainStructureError("backward kernel undefined: p_inf(" + std::to_string(next) +
                                ") = 0");
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      for (std::size_t s = 0; s < mdp.n_states; ++s)
        out(next, a, s) = p_inf(detail::ix(s)) * b(s, a) * mdp.p(s, a, next) / mass;
  }
  return out;
}

inline BackwardKernel backward_kernel(const MdpModel& mdp, const PolicyTable& b) {
  require_valid(b, mdp);
  return backward_kernel(mdp, b, stationary_distribution(mdp, b));
}

/// gamma^T max|R| / (1 - gamma): bound on the error of truncating the
/// discounted return at horizon T.
inline double sis_truncation_bound(const MdpModel& mdp, std::size_t horizon) {
  return std::pow(mdp.gamma, static_cast<double>(horizon)) * mdp.max_abs_reward() /
         (1.0 - mdp.gamma);
}

struct SolveCache {
  Matrix q;
  Vector v;
  double j_pi = 0.0;
  Matrix rho;
  Vector p_inf;
  Matrix d_pi;
  Matrix w;
  BackwardKernel backward;
  std::size_t period = 1;
  Notes notes;
};

inline SolveCache solve(const MdpModel& mdp, const PolicyTable& pi, const PolicyTable& b,
                        const SolveOptions& opts = {}) {
  require_valid(mdp);
  require_valid(pi, mdp);
  require_valid(b, mdp);
  SolveCache c;
  c.q = q_function(mdp, pi, opts);
  c.v = state_values(pi, c.q);
  c.j_pi = mdp.initial.dot(c.v);
  c.rho = is_ratio(pi, b, &c.notes);
  const StationaryResult stationary = stationary_analysis(chain_under_policy(mdp, b));
  c.p_inf = stationary.distribution;
  c.period = stationary.period;
  if (c.period > 1)
    c.notes.push_back("behavior chain is periodic (period " + std::to_string(c.period) +
                      "); the limiting distribution does not exist, the stationary "
                      "distribution is used");
  c.d_pi = discounted_visitation(mdp, pi);
  c.w = mis_ratio(c.d_pi, c.p_inf, b, &c.notes);
  try {
    c.backward = backward_kernel(mdp, b, c.p_inf);
  } catch (const ChainStructureError& e) {
    // Transient states have no time-reversed conditional; leave it empty.
    c.notes.push_back(e.what());
  }
  return c;
}

}  // namespace absope
