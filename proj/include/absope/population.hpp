#pragma once

// Population-level (infinite data) versions of the four estimating
// functions, and the abstract tables they are evaluated with.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "absope/abstraction.hpp"
#include "absope/mdp.hpp"
#include "absope/partition.hpp"
#include "absope/solver.hpp"

namespace absope {

/// Ground table X(a, s) = abstract(a, phi(s)).
inline Matrix lift_table(const Matrix& abstract, const Partition& part) {
  if (static_cast<std::size_t>(abstract.cols()) != part.n_blocks())
    throw InvalidInput("lift_table: table has " + std::to_string(abstract.cols()) +
                       " columns but the partition has " + std::to_string(part.n_blocks()) +
                       " blocks");
  Matrix out(abstract.rows(), static_cast<Eigen::Index>(part.size()));
  for (std::size_t s = 0; s < part.size(); ++s)
    out.col(static_cast<Eigen::Index>(s)) = abstract.col(static_cast<Eigen::Index>(part[s]));
  return out;
}

/// E[f1(Q)] = sum_s rho0(s) sum_a pi(a|s) Q(a,s).
inline double exact_f1(const MdpModel& mdp, const PolicyTable& pi, const Matrix& q) {
  return mdp.initial.dot(state_values(pi, q));
}

/// E_b[ sum_{t<=T} gamma^{t-1} (prod_{j<=t} ratio(A_j,S_j)) R_t ] with
/// S_1 ~ rho0, computed by propagating the ratio-weighted state marginal.
inline double exact_f2(const MdpModel& mdp, const PolicyTable& b, const Matrix& ratio,
                       std::size_t horizon) {
  const auto ns = static_cast<Eigen::Index>(mdp.n_states);
  Vector mass = mdp.initial;
  double total = 0.0;
  double discount = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    Vector next = Vector::Zero(ns);
    double step = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const double m = mass(static_cast<Eigen::Index>(s));
      if (m == 0.0) continue;
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        const double weight =
            m * b(s, a) * ratio(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s));
        if (weight == 0.0) continue;
        step += weight * mdp.r(a, s);
        const double* row = mdp.row(s, a);
        for (std::size_t n = 0; n < mdp.n_states; ++n)
          next(static_cast<Eigen::Index>(n)) += weight * row[n];
      }
    }
    total += discount * step;
    discount *= mdp.gamma;
    mass = std::move(next);
  }
  return total;
}

/// (1 - gamma)^{-1} E_{p_inf b}[w(A,S) R(A,S)].
inline double exact_f3(const MdpModel& mdp, const PolicyTable& b, const Vector& p_inf,
                       const Matrix& w) {
  double acc = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      acc += p_inf(static_cast<Eigen::Index>(s)) * b(s, a) *
             w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)) * mdp.r(a, s);
  return acc / (1.0 - mdp.gamma);
}

/// E[f1(Q)] + (1 - gamma)^{-1} E_{p_inf b}[w (R + gamma V_Q(S') - Q(A,S))].
inline double exact_f4(const MdpModel& mdp, const PolicyTable& pi, const PolicyTable& b,
                       const Vector& p_inf, const Matrix& q, const Matrix& w) {
  const Matrix next = detail::expected_next(mdp, state_values(pi, q));
  double acc = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      const auto si = static_cast<Eigen::Index>(s);
      acc += p_inf(si) * b(s, a) * w(ai, si) *
             (mdp.r(a, s) + mdp.gamma * next(ai, si) - q(ai, si));
    }
  return exact_f1(mdp, pi, q) + acc / (1.0 - mdp.gamma);
}

/// Q of the quotient MDP, as a table over (action, block).
inline Matrix abstract_q(const QuotientModel& quotient, const SolveOptions& opts = {}) {
  return q_function(quotient.model, quotient.pi, opts);
}

/// pi_phi / b_phi with both projections weighted by the behavior stationary
/// distribution.
inline Matrix abstract_is_ratio(const QuotientModel& quotient) {
  return is_ratio(quotient.pi, quotient.b);
}

/// w_phi(a, x) = sum_{s in x} d^pi(a,s) / sum_{s in x} p_inf(s) b(a|s).
inline Matrix abstract_mis_ratio(const Matrix& d_pi, const Vector& p_inf,
                                 const PolicyTable& b, const Partition& part) {
  const auto na = d_pi.rows();
  const auto nb = static_cast<Eigen::Index>(part.n_blocks());
  Matrix num = Matrix::Zero(na, nb);
  Matrix den = Matrix::Zero(na, nb);
  for (std::size_t s = 0; s < part.size(); ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    const auto x = static_cast<Eigen::Index>(part[s]);
    for (Eigen::Index a = 0; a < na; ++a) {
      num(a, x) += d_pi(a, si);
      den(a, x) += p_inf(si) * b.probs(si, a);
    }
  }
  Matrix w(na, nb);
  for (Eigen::Index x = 0; x < nb; ++x)
    for (Eigen::Index a = 0; a < na; ++a) {
      if (den(a, x) > 0.0) {
        w(a, x) = num(a, x) / den(a, x);
      } else if (num(a, x) > 1e-14) {
        throw CoverageError("abstract MIS support violated at (a=" + std::to_string(a) +
                            ",x=" + std::to_string(x) + ")");
      } else {
        w(a, x) = 0.0;
      }
    }
  return w;
}

/// The abstract model that empirical estimates converge to under stationary
/// behavior data: transitions and rewards for (x, a) average over the
/// stationary state-action mass p_inf(s) b(a|s) within x; the initial
/// distribution is aggregated. Policies use the p_inf-weighted projection.
inline QuotientModel data_limit_mdp(const MdpModel& mdp, const Partition& part,
                                    const PolicyTable& pi, const PolicyTable& b,
                                    const Vector& p_inf) {
  const QuotientModel plain = quotient_mdp(mdp, part, pi, b, p_inf);
  QuotientModel q = plain;
  const std::size_t nb = part.n_blocks();
  const std::size_t na = mdp.n_actions;
  std::fill(q.model.transition.begin(), q.model.transition.end(), 0.0);
  q.model.reward.setZero();
  Matrix mass = Matrix::Zero(static_cast<Eigen::Index>(na), static_cast<Eigen::Index>(nb));
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const std::size_t x = part[s];
    for (std::size_t a = 0; a < na; ++a) {
      const double m = p_inf(static_cast<Eigen::Index>(s)) * b(s, a);
      if (m == 0.0) continue;
      mass(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(x)) += m;
      q.model.reward(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(x)) +=
          m * mdp.r(a, s);
      const double* row = mdp.row(s, a);
      for (std::size_t n = 0; n < mdp.n_states; ++n) q.model.p(x, a, part[n]) += m * row[n];
    }
  }
  for (std::size_t x = 0; x < nb; ++x)
    for (std::size_t a = 0; a < na; ++a) {
      const double m = mass(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(x));
      if (m > 0.0) {
        q.model.reward(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(x)) /= m;
        double total = 0.0;
        for (std::size_t y = 0; y < nb; ++y) total += q.model.p(x, a, y);
        for (std::size_t y = 0; y < nb; ++y) q.model.p(x, a, y) /= total;
      } else {
        // Never taken in x: fall back to the stationary-weighted projection.
        q.model.reward(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(x)) =
            plain.model.r(a, x);
        for (std::size_t y = 0; y < nb; ++y) q.model.p(x, a, y) = plain.model.p(x, a, y);
      }
    }
  return q;
}

}  // namespace absope
