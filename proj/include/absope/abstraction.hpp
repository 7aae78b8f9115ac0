#pragma once

// Irrelevance checkers, coarsest-partition refinement, quotient models and
// the forward-then-backward two-step procedure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "absope/error.hpp"
#include "absope/mdp.hpp"
#include "absope/partition.hpp"
#include "absope/solver.hpp"

namespace absope {

struct Witness {
  std::size_t first = 0;   // block representative
  std::size_t second = 0;  // offending state in the same block
  std::size_t action = 0;
  std::optional<std::size_t> block;  // aggregation block, for kernel conditions
};

struct IrrelevanceReport {
  std::string condition;
  bool holds = true;
  double worst = 0.0;
  double tolerance = 0.0;
  std::optional<Witness> witness;
  std::vector<IrrelevanceReport> parts;

  std::string to_string() const {
    std::ostringstream os;
    os << condition << ": " << (holds ? "holds" : "violated") << " (worst " << worst
       << ", tol " << tolerance << ")";
    if (witness) {
      os << " witness s1=" << witness->first << " s2=" << witness->second
         << " a=" << witness->action;
      if (witness->block) os << " block=" << *witness->block;
    }
    return os.str();
  }
};

namespace detail {

struct Component {
  std::size_t action;
  std::optional<std::size_t> block;
};

// Compares every state against its block representative over `width`
// coordinates; value(s, k) gives coordinate k of state s.
template <class Value, class Decode>
IrrelevanceReport check_rows(const Partition& part, std::size_t width, Value&& value,
                             Decode&& decode, std::string name, double tol) {
  IrrelevanceReport report{std::move(name), true, 0.0, tol, std::nullopt, {}};
  const auto reps = part.representatives();
  for (std::size_t s = 0; s < part.size(); ++s) {
    const std::size_t rep = reps[part[s]];
    if (rep == s) continue;
    for (std::size_t k = 0; k < width; ++k) {
      const double gap = std::abs(value(s, k) - value(rep, k));
      if (gap > report.worst) {
        report.worst = gap;
        if (gap > tol) {
          const Component c = decode(k);
          report.witness = Witness{rep, s, c.action, c.block};
        }
      }
    }
  }
  report.holds = report.worst <= tol;
  if (report.holds) report.witness.reset();
  return report;
}

inline Component action_only(std::size_t k) { return {k, std::nullopt}; }

inline void require_size(const Partition& part, std::size_t n, const char* what) {
  if (part.size() != n)
    throw InvalidInput(std::string(what) + ": partition covers " +
                       std::to_string(part.size()) + " states, expected " +
                       std::to_string(n));
}

// Block-aggregated mass: out[a * n_blocks + x] = sum_{s in x} kernel(a, s).
template <class Kernel>
void aggregate(const Partition& part, std::size_t n_actions, std::size_t n_states,
               Kernel&& kernel, std::vector<double>& out) {
  out.assign(n_actions * part.n_blocks(), 0.0);
  for (std::size_t a = 0; a < n_actions; ++a)
    for (std::size_t s = 0; s < n_states; ++s)
      out[a * part.n_blocks() + part[s]] += kernel(a, s);
}

inline IrrelevanceReport combine(std::string name, double tol,
                                 std::vector<IrrelevanceReport> parts) {
  IrrelevanceReport out{std::move(name), true, 0.0, tol, std::nullopt, {}};
  for (const auto& p : parts) {
    out.holds = out.holds && p.holds;
    if (p.worst >= out.worst) {
      out.worst = p.worst;
      if (!p.holds) out.witness = p.witness;
    }
  }
  out.parts = std::move(parts);
  return out;
}

}  // namespace detail

inline IrrelevanceReport check_pi_irrelevance(const Partition& part, const PolicyTable& pi,
                                              double tol) {
  detail::require_size(part, pi.n_states(), "check_pi_irrelevance");
  return detail::check_rows(
      part, pi.n_actions(), [&](std::size_t s, std::size_t a) { return pi(s, a); },
      detail::action_only, "pi-irrelevance", tol);
}

/// Irrelevance of a table X(a, s), e.g. Q, rho or w.
inline IrrelevanceReport check_table_irrelevance(const Partition& part, const Matrix& table,
                                                 std::string name, double tol) {
  detail::require_size(part, static_cast<std::size_t>(table.cols()), name.c_str());
  return detail::check_rows(
      part, static_cast<std::size_t>(table.rows()),
      [&](std::size_t s, std::size_t a) {
        return table(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s));
      },
      detail::action_only, std::move(name), tol);
}

inline IrrelevanceReport check_q_irrelevance(const Partition& part, const Matrix& q,
                                             double tol) {
  return check_table_irrelevance(part, q, "Q-irrelevance", tol);
}

inline IrrelevanceReport check_rho_irrelevance(const Partition& part, const Matrix& rho,
                                               double tol) {
  return check_table_irrelevance(part, rho, "rho-irrelevance", tol);
}

inline IrrelevanceReport check_w_irrelevance(const Partition& part, const Matrix& w,
                                             double tol) {
  return check_table_irrelevance(part, w, "w-irrelevance", tol);
}

inline IrrelevanceReport check_reward_irrelevance(const Partition& part, const MdpModel& mdp,
                                                  double tol) {
  return check_table_irrelevance(part, mdp.reward, "reward-irrelevance", tol);
}

/// Same-block states put equal mass on every block, for every action.
inline IrrelevanceReport check_transition_irrelevance(const Partition& part,
                                                      const MdpModel& mdp, double tol) {
  detail::require_size(part, mdp.n_states, "check_transition_irrelevance");
  const std::size_t nb = part.n_blocks();
  // mass[s][a * nb + x']
  std::vector<std::vector<double>> mass(mdp.n_states, std::vector<double>(mdp.n_actions * nb));
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double* row = mdp.row(s, a);
      for (std::size_t n = 0; n < mdp.n_states; ++n) mass[s][a * nb + part[n]] += row[n];
    }
  return detail::check_rows(
      part, mdp.n_actions * nb, [&](std::size_t s, std::size_t k) { return mass[s][k]; },
      [nb](std::size_t k) { return detail::Component{k / nb, k % nb}; },
      "transition-irrelevance", tol);
}

inline IrrelevanceReport check_model_irrelevance(const Partition& part, const MdpModel& mdp,
                                                 double tol) {
  return detail::combine("model-irrelevance", tol,
                         {check_reward_irrelevance(part, mdp, tol),
                          check_transition_irrelevance(part, mdp, tol)});
}

/// Model-irrelevance together with pi-irrelevance: the forward condition.
inline IrrelevanceReport check_forward_irrelevance(const Partition& part, const MdpModel& mdp,
                                                   const PolicyTable& pi, double tol) {
  return detail::combine("forward-irrelevance", tol,
                         {check_model_irrelevance(part, mdp, tol),
                          check_pi_irrelevance(part, pi, tol)});
}

/// Condition (ii) of backward-model-irrelevance: conditioning next-states in
/// the same block induce the same block-aggregated reversed kernel.
inline IrrelevanceReport check_backward_transition_irrelevance(const Partition& part,
                                                               const BackwardKernel& kernel,
                                                               double tol) {
  detail::require_size(part, kernel.n_states, "check_backward_transition_irrelevance");
  const std::size_t nb = part.n_blocks();
  std::vector<std::vector<double>> mass(kernel.n_states);
  for (std::size_t next = 0; next < kernel.n_states; ++next)
    detail::aggregate(
        part, kernel.n_actions, kernel.n_states,
        [&](std::size_t a, std::size_t s) { return kernel(next, a, s); }, mass[next]);
  return detail::check_rows(
      part, kernel.n_actions * nb, [&](std::size_t s, std::size_t k) { return mass[s][k]; },
      [nb](std::size_t k) { return detail::Component{k / nb, k % nb}; },
      "backward-transition-irrelevance", tol);
}

inline IrrelevanceReport check_backward_model_irrelevance(const Partition& part,
                                                          const Matrix& rho,
                                                          const BackwardKernel& kernel,
                                                          double tol) {
  return detail::combine("backward-model-irrelevance", tol,
                         {check_rho_irrelevance(part, rho, tol),
                          check_backward_transition_irrelevance(part, kernel, tol)});
}

inline IrrelevanceReport check_backward_model_irrelevance(const Partition& part,
                                                          const MdpModel& mdp,
                                                          const PolicyTable& b,
                                                          const PolicyTable& pi, double tol) {
  return check_backward_model_irrelevance(part, is_ratio(pi, b), backward_kernel(mdp, b), tol);
}

// ---------------------------------------------------------------------------
// Partition refinement

struct RefinementRound {
  std::size_t round = 0;
  std::size_t blocks_before = 0;
  std::size_t blocks_after = 0;
  std::vector<std::size_t> split_blocks;  // labels in the partition before the round
};

struct RefinementAudit {
  std::string mode;
  std::vector<RefinementRound> rounds;
  std::size_t final_blocks = 0;
};

/// Splits every block of `current` so that each state lies within `tol`
/// (sup norm) of the signature of its sub-block's first state. Sub-blocks
/// are seeded in state-index order, which makes the result deterministic and
/// consistent with the representative-based checkers.
inline Partition split_by_signature(const Partition& current,
                                    const std::vector<std::vector<double>>& signature,
                                    double tol,
                                    std::vector<std::size_t>* split_blocks = nullptr) {
  const std::size_t n = current.size();
  std::vector<std::vector<std::size_t>> heads(current.n_blocks());  // sub-block seeds
  std::vector<std::size_t> sub(n, 0);
  auto close = [&](std::size_t x, std::size_t y) {
    const auto& u = signature[x];
    const auto& v = signature[y];
    for (std::size_t k = 0; k < u.size(); ++k)
      if (!(std::abs(u[k] - v[k]) <= tol)) return false;
    return true;
  };
  for (std::size_t s = 0; s < n; ++s) {
    auto& h = heads[current[s]];
    std::size_t j = 0;
    while (j < h.size() && !close(h[j], s)) ++j;
    if (j == h.size()) h.push_back(s);
    sub[s] = j;
  }
  if (split_blocks)
    for (std::size_t x = 0; x < heads.size(); ++x)
      if (heads[x].size() > 1) split_blocks->push_back(x);
  std::vector<std::size_t> labels(n);
  for (std::size_t s = 0; s < n; ++s) labels[s] = current[s] * n + sub[s];
  return Partition::from_labels(labels);
}

namespace detail {

template <class SignatureFn>
Partition refine_to_fixpoint(Partition part, SignatureFn&& signature_of, double tol,
                             RefinementAudit* audit) {
  for (std::size_t round = 1;; ++round) {
    std::vector<std::size_t> split;
    Partition next = split_by_signature(part, signature_of(part), tol, &split);
    if (audit) audit->rounds.push_back({round, part.n_blocks(), next.n_blocks(), split});
    const bool stable = next.n_blocks() == part.n_blocks();
    part = std::move(next);
    if (stable) break;
  }
  if (audit) audit->final_blocks = part.n_blocks();
  return part;
}

}  // namespace detail

/// Coarsest partition that is model-irrelevant and pi-irrelevant at `tol`.
inline Partition coarsest_forward(const MdpModel& mdp, const PolicyTable& pi, double tol,
                                  RefinementAudit* audit = nullptr) {
  require_valid(mdp);
  require_valid(pi, mdp);
  const std::size_t ns = mdp.n_states;
  const std::size_t na = mdp.n_actions;
  std::vector<std::vector<double>> initial(ns, std::vector<double>(2 * na));
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t a = 0; a < na; ++a) {
      initial[s][a] = mdp.r(a, s);
      initial[s][na + a] = pi(s, a);
    }
  if (audit) *audit = RefinementAudit{"forward", {}, 0};
  std::vector<std::size_t> split;
  Partition part = split_by_signature(Partition::single_block(ns), initial, tol, &split);
  if (audit) audit->rounds.push_back({0, 1, part.n_blocks(), split});
  auto signature = [&](const Partition& p) {
    const std::size_t nb = p.n_blocks();
    std::vector<std::vector<double>> sig(ns, std::vector<double>(na * nb, 0.0));
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t a = 0; a < na; ++a) {
        const double* row = mdp.row(s, a);
        for (std::size_t n = 0; n < ns; ++n) sig[s][a * nb + p[n]] += row[n];
      }
    return sig;
  };
  return detail::refine_to_fixpoint(std::move(part), signature, tol, audit);
}

/// Coarsest backward-model-irrelevant partition, from precomputed ratio and
/// reversed kernel.
inline Partition coarsest_backward(const Matrix& rho, const BackwardKernel& kernel, double tol,
                                   RefinementAudit* audit = nullptr) {
  const std::size_t ns = kernel.n_states;
  const std::size_t na = kernel.n_actions;
  std::vector<std::vector<double>> initial(ns, std::vector<double>(na));
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t a = 0; a < na; ++a)
      initial[s][a] = rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s));
  if (audit) *audit = RefinementAudit{"backward", {}, 0};
  std::vector<std::size_t> split;
  Partition part = split_by_signature(Partition::single_block(ns), initial, tol, &split);
  if (audit) audit->rounds.push_back({0, 1, part.n_blocks(), split});
  // The refined variable is the conditioning state s'; aggregation runs over
  // the blocks of s, so signatures change whenever the partition does.
  auto signature = [&](const Partition& p) {
    std::vector<std::vector<double>> sig(ns);
    for (std::size_t next = 0; next < ns; ++next)
      detail::aggregate(
          p, na, ns, [&](std::size_t a, std::size_t s) { return kernel(next, a, s); },
          sig[next]);
    return sig;
  };
  return detail::refine_to_fixpoint(std::move(part), signature, tol, audit);
}

inline Partition coarsest_backward(const MdpModel& mdp, const PolicyTable& pi,
                                   const PolicyTable& b, double tol,
                                   RefinementAudit* audit = nullptr) {
  require_valid(mdp);
  require_valid(pi, mdp);
  require_valid(b, mdp);
  return coarsest_backward(is_ratio(pi, b), backward_kernel(mdp, b), tol, audit);
}

// ---------------------------------------------------------------------------
// Quotients

struct QuotientModel {
  MdpModel model;
  PolicyTable pi;
  PolicyTable b;
  Matrix weights;  // (n_blocks, n_states): P(S = s | phi(S) = x) under p_inf
};

/// Abstract MDP over the blocks of `part`, with within-block weights taken
/// from the behavior stationary distribution.
inline QuotientModel quotient_mdp(const MdpModel& mdp, const Partition& part,
                                  const PolicyTable& pi, const PolicyTable& b,
                                  const Vector& p_inf) {
  detail::require_size(part, mdp.n_states, "quotient_mdp");
  const std::size_t nb = part.n_blocks();
  const std::size_t na = mdp.n_actions;
  const auto nbi = static_cast<Eigen::Index>(nb);
  Vector mass = Vector::Zero(nbi);
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    mass(static_cast<Eigen::Index>(part[s])) += p_inf(static_cast<Eigen::Index>(s));
  for (Eigen::Index x = 0; x < nbi; ++x)
    if (!(mass(x) > 0.0))
      throw ChainStructureError("quotient_mdp: block " + std::to_string(x) +
                                " has zero stationary mass");

  QuotientModel q;
  q.weights = Matrix::Zero(nbi, static_cast<Eigen::Index>(mdp.n_states));
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const auto x = static_cast<Eigen::Index>(part[s]);
    q.weights(x, static_cast<Eigen::Index>(s)) = p_inf(static_cast<Eigen::Index>(s)) / mass(x);
  }
  q.model = MdpModel::zeros(nb, na, mdp.gamma);
  q.model.reward_noise_std = mdp.reward_noise_std;
  q.pi.probs = Matrix::Zero(nbi, static_cast<Eigen::Index>(na));
  q.b.probs = Matrix::Zero(nbi, static_cast<Eigen::Index>(na));
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const std::size_t x = part[s];
    const double w = q.weights(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(s));
    q.model.initial(static_cast<Eigen::Index>(x)) += mdp.initial(static_cast<Eigen::Index>(s));
    if (w == 0.0) continue;
    for (std::size_t a = 0; a < na; ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      q.model.reward(ai, static_cast<Eigen::Index>(x)) += w * mdp.r(a, s);
      q.pi.probs(static_cast<Eigen::Index>(x), ai) += w * pi(s, a);
      q.b.probs(static_cast<Eigen::Index>(x), ai) += w * b(s, a);
      const double* row = mdp.row(s, a);
      for (std::size_t n = 0; n < mdp.n_states; ++n) q.model.p(x, a, part[n]) += w * row[n];
    }
  }
  // The weights sum to one only up to rounding; renormalize so rows stay in [0,1].
  for (Eigen::Index x = 0; x < nbi; ++x) {
    q.pi.probs.row(x) /= q.pi.probs.row(x).sum();
    q.b.probs.row(x) /= q.b.probs.row(x).sum();
    for (std::size_t a = 0; a < na; ++a) {
      double* row = q.model.transition.data() + q.model.offset(static_cast<std::size_t>(x), a);
      const double total = std::accumulate(row, row + nb, 0.0);
      for (std::size_t n = 0; n < nb; ++n) row[n] /= total;
    }
  }
  return q;
}

inline QuotientModel quotient_mdp(const MdpModel& mdp, const Partition& part,
                                  const PolicyTable& pi, const PolicyTable& b) {
  require_valid(b, mdp);
  return quotient_mdp(mdp, part, pi, b, stationary_distribution(mdp, b));
}

struct TwoStepResult {
  Partition forward;   // over ground states
  Partition backward;  // over the blocks of `forward`
  Partition composed;  // over ground states
  QuotientModel first;
  QuotientModel final;
  std::vector<std::size_t> block_counts;  // |S|, |X1|, |X2|, ...
  std::vector<RefinementAudit> audit;
};

/// Forward abstraction on the ground MDP, then backward abstraction on the
/// forward quotient. rounds > 1 keeps alternating; only one round carries
/// the validity guarantees.
inline TwoStepResult two_step(const MdpModel& mdp, const PolicyTable& pi,
                              const PolicyTable& b, double tol, std::size_t rounds = 1) {
  if (rounds == 0) throw InvalidInput("two_step: rounds must be at least 1");
  TwoStepResult out;
  out.block_counts.push_back(mdp.n_states);
  MdpModel current = mdp;
  PolicyTable cur_pi = pi;
  PolicyTable cur_b = b;
  Partition composed = Partition::identity(mdp.n_states);
  for (std::size_t r = 0; r < rounds; ++r) {
    RefinementAudit fwd_audit;
    const Partition fwd = coarsest_forward(current, cur_pi, tol, &fwd_audit);
    QuotientModel first = quotient_mdp(current, fwd, cur_pi, cur_b);
    RefinementAudit bwd_audit;
    const Partition bwd =
        coarsest_backward(first.model, first.pi, first.b, tol, &bwd_audit);
    QuotientModel final = quotient_mdp(first.model, bwd, first.pi, first.b);
    composed = compose(compose(bwd, fwd), composed);
    out.block_counts.push_back(fwd.n_blocks());
    out.block_counts.push_back(bwd.n_blocks());
    out.audit.push_back(std::move(fwd_audit));
    out.audit.push_back(std::move(bwd_audit));
    if (r == 0) {
      out.forward = fwd;
      out.backward = bwd;
      out.first = first;
    }
    current = final.model;
    cur_pi = final.pi;
    cur_b = final.b;
    out.final = std::move(final);
  }
  out.composed = std::move(composed);
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracle

enum class Condition { Forward, Backward };

/// Fewest-block partition satisfying `condition`, found by enumerating every
/// set partition (restricted growth strings, lexicographic order, so ties go
/// to the lexicographically smallest block_of array).
inline Partition brute_force_coarsest(const MdpModel& mdp, const PolicyTable& pi,
                                      const PolicyTable& b, Condition condition, double tol,
                                      std::size_t limit = 8) {
  const std::size_t n = mdp.n_states;
  if (n > limit)
    throw InvalidInput("brute_force_coarsest: " + std::to_string(n) +
                       " states exceeds the enumeration limit " + std::to_string(limit));
  std::function<bool(const Partition&)> satisfied;
  Matrix rho;
  BackwardKernel kernel;
  if (condition == Condition::Forward) {
    satisfied = [&](const Partition& p) {
      return check_forward_irrelevance(p, mdp, pi, tol).holds;
    };
  } else {
    rho = is_ratio(pi, b);
    kernel = backward_kernel(mdp, b);
    satisfied = [&](const Partition& p) {
      return check_backward_model_irrelevance(p, rho, kernel, tol).holds;
    };
  }
  std::vector<std::size_t> rgs(n, 0);
  std::vector<std::size_t> prefix_max(n, 0);  // max of rgs[0..i]
  std::optional<Partition> best;
  for (;;) {
    const std::size_t blocks = prefix_max[n - 1] + 1;
    if (!best || blocks < best->n_blocks()) {
      Partition candidate(rgs);
      if (satisfied(candidate)) best = std::move(candidate);
    }
    // Advance to the next restricted growth string.
    std::size_t i = n - 1;
    while (i > 0 && rgs[i] == prefix_max[i - 1] + 1) --i;
    if (i == 0) break;
    ++rgs[i];
    prefix_max[i] = std::max(prefix_max[i - 1], rgs[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      rgs[j] = 0;
      prefix_max[j] = prefix_max[i];
    }
  }
  return *best;  // the identity partition always qualifies
}

}  // namespace absope
