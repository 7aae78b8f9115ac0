#pragma once

// Tabular off-policy estimators (FQE, SIS, MIS, DRL) over any partition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absope/error.hpp"
#include "absope/mdp.hpp"
#include "absope/partition.hpp"
#include "absope/solver.hpp"

namespace absope {

struct EstimateResult {
  std::string method;
  std::string abstraction;
  double estimate = 0.0;
  std::map<std::string, double> diagnostics;
  Notes notes;
};

struct EstimatorConfig {
  double smoothing = 0.5;
  /// Ground behavior policy; when set, SIS uses it instead of estimating b.
  std::optional<PolicyTable> known_behavior;
  std::size_t fqe_max_iter = 100'000;
  double fqe_tol = 1e-10;
};

inline std::string describe(const Partition& part) {
  bool identity = true;
  for (std::size_t s = 0; s < part.size(); ++s) identity = identity && part[s] == s;
  if (identity) return "none";
  return "partition(" + std::to_string(part.n_blocks()) + " blocks over " +
         std::to_string(part.size()) + " states)";
}

inline void validate_dataset(const Dataset& data, std::size_t n_states, std::size_t n_actions) {
  if (data.empty()) throw InvalidInput("dataset is empty");
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& tr = data.trajectories[i];
    if (tr.empty()) throw InvalidInput("trajectory " + std::to_string(i) + " is empty");
    if (data.horizon > 0 && tr.size() > data.horizon)
      throw InvalidInput("trajectory " + std::to_string(i) + " is longer than the horizon");
    for (std::size_t t = 0; t < tr.size(); ++t)
      if (tr[t].s >= n_states || tr[t].a >= n_actions || !std::isfinite(tr[t].r))
        throw InvalidInput("record (traj " + std::to_string(i) + ", t " + std::to_string(t) +
                           ") is out of range");
  }
}

namespace detail {

inline void check_estimation_inputs(const Dataset& data, const PolicyTable& pi,
                                    const Partition& part, double gamma) {
  if (part.size() != pi.n_states())
    throw InvalidInput("partition covers " + std::to_string(part.size()) +
                       " states but the policy has " + std::to_string(pi.n_states()));
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("discount out of range");
  const auto report = validate_policy(pi, pi.n_states(), pi.n_actions());
  if (!report.ok()) throw InvalidInput("invalid target policy:\n" + report.to_string());
  validate_dataset(data, pi.n_states(), pi.n_actions());
}

inline double effective_sample_size(const std::vector<double>& weights) {
  double sum = 0.0;
  double sq = 0.0;
  for (double w : weights) {
    sum += w;
    sq += w * w;
  }
  return sq > 0.0 ? sum * sum / sq : 0.0;
}

// Q_hat(a, phi(s)) averaged under pi at ground state s.
inline double next_value(const PolicyTable& pi, const Partition& part, const Matrix& q,
                         std::size_t s) {
  double v = 0.0;
  for (std::size_t a = 0; a < pi.n_actions(); ++a)
    v += pi(s, a) * q(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(part[s]));
  return v;
}

inline double initial_value(const Dataset& data, const PolicyTable& pi, const Partition& part,
                            const Matrix& q) {
  double acc = 0.0;
  for (const auto& tr : data.trajectories) acc += next_value(pi, part, q, tr.front().s);
  return acc / static_cast<double>(data.trajectories.size());
}

inline Dataset subset(const Dataset& data, std::size_t fold, std::size_t n_folds) {
  Dataset out;
  out.horizon = data.horizon;
  out.seed = data.seed;
  for (std::size_t i = fold; i < data.trajectories.size(); i += n_folds)
    out.trajectories.push_back(data.trajectories[i]);
  return out;
}

}  // namespace detail

/// Pooled behavior estimate over blocks with add-lambda smoothing. Blocks
/// never visited get a uniform row and are listed in `unvisited`.
inline PolicyTable estimate_behavior(const Dataset& data, const Partition& part,
                                     std::size_t n_actions, double smoothing = 0.5,
                                     std::vector<std::size_t>* unvisited = nullptr) {
  if (data.empty()) throw InvalidInput("estimate_behavior: dataset is empty");
  if (!(smoothing >= 0.0)) throw InvalidInput("smoothing must be nonnegative");
  const auto nb = static_cast<Eigen::Index>(part.n_blocks());
  const auto na = static_cast<Eigen::Index>(n_actions);
  Matrix counts = Matrix::Zero(nb, na);
  for (const auto& tr : data.trajectories)
    for (const Step& st : tr) {
      if (st.s >= part.size() || st.a >= n_actions)
        throw InvalidInput("estimate_behavior: record out of range");
      counts(static_cast<Eigen::Index>(part[st.s]), static_cast<Eigen::Index>(st.a)) += 1.0;
    }
  PolicyTable b{Matrix(nb, na)};
  for (Eigen::Index x = 0; x < nb; ++x) {
    const double total = counts.row(x).sum();
    if (total == 0.0) {
      b.probs.row(x).setConstant(1.0 / static_cast<double>(na));
      if (unvisited) unvisited->push_back(static_cast<std::size_t>(x));
      continue;
    }
    b.probs.row(x) =
        (counts.row(x).array() + smoothing) / (total + smoothing * static_cast<double>(na));
  }
  return b;
}

/// Largest gap between per-step and pooled behavior estimates, over cells
/// with at least `min_count` visits at that step.
inline double behavior_drift(const Dataset& data, const Partition& part, std::size_t n_actions,
                             double min_count = 20.0) {
  const PolicyTable pooled = estimate_behavior(data, part, n_actions, 0.0);
  std::size_t horizon = 0;
  for (const auto& tr : data.trajectories) horizon = std::max(horizon, tr.size());
  double worst = 0.0;
  const auto nb = static_cast<Eigen::Index>(part.n_blocks());
  for (std::size_t t = 0; t < horizon; ++t) {
    Matrix counts = Matrix::Zero(nb, static_cast<Eigen::Index>(n_actions));
    for (const auto& tr : data.trajectories)
      if (t < tr.size())
        counts(static_cast<Eigen::Index>(part[tr[t].s]), static_cast<Eigen::Index>(tr[t].a)) +=
            1.0;
    for (Eigen::Index x = 0; x < nb; ++x) {
      const double total = counts.row(x).sum();
      if (total < min_count) continue;
      for (Eigen::Index a = 0; a < counts.cols(); ++a)
        worst = std::max(worst, std::abs(counts(x, a) / total - pooled.probs(x, a)));
    }
  }
  return worst;
}

struct EmpiricalModel {
  MdpModel model;
  Matrix visits;  // (n_actions, n_blocks) transition counts
  std::size_t unvisited_pairs = 0;
};

/// Maximum-likelihood abstract MDP with add-lambda smoothing on transitions.
/// Rewards are per-cell means (0 when unvisited); the initial distribution is
/// the empirical law of first states.
inline EmpiricalModel empirical_model(const Dataset& data, const Partition& part,
                                      std::size_t n_actions, double gamma,
                                      double smoothing = 0.5) {
  if (data.empty()) throw InvalidInput("empirical_mdp: dataset is empty");
  if (!(smoothing >= 0.0)) throw InvalidInput("smoothing must be nonnegative");
  const std::size_t nb = part.n_blocks();
  EmpiricalModel out;
  out.model = MdpModel::zeros(nb, n_actions, gamma);
  out.visits = Matrix::Zero(static_cast<Eigen::Index>(n_actions), static_cast<Eigen::Index>(nb));
  Matrix reward_count = out.visits;
  for (const auto& tr : data.trajectories) {
    out.model.initial(static_cast<Eigen::Index>(part[tr.front().s])) += 1.0;
    for (std::size_t t = 0; t < tr.size(); ++t) {
      const std::size_t x = part[tr[t].s];
      const auto ai = static_cast<Eigen::Index>(tr[t].a);
      const auto xi = static_cast<Eigen::Index>(x);
      out.model.reward(ai, xi) += tr[t].r;
      reward_count(ai, xi) += 1.0;
      if (t + 1 < tr.size()) {
        out.model.p(x, tr[t].a, part[tr[t + 1].s]) += 1.0;
        out.visits(ai, xi) += 1.0;
      }
    }
  }
  out.model.initial /= out.model.initial.sum();
  for (std::size_t x = 0; x < nb; ++x)
    for (std::size_t a = 0; a < n_actions; ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      const auto xi = static_cast<Eigen::Index>(x);
      if (reward_count(ai, xi) > 0.0) out.model.reward(ai, xi) /= reward_count(ai, xi);
      const double total = out.visits(ai, xi);
      if (total == 0.0) ++out.unvisited_pairs;
      const double denom = total + smoothing * static_cast<double>(nb);
      for (std::size_t y = 0; y < nb; ++y) {
        double& cell = out.model.p(x, a, y);
        cell = denom > 0.0 ? (cell + smoothing) / denom : 1.0 / static_cast<double>(nb);
      }
    }
  return out;
}

inline MdpModel empirical_mdp(const Dataset& data, const Partition& part,
                              std::size_t n_actions, double gamma, double smoothing = 0.5) {
  return empirical_model(data, part, n_actions, gamma, smoothing).model;
}

// ---------------------------------------------------------------------------
// FQE

struct FqeFit {
  Matrix q;  // (n_actions, n_blocks)
  std::size_t iterations = 0;
  double last_step = 0.0;
  std::size_t unvisited_pairs = 0;
};

/// Tabular fitted-Q iteration on blocks. The bootstrap target averages
/// Q(., phi(s')) under the ground pi at the observed s'.
inline FqeFit fit_q(const Dataset& data, const PolicyTable& pi, const Partition& part,
                    double gamma, const EstimatorConfig& cfg = {}) {
  const std::size_t na = pi.n_actions();
  const std::size_t nb = part.n_blocks();
  const std::size_t cells = na * nb;
  std::vector<double> count(cells, 0.0);
  std::vector<double> reward_sum(cells, 0.0);
  std::vector<std::pair<std::size_t, std::size_t>> moves;  // (cell, next ground state)
  for (const auto& tr : data.trajectories)
    for (std::size_t t = 0; t + 1 < tr.size(); ++t) {
      const std::size_t cell = part[tr[t].s] * na + tr[t].a;
      count[cell] += 1.0;
      reward_sum[cell] += tr[t].r;
      moves.emplace_back(cell, tr[t + 1].s);
    }
  std::sort(moves.begin(), moves.end());
  // Compressed per-cell successor counts.
  std::vector<std::size_t> next_state;
  std::vector<double> next_count;
  std::vector<std::size_t> start(cells + 1, 0);
  for (std::size_t i = 0; i < moves.size(); ++i) {
    if (i > 0 && moves[i] == moves[i - 1]) {
      next_count.back() += 1.0;
      continue;
    }
    next_state.push_back(moves[i].second);
    next_count.push_back(1.0);
    ++start[moves[i].first + 1];
  }
  for (std::size_t c = 1; c <= cells; ++c) start[c] += start[c - 1];

  FqeFit fit;
  fit.q = Matrix::Zero(static_cast<Eigen::Index>(na), static_cast<Eigen::Index>(nb));
  for (double c : count) fit.unvisited_pairs += c == 0.0 ? 1 : 0;
  std::vector<double> v(pi.n_states());
  for (std::size_t it = 1; it <= cfg.fqe_max_iter; ++it) {
    for (std::size_t s = 0; s < pi.n_states(); ++s) v[s] = detail::next_value(pi, part, fit.q, s);
    Matrix next = fit.q;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      if (count[cell] == 0.0) continue;
      double acc = 0.0;
      for (std::size_t k = start[cell]; k < start[cell + 1]; ++k)
        acc += next_count[k] * v[next_state[k]];
      next(static_cast<Eigen::Index>(cell % na), static_cast<Eigen::Index>(cell / na)) =
          (reward_sum[cell] + gamma * acc) / count[cell];
    }
    fit.last_step = (next - fit.q).cwiseAbs().maxCoeff();
    fit.q = std::move(next);
    fit.iterations = it;
    if (fit.last_step <= cfg.fqe_tol) return fit;
  }
  throw ConvergenceError("fqe: no convergence to " + std::to_string(cfg.fqe_tol) + " within " +
                         std::to_string(cfg.fqe_max_iter) + " iterations");
}

inline EstimateResult fqe(const Dataset& data, const PolicyTable& pi, const Partition& part,
                          double gamma, const EstimatorConfig& cfg = {}) {
  detail::check_estimation_inputs(data, pi, part, gamma);
  const FqeFit fit = fit_q(data, pi, part, gamma, cfg);
  EstimateResult out{"fqe", describe(part), detail::initial_value(data, pi, part, fit.q), {}, {}};
  out.diagnostics["iterations"] = static_cast<double>(fit.iterations);
  out.diagnostics["last_step"] = fit.last_step;
  out.diagnostics["unvisited_pairs"] = static_cast<double>(fit.unvisited_pairs);
  if (fit.unvisited_pairs > 0)
    out.notes.push_back(std::to_string(fit.unvisited_pairs) +
                        " (block, action) cells have no transitions; their Q stays 0");
  return out;
}

// ---------------------------------------------------------------------------
// SIS

inline EstimateResult sis(const Dataset& data, const PolicyTable& pi, const Partition& part,
                          double gamma, const EstimatorConfig& cfg = {}) {
  detail::check_estimation_inputs(data, pi, part, gamma);
  EstimateResult out{"sis", describe(part), 0.0, {}, {}};
  std::vector<std::size_t> unvisited;
  const bool known = cfg.known_behavior.has_value();
  if (known) {
    const auto report = validate_policy(*cfg.known_behavior, pi.n_states(), pi.n_actions());
    if (!report.ok()) throw InvalidInput("invalid behavior policy:\n" + report.to_string());
    out.notes.push_back("known ground behavior policy used for ratios");
  }
  const PolicyTable b_hat =
      known ? PolicyTable{} : estimate_behavior(data, part, pi.n_actions(), cfg.smoothing, &unvisited);
  std::vector<double> final_weights;
  double total = 0.0;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& tr = data.trajectories[i];
    double weight = 1.0;
    double discount = 1.0;
    for (std::size_t t = 0; t < tr.size(); ++t) {
      const Step& st = tr[t];
      const double num = pi(st.s, st.a);
      const double den = known ? (*cfg.known_behavior)(st.s, st.a) : b_hat(part[st.s], st.a);
      if (den > 0.0) {
        weight *= num / den;
      } else if (num > 0.0) {
        throw CoverageError("sis: behavior probability 0 for realized (a=" +
                            std::to_string(st.a) + ", s=" + std::to_string(st.s) +
                            ") in trajectory " + std::to_string(i));
      } else {
        weight = 0.0;
      }
      total += discount * weight * st.r;
      discount *= gamma;
    }
    final_weights.push_back(weight);
  }
  out.estimate = total / static_cast<double>(data.trajectories.size());
  out.diagnostics["ess"] = detail::effective_sample_size(final_weights);
  out.diagnostics["max_weight"] = *std::max_element(final_weights.begin(), final_weights.end());
  out.diagnostics["unvisited_blocks"] = static_cast<double>(unvisited.size());
  if (!known) out.diagnostics["behavior_drift"] = behavior_drift(data, part, pi.n_actions());
  return out;
}

// ---------------------------------------------------------------------------
// MIS

struct MisFit {
  Matrix w;  // (n_actions, n_blocks)
  EmpiricalModel empirical;
  std::size_t unvisited_blocks = 0;
  Notes notes;
};

/// Target policy projected on blocks, weighted by empirical state frequency.
inline PolicyTable project_policy(const Dataset& data, const PolicyTable& pi,
                                  const Partition& part) {
  const auto nb = static_cast<Eigen::Index>(part.n_blocks());
  const auto na = static_cast<Eigen::Index>(pi.n_actions());
  std::vector<double> freq(pi.n_states(), 0.0);
  for (const auto& tr : data.trajectories)
    for (const Step& st : tr) freq[st.s] += 1.0;
  PolicyTable out{Matrix::Zero(nb, na)};
  Vector mass = Vector::Zero(nb);
  for (std::size_t s = 0; s < pi.n_states(); ++s) {
    const auto x = static_cast<Eigen::Index>(part[s]);
    out.probs.row(x) += freq[s] * pi.probs.row(static_cast<Eigen::Index>(s));
    mass(x) += freq[s];
  }
  // Unvisited blocks fall back to the plain average over their states.
  for (std::size_t s = 0; s < pi.n_states(); ++s) {
    const auto x = static_cast<Eigen::Index>(part[s]);
    if (freq[s] == 0.0 && mass(x) <= 0.0) out.probs.row(x) += pi.probs.row(static_cast<Eigen::Index>(s));
  }
  for (Eigen::Index x = 0; x < nb; ++x) out.probs.row(x) /= out.probs.row(x).sum();
  return out;
}

inline MisFit fit_w(const Dataset& data, const PolicyTable& pi, const Partition& part,
                    double gamma, const EstimatorConfig& cfg = {}) {
  MisFit fit;
  fit.empirical = empirical_model(data, part, pi.n_actions(), gamma, cfg.smoothing);
  std::vector<std::size_t> unvisited;
  const PolicyTable b_hat = estimate_behavior(data, part, pi.n_actions(), cfg.smoothing, &unvisited);
  fit.unvisited_blocks = unvisited.size();
  const PolicyTable pi_hat = project_policy(data, pi, part);
  const Vector p_inf = stationary_distribution(fit.empirical.model, b_hat);
  fit.w = mis_ratio(discounted_visitation(fit.empirical.model, pi_hat), p_inf, b_hat, &fit.notes);
  return fit;
}

inline EstimateResult mis(const Dataset& data, const PolicyTable& pi, const Partition& part,
                          double gamma, const EstimatorConfig& cfg = {}) {
  detail::check_estimation_inputs(data, pi, part, gamma);
  MisFit fit = fit_w(data, pi, part, gamma, cfg);
  std::vector<double> weights;
  double acc = 0.0;
  for (const auto& tr : data.trajectories)
    for (const Step& st : tr) {
      const double w =
          fit.w(static_cast<Eigen::Index>(st.a), static_cast<Eigen::Index>(part[st.s]));
      weights.push_back(w);
      acc += w * st.r;
    }
  EstimateResult out{"mis", describe(part),
                     acc / static_cast<double>(weights.size()) / (1.0 - gamma), {},
                     std::move(fit.notes)};
  out.diagnostics["ess"] = detail::effective_sample_size(weights);
  out.diagnostics["max_weight"] = *std::max_element(weights.begin(), weights.end());
  out.diagnostics["unvisited_pairs"] = static_cast<double>(fit.empirical.unvisited_pairs);
  out.diagnostics["unvisited_blocks"] = static_cast<double>(fit.unvisited_blocks);
  return out;
}

// ---------------------------------------------------------------------------
// DRL

/// Evaluates the doubly robust estimating function with given nuisances
/// Q(a, x) and w(a, x), without refitting.
inline EstimateResult drl_with_nuisances(const Dataset& data, const PolicyTable& pi,
                                         const Partition& part, double gamma, const Matrix& q,
                                         const Matrix& w) {
  detail::check_estimation_inputs(data, pi, part, gamma);
  const auto nb = static_cast<Eigen::Index>(part.n_blocks());
  const auto na = static_cast<Eigen::Index>(pi.n_actions());
  if (q.rows() != na || q.cols() != nb || w.rows() != na || w.cols() != nb)
    throw InvalidInput("drl: nuisance tables must have shape (n_actions, n_blocks)");
  double correction = 0.0;
  std::size_t n_moves = 0;
  for (const auto& tr : data.trajectories)
    for (std::size_t t = 0; t + 1 < tr.size(); ++t) {
      const auto a = static_cast<Eigen::Index>(tr[t].a);
      const auto x = static_cast<Eigen::Index>(part[tr[t].s]);
      const double td =
          tr[t].r + gamma * detail::next_value(pi, part, q, tr[t + 1].s) - q(a, x);
      correction += w(a, x) * td;
      ++n_moves;
    }
  if (n_moves == 0) throw InvalidInput("drl: dataset has no transitions");
  EstimateResult out{"drl", describe(part), 0.0, {}, {}};
  const double base = detail::initial_value(data, pi, part, q);
  out.estimate = base + correction / static_cast<double>(n_moves) / (1.0 - gamma);
  out.diagnostics["direct_term"] = base;
  out.diagnostics["transitions"] = static_cast<double>(n_moves);
  return out;
}

/// DRL with FQE and MIS nuisances, cross-fitted over two folds split by
/// trajectory parity.
inline EstimateResult drl(const Dataset& data, const PolicyTable& pi, const Partition& part,
                          double gamma, const EstimatorConfig& cfg = {}) {
  detail::check_estimation_inputs(data, pi, part, gamma);
  EstimateResult out{"drl", describe(part), 0.0, {}, {}};
  if (data.trajectories.size() < 2) {
    out.notes.push_back("fewer than 2 trajectories; nuisances fitted on the full data");
    const FqeFit q = fit_q(data, pi, part, gamma, cfg);
    const MisFit w = fit_w(data, pi, part, gamma, cfg);
    out.estimate = drl_with_nuisances(data, pi, part, gamma, q.q, w.w).estimate;
    return out;
  }
  constexpr std::size_t kFolds = 2;
  double total = 0.0;
  for (std::size_t fold = 0; fold < kFolds; ++fold) {
    const Dataset eval = detail::subset(data, fold, kFolds);
    const Dataset train = detail::subset(data, (fold + 1) % kFolds, kFolds);
    const FqeFit q = fit_q(train, pi, part, gamma, cfg);
    MisFit w = fit_w(train, pi, part, gamma, cfg);
    const double est = drl_with_nuisances(eval, pi, part, gamma, q.q, w.w).estimate;
    out.diagnostics["fold" + std::to_string(fold) + "_estimate"] = est;
    for (auto& note : w.notes) out.notes.push_back(std::move(note));
    total += est;
  }
  out.estimate = total / static_cast<double>(kFolds);
  return out;
}

enum class Method { Fqe, Sis, Mis, Drl };

inline Method parse_method(const std::string& name) {
  if (name == "fqe") return Method::Fqe;
  if (name == "sis") return Method::Sis;
  if (name == "mis") return Method::Mis;
  if (name == "drl") return Method::Drl;
  throw InvalidInput("unknown method '" + name + "' (expected fqe, sis, mis or drl)");
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Fqe: return "fqe";
    case Method::Sis: return "sis";
    case Method::Mis: return "mis";
    case Method::Drl: return "drl";
  }
  return "unknown";
}

inline EstimateResult estimate(Method method, const Dataset& data, const PolicyTable& pi,
                               const Partition& part, double gamma,
                               const EstimatorConfig& cfg = {}) {
  switch (method) {
    case Method::Fqe: return fqe(data, pi, part, gamma, cfg);
    case Method::Sis: return sis(data, pi, part, gamma, cfg);
    case Method::Mis: return mis(data, pi, part, gamma, cfg);
    case Method::Drl: return drl(data, pi, part, gamma, cfg);
  }
  throw InvalidInput("unknown method");
}

}  // namespace absope
