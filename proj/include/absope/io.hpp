#pragma once

// JSON and NDJSON serialization. Every loader validates what it reads.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "absope/abstraction.hpp"
#include "absope/error.hpp"
#include "absope/estimators.hpp"
#include "absope/mdp.hpp"
#include "absope/partition.hpp"
#include "absope/solver.hpp"

namespace absope {

using Json = nlohmann::json;

namespace detail {

inline Json matrix_rows(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from(const Json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw InvalidInput(std::string(what) + ": expected a nonempty 2-level array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw InvalidInput(std::string(what) + ": ragged row " + std::to_string(i));
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << text;
  if (!out) throw InvalidInput("write failed for " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MDP and policies

inline Json to_json(const MdpModel& mdp) {
  Json transition = Json::array();
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    Json per_action = Json::array();
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      per_action.push_back(std::vector<double>(mdp.row(s, a), mdp.row(s, a) + mdp.n_states));
    transition.push_back(std::move(per_action));
  }
  return Json{{"n_states", mdp.n_states},
              {"n_actions", mdp.n_actions},
              {"gamma", mdp.gamma},
              {"transition", std::move(transition)},
              {"reward", detail::matrix_rows(mdp.reward)},
              {"reward_noise_std", mdp.reward_noise_std},
              {"initial", detail::vector_json(mdp.initial)}};
}

inline MdpModel mdp_from_json(const Json& j) {
  MdpModel m;
  try {
    const auto ns = j.at("n_states").get<std::size_t>();
    const auto na = j.at("n_actions").get<std::size_t>();
    m = MdpModel::zeros(ns, na, j.at("gamma").get<double>());
    m.reward_noise_std = j.value("reward_noise_std", 0.0);
    const Json& t = j.at("transition");
    if (!t.is_array() || t.size() != ns) throw InvalidInput("transition: expected n_states rows");
    for (std::size_t s = 0; s < ns; ++s) {
      if (!t[s].is_array() || t[s].size() != na)
        throw InvalidInput("transition[" + std::to_string(s) + "]: expected n_actions rows");
      for (std::size_t a = 0; a < na; ++a) {
        if (!t[s][a].is_array() || t[s][a].size() != ns)
          throw InvalidInput("transition[" + std::to_string(s) + "][" + std::to_string(a) +
                             "]: expected n_states entries");
        for (std::size_t n = 0; n < ns; ++n) m.p(s, a, n) = t[s][a][n].get<double>();
      }
    }
    m.reward = detail::matrix_from(j.at("reward"), "reward");
    const Json& init = j.at("initial");
    if (!init.is_array() || init.size() != ns) throw InvalidInput("initial: expected n_states entries");
    for (std::size_t s = 0; s < ns; ++s) m.initial(static_cast<Eigen::Index>(s)) = init[s].get<double>();
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("MDP file: ") + e.what());
  }
  require_valid(m);
  return m;
}

inline Json to_json(const PolicyTable& pi) { return Json{{"probs", detail::matrix_rows(pi.probs)}}; }

inline PolicyTable policy_from_json(const Json& j) {
  try {
    PolicyTable pi{detail::matrix_from(j.at("probs"), "probs")};
    const auto report = validate_policy(pi, pi.n_states(), pi.n_actions());
    if (!report.ok()) throw InvalidInput("invalid policy:\n" + report.to_string());
    return pi;
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("policy file: ") + e.what());
  }
}

inline MdpModel load_mdp(const std::string& path) { return mdp_from_json(detail::read_json_file(path)); }
inline PolicyTable load_policy(const std::string& path) {
  return policy_from_json(detail::read_json_file(path));
}
inline void save_json(const std::string& path, const Json& j) {
  detail::write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Partitions

inline Json to_json(const Partition& part) { return Json(part.block_of()); }

inline Partition partition_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidInput("partition file: expected an array block_of");
  try {
    return Partition(j.get<std::vector<std::size_t>>());
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("partition file: ") + e.what());
  }
}

inline Partition load_partition(const std::string& path) {
  return partition_from_json(detail::read_json_file(path));
}

inline Json to_json(const RefinementAudit& audit) {
  Json rounds = Json::array();
  for (const auto& r : audit.rounds)
    rounds.push_back({{"round", r.round},
                      {"blocks_before", r.blocks_before},
                      {"blocks_after", r.blocks_after},
                      {"split_blocks", r.split_blocks}});
  return Json{{"mode", audit.mode}, {"rounds", std::move(rounds)}, {"final_blocks", audit.final_blocks}};
}

inline Json to_json(const IrrelevanceReport& r) {
  Json out{{"condition", r.condition}, {"holds", r.holds}, {"worst", r.worst}, {"tolerance", r.tolerance}};
  if (r.witness) {
    Json w{{"s1", r.witness->first}, {"s2", r.witness->second}, {"action", r.witness->action}};
    if (r.witness->block) w["block"] = *r.witness->block;
    out["witness"] = std::move(w);
  }
  if (!r.parts.empty()) {
    out["parts"] = Json::array();
    for (const auto& p : r.parts) out["parts"].push_back(to_json(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets: one JSON object per line. An optional first line
// {"meta":{"horizon":T,"seed":S}} carries dataset metadata; every other line
// is a record {"traj","t","s","a","r"} with t counted from 0.

inline void write_dataset(std::ostream& out, const Dataset& data) {
  out << Json{{"meta", {{"horizon", data.horizon}, {"seed", data.seed}}}}.dump() << "\n";
  for (std::size_t i = 0; i < data.trajectories.size(); ++i)
    for (std::size_t t = 0; t < data.trajectories[i].size(); ++t) {
      const Step& st = data.trajectories[i][t];
      out << Json{{"traj", i}, {"t", t}, {"s", st.s}, {"a", st.a}, {"r", st.r}}.dump() << "\n";
    }
}

inline Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::map<std::size_t, std::map<std::size_t, Step>> records;
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      if (j.contains("meta")) {
        data.horizon = j["meta"].value("horizon", std::size_t{0});
        data.seed = j["meta"].value("seed", std::uint64_t{0});
        have_meta = true;
        continue;
      }
      const auto traj = j.at("traj").get<std::size_t>();
      const auto t = j.at("t").get<std::size_t>();
      const Step st{j.at("s").get<std::size_t>(), j.at("a").get<std::size_t>(), j.at("r").get<double>()};
      if (!records[traj].emplace(t, st).second)
        throw InvalidInput("duplicate record for traj " + std::to_string(traj) + ", t " +
                           std::to_string(t));
    } catch (const Json::exception& e) {
      throw InvalidInput("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::size_t longest = 0;
  for (auto& [traj, steps] : records) {
    Trajectory tr;
    for (auto& [t, st] : steps) {
      if (t != tr.size())
        throw InvalidInput("trajectory " + std::to_string(traj) + " has a gap before t " +
                           std::to_string(t));
      tr.push_back(st);
    }
    longest = std::max(longest, tr.size());
    data.trajectories.push_back(std::move(tr));
  }
  if (!have_meta) data.horizon = longest;
  if (data.trajectories.empty()) throw InvalidInput("dataset has no records");
  return data;
}

inline void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  write_dataset(out, data);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return read_dataset(in);
}

// ---------------------------------------------------------------------------
// Results

inline Json to_json(const SolveCache& c) {
  Json backward = Json::array();
  for (std::size_t next = 0; next < c.backward.n_states; ++next) {
    Json per_action = Json::array();
    for (std::size_t a = 0; a < c.backward.n_actions; ++a) {
      Json row = Json::array();
      for (std::size_t s = 0; s < c.backward.n_states; ++s) row.push_back(c.backward(next, a, s));
      per_action.push_back(std::move(row));
    }
    backward.push_back(std::move(per_action));
  }
  return Json{{"j_pi", c.j_pi},
              {"q", detail::matrix_rows(c.q)},
              {"v", detail::vector_json(c.v)},
              {"rho", detail::matrix_rows(c.rho)},
              {"p_inf", detail::vector_json(c.p_inf)},
              {"d_pi", detail::matrix_rows(c.d_pi)},
              {"w", detail::matrix_rows(c.w)},
              {"backward", std::move(backward)},
              {"period", c.period},
              {"notes", c.notes}};
}

inline Json to_json(const EstimateResult& r) {
  Json diag = Json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = v;
  return Json{{"method", r.method},
              {"abstraction", r.abstraction},
              {"estimate", r.estimate},
              {"diagnostics", std::move(diag)},
              {"notes", r.notes}};
}

}  // namespace absope
