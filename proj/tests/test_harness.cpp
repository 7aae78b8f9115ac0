#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "absope/harness.hpp"

using namespace absope;

namespace {

ExperimentConfig small_config(const std::string& output) {
  ExperimentConfig c;
  c.generator.kind = "toy";
  c.epsilons = {0.2, 0.6};
  c.sizes = {20, 40};
  c.horizon = 10;
  c.methods = {Method::Fqe, Method::Sis, Method::Mis, Method::Drl};
  c.abstractions = {"none", "two-step"};
  c.replications = 3;
  c.base_seed = 5;
  c.output = output;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("absope_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, RejectsEmptyLists) {
  ExperimentConfig c = small_config("x.csv");
  c.methods.clear();
  EXPECT_THROW(validate_config(c), InvalidInput);
  c = small_config("x.csv");
  c.epsilons = {1.5};
  EXPECT_THROW(validate_config(c), InvalidInput);
  c = small_config("x.csv");
  c.abstractions = {"sideways"};
  EXPECT_THROW(validate_config(c), InvalidInput);
}

TEST(Config, ParsesJson) {
  const Json j = Json::parse(R"({"generator": {"kind": "random", "n_states": 4},
      "epsilons": [0.5], "sizes": [10], "methods": ["fqe", "drl"], "seed": 9})");
  const ExperimentConfig c = experiment_config_from_json(j);
  EXPECT_EQ(c.generator.kind, "random");
  EXPECT_EQ(c.generator.n_states, 4u);
  EXPECT_EQ(c.methods.size(), 2u);
  EXPECT_EQ(c.base_seed, 9u);
  EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"epsilons": [0.5], "sizes": [10], "methods": []})")),
               InvalidInput);
}

TEST(Csv, RowRoundTrip) {
  ResultRow r;
  r.epsilon = 0.1;
  r.n = 100;
  r.horizon = 20;
  r.replication = 3;
  r.seed = 123456789012345ull;
  r.method = "mis";
  r.abstraction = "two-step";
  r.blocks = 4;
  r.estimate = 1.0 / 3.0;
  r.oracle_j = -2.5;
  r.error = r.estimate - r.oracle_j;
  r.squared_error = r.error * r.error;
  r.status = "error";
  r.message = "a, b";
  const ResultRow back = row_from_csv(to_csv(r));
  EXPECT_EQ(back.estimate, r.estimate);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(back.abstraction, r.abstraction);
  EXPECT_EQ(back.status, "error");
  EXPECT_EQ(to_csv(back), to_csv(r));
}

TEST(Summary, MseAndMedian) {
  std::vector<ResultRow> rows(3);
  const double errors[] = {1.0, -2.0, 3.0};
  for (int i = 0; i < 3; ++i) {
    rows[i].method = "fqe";
    rows[i].abstraction = "none";
    rows[i].error = errors[i];
    rows[i].squared_error = errors[i] * errors[i];
  }
  const auto s = summarize(rows);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(s[0].mse, 14.0 / 3.0, 1e-12);
  EXPECT_NEAR(s[0].bias, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s[0].median_abs_error, 2.0, 1e-12);
}

TEST(Experiment, DeterministicAcrossJobs) {
  const ExperimentConfig c = small_config("unused.csv");
  ExperimentOptions one, four;
  one.write_files = four.write_files = false;
  four.jobs = 4;
  const auto a = run_experiment(c, one), b = run_experiment(c, four);
  ASSERT_EQ(a.rows.size(), 2u * 2u * 3u * 4u * 2u);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(to_csv(a.rows[i]), to_csv(b.rows[i]));
  EXPECT_EQ(a.failures, 0u);
}

TEST(Experiment, ResumeReproducesBytes) {
  const auto dir = scratch("resume");
  const ExperimentConfig c = small_config((dir / "results.csv").string());
  const auto full = run_experiment(c);
  const std::string reference = slurp(full.rows_path);
  const std::string reference_summary = slurp(full.summary_path);
  ASSERT_FALSE(std::filesystem::exists(full.rows_path + ".partial"));

  // Simulate an interrupted run: a journal holding one full cell (8 rows),
  // part of the next and a torn line, and no final file. Only complete cells
  // are reused.
  std::istringstream lines(reference);
  std::string line, journal;
  int kept = 0;
  while (std::getline(lines, line))
    if (line[0] != '#' && line.rfind("epsilon,", 0) != 0 && kept < 10) {
      journal += line + "\n";
      ++kept;
    }
  journal += "0.2,20,10,";
  std::filesystem::remove(full.rows_path);
  std::filesystem::remove(full.summary_path);
  std::ofstream(full.rows_path + ".partial") << journal;

  ExperimentOptions resume;
  resume.resume = true;
  const auto again = run_experiment(c, resume);
  EXPECT_EQ(again.resumed_rows, 8u);
  EXPECT_EQ(slurp(again.rows_path), reference);
  EXPECT_EQ(slurp(again.summary_path), reference_summary);
  std::filesystem::remove_all(dir);
}

TEST(Experiment, OutputDirectoryOverride) {
  const auto dir = scratch("outdir");
  setenv("ABSOPE_OUTPUT_DIR", dir.c_str(), 1);
  EXPECT_EQ(resolve_output_path("r.csv"), (dir / "r.csv").string());
  EXPECT_EQ(resolve_output_path("/abs/r.csv"), "/abs/r.csv");
  unsetenv("ABSOPE_OUTPUT_DIR");
  std::filesystem::remove_all(dir);
}

TEST(Verify, SmallRunPasses) {
  const VerificationReport r = verify_theorems(3, 6, 1e-8);
  EXPECT_TRUE(r.ok()) << r.to_string();
  EXPECT_EQ(r.cases, 6u);
}

TEST(Verify, ZeroCasesIsAnError) { EXPECT_THROW(verify_theorems(1, 0, 1e-8), InvalidInput); }
