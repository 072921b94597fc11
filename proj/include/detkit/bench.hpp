#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "detkit/geometry.hpp"
#include "detkit/loss.hpp"

namespace detkit::bench {

// One box-fitting problem: steepest descent on (cx, cy, log w, log h); the
// log parameterization keeps sizes positive by construction.
struct FitProblem {
  geom::Box anchor;
  geom::Box target;
  loss::LossKind kind = loss::LossKind::Iou;
  double learning_rate = 0.05;
  std::size_t max_iters = 2000;
  double liou_threshold = 0.05;
  loss::WiouConfig wiou;
};

struct TraceRecord {
  std::size_t iteration = 0;
  double loss_value = 0.0;
  double liou_value = 0.0;
  geom::Box anchor;
  double running_mean = 1.0;  // state snapshot at evaluation time
};

struct FitResult {
  std::vector<TraceRecord> trace;
  bool converged = false;
  std::size_t iterations = 0;  // first iteration meeting the threshold, or max_iters
  double final_liou = 0.0;
};

// Evaluates, records, then steps; stops when 1-IoU drops below the threshold
// or at max_iters. wiou2/wiou3 update their running mean after each use with
// the single-sample batch. Throws on a non-finite loss, naming the iteration.
FitResult run_fit(const FitProblem& problem);

struct SuiteConfig {
  std::size_t n_problems = 1000;
  std::uint64_t seed = 42;
  std::vector<loss::LossKind> losses;
  double learning_rate = 0.05;
  std::size_t max_iters = 2000;
  double liou_threshold = 0.05;
  loss::WiouConfig wiou;
  std::size_t threads = 1;
};

// Generated targets live in [0,10]^2 with sizes in [0.5,4]; 70% of the
// problems start overlapping, 30% strictly disjoint (problem_id % 10 >= 7).
struct ProblemSpec {
  geom::Box anchor;
  geom::Box target;
  bool disjoint = false;
};

std::vector<ProblemSpec> generate_problems(const SuiteConfig& cfg);

struct SuiteRow {
  std::size_t problem_id = 0;
  loss::LossKind kind = loss::LossKind::Iou;
  bool converged = false;
  std::size_t iters = 0;
  double final_liou = 0.0;
  bool disjoint = false;
};

struct StratumStats {
  std::string loss;
  std::string stratum;  // overlap | disjoint | all
  std::size_t problems = 0;
  std::size_t converged = 0;
  double success_rate = 0.0;
  double median_iters = 0.0;  // non-converged problems count as max_iters
  double median_final_liou = 0.0;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;  // problem-major, loss order within a problem
  std::vector<StratumStats> stats;
};

// Problems are independent and may run on several threads; rows land in
// problem-index order so results do not depend on the thread count.
SuiteResult run_suite(const SuiteConfig& cfg);

// Machine-readable outputs. Every file opens with the effective configuration
// (thread count excluded: it must not affect a single byte).
std::string results_csv(const SuiteResult& result, const SuiteConfig& cfg);
std::string summary_csv(const SuiteResult& result, const SuiteConfig& cfg);
std::string trace_csv(const std::vector<TraceRecord>& trace);

}  // namespace detkit::bench
