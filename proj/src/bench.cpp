#include "detkit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "detkit/format.hpp"
#include "detkit/rng.hpp"

namespace detkit::bench {

using geom::Box;
using loss::LossKind;

FitResult run_fit(const FitProblem& problem) {
  if (!geom::valid(problem.anchor) || !geom::valid(problem.target))
    throw std::invalid_argument("run_fit: invalid boxes");
  if (problem.learning_rate <= 0.0)
    throw std::invalid_argument("run_fit: learning rate must be positive");
  problem.wiou.validate();

  loss::LossState state;
  Box anchor = problem.anchor;
  FitResult result;

  for (std::size_t iter = 0; iter <= problem.max_iters; ++iter) {
    const loss::LossResult res =
        loss::evaluate(problem.kind, anchor, problem.target, state, problem.wiou);
    const double li = loss::liou(anchor, problem.target).value;
    result.trace.push_back({iter, res.value, li, anchor, state.running_mean});

    if (!std::isfinite(res.value))
      throw std::runtime_error("run_fit: non-finite loss at iteration " +
                               std::to_string(iter));

    if (li < problem.liou_threshold) {
      result.converged = true;
      result.iterations = iter;
      result.final_liou = li;
      return result;
    }
    if (iter == problem.max_iters) break;

    // chain rule into (cx, cy, log w, log h)
    anchor.cx -= problem.learning_rate * res.grad[0];
    anchor.cy -= problem.learning_rate * res.grad[1];
    anchor.w = std::exp(std::log(anchor.w) -
                        problem.learning_rate * res.grad[2] * anchor.w);
    anchor.h = std::exp(std::log(anchor.h) -
                        problem.learning_rate * res.grad[3] * anchor.h);

    // update-after-use: this iteration's detached 1-IoU feeds the mean
    if (problem.kind == LossKind::Wiou2 || problem.kind == LossKind::Wiou3) {
      const double batch[] = {li};
      loss::update_running_mean(state, batch, problem.wiou.momentum);
    }
  }

  result.converged = false;
  result.iterations = problem.max_iters;
  result.final_liou = result.trace.back().liou_value;
  return result;
}

std::vector<ProblemSpec> generate_problems(const SuiteConfig& cfg) {
  if (cfg.n_problems == 0)
    throw std::invalid_argument("suite needs at least one problem");
  Rng rng(cfg.seed);
  std::vector<ProblemSpec> problems;
  problems.reserve(cfg.n_problems);
  for (std::size_t i = 0; i < cfg.n_problems; ++i) {
    ProblemSpec p;
    p.disjoint = (i % 10) >= 7;
    p.target.cx = rng.uniform(0.0, 10.0);
    p.target.cy = rng.uniform(0.0, 10.0);
    p.target.w = rng.uniform(0.5, 4.0);
    p.target.h = rng.uniform(0.5, 4.0);
    p.anchor.w = p.target.w * rng.uniform(0.5, 2.0);
    p.anchor.h = p.target.h * rng.uniform(0.5, 2.0);
    if (p.disjoint) {
      // push the anchor past the target along one axis, with a clear gap
      const double gap = rng.uniform(0.5, 5.0);
      const bool along_x = rng.unit() < 0.5;
      const double sign = rng.unit() < 0.5 ? -1.0 : 1.0;
      if (along_x) {
        p.anchor.cx =
            p.target.cx + sign * ((p.target.w + p.anchor.w) / 2.0 + gap);
        p.anchor.cy = p.target.cy + rng.uniform(-0.5, 0.5) * p.target.h;
      } else {
        p.anchor.cy =
            p.target.cy + sign * ((p.target.h + p.anchor.h) / 2.0 + gap);
        p.anchor.cx = p.target.cx + rng.uniform(-0.5, 0.5) * p.target.w;
      }
    } else {
      for (int attempt = 0; attempt < 64; ++attempt) {
        p.anchor.cx =
            p.target.cx + rng.uniform(-0.5, 0.5) * (p.target.w + p.anchor.w) / 2.0;
        p.anchor.cy =
            p.target.cy + rng.uniform(-0.5, 0.5) * (p.target.h + p.anchor.h) / 2.0;
        if (geom::iou(p.anchor, p.target) > 0.0) break;
      }
    }
    problems.push_back(p);
  }
  return problems;
}

namespace {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2.0;
}

StratumStats stats_for(const std::vector<SuiteRow>& rows, LossKind kind,
                       const char* stratum, bool want_disjoint, bool want_all) {
  StratumStats s;
  s.loss = loss::keyword(kind);
  s.stratum = stratum;
  std::vector<double> iters, finals;
  for (const auto& row : rows) {
    if (row.kind != kind) continue;
    if (!want_all && row.disjoint != want_disjoint) continue;
    ++s.problems;
    if (row.converged) ++s.converged;
    iters.push_back(static_cast<double>(row.iters));
    finals.push_back(row.final_liou);
  }
  s.success_rate = s.problems == 0 ? 0.0
                                   : static_cast<double>(s.converged) /
                                         static_cast<double>(s.problems);
  s.median_iters = median(std::move(iters));
  s.median_final_liou = median(std::move(finals));
  return s;
}

}  // namespace

SuiteResult run_suite(const SuiteConfig& cfg) {
  if (cfg.losses.empty())
    throw std::invalid_argument("suite needs at least one loss kind");
  const std::vector<ProblemSpec> problems = generate_problems(cfg);

  SuiteResult result;
  result.rows.resize(problems.size() * cfg.losses.size());

  auto run_problem = [&](std::size_t pi) {
    for (std::size_t li = 0; li < cfg.losses.size(); ++li) {
      FitProblem fp;
      fp.anchor = problems[pi].anchor;
      fp.target = problems[pi].target;
      fp.kind = cfg.losses[li];
      fp.learning_rate = cfg.learning_rate;
      fp.max_iters = cfg.max_iters;
      fp.liou_threshold = cfg.liou_threshold;
      fp.wiou = cfg.wiou;
      const FitResult fit = run_fit(fp);
      result.rows[pi * cfg.losses.size() + li] = {
          pi,          cfg.losses[li],  fit.converged,
          fit.iterations, fit.final_liou, problems[pi].disjoint};
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, cfg.threads);
  if (workers == 1) {
    for (std::size_t pi = 0; pi < problems.size(); ++pi) run_problem(pi);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t pi = next.fetch_add(1); pi < problems.size();
             pi = next.fetch_add(1))
          run_problem(pi);
      });
    for (auto& t : pool) t.join();
  }

  for (LossKind kind : cfg.losses) {
    result.stats.push_back(stats_for(result.rows, kind, "overlap", false, false));
    result.stats.push_back(stats_for(result.rows, kind, "disjoint", true, false));
    result.stats.push_back(stats_for(result.rows, kind, "all", false, true));
  }
  return result;
}

namespace {

std::string config_header(const SuiteConfig& cfg) {
  std::ostringstream out;
  out << "# seed " << cfg.seed << '\n';
  out << "# problems " << cfg.n_problems << '\n';
  out << "# losses ";
  for (std::size_t i = 0; i < cfg.losses.size(); ++i)
    out << (i ? "," : "") << loss::keyword(cfg.losses[i]);
  out << '\n';
  out << "# learning_rate " << format_double(cfg.learning_rate) << '\n';
  out << "# max_iters " << cfg.max_iters << '\n';
  out << "# liou_threshold " << format_double(cfg.liou_threshold) << '\n';
  out << "# alpha " << format_double(cfg.wiou.alpha) << '\n';
  out << "# delta " << format_double(cfg.wiou.delta) << '\n';
  out << "# gamma " << format_double(cfg.wiou.gamma) << '\n';
  out << "# momentum " << format_double(cfg.wiou.momentum) << '\n';
  return out.str();
}

}  // namespace

std::string results_csv(const SuiteResult& result, const SuiteConfig& cfg) {
  std::ostringstream out;
  out << "# loss-bench results\n" << config_header(cfg);
  out << "problem_id,loss,converged,iters,final_liou\n";
  for (const auto& row : result.rows)
    out << row.problem_id << ',' << loss::keyword(row.kind) << ','
        << (row.converged ? 1 : 0) << ',' << row.iters << ','
        << format_double(row.final_liou) << '\n';
  return out.str();
}

std::string summary_csv(const SuiteResult& result, const SuiteConfig& cfg) {
  std::ostringstream out;
  out << "# loss-bench summary\n" << config_header(cfg);
  out << "loss,stratum,problems,converged,success_rate,median_iters,median_final_liou\n";
  for (const auto& s : result.stats)
    out << s.loss << ',' << s.stratum << ',' << s.problems << ',' << s.converged
        << ',' << format_double(s.success_rate) << ','
        << format_double(s.median_iters) << ','
        << format_double(s.median_final_liou) << '\n';
  return out.str();
}

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::ostringstream out;
  out << "iter,loss,liou,cx,cy,w,h\n";
  for (const auto& t : trace)
    out << t.iteration << ',' << format_double(t.loss_value) << ','
        << format_double(t.liou_value) << ',' << format_double(t.anchor.cx)
        << ',' << format_double(t.anchor.cy) << ',' << format_double(t.anchor.w)
        << ',' << format_double(t.anchor.h) << '\n';
  return out.str();
}

}  // namespace detkit::bench
