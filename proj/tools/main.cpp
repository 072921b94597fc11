// detkit: detection numerics toolkit.
//
// Subcommands cover detection evaluation, YOLO-label dataset statistics and
// splitting, the bounding-box loss benchmark, a routed-attention demo, the
// finite-difference verification suite, and a synthetic mini-dataset
// generator. Exit codes: 0 success, 1 validation error, 2 internal check
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "detkit/bench.hpp"
#include "detkit/bra.hpp"
#include "detkit/dataset.hpp"
#include "detkit/format.hpp"
#include "detkit/gradcheck.hpp"
#include "detkit/loss.hpp"
#include "detkit/metrics.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<detkit::metrics::GroundTruth> ground_truth_from_labels(
    const std::vector<detkit::dataset::LabeledImage>& images) {
  std::vector<detkit::metrics::GroundTruth> gts;
  for (const auto& image : images)
    for (const auto& a : image.annotations)
      gts.push_back({image.image_id, a.category_id, a.box});
  return gts;
}

int cmd_eval(const std::string& labels_dir, const std::string& detections_file,
             double iou_threshold, const std::string& out_path) {
  const auto images = detkit::dataset::load_dataset(labels_dir);
  const auto gts = ground_truth_from_labels(images);
  const auto dets = detkit::metrics::load_detections(detections_file);

  std::ostringstream report;
  report << "# eval report\n";
  report << "# iou_threshold " << detkit::format_double(iou_threshold) << "\n";
  const auto eval = detkit::metrics::evaluate(dets, gts, iou_threshold);
  const auto [map50, map5095] = detkit::metrics::map_over_thresholds(dets, gts);

  report << "category_id,gt_count,tp,fp,fn,precision,recall,ap\n";
  for (const auto& [cat, ap] : eval.ap_per_category) {
    const auto& c = eval.counts_per_category.at(cat);
    const double precision =
        (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / double(c.tp + c.fp);
    const double recall =
        (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / double(c.tp + c.fn);
    report << cat << ',' << (c.tp + c.fn) << ',' << c.tp << ',' << c.fp << ','
           << c.fn << ',' << detkit::format_double(precision) << ','
           << detkit::format_double(recall) << ',' << detkit::format_double(ap)
           << '\n';
  }
  report << "map " << detkit::format_double(eval.map) << '\n';
  report << "map50 " << detkit::format_double(map50) << '\n';
  report << "map5095 " << detkit::format_double(map5095) << '\n';

  if (out_path.empty())
    std::cout << report.str();
  else
    write_text(out_path, report.str());
  return 0;
}

int cmd_dataset_stats(const std::string& labels_dir, const std::string& out_path) {
  const auto images = detkit::dataset::load_dataset(labels_dir);
  const auto summary = detkit::dataset::summarize(images);
  std::string report = "# dataset-stats\n# labels_dir " + labels_dir + "\n" +
                       detkit::dataset::summary_report(summary);
  if (out_path.empty())
    std::cout << report;
  else
    write_text(out_path, report);
  return 0;
}

int cmd_split(const std::string& labels_dir, std::uint64_t seed,
              unsigned ratio_train, unsigned ratio_val,
              const std::string& train_out, const std::string& val_out) {
  const auto images = detkit::dataset::load_dataset(labels_dir);
  const auto [train, val] =
      detkit::dataset::split_train_val(images, ratio_train, ratio_val, seed);
  auto ids = [](const std::vector<detkit::dataset::LabeledImage>& list) {
    std::string text;
    for (const auto& image : list) text += image.image_id + "\n";
    return text;
  };
  write_text(train_out, ids(train));
  write_text(val_out, ids(val));
  std::cout << "train " << train.size() << "\nval " << val.size() << "\n";
  return 0;
}

int cmd_loss_bench(detkit::bench::SuiteConfig& cfg,
                   const std::vector<std::string>& loss_keywords,
                   const std::string& out_path, const std::string& summary_path,
                   const std::string& trace_dir) {
  for (const auto& kw : loss_keywords)
    cfg.losses.push_back(detkit::loss::kind_from_keyword(kw));
  cfg.wiou.validate();

  const auto result = detkit::bench::run_suite(cfg);
  const std::string results = detkit::bench::results_csv(result, cfg);
  const std::string summary = detkit::bench::summary_csv(result, cfg);

  if (out_path.empty())
    std::cout << results;
  else
    write_text(out_path, results);
  if (summary_path.empty())
    std::cout << summary;
  else
    write_text(summary_path, summary);

  if (!trace_dir.empty()) {
    fs::create_directories(trace_dir);
    const auto problems = detkit::bench::generate_problems(cfg);
    for (std::size_t pi = 0; pi < problems.size(); ++pi)
      for (auto kind : cfg.losses) {
        detkit::bench::FitProblem fp;
        fp.anchor = problems[pi].anchor;
        fp.target = problems[pi].target;
        fp.kind = kind;
        fp.learning_rate = cfg.learning_rate;
        fp.max_iters = cfg.max_iters;
        fp.liou_threshold = cfg.liou_threshold;
        fp.wiou = cfg.wiou;
        const auto fit = detkit::bench::run_fit(fp);
        write_text(fs::path(trace_dir) /
                       ("trace_" + std::to_string(pi) + "_" +
                        detkit::loss::keyword(kind) + ".csv"),
                   detkit::bench::trace_csv(fit.trace));
      }
  }
  return 0;
}

int cmd_bra_demo(const std::string& input, const std::string& output,
                 const std::string& routing_out, detkit::bra::BraConfig& cfg,
                 std::uint64_t seed) {
  const auto fm = detkit::bra::read_feature_map(input);
  cfg.embed_dim = fm.channels;
  cfg.validate();
  const auto params = detkit::bra::BraParams::random(fm.channels, seed);
  const auto result = detkit::bra::bra_forward(fm, params, cfg);
  detkit::bra::write_feature_map(output, result.output);

  std::ostringstream dump;
  dump << "# bra routing\n";
  dump << "# regions_per_side " << cfg.regions_per_side << "\n";
  dump << "# top_k " << cfg.top_k << "\n";
  dump << "# heads " << cfg.heads << "\n";
  dump << "# scale " << detkit::format_double(cfg.effective_scale()) << "\n";
  dump << "# seed " << seed << "\n";
  for (std::size_t r = 0; r < result.routing.size(); ++r) {
    dump << "region " << r << ":";
    for (std::size_t idx : result.routing[r]) dump << ' ' << idx;
    dump << '\n';
  }
  if (routing_out.empty())
    std::cout << dump.str();
  else
    write_text(routing_out, dump.str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t cases, double eps) {
  const auto report = detkit::gradcheck::run_all(seed, cases, eps);
  std::cout << detkit::gradcheck::report_text(report);
  return report.all_pass() ? 0 : 2;
}

int cmd_gen_minidata(const std::string& out_dir,
                     const detkit::dataset::MiniDataOptions& options) {
  const auto images = detkit::dataset::generate_minidata(out_dir, options);
  std::cout << "wrote " << images.size() << " label files under " << out_dir
            << "/labels and manifest.txt\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"detkit: detection numerics toolkit"};
  app.require_subcommand(1);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate detections against labels");
  std::string eval_labels, eval_dets, eval_out;
  double eval_thr = 0.5;
  eval->add_option("--labels", eval_labels, "ground-truth labels directory")
      ->required();
  eval->add_option("--detections", eval_dets, "detections file")->required();
  eval->add_option("--iou-threshold", eval_thr, "matching threshold for the per-category table");
  eval->add_option("--out", eval_out, "report path (default stdout)");

  // dataset-stats
  auto* stats = app.add_subcommand("dataset-stats", "dataset counts and class weights");
  std::string stats_labels, stats_out;
  stats->add_option("--labels", stats_labels, "labels directory")->required();
  stats->add_option("--out", stats_out, "report path (default stdout)");

  // split
  auto* split = app.add_subcommand("split", "deterministic train/val split");
  std::string split_labels, split_train = "train.txt", split_val = "val.txt";
  std::uint64_t split_seed = 0;
  unsigned ratio_train = 4, ratio_val = 1;
  split->add_option("--labels", split_labels, "labels directory")->required();
  split->add_option("--seed", split_seed, "shuffle seed")->required();
  split->add_option("--ratio-train", ratio_train, "train ratio numerator");
  split->add_option("--ratio-val", ratio_val, "val ratio numerator");
  split->add_option("--train-out", split_train, "train id list path");
  split->add_option("--val-out", split_val, "val id list path");

  // loss-bench
  auto* bench = app.add_subcommand("loss-bench", "box-fitting convergence benchmark");
  detkit::bench::SuiteConfig bench_cfg;
  std::vector<std::string> bench_losses{"iou", "wiou1", "wiou3"};
  std::string bench_out, bench_summary, bench_traces;
  bench->add_option("--seed", bench_cfg.seed, "problem generator seed");
  bench->add_option("--problems", bench_cfg.n_problems, "number of problems");
  bench->add_option("--losses", bench_losses, "loss keywords")->delimiter(',');
  bench->add_option("--lr", bench_cfg.learning_rate, "learning rate");
  bench->add_option("--max-iters", bench_cfg.max_iters, "iteration cap");
  bench->add_option("--threshold", bench_cfg.liou_threshold, "1-IoU success threshold");
  bench->add_option("--alpha", bench_cfg.wiou.alpha, "wiou alpha");
  bench->add_option("--delta", bench_cfg.wiou.delta, "wiou delta");
  bench->add_option("--gamma", bench_cfg.wiou.gamma, "wiou gamma");
  bench->add_option("--momentum", bench_cfg.wiou.momentum, "running-mean momentum");
  bench->add_option("--threads", bench_cfg.threads, "worker threads");
  bench->add_option("--out", bench_out, "results CSV path (default stdout)");
  bench->add_option("--summary-out", bench_summary, "summary CSV path (default stdout)");
  bench->add_option("--trace-dir", bench_traces, "write per-problem trace CSVs here");

  // bra-demo
  auto* bra_demo = app.add_subcommand("bra-demo", "routed attention over a feature-map file");
  std::string bra_in, bra_out, bra_routing;
  detkit::bra::BraConfig bra_cfg;
  std::uint64_t bra_seed = 1;
  bra_demo->add_option("--input", bra_in, "feature map file (header 'H W C')")->required();
  bra_demo->add_option("--output", bra_out, "output feature map path")->required();
  bra_demo->add_option("--routing-out", bra_routing, "routing dump path (default stdout)");
  bra_demo->add_option("--regions", bra_cfg.regions_per_side, "regions per side");
  bra_demo->add_option("--topk", bra_cfg.top_k, "routed regions per source");
  bra_demo->add_option("--heads", bra_cfg.heads, "attention heads");
  bra_demo->add_option("--scale", bra_cfg.scale, "attention scale (0 = 1/sqrt(C/H))");
  bra_demo->add_option("--seed", bra_seed, "projection init seed");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification suite");
  std::uint64_t gc_seed = 7;
  std::size_t gc_cases = 500;
  double gc_eps = 1e-5;
  gradcheck->add_option("--seed", gc_seed, "case generator seed");
  gradcheck->add_option("--cases", gc_cases, "cases per op");
  gradcheck->add_option("--eps", gc_eps, "finite-difference step");

  // gen-minidata
  auto* gen = app.add_subcommand("gen-minidata", "synthetic label mini-dataset");
  detkit::dataset::MiniDataOptions gen_options;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_options.seed, "generator seed");
  gen->add_option("--images", gen_options.images, "image count");
  gen->add_option("--categories", gen_options.categories, "category count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*eval) return cmd_eval(eval_labels, eval_dets, eval_thr, eval_out);
    if (*stats) return cmd_dataset_stats(stats_labels, stats_out);
    if (*split)
      return cmd_split(split_labels, split_seed, ratio_train, ratio_val,
                       split_train, split_val);
    if (*bench)
      return cmd_loss_bench(bench_cfg, bench_losses, bench_out, bench_summary,
                            bench_traces);
    if (*bra_demo)
      return cmd_bra_demo(bra_in, bra_out, bra_routing, bra_cfg, bra_seed);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_cases, gc_eps);
    if (*gen) return cmd_gen_minidata(gen_out, gen_options);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
