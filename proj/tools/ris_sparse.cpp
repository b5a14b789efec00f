// Command-line front end: dataset generation, oracle labels, training,
// evaluation, experiment sweeps and the gradient check suite.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ris/harness/dataset.hpp"
#include "ris/harness/evaluate.hpp"
#include "ris/harness/experiment.hpp"
#include "ris/harness/gradcheck_suite.hpp"
#include "ris/harness/labels.hpp"
#include "ris/harness/train_config.hpp"
#include "ris/harness/training.hpp"

namespace fs = std::filesystem;
using namespace ris;
using namespace ris::harness;

namespace {

std::vector<double> parse_r_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : io::split(s, ','))
    if (!part.empty()) out.push_back(io::parse_ratio(part));
  return out;
}

std::vector<Strategy> parse_strategies(const std::string& s) {
  std::vector<Strategy> out;
  for (const auto& part : io::split(s, ','))
    if (!part.empty()) out.push_back(strategy_from_string(part));
  return out;
}

double noise_from(const Dataset& d, const std::optional<double>& sigma2, const std::optional<double>& snr_db) {
  if (sigma2) return *sigma2;
  return sigma2_from_snr_db(d.ref_power, snr_db.value_or(30.0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RIS active-element selection: channel extrapolation and beam search"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic channel dataset");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "Dataset config JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output data file (sidecar written to <out>.json)")->required();

  // label
  auto* label = app.add_subcommand("label", "Compute oracle codebook labels for a dataset");
  std::string label_data, label_out;
  int label_r1 = 2, label_r2 = 2;
  std::optional<double> label_sigma2, label_snr;
  label->add_option("--data", label_data)->required()->check(CLI::ExistingFile);
  label->add_option("--codebook-r1", label_r1, "Vertical oversampling")->capture_default_str();
  label->add_option("--codebook-r2", label_r2, "Horizontal oversampling")->capture_default_str();
  auto* sigma_opt = label->add_option("--sigma2", label_sigma2, "Noise variance");
  label->add_option("--snr-db", label_snr, "SNR relative to the dataset reference power")->excludes(sigma_opt);
  label->add_option("--out", label_out)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  std::string train_scheme, train_data, train_labels, train_config, train_out;
  train_cmd->add_option("scheme", train_scheme, "extrap | beam")->required()->check(CLI::IsMember({"extrap", "beam"}));
  train_cmd->add_option("--data", train_data)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--labels", train_labels)->check(CLI::ExistingFile);
  train_cmd->add_option("--config", train_config)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out-dir", train_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate trained runs");
  std::string eval_mode, eval_models, eval_data, eval_out;
  std::vector<int> eval_gaps;
  std::optional<double> eval_sigma2;
  double eval_snr = 30.0;
  int eval_bits = 3, eval_r1 = 0, eval_r2 = 0;
  eval->add_option("--mode", eval_mode, "nmse_vs_r | gap | loss | pattern | rate")
      ->required()
      ->check(CLI::IsMember({"nmse_vs_r", "gap", "loss", "pattern", "rate"}));
  eval->add_option("--models", eval_models, "Run directory or a folder of run directories")->required();
  eval->add_option("--data", eval_data)->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Output CSV")->required();
  eval->add_option("--gaps", eval_gaps, "Subcarrier gaps (gap mode)")->delimiter(',');
  auto* eval_sigma_opt = eval->add_option("--sigma2", eval_sigma2, "Noise variance (rate mode)");
  eval->add_option("--snr-db", eval_snr, "SNR in dB (rate mode)")->capture_default_str()->excludes(eval_sigma_opt);
  eval->add_option("--bits", eval_bits, "Phase quantization bits (rate mode)")->capture_default_str();
  eval->add_option("--codebook-r1", eval_r1, "Codebook oversampling, 0 = from labels");
  eval->add_option("--codebook-r2", eval_r2, "Codebook oversampling, 0 = from labels");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Train a grid of r x strategy and write paired tables");
  std::string exp_scheme, exp_data, exp_labels, exp_config, exp_out, exp_r = "1/8,1/2", exp_strategies = "prob,unif";
  std::vector<int> exp_gaps;
  double exp_snr = 30.0;
  int exp_bits = 3;
  bool exp_no_rates = false;
  exp->add_option("scheme", exp_scheme, "extrap | beam")->required()->check(CLI::IsMember({"extrap", "beam"}));
  exp->add_option("--data", exp_data)->required()->check(CLI::ExistingFile);
  exp->add_option("--labels", exp_labels)->check(CLI::ExistingFile);
  exp->add_option("--config", exp_config)->required()->check(CLI::ExistingFile);
  exp->add_option("--out-dir", exp_out)->required();
  exp->add_option("--r-list", exp_r, "Comma separated ratios, e.g. 1/8,1/4")->capture_default_str();
  exp->add_option("--strategies", exp_strategies)->capture_default_str();
  exp->add_option("--gaps", exp_gaps, "Subcarrier gaps to evaluate")->delimiter(',');
  exp->add_option("--snr-db", exp_snr)->capture_default_str();
  exp->add_option("--bits", exp_bits)->capture_default_str();
  exp->add_flag("--no-rates", exp_no_rates, "Skip the achievable-rate tables");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::string gc_scale = "small";
  double gc_tol = 1e-5;
  gc->add_option("--scale", gc_scale)->check(CLI::IsMember({"small"}))->capture_default_str();
  gc->add_option("--tolerance", gc_tol)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = dataset_config_from_json(io::read_json(gen_config));
      const Dataset d = write_dataset(cfg, gen_out);
      std::cout << "wrote " << d.samples.size() << " samples (" << d.train_indices.size() << " train, "
                << d.test_indices.size() << " test) to " << gen_out << ", hash " << d.hash << "\n";
    } else if (*label) {
      const Dataset d = read_dataset(label_data);
      const double sigma2 = noise_from(d, label_sigma2, label_snr);
      const LabelSet l = compute_labels(d, label_r1, label_r2, sigma2);
      write_labels(l, label_out);
      std::cout << "wrote " << l.labels.size() << " labels over " << l.classes << " codewords, sigma2 "
                << io::fmt_num(sigma2) << "\n";
    } else if (*train_cmd) {
      TrainConfig cfg = load_train_config(train_config);
      const Scheme scheme = scheme_from_string(train_scheme);
      if (cfg.scheme != scheme)
        throw std::invalid_argument("config scheme '" + to_string(cfg.scheme) + "' does not match '" + train_scheme + "'");
      const Dataset d = read_dataset(train_data);
      std::optional<LabelSet> labels;
      if (!train_labels.empty()) labels = read_labels(train_labels);
      const TrainReport rep = train_and_write(d, labels ? &*labels : nullptr, cfg, train_out, &std::cout);
      std::cout << "final test " << rep.metric_name() << " " << io::fmt_num(rep.final_test_metric) << ", pattern";
      for (int i : rep.pattern.indices) std::cout << ' ' << i;
      std::cout << "\n";
    } else if (*eval) {
      const Dataset d = read_dataset(eval_data);
      auto models = load_models(eval_models);
      EvalOptions opt;
      opt.mode = eval_mode_from_string(eval_mode);
      opt.gaps = eval_gaps;
      opt.rate.sigma2 = eval_sigma2;
      opt.rate.snr_db = eval_snr;
      opt.rate.bits = eval_bits;
      opt.rate.codebook_r1 = eval_r1;
      opt.rate.codebook_r2 = eval_r2;
      write_text(eval_out, evaluate(models, d, opt));
      std::cout << "wrote " << eval_out << "\n";
    } else if (*exp) {
      TrainConfig cfg = load_train_config(exp_config);
      if (cfg.scheme != scheme_from_string(exp_scheme))
        throw std::invalid_argument("config scheme does not match '" + exp_scheme + "'");
      const Dataset d = read_dataset(exp_data);
      std::optional<LabelSet> labels;
      if (!exp_labels.empty()) labels = read_labels(exp_labels);
      ExperimentPlan plan;
      plan.r_list = parse_r_list(exp_r);
      plan.strategies = parse_strategies(exp_strategies);
      plan.gaps = exp_gaps;
      plan.rates = !exp_no_rates;
      plan.rate.snr_db = exp_snr;
      plan.rate.bits = exp_bits;
      const auto res = run_experiment(d, labels ? &*labels : nullptr, cfg, plan, exp_out, &std::cout);
      for (const auto& r : res.runs)
        std::cout << run_name(r.config.strategy, r.config.r) << " test " << r.metric_name() << " "
                  << io::fmt_num(r.final_test_metric) << "\n";
    } else if (*gc) {
      bool ok = true;
      for (const auto& e : run_gradcheck_suite()) {
        const bool pass = e.max_rel_error < gc_tol;
        ok = ok && pass;
        std::cout << (pass ? "ok   " : "FAIL ") << e.name << " max_rel_err=" << e.max_rel_error
                  << " coords=" << e.coordinates << "\n";
      }
      return ok ? EXIT_SUCCESS : EXIT_FAILURE;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
