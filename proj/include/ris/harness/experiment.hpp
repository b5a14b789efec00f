#pragma once

// Sweeps over compression ratio and selection strategy from a single base
// config, with the paired summary tables written next to the run folders.

#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ris/harness/evaluate.hpp"
#include "ris/harness/training.hpp"

namespace ris::harness {

struct ExperimentPlan {
  std::vector<double> r_list{0.125, 0.5};
  std::vector<Strategy> strategies{Strategy::prob, Strategy::unif};
  std::vector<int> gaps;  // extrapolation only
  bool rates = true;
  RateOptions rate;
};

struct ExperimentResult {
  std::vector<TrainReport> runs;
  std::vector<RateSummary> rates;
};

inline std::string run_name(Strategy s, double r) { return to_string(s) + "_r" + io::fmt_num(r); }

inline std::string accuracy_vs_r_csv(const std::vector<TrainReport>& runs) {
  std::ostringstream os;
  os << "r,strategy,m,accuracy,test_loss,seed,config_hash,model\n";
  for (const auto& r : runs)
    os << io::fmt_num(r.config.r) << ',' << to_string(r.config.strategy) << ',' << r.m << ','
       << io::fmt_num(r.final_test_metric) << ',' << io::fmt_num(r.final_test_loss) << ',' << r.config.seed << ','
       << r.config_hash << ',' << run_name(r.config.strategy, r.config.r) << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = io::open_out(path);
  os << text;
}

inline ExperimentResult run_experiment(const Dataset& d, const LabelSet* labels, const TrainConfig& base,
                                       const ExperimentPlan& plan, const std::filesystem::path& out_dir,
                                       std::ostream* log = nullptr) {
  ExperimentResult res;
  for (Strategy s : plan.strategies)
    for (double r : plan.r_list) {
      TrainConfig c = base;
      c.strategy = s;
      c.r = r;
      c.validate();
      res.runs.push_back(train_and_write(d, labels, c, out_dir / run_name(s, r), log));
    }

  auto models = load_models(out_dir);
  std::vector<LoadedModel*> ordered;
  for (const auto& rep : res.runs)
    for (auto& m : models)
      if (m.name == run_name(rep.config.strategy, rep.config.r)) ordered.push_back(&m);

  if (base.scheme == Scheme::extrapolation) {
    std::vector<NmseRow> rows;
    for (auto* m : ordered) rows.push_back(model_nmse(*m, d));
    write_text(out_dir / "nmse_vs_r.csv", nmse_vs_r_csv(rows));
    if (!plan.gaps.empty()) {
      std::vector<NmseRow> gap_rows;
      for (auto* m : ordered)
        for (int g : plan.gaps) gap_rows.push_back(model_nmse(*m, d, g));
      write_text(out_dir / "nmse_vs_gap.csv", nmse_vs_gap_csv(gap_rows));
    }
  } else {
    write_text(out_dir / "accuracy_vs_r.csv", accuracy_vs_r_csv(res.runs));
  }
  write_text(out_dir / "loss_vs_epoch.csv", loss_vs_epoch_csv(models));
  write_text(out_dir / "pattern.csv", pattern_csv(models, d.config.geometry()));

  const bool full_band = base.scheme == Scheme::beam || resolve_window(base, d.k()).width == d.k();
  if (plan.rates && full_band) {
    std::vector<RateRow> rows;
    for (auto* m : ordered) {
      auto part = model_rates(*m, d, plan.rate);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    res.rates = summarize_rates(rows);
    write_text(out_dir / "rate_vs_r.csv", rate_csv(rows, plan.rate.bits, plan.rate.noise_var(d)));
    write_text(out_dir / "rate_summary.csv", rate_summary_csv(res.rates));
  }
  return res;
}

}  // namespace ris::harness
