#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "ris/harness/experiment.hpp"

using namespace ris;
using namespace ris::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ris_harness_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

DatasetConfig tiny_dataset(int side = 4, int k = 8, int count = 60, std::uint64_t seed = 5) {
  DatasetConfig c;
  c.n_v = c.n_h = side;
  c.k_subcarriers = k;
  c.sample_count = count;
  c.seed = seed;
  return c;
}

TrainConfig tiny_extrap() {
  TrainConfig c;
  c.r = 0.5;
  c.batch = 4;
  c.iterations = 20;
  c.eval_every = 5;
  c.n_p = 1;
  c.n_q = 1;
  c.conv_width = 4;
  c.lr_omega = 1e-3;
  c.lr_xi = 1e-2;
  c.cross_frequency = false;
  return c;
}

TrainConfig tiny_beam() {
  TrainConfig c = tiny_extrap();
  c.scheme = Scheme::beam;
  c.hidden = {32, 16, 16, 8};
  return c;
}

// One dataset shared by most tests.
const Dataset& shared_dataset() {
  static const Dataset d = write_dataset(tiny_dataset(), scratch("shared") / "data.bin");
  return d;
}

}  // namespace

TEST(Dataset, GenerationIsByteIdentical) {
  const auto dir = scratch("gen");
  auto c = tiny_dataset(4, 8, 10, 77);
  const auto a = write_dataset(c, dir / "a.bin");
  const auto b = write_dataset(c, dir / "b.bin");
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_EQ(fs::file_size(dir / "a.bin"), 10u * 4 * 16 * 8 * 2 * 4);
  c.seed = 78;
  EXPECT_NE(write_dataset(c, dir / "c.bin").hash, a.hash);
}

TEST(Dataset, SidecarEchoesConfigAndRoundTrips) {
  const auto dir = scratch("sidecar");
  const auto c = tiny_dataset(4, 8, 12, 3);
  const auto written = write_dataset(c, dir / "d.bin");
  const auto side = io::read_json(sidecar_path(dir / "d.bin"));
  const auto echoed = dataset_config_to_json(c);
  for (const auto& [key, value] : echoed.items()) EXPECT_EQ(side.at(key), value) << key;
  EXPECT_EQ(side.at("data_hash"), written.hash);
  const auto back = read_dataset(dir / "d.bin");
  EXPECT_EQ(back.hash, written.hash);
  EXPECT_EQ(back.train_indices, written.train_indices);
  ASSERT_EQ(back.samples.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_TRUE(back.samples[i].h == written.samples[i].h);
    EXPECT_TRUE(back.samples[i].g_a == written.samples[i].g_a);
  }
  {
    std::ofstream os(dir / "d.bin", std::ios::binary | std::ios::app);
    os << "x";
  }
  EXPECT_ANY_THROW(read_dataset(dir / "d.bin"));
}

TEST(Dataset, SplitIsDisjointAndCovering) {
  const auto& d = shared_dataset();
  std::set<int> all(d.train_indices.begin(), d.train_indices.end());
  for (int i : d.test_indices) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), d.samples.size());
  EXPECT_EQ(*all.begin(), 0);
  EXPECT_EQ(*all.rbegin(), static_cast<int>(d.samples.size()) - 1);
  EXPECT_EQ(d.train_indices.size(), 48u);
}

TEST(Dataset, ConfigValidation) {
  auto c = tiny_dataset();
  c.k_subcarriers = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_dataset();
  c.train_fraction = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_dataset();
  c.sample_count = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Dataset, SamplesMatchChannelModel) {
  const auto c = tiny_dataset(4, 8, 3, 9);
  const auto s = generate_sample(c, 2);
  EXPECT_EQ(s.h.rows(), 16);
  EXPECT_EQ(s.h.cols(), 8);
  EXPECT_TRUE(generate_sample(c, 2).g == s.g);
  EXPECT_FALSE(generate_sample(c, 1).g == s.g);
}

TEST(TrainConfigJson, FullScaleDefaultsEcho) {
  const TrainConfig c = train_config_from_json(io::json::object());
  const auto j = to_json(c);
  EXPECT_EQ(j.at("r"), 0.125);
  EXPECT_EQ(j.at("lr_xi"), 1e-3);
  EXPECT_EQ(j.at("lr_omega"), 1e-4);
  EXPECT_EQ(j.at("tau_start"), 5.0);
  EXPECT_EQ(j.at("tau_end"), 0.5);
  EXPECT_EQ(j.at("batch"), 16);
  EXPECT_EQ(train_config_from_json(j).nu(), c.nu());
  EXPECT_EQ(to_json(train_config_from_json(j)), j);
}

TEST(TrainConfigJson, NuAndRatios) {
  const auto c = train_config_from_json({{"lr_omega", 1e-4}, {"nu", 100.0}, {"r", "1/4"}});
  EXPECT_NEAR(c.lr_xi, 1e-2, 1e-15);
  EXPECT_NEAR(c.nu(), 100.0, 1e-9);
  EXPECT_EQ(c.r, 0.25);
  EXPECT_THROW(train_config_from_json({{"lr_omega", 1e-4}, {"lr_xi", 1e-3}, {"nu", 100.0}}), std::invalid_argument);
}

TEST(TrainConfigJson, Rejections) {
  EXPECT_THROW(train_config_from_json({{"learning_rate", 1.0}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json({{"r", 0.0}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json({{"lr_xi", 1e-5}, {"lr_omega", 1e-4}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json({{"tau_start", 0.1}, {"tau_end", 0.5}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json({{"precision", "half"}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json({{"strategy", "greedy"}}), std::invalid_argument);
  TrainConfig c;
  c.r = 0.3;
  EXPECT_THROW(c.m_for(16), std::invalid_argument);
  c.r = 0.125;
  EXPECT_EQ(c.m_for(64), 8);
}

TEST(TrainConfigJson, SeedEnvironmentOverride) {
  const auto dir = scratch("env");
  io::write_json(dir / "c.json", {{"seed", 4}});
  ::unsetenv(kSeedEnv);
  EXPECT_EQ(load_train_config(dir / "c.json").seed, 4u);
  ::setenv(kSeedEnv, "99", 1);
  EXPECT_EQ(load_train_config(dir / "c.json").seed, 99u);
  ::setenv(kSeedEnv, "9x", 1);
  EXPECT_THROW(load_train_config(dir / "c.json"), std::invalid_argument);
  ::unsetenv(kSeedEnv);
}

TEST(Labels, RoundTripAndMismatch) {
  const auto& d = shared_dataset();
  const auto dir = scratch("labels");
  const auto l = compute_labels(d, 2, 2, 1e-3);
  EXPECT_EQ(l.classes, 64);
  EXPECT_EQ(l.labels.size(), d.samples.size());
  write_labels(l, dir / "l.bin");
  EXPECT_EQ(fs::file_size(dir / "l.bin"), 4u * d.samples.size());
  const auto back = read_labels(dir / "l.bin");
  EXPECT_EQ(back.labels, l.labels);
  EXPECT_NO_THROW(check_labels_match(back, d));
  const auto other = write_dataset(tiny_dataset(4, 8, 60, 6), dir / "other.bin");
  EXPECT_THROW(check_labels_match(back, other), std::invalid_argument);
  auto c = tiny_beam();
  EXPECT_THROW(train<double>(other, &back, c), std::invalid_argument);
  EXPECT_THROW(train<double>(d, nullptr, c), std::invalid_argument);
}

TEST(Training, DatasetTooSmallForBatch) {
  auto c = tiny_extrap();
  c.batch = 49;
  EXPECT_THROW(train<double>(shared_dataset(), nullptr, c), std::invalid_argument);
}

TEST(Training, FullSelectionWithoutPenalty) {
  auto c = tiny_extrap();
  c.r = 1.0;
  c.rho = 0.0;
  const auto model = train<double>(shared_dataset(), nullptr, c);
  EXPECT_EQ(model.report.m, 16);
  EXPECT_EQ(model.report.selection_violations, 0);
  EXPECT_EQ(model.report.selection_checks, c.iterations);
  for (const auto& row : model.report.rows) EXPECT_EQ(row.rho, 0.0);
  std::set<int> used(model.report.pattern.indices.begin(), model.report.pattern.indices.end());
  EXPECT_EQ(used.size(), 16u);
}

TEST(Training, TemperatureScheduleClosedForm) {
  const auto model = train<double>(shared_dataset(), nullptr, tiny_extrap());
  const auto& log = model.report.tau_log;
  ASSERT_EQ(log.size(), 20u);
  for (long i = 1; i <= 20; ++i)
    EXPECT_EQ(log[static_cast<std::size_t>(i - 1)], 5.0 - static_cast<double>(i - 1) * (4.5 / 19.0));
  EXPECT_NEAR(log.back(), 0.5, 1e-12);
}

TEST(Training, MetricsRowsCarrySeedAndHash) {
  const auto model = train<double>(shared_dataset(), nullptr, tiny_extrap());
  const auto csv = metrics_csv(model.report);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, metrics_header(Scheme::extrapolation));
  EXPECT_EQ(line.rfind("epoch,split,loss_c,loss_s,rho,tau,nmse,r,strategy,seed", 0), 0u);
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_NE(line.find(",prob,1," + model.report.config_hash), std::string::npos) << line;
  }
  EXPECT_EQ(rows, static_cast<int>(model.report.rows.size()));
  EXPECT_EQ(model.report.rows.front().split, "test");
}

TEST(Training, UniformStrategyKeepsFixedPattern) {
  auto c = tiny_extrap();
  c.strategy = Strategy::unif;
  const auto model = train<double>(shared_dataset(), nullptr, c);
  EXPECT_EQ(model.report.pattern.indices, selection::uniform_pattern(16, 8).indices);
  EXPECT_EQ(model.report.selection_checks, 0);
}

TEST(Training, ReplayIsByteIdentical) {
  const auto dir = scratch("replay");
  train_and_write(shared_dataset(), nullptr, tiny_extrap(), dir / "a");
  train_and_write(shared_dataset(), nullptr, tiny_extrap(), dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "model.ckpt"), slurp(dir / "b" / "model.ckpt"));
  auto c = tiny_extrap();
  c.seed = 2;
  train_and_write(shared_dataset(), nullptr, c, dir / "c");
  EXPECT_NE(slurp(dir / "a" / "metrics.csv"), slurp(dir / "c" / "metrics.csv"));
}

TEST(Training, BeamRunReportsAccuracy) {
  const auto& d = shared_dataset();
  const auto l = compute_labels(d, 2, 2, 1e-3);
  const auto model = train<double>(d, &l, tiny_beam());
  EXPECT_EQ(model.report.metric_name(), "accuracy");
  for (const auto& row : model.report.rows) {
    EXPECT_GE(row.metric, 0.0);
    EXPECT_LE(row.metric, 1.0);
  }
  EXPECT_EQ(metrics_header(Scheme::beam).rfind("epoch,split,loss_b,", 0), 0u);
}

TEST(Evaluate, NmseVsRAcrossRatiosAndStrategies) {
  const auto dir = scratch("sweep");
  ExperimentPlan plan;
  plan.r_list = {0.125, 0.25, 0.5, 1.0};
  const auto res = run_experiment(shared_dataset(), nullptr, tiny_extrap(), plan, dir);
  EXPECT_EQ(res.runs.size(), 8u);
  const auto lines = io::split(slurp(dir / "nmse_vs_r.csv"), '\n');
  EXPECT_EQ(lines.front(), "r,strategy,m,nmse,seed,config_hash,model");
  int rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) rows += lines[i].empty() ? 0 : 1;
  EXPECT_EQ(rows, 8);
  EXPECT_TRUE(fs::exists(dir / "loss_vs_epoch.csv"));
  EXPECT_EQ(io::split(slurp(dir / "rate_vs_r.csv"), '\n').front(), beamforming::kRateCsvHeader);
  ASSERT_EQ(res.rates.size(), 8u);
  for (const auto& s : res.rates) EXPECT_LE(s.r_scheme, s.r_ub_cont + 1e-12);

  auto models = load_models(dir);
  EXPECT_EQ(models.size(), 8u);
  EvalOptions opt;
  EXPECT_EQ(evaluate(models, shared_dataset(), opt), slurp(dir / "nmse_vs_r.csv"));
}

TEST(Evaluate, NmseVsSubcarrierGap) {
  const auto dir = scratch("gap");
  auto c = tiny_extrap();
  c.subcarrier_window = 5;
  ExperimentPlan plan;
  plan.r_list = {0.5};
  plan.strategies = {Strategy::prob};
  plan.gaps = {0, 1, 3};
  run_experiment(shared_dataset(), nullptr, c, plan, dir);
  const auto lines = io::split(slurp(dir / "nmse_vs_gap.csv"), '\n');
  EXPECT_EQ(lines.front(), "gap,r,strategy,nmse,seed,config_hash,model");
  EXPECT_EQ(lines.at(3).rfind("3,0.5,prob,", 0), 0u);
  EXPECT_FALSE(fs::exists(dir / "rate_vs_r.csv"));
  c.subcarrier_gap = 4;
  EXPECT_THROW(train<double>(shared_dataset(), nullptr, c), std::invalid_argument);
}

TEST(Evaluate, PatternExportOnEightByEight) {
  const auto dir = scratch("pattern");
  const auto d = write_dataset(tiny_dataset(8, 4, 30, 8), dir / "d.bin");
  auto c = tiny_extrap();
  c.r = 0.125;
  c.iterations = 4;
  train_and_write(d, nullptr, c, dir / "runs" / "prob");
  auto models = load_models(dir / "runs");
  EvalOptions opt;
  opt.mode = EvalMode::pattern;
  const auto lines = io::split(evaluate(models, d, opt), '\n');
  EXPECT_EQ(lines.front(), "model,scheme,strategy,r,m,n_v,n_h,indices");
  const auto fields = io::split(lines.at(1), ',');
  ASSERT_EQ(fields.size(), 8u);
  EXPECT_EQ(fields[4], "8");
  EXPECT_EQ(io::split(fields[7], ' ').size(), 8u);
  const auto pj = io::read_json(dir / "runs" / "prob" / "pattern.json");
  EXPECT_EQ(pj.at("indices").size(), 8u);
}

TEST(Evaluate, ModeModelMismatch) {
  const auto dir = scratch("mismatch");
  const auto& d = shared_dataset();
  const auto l = compute_labels(d, 2, 2, 1e-3);
  auto c = tiny_beam();
  c.iterations = 2;
  train_and_write(d, &l, c, dir / "beam");
  auto models = load_models(dir);
  EvalOptions opt;
  try {
    evaluate(models, d, opt);
    FAIL() << "expected a mismatch";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("mode/model mismatch"), std::string::npos);
  }
  opt.mode = EvalMode::rate;
  const auto lines = io::split(evaluate(models, d, opt), '\n');
  EXPECT_EQ(lines.front(), beamforming::kRateCsvHeader);
  EXPECT_NE(lines.at(1).find(",beam,nan,"), std::string::npos) << lines.at(1);
  const auto other = write_dataset(tiny_dataset(4, 8, 60, 99), dir / "other.bin");
  EXPECT_ANY_THROW(evaluate(models, other, opt));
}
