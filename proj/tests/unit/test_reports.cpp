#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "citriage/reports.hpp"

using namespace citriage;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "citriage_reports";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(RankSets, ParseRangesAndLists) {
  const auto registry = default_registry();
  EXPECT_EQ(parse_rank_set("1-3", registry), (std::vector<CategoryId>{0, 1, 2}));
  EXPECT_EQ(parse_rank_set("5, 1,3-4", registry), (std::vector<CategoryId>{0, 2, 3, 4}));
  EXPECT_EQ(parse_rank_set("2,2", registry), (std::vector<CategoryId>{1}));
  const auto sets = parse_k_sets("1-8;1-10;1-13", registry);
  ASSERT_EQ(sets.size(), 3u);
  EXPECT_EQ(sets[0].size(), 8u);
  EXPECT_EQ(sets[1].size(), 10u);
  EXPECT_EQ(sets[2].size(), 13u);
}

TEST(RankSets, Errors) {
  const auto registry = default_registry();
  EXPECT_THROW((void)parse_rank_set("", registry), ValidationError);
  EXPECT_THROW((void)parse_rank_set("0-3", registry), ValidationError);
  EXPECT_THROW((void)parse_rank_set("1-14", registry), ValidationError);
  EXPECT_THROW((void)parse_rank_set("4-2", registry), ValidationError);
  EXPECT_THROW((void)parse_rank_set("a", registry), ValidationError);
  EXPECT_THROW((void)parse_k_sets("1-3;", registry), ValidationError);
}

TEST(ExperimentConfig, LoadsAndResolvesPaths) {
  const auto path = write_temp("exp.json", R"({"corpus": "data/corpus.jsonl", "registry": "/abs/reg.txt",
      "shots": 6, "iterations": 3, "trials": 2, "seed": 9, "k_sets": ["1-8", "1-13"], "tau": 4,
      "output_dir": "out", "jobs": 2})");
  const auto cfg = load_experiment_config(path);
  EXPECT_EQ(cfg.corpus, path.parent_path() / "data/corpus.jsonl");
  EXPECT_EQ(cfg.registry, std::filesystem::path("/abs/reg.txt"));
  EXPECT_EQ(cfg.shots, 6u);
  EXPECT_EQ(cfg.iterations, 3u);
  EXPECT_EQ(cfg.trials, 2u);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.k_sets, (std::vector<std::string>{"1-8", "1-13"}));
  EXPECT_EQ(cfg.tau, 4u);
  EXPECT_EQ(cfg.output_dir, path.parent_path() / "out");
  EXPECT_EQ(cfg.jobs, 2u);

  const auto minimal = load_experiment_config(write_temp("min.json", R"({"corpus": "c.jsonl"})"));
  EXPECT_EQ(minimal.shots, 8u);
  EXPECT_EQ(minimal.iterations, 30u);
  EXPECT_FALSE(minimal.registry.has_value());
}

TEST(ExperimentConfig, Errors) {
  EXPECT_THROW((void)load_experiment_config("/nonexistent/exp.json"), IoError);
  EXPECT_THROW((void)load_experiment_config(write_temp("bad.json", "{not json")), ParseError);
  EXPECT_THROW((void)load_experiment_config(write_temp("arr.json", "[1]")), ParseError);
  EXPECT_THROW((void)load_experiment_config(write_temp("nocorpus.json", R"({"shots": 2})")), ParseError);
  EXPECT_THROW((void)load_experiment_config(write_temp("type.json", R"({"corpus": "c", "shots": "many"})")),
               ParseError);
}

TEST(Records, PredictionAndSift) {
  const CategoryRegistry registry({"alpha", "beta", "gamma"});
  Prediction p;
  p.proba = Eigen::Vector3d(0.2, 0.7, 0.1);
  p.category = 1;
  p.topk = {1, 0};
  const auto rec = prediction_record(p, registry);
  EXPECT_EQ(rec["category"], "beta");
  EXPECT_EQ(rec["topk"], json({"beta", "alpha"}));
  EXPECT_DOUBLE_EQ(rec["probabilities"]["gamma"].get<double>(), 0.1);

  SiftResult r;
  r.ranges = {{4, 5}, {9, 9}};
  r.original_category = 2;
  r.classifier_calls = 7;
  const auto s = sift_record("job-1", 16, r, registry);
  EXPECT_EQ(s["job_id"], "job-1");
  EXPECT_EQ(s["predicted_category"], "gamma");
  EXPECT_EQ(s["ranges"], json::parse("[[4,5],[9,9]]"));
  EXPECT_EQ(s["covered_lines"], 3);
  EXPECT_DOUBLE_EQ(s["reduction_ratio"].get<double>(), 1.0 - 3.0 / 16.0);
  EXPECT_EQ(s["classifier_calls"], 7);
}

TEST(Records, MetricsAndIterations) {
  const CategoryRegistry registry({"alpha", "beta"});
  MetricsReport m;
  m.macro_f1 = 0.5;
  m.per_class_f1 = {0.25, 0.75};
  const auto rec = metrics_record(m, registry);
  EXPECT_DOUBLE_EQ(rec["per_class_f1"]["beta"].get<double>(), 0.75);
  EXPECT_DOUBLE_EQ(rec["macro_f1"].get<double>(), 0.5);

  IterationSummary it;
  it.iteration = 3;
  it.trials = {{HyperParams{}, 0.4}, {HyperParams{1e-5, 2, 8, 300}, 0.6}};
  it.best_trial = 1;
  it.test = m;
  const auto ir = iteration_record(it, registry);
  EXPECT_EQ(ir["type"], "iteration");
  EXPECT_EQ(ir["best_trial"], 1);
  EXPECT_EQ(ir["trials"][1]["max_iter"], 300);
  EXPECT_DOUBLE_EQ(ir["trials"][1]["valid_macro_f1"].get<double>(), 0.6);

  MccvResult r;
  r.iterations = {it};
  r.aggregate = aggregate(std::vector<MetricsReport>{m});
  const auto ar = aggregate_record(r, registry);
  EXPECT_EQ(ar["categories"], json({"alpha", "beta"}));
  EXPECT_EQ(ar["iterations"], 1);
  EXPECT_EQ(ar["std_kind"], "population");
}
