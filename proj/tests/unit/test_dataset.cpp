#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "citriage/corpus_gen.hpp"
#include "citriage/dataset.hpp"

using namespace citriage;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "citriage_test_dataset";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<LabeledExample> toy_data(std::size_t per_category, std::size_t categories) {
  std::vector<LabeledExample> out;
  for (std::size_t c = 0; c < categories; ++c) {
    for (std::size_t i = 0; i < per_category; ++i) {
      out.push_back({"c" + std::to_string(c) + "-" + std::to_string(i), RawLog{{"line " + std::to_string(i)}}, c});
    }
  }
  return out;
}

std::set<std::string> ids(const std::vector<LabeledExample>& xs) {
  std::set<std::string> out;
  for (const auto& x : xs) out.insert(x.id);
  return out;
}

}  // namespace

TEST(Registry, DefaultOrderAndLookup) {
  const auto r = default_registry();
  ASSERT_EQ(r.size(), 13u);
  EXPECT_EQ(r.name(0), "misconfigured_env_variable");
  EXPECT_EQ(r.name(12), "helm_resource_error");
  EXPECT_EQ(r.id("flaky_ui_test"), 7u);
  EXPECT_EQ(r.entries()[3].rank, 4);
  EXPECT_FALSE(r.find("nope"));
  EXPECT_THROW((void)r.id("nope"), ValidationError);
  EXPECT_THROW((void)r.name(13), ValidationError);
}

TEST(Registry, RejectsDuplicatesAndEmptyNames) {
  CategoryRegistry r;
  r.add("a");
  EXPECT_THROW(r.add("a"), ValidationError);
  EXPECT_THROW(r.add(""), ValidationError);
}

TEST(Registry, FileRoundTrip) {
  const auto path = temp_path("registry.txt");
  save_registry(path, default_registry());
  EXPECT_EQ(load_registry(path), default_registry());
  {
    std::ofstream out(path);
    out << "# comment\n\nalpha\nbeta\n";
  }
  EXPECT_EQ(load_registry(path).names(), (std::vector<std::string>{"alpha", "beta"}));
}

TEST(Corpus, RoundTripAndErrors) {
  const auto path = temp_path("corpus.jsonl");
  const auto registry = default_registry();
  std::vector<LabeledExample> data{{"job-1", RawLog{{"a \"quoted\" line", "tab\there"}}, 2},
                                   {"job-2", RawLog{{"x"}}, 0}};
  save_corpus(path, registry, data);
  const auto loaded = load_corpus(path, registry);
  EXPECT_EQ(loaded.examples, data);

  // without a registry, categories are registered in order of appearance
  const auto inferred = load_corpus(path);
  EXPECT_EQ(inferred.registry.names(),
            (std::vector<std::string>{"dependency_installation_failure", "misconfigured_env_variable"}));

  {
    std::ofstream out(path);
    out << R"({"id":"a","category":"flaky_ui_test","log":"x"})" << '\n' << R"({"id":"b","log":"y"})" << '\n';
  }
  try {
    (void)load_corpus(path, registry);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("category"), std::string::npos);
  }
  {
    std::ofstream out(path);
    out << R"({"id":"a","category":"not_a_category","log":"x"})" << '\n';
  }
  EXPECT_THROW((void)load_corpus(path, registry), ValidationError);
  EXPECT_THROW((void)load_corpus(temp_path("missing.jsonl"), registry), IoError);
}

TEST(Split, StratifiedFractionsAndDisjointness) {
  CategoryRegistry registry({"a", "b", "c"});
  const auto data = toy_data(40, 3);
  const auto split = stratified_split(data, {0.25, 0.25, 0.5, 11}, registry);
  for (CategoryId c = 0; c < 3; ++c) {
    EXPECT_EQ(category_counts(split.learn, 3)[c], 10u);
    EXPECT_EQ(category_counts(split.valid, 3)[c], 10u);
    EXPECT_EQ(category_counts(split.test, 3)[c], 20u);
  }
  const auto l = ids(split.learn);
  const auto v = ids(split.valid);
  const auto t = ids(split.test);
  for (const auto& id : l) EXPECT_TRUE(!v.contains(id) && !t.contains(id));
  for (const auto& id : v) EXPECT_FALSE(t.contains(id));
  EXPECT_EQ(l.size() + v.size() + t.size(), data.size());
}

TEST(Split, FloorRoundingSendsRemainderToTest) {
  CategoryRegistry registry({"a", "b"});
  const auto data = toy_data(7, 2);
  const auto split = stratified_split(data, {0.25, 0.25, 0.5, 1}, registry);
  EXPECT_EQ(category_counts(split.learn, 2)[0], 1u);
  EXPECT_EQ(category_counts(split.valid, 2)[0], 1u);
  EXPECT_EQ(category_counts(split.test, 2)[0], 5u);
}

TEST(Split, DeterministicPerSeed) {
  CategoryRegistry registry({"a", "b"});
  const auto data = toy_data(20, 2);
  const auto a = stratified_split(data, {0.25, 0.25, 0.5, 5}, registry);
  const auto b = stratified_split(data, {0.25, 0.25, 0.5, 5}, registry);
  const auto c = stratified_split(data, {0.25, 0.25, 0.5, 6}, registry);
  EXPECT_EQ(a.learn, b.learn);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(ids(a.learn), ids(c.learn));
}

TEST(Split, Errors) {
  CategoryRegistry registry({"a", "b"});
  EXPECT_THROW((void)stratified_split(toy_data(3, 2), {}, registry), ValidationError);
  EXPECT_THROW((void)stratified_split(toy_data(10, 2), {0.5, 0.5, 0.5, 0}, registry), ValidationError);
}

TEST(Shots, ExactlyNPerCategoryFromLearn) {
  CategoryRegistry registry({"a", "b", "c"});
  const auto learn = toy_data(15, 3);
  const auto shots = sample_shots(learn, {12, 4}, registry);
  EXPECT_EQ(shots.size(), 36u);
  for (const auto n : category_counts(shots, 3)) EXPECT_EQ(n, 12u);
  const auto learn_ids = ids(learn);
  const auto shot_ids = ids(shots);
  EXPECT_EQ(shot_ids.size(), 36u);  // without replacement
  for (const auto& id : shot_ids) EXPECT_TRUE(learn_ids.contains(id));
  EXPECT_EQ(sample_shots(learn, {12, 4}, registry), shots);
  try {
    (void)sample_shots(toy_data(5, 3), {8, 0}, registry);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
  }
}

TEST(Check4N, ListsShortCategories) {
  CategoryRegistry registry({"a", "b"});
  auto data = toy_data(32, 1);
  for (auto& x : toy_data(31, 2)) {
    if (x.category == 1) data.push_back(x);
  }
  EXPECT_EQ(check_4n(data, 8, registry), (std::vector<std::string>{"b"}));
  EXPECT_TRUE(check_4n(data, 7, registry).empty());
}

TEST(Restrict, RelabelsPreservingRank) {
  const auto registry = default_registry();
  std::vector<LabeledExample> data{{"x", {}, 0}, {"y", {}, 5}, {"z", {}, 12}};
  const auto r = restrict_categories(data, registry, {12, 5});
  ASSERT_EQ(r.registry.size(), 2u);
  EXPECT_EQ(r.registry.name(0), "container_registry_server_error");
  EXPECT_EQ(r.registry.entries()[0].rank, 6);
  EXPECT_EQ(r.registry.name(1), "helm_resource_error");
  ASSERT_EQ(r.examples.size(), 2u);
  EXPECT_EQ(r.examples[0].id, "y");
  EXPECT_EQ(r.examples[0].category, 0u);
  EXPECT_EQ(r.examples[1].category, 1u);
}

TEST(RawLogFile, LoadsLines) {
  const auto path = temp_path("job.log");
  {
    std::ofstream out(path, std::ios::binary);
    out << "one\r\ntwo\n\nfour\n";
  }
  EXPECT_EQ(load_raw_log(path).lines, (std::vector<std::string>{"one", "two", "", "four"}));
  EXPECT_THROW((void)load_raw_log(temp_path("absent.log")), IoError);
}
