#include <fstream>

#include <gtest/gtest.h>

#include "pei/errors.hpp"
#include "pei/experiment.hpp"
#include "support.hpp"

namespace pei {
namespace {

ExperimentConfig tiny() {
  auto c = ExperimentConfig::toy();
  const ImageShape s{16, 16, 3};
  c.zoo.encoders = {{"a", EncoderArch::LinearProject, 1, s, 8}, {"b", EncoderArch::FourierFeature, 2, s, 8}};
  c.zoo.dataset = {DatasetGenerator::Shapes, 3, 60, 10, s, 1};
  c.zoo.head_hidden = {8};
  c.zoo.train.iterations = 20;
  c.attack.objectives = 2;
  c.attack.replicas = 1;
  c.attack.iterations = 2;
  c.attack.samples = 2;
  c.attack.shape = s;
  c.objectives = {DatasetGenerator::Shapes, 3, 0, 10, s, 99};
  c.casestudy.surrogate.shape = s;
  return c;
}

std::string config_error(const Json& j) {
  try {
    parse_experiment_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, PresetsRoundTrip) {
  for (const auto& c : {ExperimentConfig::toy(), ExperimentConfig::paper_defaults()}) {
    const auto j = to_json(c);
    EXPECT_EQ(to_json(parse_experiment_config(j)), j);
    EXPECT_EQ(config_fingerprint(parse_experiment_config(j)), config_fingerprint(c));
  }
  EXPECT_NE(config_fingerprint(ExperimentConfig::toy()), config_fingerprint(ExperimentConfig::paper_defaults()));
}

TEST(Config, PresetValues) {
  const auto toy = ExperimentConfig::toy();
  EXPECT_EQ(toy.zoo.encoders.size(), 6u);
  EXPECT_EQ(toy.attack.probe_queries_per_candidate(), 92'160u);
  const auto paper = ExperimentConfig::paper_defaults();
  EXPECT_EQ(paper.attack.probe_queries_per_candidate(), 1'000'000u);
  EXPECT_EQ(paper.attack.shape, (ImageShape{64, 64, 3}));
  EXPECT_EQ(paper.inference.threshold, 1.7);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = parse_experiment_config(Json{{"seed", 5}});
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.zoo.encoders.size(), 6u);
  EXPECT_EQ(parse_experiment_config(Json::object()).attack.samples, ExperimentConfig::toy().attack.samples);
}

TEST(Config, UnknownKeyIsNamed) {
  EXPECT_NE(config_error(Json{{"zoo", {{"bogus", 1}}}}).find("zoo.bogus"), std::string::npos);
  EXPECT_NE(config_error(Json{{"seeed", 1}}).find("seeed"), std::string::npos);
}

TEST(Config, WrongTypeIsNamed) {
  EXPECT_NE(config_error(Json{{"attack", {{"samples", "many"}}}}).find("attack.samples"), std::string::npos);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_FALSE(config_error(Json{{"attack", {{"epsilon", 0.0}}}}).empty());
  EXPECT_FALSE(config_error(Json{{"defense", {{"quality", 0}}}}).empty());
  EXPECT_FALSE(config_error(Json{{"inference", {{"mode", "probs"}}}}).empty());
}

TEST(Config, LoadFromFile) {
  test::TempDir dir;
  {
    std::ofstream f(dir / "c.json");
    f << R"({"seed": 9})";
  }
  EXPECT_EQ(load_experiment_config(dir / "c.json").seed, 9u);
  {
    std::ofstream f(dir / "bad.json");
    f << "{";
  }
  EXPECT_THROW(load_experiment_config(dir / "bad.json"), ConfigError);
}

TEST(Ecosystem, BuildSaveLoad) {
  const auto c = tiny();
  const auto eco = build_ecosystem(c);
  ASSERT_EQ(eco.services.size(), 2u);
  EXPECT_EQ(eco.services[1]->name(), "svc-b");
  EXPECT_EQ(eco.service_index("svc-b"), 1u);
  EXPECT_EQ(eco.service_index("b"), 1u);
  EXPECT_THROW(eco.encoder_index("zzz"), std::invalid_argument);

  test::TempDir dir;
  save_ecosystem(dir.path(), eco);
  const auto loaded = load_ecosystem(dir.path());
  EXPECT_EQ(config_fingerprint(loaded.config), config_fingerprint(c));
  const auto xs = objective_images(c);
  ASSERT_EQ(xs.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(loaded.services[i]->logits_unmetered(xs), eco.services[i]->logits_unmetered(xs));
  }

  test::TempDir empty;
  EXPECT_THROW(load_ecosystem(empty.path()), PrerequisiteMissing);
}

TEST(Ecosystem, InferenceRecordsHiddenAndLeaveOneOut) {
  const auto c = tiny();
  auto eco = build_ecosystem(c);
  const auto objectives = objective_images(c);
  const auto samples = synthesize_zoo(eco, objectives);
  EXPECT_EQ(samples.master_seed, c.seed);
  auto& svc = *eco.services[0];
  const auto r = infer_service(svc, objectives, samples, c, "a");
  EXPECT_EQ(r.hidden, "a");
  EXPECT_EQ(r.candidates.size(), 2u);
  EXPECT_EQ(r.config_fingerprint, config_fingerprint(c));
  // Only one candidate left after dropping the hidden one.
  EXPECT_THROW(infer_service(svc, objectives, samples, c, "a", true), std::invalid_argument);
}

}  // namespace
}  // namespace pei
