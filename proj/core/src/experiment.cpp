#include "pei/experiment.hpp"

#include <algorithm>
#include <stdexcept>

#include "pei/errors.hpp"

namespace pei {
namespace {

constexpr int kEcosystemFormat = 1;

Json shape_json(const ResizeSpec& r) {
  return {{"height", r.height}, {"width", r.width}, {"interpolation", std::string(to_string(r.interpolation))}};
}

bool same_kind(const Json& want, const Json& got) {
  if (want.is_number_unsigned()) return got.is_number_integer() && got.get<std::int64_t>() >= 0;
  if (want.is_number_integer()) return got.is_number_integer();
  if (want.is_number()) return got.is_number();
  return want.type() == got.type();
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Every key in `got` must exist in `want` with a compatible type. Arrays of
// objects are checked element-wise against `item` when given.
void check_keys(const Json& want, const Json& got, const std::string& where, const Json* item = nullptr) {
  if (!same_kind(want, got)) throw ConfigError("config key '" + where + "' has the wrong type");
  if (got.is_object()) {
    for (auto it = got.begin(); it != got.end(); ++it) {
      const std::string key = join(where, it.key());
      if (!want.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
      const Json* sub = nullptr;
      static const Json encoder_item = ToyEncoderSpec{"x", EncoderArch::LinearProject, 0, {32, 32, 3}, 64};
      if (key == "zoo.encoders") sub = &encoder_item;
      check_keys(want.at(it.key()), it.value(), key, sub);
    }
  } else if (got.is_array() && item != nullptr) {
    for (std::size_t n = 0; n < got.size(); ++n) {
      const std::string key = where + "[" + std::to_string(n) + "]";
      if (!got[n].is_object()) throw ConfigError("config key '" + key + "' must be an object");
      for (auto it = got[n].begin(); it != got[n].end(); ++it) {
        if (!item->contains(it.key())) throw ConfigError("unknown config key '" + key + "." + it.key() + "'");
      }
      for (auto it = item->begin(); it != item->end(); ++it) {
        if (!got[n].contains(it.key())) throw ConfigError("config key '" + key + "." + it.key() + "' is missing");
        check_keys(it.value(), got[n].at(it.key()), key + "." + it.key());
      }
    }
  }
}

template <class F>
void in_section(const std::string& key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  in_section("attack", [&] { c.attack.validate(); });
  if (c.zoo.encoders.size() < 2) throw ConfigError("config key 'zoo.encoders' needs at least two encoders");
  std::vector<std::string> names;
  for (std::size_t n = 0; n < c.zoo.encoders.size(); ++n) {
    const auto& e = c.zoo.encoders[n];
    const std::string key = "zoo.encoders[" + std::to_string(n) + "]";
    if (e.name.empty()) throw ConfigError("config key '" + key + ".name' is empty");
    if (std::find(names.begin(), names.end(), e.name) != names.end()) {
      throw ConfigError("config key '" + key + ".name' repeats '" + e.name + "'");
    }
    names.push_back(e.name);
    if (e.input != c.attack.shape) {
      throw ConfigError("config key '" + key + ".input' differs from attack.shape");
    }
    if (e.input != c.zoo.dataset.shape) {
      throw ConfigError("config key '" + key + ".input' differs from zoo.dataset.shape");
    }
    in_section(key, [&] { build_encoder(e); });
  }
  if (c.zoo.dataset.classes < 2) throw ConfigError("config key 'zoo.dataset.classes' must be >= 2");
  if (c.objectives.shape != c.attack.shape) throw ConfigError("config key 'objectives.shape' differs from attack.shape");
  if (c.objectives.test_samples < c.attack.objectives) {
    throw ConfigError("config key 'objectives.test_samples' is smaller than attack.objectives");
  }
  if (c.casestudy.surrogate.generator == c.zoo.dataset.generator) {
    throw ConfigError("config key 'casestudy.surrogate.generator' must differ from zoo.dataset.generator");
  }
  if (!c.casestudy.wrong_encoder.empty() &&
      std::find(names.begin(), names.end(), c.casestudy.wrong_encoder) == names.end()) {
    throw ConfigError("config key 'casestudy.wrong_encoder' names no zoo encoder");
  }
  if (c.inference.similarity != "indicator") {
    throw ConfigError("config key 'inference.similarity' must be \"indicator\"");
  }
  if (!(c.inference.threshold > 0.0)) throw ConfigError("config key 'inference.threshold' must be positive");
  in_section("defense.quality", [&] { CodecConfig{c.defense.quality}.validate(); });
  if (c.defense.bypass.height == 0 || c.defense.bypass.width == 0) {
    throw ConfigError("config key 'defense.bypass' needs a non-zero size");
  }
  if (c.endpoints.base_port < 0 || c.endpoints.base_port > 65535) {
    throw ConfigError("config key 'endpoints.base_port' is out of range");
  }
  if (!(c.endpoints.price_per_query >= 0.0)) {
    throw ConfigError("config key 'endpoints.price_per_query' must be non-negative");
  }
  if (c.casestudy.adv_iterations == 0 || c.casestudy.adv_candidates == 0 || !(c.casestudy.adv_step > 0.0)) {
    throw ConfigError("config section 'casestudy' needs positive adversarial settings");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::toy() {
  ExperimentConfig c;
  c.seed = 2024;
  c.zoo.encoders = {{"linear-a", EncoderArch::LinearProject, 11}, {"linear-b", EncoderArch::LinearProject, 12},
                    {"patch", EncoderArch::PatchProject, 13},     {"conv-a", EncoderArch::RandomConv, 14},
                    {"conv-b", EncoderArch::RandomConv, 15},      {"fourier", EncoderArch::FourierFeature, 16}};
  c.zoo.dataset = DatasetSpec{DatasetGenerator::Shapes, 10, 2000, 500, {32, 32, 3}, 1};
  c.zoo.train.seed = 3;
  c.attack = AttackConfig::toy();
  c.objectives = DatasetSpec{DatasetGenerator::Shapes, 10, 0, 500, {32, 32, 3}, 99};
  c.casestudy.recipe.seed = 5;
  return c;
}

ExperimentConfig ExperimentConfig::paper_defaults() {
  ExperimentConfig c = toy();
  c.attack = AttackConfig::paper_defaults();
  for (auto& e : c.zoo.encoders) e.input = c.attack.shape;
  c.zoo.dataset.shape = c.attack.shape;
  c.objectives.shape = c.attack.shape;
  c.casestudy.surrogate.shape = c.attack.shape;
  return c;
}

Json to_json(const ExperimentConfig& c) {
  return {
      {"seed", c.seed},
      {"zoo",
       {{"encoders", c.zoo.encoders},
        {"dataset", c.zoo.dataset},
        {"head_hidden", c.zoo.head_hidden},
        {"train", c.zoo.train},
        {"service_mode", std::string(to_string(c.zoo.service_mode))}}},
      {"attack", c.attack},
      {"objectives", c.objectives},
      {"inference",
       {{"similarity", c.inference.similarity},
        {"threshold", c.inference.threshold},
        {"mode", std::string(to_string(c.inference.mode))}}},
      {"defense", {{"quality", c.defense.quality}, {"bypass", shape_json(c.defense.bypass)}}},
      {"casestudy",
       {{"surrogate", c.casestudy.surrogate},
        {"recipe", c.casestudy.recipe},
        {"wrong_encoder", c.casestudy.wrong_encoder},
        {"adv_iterations", c.casestudy.adv_iterations},
        {"adv_step", c.casestudy.adv_step},
        {"adv_candidates", c.casestudy.adv_candidates}}},
      {"endpoints",
       {{"host", c.endpoints.host},
        {"base_port", c.endpoints.base_port},
        {"price_per_query", c.endpoints.price_per_query},
        {"meter_log", c.endpoints.meter_log}}},
  };
}

ExperimentConfig parse_experiment_config(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Json merged = to_json(ExperimentConfig::toy());
  check_keys(merged, j, "");
  merged.merge_patch(j);

  ExperimentConfig c;
  in_section("seed", [&] { c.seed = merged.at("seed").get<std::uint64_t>(); });
  const Json& zoo = merged.at("zoo");
  in_section("zoo.encoders", [&] { c.zoo.encoders = zoo.at("encoders").get<std::vector<ToyEncoderSpec>>(); });
  in_section("zoo.dataset", [&] { c.zoo.dataset = zoo.at("dataset").get<DatasetSpec>(); });
  in_section("zoo.head_hidden", [&] { c.zoo.head_hidden = zoo.at("head_hidden").get<std::vector<std::size_t>>(); });
  in_section("zoo.train", [&] { c.zoo.train = zoo.at("train").get<TrainConfig>(); });
  in_section("zoo.service_mode",
             [&] { c.zoo.service_mode = parse_output_mode(zoo.at("service_mode").get<std::string>()); });
  in_section("attack", [&] { c.attack = merged.at("attack").get<AttackConfig>(); });
  in_section("objectives", [&] { c.objectives = merged.at("objectives").get<DatasetSpec>(); });
  const Json& inf = merged.at("inference");
  in_section("inference", [&] {
    c.inference.similarity = inf.at("similarity").get<std::string>();
    c.inference.threshold = inf.at("threshold").get<double>();
  });
  in_section("inference.mode", [&] { c.inference.mode = parse_output_mode(inf.at("mode").get<std::string>()); });
  const Json& def = merged.at("defense");
  in_section("defense.quality", [&] { c.defense.quality = def.at("quality").get<int>(); });
  in_section("defense.bypass", [&] {
    const Json& b = def.at("bypass");
    c.defense.bypass = {b.at("height").get<std::uint32_t>(), b.at("width").get<std::uint32_t>(),
                        parse_interpolation(b.at("interpolation").get<std::string>())};
  });
  const Json& cs = merged.at("casestudy");
  in_section("casestudy.surrogate", [&] { c.casestudy.surrogate = cs.at("surrogate").get<DatasetSpec>(); });
  in_section("casestudy.recipe", [&] { c.casestudy.recipe = cs.at("recipe").get<TrainConfig>(); });
  in_section("casestudy", [&] {
    c.casestudy.wrong_encoder = cs.at("wrong_encoder").get<std::string>();
    c.casestudy.adv_iterations = cs.at("adv_iterations").get<std::size_t>();
    c.casestudy.adv_step = cs.at("adv_step").get<double>();
    c.casestudy.adv_candidates = cs.at("adv_candidates").get<std::size_t>();
  });
  const Json& ep = merged.at("endpoints");
  in_section("endpoints", [&] {
    c.endpoints.host = ep.at("host").get<std::string>();
    c.endpoints.base_port = ep.at("base_port").get<int>();
    c.endpoints.price_per_query = ep.at("price_per_query").get<double>();
    c.endpoints.meter_log = ep.at("meter_log").get<std::string>();
  });
  validate(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(j);
}

std::string config_fingerprint(const ExperimentConfig& c) { return json_fingerprint(to_json(c)); }

std::vector<const Encoder*> Ecosystem::candidates() const {
  std::vector<const Encoder*> out;
  for (const auto& e : encoders) out.push_back(e.get());
  return out;
}

std::size_t Ecosystem::encoder_index(const std::string& name) const {
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    if (encoders[i]->name() == name) return i;
  }
  throw std::invalid_argument("no encoder named '" + name + "'");
}

std::size_t Ecosystem::service_index(const std::string& name) const {
  for (std::size_t i = 0; i < services.size(); ++i) {
    if (services[i]->name() == name || encoders[i]->name() == name) return i;
  }
  throw std::invalid_argument("no service named '" + name + "'");
}

std::string service_name(const ToyEncoderSpec& hidden) { return "svc-" + hidden.name; }

Ecosystem build_ecosystem(const ExperimentConfig& config) {
  validate(config);
  Ecosystem eco;
  eco.config = config;
  const LabeledDataset train = generate_split(config.zoo.dataset, Split::Train);
  for (const auto& spec : config.zoo.encoders) {
    auto encoder = build_encoder(spec);
    const HeadShape shape{encoder->embedding_dim(), config.zoo.head_hidden,
                          static_cast<std::size_t>(config.zoo.dataset.classes)};
    TrainedHead trained = train_head(*encoder, train, shape, config.zoo.train);
    eco.services.push_back(std::make_shared<ServiceInstance>(
        service_name(spec), encoder, std::make_shared<const DownstreamHead>(std::move(trained.head)),
        config.zoo.service_mode));
    eco.encoders.push_back(std::move(encoder));
    eco.training.push_back(trained.stats);
  }
  return eco;
}

void save_ecosystem(const std::filesystem::path& dir, const Ecosystem& eco) {
  const ExperimentConfig& config = eco.config;
  std::filesystem::create_directories(dir / "heads");
  Json services = Json::array();
  for (std::size_t i = 0; i < eco.services.size(); ++i) {
    const auto& svc = *eco.services[i];
    save_head(dir / "heads" / svc.name(), *svc.head());
    Json entry{{"name", svc.name()}, {"encoder", eco.encoders[i]->spec()}};
    if (i < eco.training.size()) {
      entry["training"] = {{"iterations", eco.training[i].iterations},
                           {"final_loss", eco.training[i].final_loss},
                           {"train_accuracy", eco.training[i].train_accuracy}};
    }
    services.push_back(std::move(entry));
  }
  write_json_file(dir / "ecosystem.json", {{"format", kEcosystemFormat},
                                           {"config_fingerprint", config_fingerprint(config)},
                                           {"config", to_json(config)},
                                           {"services", services}});
}

Ecosystem load_ecosystem(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "ecosystem.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw PrerequisiteMissing("no ecosystem at " + dir.string() + " (run `pei build` first)");
  }
  const Json manifest = read_json_file(manifest_path);
  if (manifest.value("format", 0) != kEcosystemFormat) {
    throw std::invalid_argument(manifest_path.string() + ": unsupported format");
  }
  Ecosystem eco;
  eco.config = parse_experiment_config(manifest.at("config"));
  const ExperimentConfig& config = eco.config;
  for (const auto& entry : manifest.at("services")) {
    auto encoder = build_encoder(entry.at("encoder").get<ToyEncoderSpec>());
    auto head = std::make_shared<const DownstreamHead>(load_head(dir / "heads" / entry.at("name").get<std::string>()));
    if (head->input_dim() != encoder->embedding_dim()) {
      throw std::invalid_argument("head of " + entry.at("name").get<std::string>() + " does not match its encoder");
    }
    eco.services.push_back(std::make_shared<ServiceInstance>(entry.at("name").get<std::string>(), encoder, head,
                                                             config.zoo.service_mode));
    eco.encoders.push_back(std::move(encoder));
    TrainStats stats;
    if (entry.contains("training")) {
      stats.iterations = entry["training"].at("iterations").get<std::size_t>();
      stats.final_loss = entry["training"].at("final_loss").get<double>();
      stats.train_accuracy = entry["training"].at("train_accuracy").get<double>();
    }
    eco.training.push_back(stats);
  }
  return eco;
}

std::vector<ImageTensor> objective_images(const ExperimentConfig& config) {
  return generate_split(config.objectives, Split::Test, config.attack.objectives).images;
}

SeedSpec synthesis_root(const ExperimentConfig& config) { return SeedSpec{config.seed, {}}; }

AttackSampleSet synthesize_zoo(const Ecosystem& eco, std::span<const ImageTensor> objectives,
                               const SynthesisOptions& options, std::span<const Encoder* const> candidates) {
  const auto own = eco.candidates();
  if (candidates.empty()) candidates = own;
  return synthesize_all(candidates, objectives, eco.config.attack, synthesis_root(eco.config), options);
}

PeiReport infer_service(TargetService& service, std::span<const ImageTensor> objectives,
                        const AttackSampleSet& samples, const ExperimentConfig& config,
                        std::optional<std::string> hidden, bool leave_one_out) {
  InferenceOptions options;
  options.threshold = config.inference.threshold;
  options.mode = config.inference.mode;
  options.config_fingerprint = config_fingerprint(config);
  if (leave_one_out) {
    if (!hidden) throw std::invalid_argument("leave-one-out needs the hidden encoder");
    options.include = pei::leave_one_out(samples, *hidden);
  }
  const IndicatorSimilarity sim;
  PeiReport report = run_inference(service, objectives, samples, sim, options);
  report.hidden = std::move(hidden);
  return report;
}

}  // namespace pei
