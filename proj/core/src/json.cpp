#include "pei/json.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace pei {

void to_json(Json& j, const ImageShape& s) { j = Json::array({s.height, s.width, s.channels}); }

void from_json(const Json& j, ImageShape& s) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("image shape must be [height, width, channels]");
  s = {j[0].get<std::uint32_t>(), j[1].get<std::uint32_t>(), j[2].get<std::uint32_t>()};
}

void to_json(Json& j, const AttackConfig& c) {
  j = Json{{"objectives", c.objectives}, {"replicas", c.replicas},         {"iterations", c.iterations},
           {"samples", c.samples},       {"epsilon", c.epsilon},           {"learning_rate", c.learning_rate},
           {"shape", c.shape}};
}

void from_json(const Json& j, AttackConfig& c) {
  c.objectives = j.at("objectives").get<std::size_t>();
  c.replicas = j.at("replicas").get<std::size_t>();
  c.iterations = j.at("iterations").get<std::size_t>();
  c.samples = j.at("samples").get<std::size_t>();
  c.epsilon = j.at("epsilon").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.shape = j.at("shape").get<ImageShape>();
}

void to_json(Json& j, const ToyEncoderSpec& s) {
  j = Json{{"name", s.name}, {"arch", std::string(to_string(s.arch))}, {"seed", s.seed}, {"input", s.input}, {"dim", s.dim}};
}

void from_json(const Json& j, ToyEncoderSpec& s) {
  s.name = j.at("name").get<std::string>();
  s.arch = parse_encoder_arch(j.at("arch").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.input = j.at("input").get<ImageShape>();
  s.dim = j.at("dim").get<std::size_t>();
}

void to_json(Json& j, const DatasetSpec& s) {
  j = Json{{"generator", std::string(to_string(s.generator))},
           {"classes", s.classes},
           {"train_samples", s.train_samples},
           {"test_samples", s.test_samples},
           {"shape", s.shape},
           {"seed", s.seed}};
}

void from_json(const Json& j, DatasetSpec& s) {
  s.generator = parse_dataset_generator(j.at("generator").get<std::string>());
  s.classes = j.at("classes").get<int>();
  s.train_samples = j.at("train_samples").get<std::size_t>();
  s.test_samples = j.at("test_samples").get<std::size_t>();
  s.shape = j.at("shape").get<ImageShape>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(Json& j, const HeadShape& s) {
  j = Json{{"input_dim", s.input_dim}, {"hidden", s.hidden}, {"classes", s.classes}};
}

void from_json(const Json& j, HeadShape& s) {
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.classes = j.at("classes").get<std::size_t>();
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"iterations", c.iterations}, {"batch", c.batch},     {"learning_rate", c.learning_rate},
           {"momentum", c.momentum},     {"weight_decay", c.weight_decay}, {"decay_at", c.decay_at},
           {"seed", c.seed}};
}

void from_json(const Json& j, TrainConfig& c) {
  c.iterations = j.at("iterations").get<std::size_t>();
  c.batch = j.at("batch").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.decay_at = j.at("decay_at").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

Json ledger_to_json(const BudgetLedger& ledger, std::span<const std::string> names) {
  Json cands = Json::array();
  for (std::size_t i = 0; i < ledger.candidates(); ++i) {
    cands.push_back({{"name", i < names.size() ? names[i] : std::to_string(i)},
                     {"probe_queries", ledger.probe_queries(i)},
                     {"objective_queries", ledger.objective_queries(i)},
                     {"total", ledger.candidate_queries(i)}});
  }
  return {{"candidates", cands}, {"service_queries", ledger.service_queries()}};
}

BudgetLedger ledger_from_json(const Json& j) {
  const auto& cands = j.at("candidates");
  BudgetLedger ledger(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    ledger.record_probes(i, cands[i].at("probe_queries").get<std::uint64_t>());
    ledger.record_objective_encodings(i, cands[i].at("objective_queries").get<std::uint64_t>());
  }
  ledger.record_service_queries(j.at("service_queries").get<std::uint64_t>());
  return ledger;
}

std::string json_fingerprint(const Json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return Json::parse(f);
}

}  // namespace pei
