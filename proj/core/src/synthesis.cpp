#include "pei/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include "pei/json.hpp"
#include "pei/numerics.hpp"
#include "pei/tensor_io.hpp"

namespace pei {

AttackConfig AttackConfig::paper_defaults() { return AttackConfig{}; }

AttackConfig AttackConfig::toy() {
  AttackConfig c;
  c.objectives = 4;
  c.replicas = 3;
  c.iterations = 60;
  c.samples = 64;
  c.epsilon = 0.5;
  c.learning_rate = 0.05;
  c.shape = {32, 32, 3};
  return c;
}

void AttackConfig::validate() const {
  if (objectives < 1 || replicas < 1 || samples < 1) {
    throw std::invalid_argument("attack config: objectives, replicas and samples must be >= 1");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("attack config: epsilon must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("attack config: learning_rate must be > 0");
  if (!shape.valid()) throw std::invalid_argument("attack config: invalid image shape");
}

// BudgetLedger

BudgetLedger::BudgetLedger(std::size_t candidates) : probes_(candidates), objectives_(candidates) {}

BudgetLedger::BudgetLedger(const BudgetLedger& other)
    : probes_(other.candidates()), objectives_(other.candidates()), service_(other.service_.load()) {
  for (std::size_t i = 0; i < candidates(); ++i) {
    probes_[i] = other.probes_[i].load();
    objectives_[i] = other.objectives_[i].load();
  }
}

BudgetLedger& BudgetLedger::operator=(const BudgetLedger& other) {
  if (this != &other) {
    BudgetLedger copy(other);
    probes_ = std::vector<std::atomic<std::uint64_t>>(copy.candidates());
    objectives_ = std::vector<std::atomic<std::uint64_t>>(copy.candidates());
    for (std::size_t i = 0; i < candidates(); ++i) {
      probes_[i] = copy.probes_[i].load();
      objectives_[i] = copy.objectives_[i].load();
    }
    service_ = copy.service_.load();
  }
  return *this;
}

void BudgetLedger::record_probes(std::size_t candidate, std::uint64_t n) { probes_.at(candidate).fetch_add(n); }

void BudgetLedger::record_objective_encodings(std::size_t candidate, std::uint64_t n) {
  objectives_.at(candidate).fetch_add(n);
}

void BudgetLedger::record_service_queries(std::uint64_t n) { service_.fetch_add(n); }

std::uint64_t BudgetLedger::probe_queries(std::size_t candidate) const { return probes_.at(candidate).load(); }

std::uint64_t BudgetLedger::objective_queries(std::size_t candidate) const {
  return objectives_.at(candidate).load();
}

std::uint64_t BudgetLedger::candidate_queries(std::size_t candidate) const {
  return probe_queries(candidate) + objective_queries(candidate);
}

std::uint64_t BudgetLedger::encoder_queries_total() const {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < candidates(); ++i) total += candidate_queries(i);
  return total;
}

double estimate_cost(std::uint64_t queries, double price_per_query) {
  if (!(price_per_query >= 0.0)) throw std::invalid_argument("estimate_cost: price must be >= 0");
  return static_cast<double>(queries) * price_per_query;
}

double estimate_cost(const BudgetLedger& ledger, double price_per_query) {
  return estimate_cost(ledger.encoder_queries_total(), price_per_query);
}

BudgetProjection project_budget(const AttackConfig& config, double price_per_query) {
  config.validate();
  BudgetProjection p;
  p.probe_queries_per_candidate = config.probe_queries_per_candidate();
  p.encoder_queries_per_candidate = config.encoder_queries_per_candidate();
  p.probe_cost_per_candidate = estimate_cost(p.probe_queries_per_candidate, price_per_query);
  p.encoder_cost_per_candidate = estimate_cost(p.encoder_queries_per_candidate, price_per_query);
  return p;
}

// Gradient estimation

GradientEstimate estimate_gradient(const BatchLoss& loss, const ImageTensor& x, std::size_t samples,
                                   double epsilon, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("estimate_gradient: S must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("estimate_gradient: epsilon must be > 0");
  const std::size_t dim = x.size();
  std::vector<float> directions(samples * dim);
  SphereSampler sampler(seed);
  std::vector<ImageTensor> probes;
  probes.reserve(2 * samples);
  const auto eps = static_cast<float>(epsilon);
  const auto base = x.data();
  for (std::size_t s = 0; s < samples; ++s) {
    std::span<float> mu(directions.data() + s * dim, dim);
    sampler.draw(mu);
    std::vector<float> plus(dim), minus(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      plus[d] = base[d] + eps * mu[d];
      minus[d] = base[d] - eps * mu[d];
    }
    probes.emplace_back(x.shape(), std::move(plus));
    probes.emplace_back(x.shape(), std::move(minus));
  }

  const std::vector<double> values = loss(probes);
  if (values.size() != probes.size()) {
    throw std::logic_error("estimate_gradient: loss evaluator returned " + std::to_string(values.size()) +
                           " values for " + std::to_string(probes.size()) + " probes");
  }
  for (std::size_t p = 0; p < values.size(); ++p) {
    if (std::isnan(values[p])) {
      throw EstimationFailure("estimate_gradient: loss is NaN at probe " + std::to_string(p), p, probes[p]);
    }
  }

  std::vector<double> acc(dim, 0.0);
  double mean = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double coeff = (values[2 * s] - values[2 * s + 1]) / (2.0 * epsilon);
    mean += values[2 * s] + values[2 * s + 1];
    const float* mu = directions.data() + s * dim;
    for (std::size_t d = 0; d < dim; ++d) acc[d] += coeff * mu[d];
  }
  GradientEstimate out;
  out.gradient.resize(dim);
  const double scale = static_cast<double>(dim) / static_cast<double>(samples);
  for (std::size_t d = 0; d < dim; ++d) out.gradient[d] = static_cast<float>(scale * acc[d]);
  out.probe_mean_loss = mean / static_cast<double>(2 * samples);
  return out;
}

// Synthesis

namespace {

SampleResult run_sample(const Encoder& encoder, const ImageTensor& objective, const AttackConfig& config,
                        const SeedSpec& seed, BudgetLedger* ledger, std::size_t candidate) {
  config.validate();
  if (objective.shape() != config.shape || encoder.input_shape() != config.shape) {
    throw std::invalid_argument("synthesize_sample: objective, encoder and config shapes differ");
  }
  if (!objective.in_unit_range()) throw std::invalid_argument("synthesize_sample: objective is not in [0,1]");

  const Embedding target = encoder.encode(objective);
  if (ledger != nullptr) ledger->record_objective_encodings(candidate, 1);

  const BatchLoss loss = [&](std::span<const ImageTensor> probes) {
    const auto embeddings = encoder.encode_batch(probes);
    if (ledger != nullptr) ledger->record_probes(candidate, probes.size());
    std::vector<double> out(embeddings.size());
    for (std::size_t p = 0; p < embeddings.size(); ++p) out[p] = squared_embedding_loss(embeddings[p], target);
    return out;
  };

  SampleResult result;
  result.image = uniform_image(config.shape, derive_seed(seed, {"init"}));
  result.encoder_queries = 1;
  result.loss_trace.reserve(config.iterations);
  const auto eta = static_cast<float>(config.learning_rate);
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const auto est = estimate_gradient(loss, result.image, config.samples, config.epsilon, derive_seed(seed, {"iter", t}));
    result.encoder_queries += 2 * config.samples;
    result.loss_trace.push_back(est.probe_mean_loss);
    const auto step = linf_normalize(est.gradient);
    if (linf_norm(step) == 0.0) {
      ++result.skipped_updates;
      continue;
    }
    auto x = result.image.data();
    for (std::size_t d = 0; d < x.size(); ++d) x[d] -= eta * step[d];
    result.image.clamp_unit();
  }
  return result;
}

}  // namespace

SampleResult synthesize_sample(const Encoder& encoder, const ImageTensor& objective, const AttackConfig& config,
                               const SeedSpec& seed) {
  return run_sample(encoder, objective, config, seed, nullptr, 0);
}

std::span<const ImageTensor> AttackSampleSet::candidate_samples(std::size_t i) const {
  const std::size_t per = config.objectives * config.replicas;
  return std::span<const ImageTensor>(samples).subspan(i * per, per);
}

bool AttackSampleSet::complete() const {
  return samples.size() == candidates() * config.objectives * config.replicas &&
         std::all_of(samples.begin(), samples.end(), [](const ImageTensor& s) { return s.size() > 0; });
}

AttackSampleSet synthesize_all(std::span<const Encoder* const> candidates, std::span<const ImageTensor> objectives,
                               const AttackConfig& config, const SeedSpec& root, const SynthesisOptions& options) {
  config.validate();
  if (candidates.empty()) throw std::invalid_argument("synthesize_all: need at least one candidate");
  if (objectives.size() != config.objectives) {
    throw std::invalid_argument("synthesize_all: expected " + std::to_string(config.objectives) + " objectives, got " +
                                std::to_string(objectives.size()));
  }

  AttackSampleSet set;
  set.config = config;
  set.master_seed = root.master_seed;
  for (const auto* c : candidates) set.candidate_names.push_back(c->name());
  const std::size_t total = candidates.size() * config.objectives * config.replicas;
  set.samples.resize(total);
  set.provenance.resize(total);
  set.ledger = BudgetLedger(candidates.size());

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::atomic<bool> abort{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::string first_error_where;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      const std::size_t k = task % config.replicas;
      const std::size_t j = (task / config.replicas) % config.objectives;
      const std::size_t i = task / (config.replicas * config.objectives);
      const SeedSpec seed = root.child({"cand", i, "obj", j, "rep", k});
      try {
        auto r = run_sample(*candidates[i], objectives[j], config, seed, &set.ledger, i);
        set.provenance[task] = {derive_seed(seed, {"init"}), r.final_loss(), std::move(r.loss_trace), r.skipped_updates};
        set.samples[task] = std::move(r.image);
        const std::size_t finished = done.fetch_add(1) + 1;
        if (options.progress) options.progress(finished, total);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
          first_error_where = "candidate " + candidates[i]->name() + ", objective " + std::to_string(j) +
                              ", replica " + std::to_string(k);
        }
        abort = true;
      }
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, total);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  if (first_error) {
    std::string reason;
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      reason = e.what();
    } catch (...) {
      reason = "unknown error";
    }
    throw SynthesisFailure("synthesis aborted at " + first_error_where + ": " + reason + " (" +
                               std::to_string(done.load()) + " of " + std::to_string(total) + " samples finished)",
                           done.load(), set.ledger);
  }
  return set;
}

// Persistence

namespace {

std::string sample_stem(std::size_t i, std::size_t j, std::size_t k) {
  return "c" + std::to_string(i) + "_o" + std::to_string(j) + "_r" + std::to_string(k);
}

}  // namespace

void save_sample_set(const std::filesystem::path& dir, const AttackSampleSet& set,
                     std::span<const ImageTensor> objectives, bool png) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "samples");
  fs::create_directories(dir / "objectives");
  if (png) fs::create_directories(dir / "png");

  for (std::size_t j = 0; j < objectives.size(); ++j) {
    io::write_image(dir / "objectives" / ("o" + std::to_string(j) + ".peit"), objectives[j]);
    if (png) io::write_png(dir / "png" / ("objective_o" + std::to_string(j) + ".png"), objectives[j]);
  }

  Json samples = Json::array();
  for (std::size_t i = 0; i < set.candidates(); ++i) {
    for (std::size_t j = 0; j < set.config.objectives; ++j) {
      for (std::size_t k = 0; k < set.config.replicas; ++k) {
        const std::size_t idx = set.index(i, j, k);
        const std::string stem = sample_stem(i, j, k);
        io::write_image(dir / "samples" / (stem + ".peit"), set.samples[idx]);
        if (png) io::write_png(dir / "png" / (stem + ".png"), set.samples[idx]);
        const auto& prov = set.provenance[idx];
        samples.push_back({{"candidate", i},
                           {"objective", j},
                           {"replica", k},
                           {"file", "samples/" + stem + ".peit"},
                           {"shape", set.samples[idx].shape()},
                           {"init_seed", prov.init_seed},
                           {"final_loss", prov.final_loss ? Json(*prov.final_loss) : Json(nullptr)},
                           {"skipped_updates", prov.skipped_updates},
                           {"loss_trace", prov.loss_trace}});
      }
    }
  }

  Json manifest = {{"format", "pei-attack-samples"},
                   {"version", 1},
                   {"config", set.config},
                   {"master_seed", set.master_seed},
                   {"candidates", set.candidate_names},
                   {"objective_count", objectives.size()},
                   {"transforms", set.transforms},
                   {"ledger", ledger_to_json(set.ledger, set.candidate_names)},
                   {"samples", samples}};
  write_json_file(dir / "manifest.json", manifest);
}

AttackSampleSet load_sample_set(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("format", "") != "pei-attack-samples") {
    throw std::invalid_argument("load_sample_set: " + dir.string() + " is not an attack sample directory");
  }
  AttackSampleSet set;
  set.config = manifest.at("config").get<AttackConfig>();
  set.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  set.candidate_names = manifest.at("candidates").get<std::vector<std::string>>();
  set.transforms = manifest.at("transforms").get<std::vector<std::string>>();
  set.ledger = ledger_from_json(manifest.at("ledger"));
  const std::size_t total = set.candidates() * set.config.objectives * set.config.replicas;
  set.samples.resize(total);
  set.provenance.resize(total);
  for (const auto& s : manifest.at("samples")) {
    const std::size_t idx = set.index(s.at("candidate").get<std::size_t>(), s.at("objective").get<std::size_t>(),
                                      s.at("replica").get<std::size_t>());
    if (idx >= total) throw std::invalid_argument("load_sample_set: sample index out of range");
    set.samples[idx] = io::read_image(dir / s.at("file").get<std::string>());
    auto& prov = set.provenance[idx];
    prov.init_seed = s.at("init_seed").get<std::uint64_t>();
    if (!s.at("final_loss").is_null()) prov.final_loss = s.at("final_loss").get<double>();
    prov.skipped_updates = s.at("skipped_updates").get<std::size_t>();
    prov.loss_trace = s.at("loss_trace").get<std::vector<double>>();
  }
  if (!set.complete()) throw std::invalid_argument("load_sample_set: missing sample slots in " + dir.string());
  return set;
}

std::vector<ImageTensor> load_objectives(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "manifest.json");
  std::vector<ImageTensor> out;
  const auto n = manifest.at("objective_count").get<std::size_t>();
  for (std::size_t j = 0; j < n; ++j) out.push_back(io::read_image(dir / "objectives" / ("o" + std::to_string(j) + ".peit")));
  return out;
}

}  // namespace pei
