#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pei/case_studies.hpp"
#include "pei/defense.hpp"
#include "pei/eaas.hpp"
#include "pei/errors.hpp"
#include "pei/experiment.hpp"
#include "pei/inference.hpp"
#include "pei/report.hpp"
#include "pei/synthesis.hpp"
#include "pei/tensor_io.hpp"

namespace fs = std::filesystem;

namespace pei::cli {
namespace {

class RefusedOverwrite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json header(const ExperimentConfig& config) {
  return {{"tool", "pei"},
          {"version", PEI_VERSION},
          {"config_fingerprint", config_fingerprint(config)},
          {"seed", config.seed},
          {"generated_at", utc_now()}};
}

void prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    if (!force) throw RefusedOverwrite(dir.string() + " already exists (use --force to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void emit(std::ostream& out, const fs::path& dir, const std::string& stem, Json report, const std::string& table) {
  write_json_file(dir / (stem + ".json"), report);
  write_text(dir / (stem + ".txt"), table);
  out << table;
}

ExperimentConfig config_from(const std::string& path, const std::string& preset) {
  if (!path.empty()) return load_experiment_config(path);
  if (preset == "toy") return ExperimentConfig::toy();
  if (preset == "paper-defaults") return ExperimentConfig::paper_defaults();
  throw ConfigError("unknown preset '" + preset + "'");
}

std::string budget_text(const AttackConfig& a, double price) {
  const BudgetProjection p = project_budget(a, price);
  return fmt::format(
      "attack: M1={} M2={} T={} S={} eps={} eta={} at {}\n"
      "probe queries per candidate:   {}\n"
      "encoder queries per candidate: {} (including one objective encoding per sample)\n"
      "probe cost per candidate:      ${:.2f} at ${}/query\n"
      "encoder cost per candidate:    ${:.4f}\n",
      a.objectives, a.replicas, a.iterations, a.samples, a.epsilon, a.learning_rate, a.shape.to_string(),
      p.probe_queries_per_candidate, p.encoder_queries_per_candidate, p.probe_cost_per_candidate, price,
      p.encoder_cost_per_candidate);
}

struct EndpointsFile {
  std::vector<std::pair<std::string, std::string>> encoders;  // name, url
  std::vector<std::pair<std::string, std::string>> services;
};

EndpointsFile read_endpoints(const fs::path& path) {
  if (!fs::exists(path)) throw PrerequisiteMissing("no endpoints file at " + path.string() + " (run `pei serve`)");
  const Json j = read_json_file(path);
  EndpointsFile e;
  for (const auto& x : j.at("encoders")) e.encoders.emplace_back(x.at("name"), x.at("url"));
  for (const auto& x : j.at("services")) e.services.emplace_back(x.at("name"), x.at("url"));
  return e;
}

std::vector<std::size_t> pick_services(const Ecosystem& eco, const std::vector<std::string>& names) {
  std::vector<std::size_t> out;
  if (names.empty()) {
    for (std::size_t i = 0; i < eco.services.size(); ++i) out.push_back(i);
    return out;
  }
  for (const auto& n : names) {
    try {
      out.push_back(eco.service_index(n));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

AttackSampleSet load_samples(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) {
    throw PrerequisiteMissing("no attack samples at " + dir.string() + " (run `pei synthesize`)");
  }
  return load_sample_set(dir);
}

std::function<void(std::size_t, std::size_t)> progress_printer(std::ostream& err, bool quiet) {
  if (quiet) return {};
  auto last = std::make_shared<std::atomic<std::size_t>>(0);
  return [&err, last](std::size_t done, std::size_t total) {
    const std::size_t pct = 100 * done / total;
    std::size_t prev = last->load();
    if (pct / 10 > prev / 10 && last->compare_exchange_strong(prev, pct)) {
      err << fmt::format("  synthesis {:>3}% ({}/{})\n", pct, done, total) << std::flush;
    }
  };
}

// ---- subcommands ----

struct Common {
  std::string ecosystem;
  std::string out;
  bool force = false;
  bool quiet = false;
};

int cmd_build(const std::string& config_path, const std::string& preset, const Common& c, std::ostream& out) {
  const ExperimentConfig config = config_from(config_path, preset);
  prepare_output(c.out, c.force);
  const Ecosystem eco = build_ecosystem(config);
  save_ecosystem(c.out, eco);
  Json report = header(config);
  Json rows = Json::array();
  std::string table = fmt::format("{:<16} {:<16} {:>10} {:>10}\n", "service", "encoder", "train acc", "loss");
  for (std::size_t i = 0; i < eco.services.size(); ++i) {
    const auto& s = eco.training[i];
    rows.push_back({{"service", eco.services[i]->name()},
                    {"encoder", eco.encoders[i]->name()},
                    {"arch", std::string(to_string(eco.encoders[i]->spec().arch))},
                    {"train_accuracy", s.train_accuracy},
                    {"final_loss", s.final_loss}});
    table += fmt::format("{:<16} {:<16} {:>10.3f} {:>10.4f}\n", eco.services[i]->name(), eco.encoders[i]->name(),
                         s.train_accuracy, s.final_loss);
  }
  report["services"] = rows;
  emit(out, c.out, "build", report, table);
  return kOk;
}

struct SynthOptions {
  std::size_t jobs = 1;
  bool png = false;
  std::string sweep;
  bool paper_defaults = false;
  std::string endpoints;
};

std::vector<std::size_t> parse_sweep(const std::string& spec) {
  if (spec.rfind("S=", 0) != 0) throw ConfigError("--sweep expects S=<n>,<n>,...");
  std::vector<std::size_t> values;
  std::size_t pos = 2;
  while (pos <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', pos), spec.size());
    const std::string item = spec.substr(pos, end - pos);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty() || v == 0) throw ConfigError("--sweep: bad sample count '" + item + "'");
    values.push_back(v);
    pos = end + 1;
  }
  return values;
}

int cmd_synthesize(const Common& c, const SynthOptions& o, std::ostream& out, std::ostream& err) {
  if (o.paper_defaults) {
    out << budget_text(AttackConfig::paper_defaults(), ExperimentConfig::paper_defaults().endpoints.price_per_query);
    return kOk;
  }
  const Ecosystem eco = load_ecosystem(c.ecosystem);
  const ExperimentConfig& config = eco.config;
  const auto objectives = objective_images(config);
  SynthesisOptions so;
  so.jobs = o.jobs;
  so.progress = progress_printer(err, c.quiet);

  if (!o.sweep.empty()) {
    const auto values = parse_sweep(o.sweep);
    prepare_output(c.out, c.force);
    Json report = header(config);
    Json rows = Json::array();
    std::string table = fmt::format("{:>5} {:>12} {:>12} {:>14}\n", "S", "strict max", "identified", "queries/cand");
    for (std::size_t s : values) {
      Ecosystem run = eco;
      run.config.attack.samples = s;
      const AttackSampleSet set = synthesize_zoo(run, objectives, so);
      save_sample_set(c.out / fs::path("S" + std::to_string(s)), set, objectives, o.png);
      std::size_t strict = 0, identified = 0;
      Json services = Json::array();
      for (std::size_t i = 0; i < eco.services.size(); ++i) {
        const PeiReport r = infer_service(*eco.services[i], objectives, set, run.config, eco.encoders[i]->name());
        bool is_max = true;
        for (std::size_t k = 0; k < r.scores.size(); ++k) {
          if (k != i && r.scores[k] >= r.scores[i]) is_max = false;
        }
        strict += is_max;
        identified += r.verdict.candidate == i;
        services.push_back(to_json(r));
      }
      const std::uint64_t per_candidate = run.config.attack.encoder_queries_per_candidate();
      rows.push_back({{"samples", s},
                      {"strict_max", strict},
                      {"identified", identified},
                      {"queries_per_candidate", per_candidate},
                      {"reports", services}});
      table += fmt::format("{:>5} {:>9}/{:<2} {:>9}/{:<2} {:>14}\n", s, strict, eco.services.size(), identified,
                           eco.services.size(), per_candidate);
    }
    report["sweep"] = rows;
    emit(out, c.out, "sweep", report, table);
    return kOk;
  }

  std::vector<std::shared_ptr<eaas::RemoteEncoder>> remote;
  std::vector<const Encoder*> candidates;
  if (!o.endpoints.empty()) {
    const EndpointsFile ep = read_endpoints(o.endpoints);
    for (const auto& enc : eco.encoders) {
      bool found = false;
      for (const auto& [name, url] : ep.encoders) {
        if (name != enc->name()) continue;
        remote.push_back(std::make_shared<eaas::RemoteEncoder>(url));
        candidates.push_back(remote.back().get());
        found = true;
      }
      if (!found) throw PrerequisiteMissing("endpoints file has no encoder '" + enc->name() + "'");
    }
  }
  prepare_output(c.out, c.force);
  const AttackSampleSet set = synthesize_zoo(eco, objectives, so, candidates);
  save_sample_set(c.out, set, objectives, o.png);

  Json report = header(config);
  report["ledger"] = ledger_to_json(set.ledger, set.candidate_names);
  report["cost"] = estimate_cost(set.ledger, config.endpoints.price_per_query);
  report["price_per_query"] = config.endpoints.price_per_query;
  if (!remote.empty()) {
    Json billed = Json::object();
    for (const auto& r : remote) billed[r->name()] = r->billed();
    report["billed"] = billed;
  }
  std::string table = fmt::format("{:<16} {:>16} {:>12} {:>12}\n", "candidate", "encoder queries", "final loss", "cost");
  const std::size_t per = config.attack.objectives * config.attack.replicas;
  for (std::size_t i = 0; i < set.candidates(); ++i) {
    double loss = 0.0;
    for (std::size_t s = 0; s < per; ++s) loss += set.provenance[i * per + s].final_loss.value_or(0.0);
    const auto q = set.ledger.candidate_queries(i);
    table += fmt::format("{:<16} {:>16} {:>12.4f} {:>11.2f}$\n", set.candidate_names[i], q, loss / per,
                         estimate_cost(q, config.endpoints.price_per_query));
  }
  emit(out, c.out, "synthesis", report, table);
  return kOk;
}

struct InferOptions {
  std::string samples;
  std::vector<std::string> services;
  bool leave_one_out = false;
  std::string endpoints;
};

int cmd_infer(const Common& c, const InferOptions& o, std::ostream& out) {
  const Ecosystem eco = load_ecosystem(c.ecosystem);
  const AttackSampleSet set = load_samples(o.samples);
  const std::vector<ImageTensor> objectives = load_objectives(o.samples);
  const auto picked = pick_services(eco, o.services);
  std::optional<EndpointsFile> ep;
  if (!o.endpoints.empty()) ep = read_endpoints(o.endpoints);

  prepare_output(c.out, c.force);
  std::vector<PeiReport> reports;
  for (std::size_t i : picked) {
    std::unique_ptr<eaas::RemoteService> remote;
    TargetService* target = eco.services[i].get();
    if (ep) {
      for (const auto& [name, url] : ep->services) {
        if (name == eco.services[i]->name()) remote = std::make_unique<eaas::RemoteService>(url);
      }
      if (!remote) throw PrerequisiteMissing("endpoints file has no service '" + eco.services[i]->name() + "'");
      target = remote.get();
    }
    reports.push_back(
        infer_service(*target, objectives, set, eco.config, eco.encoders[i]->name(), o.leave_one_out));
  }
  Json report = header(eco.config);
  report["protocol"] = o.leave_one_out ? "leave-one-out" : "all-candidates";
  Json rs = Json::array();
  for (const auto& r : reports) rs.push_back(to_json(r));
  report["reports"] = rs;
  emit(out, c.out, o.leave_one_out ? "leave-one-out" : "inference", report, render_pei_table(reports));
  return kOk;
}

struct DefendOptions {
  std::string samples;
  std::string service;
  int quality = -1;
};

int cmd_defend(const Common& c, const DefendOptions& o, std::ostream& out) {
  const Ecosystem eco = load_ecosystem(c.ecosystem);
  const AttackSampleSet set = load_samples(o.samples);
  const std::vector<ImageTensor> objectives = load_objectives(o.samples);
  const std::size_t i = o.service.empty() ? 0 : pick_services(eco, {o.service}).front();
  CodecConfig codec{o.quality < 0 ? eco.config.defense.quality : o.quality};
  try {
    codec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("--quality: ") + e.what());
  }
  prepare_output(c.out, c.force);
  InferenceOptions opts;
  opts.threshold = eco.config.inference.threshold;
  opts.mode = eco.config.inference.mode;
  opts.config_fingerprint = config_fingerprint(eco.config);
  const IndicatorSimilarity sim;
  DefenseReport r = run_defense_experiment(*eco.services[i], objectives, set, sim, codec, eco.config.defense.bypass, opts);
  for (PeiReport* p : {&r.origin, &r.defended, &r.defended_resized}) p->hidden = eco.encoders[i]->name();
  const auto cands = eco.candidates();
  r.losses = defense_loss_report(cands, objectives, set, codec);
  Json report = header(eco.config);
  report["defense"] = to_json(r);
  emit(out, c.out, "defense", report, render_defense_table(r));
  return kOk;
}

struct StealOptions {
  std::string service;
  std::vector<std::string> modes{"soft", "hard"};
};

int cmd_steal(const Common& c, const StealOptions& o, std::ostream& out, std::ostream& err) {
  const Ecosystem eco = load_ecosystem(c.ecosystem);
  const ExperimentConfig& config = eco.config;
  const std::size_t i = o.service.empty() ? 0 : pick_services(eco, {o.service}).front();
  std::vector<OutputMode> modes;
  for (const auto& m : o.modes) {
    try {
      modes.push_back(parse_output_mode(m));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--modes: ") + e.what());
    }
  }
  std::size_t wrong = (i + 1) % eco.encoders.size();
  if (!config.casestudy.wrong_encoder.empty()) wrong = eco.encoder_index(config.casestudy.wrong_encoder);
  if (wrong == i) throw ConfigError("casestudy.wrong_encoder is the hidden encoder of " + eco.services[i]->name());

  prepare_output(c.out, c.force);
  const StealEvaluation evaluation =
      make_evaluation(*eco.services[i], generate_split(config.zoo.dataset, Split::Test));
  std::vector<StealReport> reports;
  for (OutputMode mode : modes) {
    for (auto kind : {StolenKind::CorrectEncoderHead, StolenKind::WrongEncoderHead, StolenKind::ScratchLinear}) {
      StealConfig sc;
      sc.mode = mode;
      sc.kind = kind;
      sc.surrogate = config.casestudy.surrogate;
      sc.recipe = config.casestudy.recipe;
      sc.hidden = config.zoo.head_hidden;
      if (kind == StolenKind::CorrectEncoderHead) sc.encoder = eco.encoders[i];
      if (kind == StolenKind::WrongEncoderHead) sc.encoder = eco.encoders[wrong];
      if (!c.quiet) err << fmt::format("  stealing {} with {} labels\n", to_string(kind), to_string(mode));
      reports.push_back(
          run_model_stealing(*eco.services[i], sc, evaluation, config.zoo.dataset.generator, config.seed));
    }
  }
  Json report = header(config);
  report["service"] = eco.services[i]->name();
  Json rs = Json::array();
  for (const auto& r : reports) rs.push_back(to_json(r));
  report["reports"] = rs;
  emit(out, c.out, "steal", report, render_steal_table(reports));
  return kOk;
}

struct AdvOptions {
  std::string encoder;
  std::size_t objective = 0;
  std::size_t jobs = 1;
};

int cmd_adversarial(const Common& c, const AdvOptions& o, std::ostream& out) {
  const Ecosystem eco = load_ecosystem(c.ecosystem);
  const ExperimentConfig& config = eco.config;
  std::size_t e = 0;
  if (!o.encoder.empty()) {
    try {
      e = eco.encoder_index(o.encoder);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
  }
  const auto objectives = objective_images(config);
  if (o.objective >= objectives.size()) throw ConfigError("--objective is past the last objective");
  AdvConfig ac;
  ac.iterations = config.casestudy.adv_iterations;
  ac.step = config.casestudy.adv_step;
  ac.candidates = config.casestudy.adv_candidates;
  ac.jobs = o.jobs;
  prepare_output(c.out, c.force);
  const AdvResult r = whitebox_adversarial_synthesis(*eco.encoders[e], objectives[o.objective], ac,
                                                     SeedSpec{config.seed, {"adversarial", o.objective}});
  io::write_image(fs::path(c.out) / "adversarial.peit", r.image);
  io::write_png(fs::path(c.out) / "adversarial.png", r.image);
  io::write_png(fs::path(c.out) / "objective.png", objectives[o.objective]);
  Json report = header(config);
  report["encoder"] = eco.encoders[e]->name();
  report["objective"] = o.objective;
  report["result"] = to_json(r);
  const std::string table = fmt::format("encoder {} objective {}: loss {:.6f} ({} gradient, best of {} starts)\n",
                                        eco.encoders[e]->name(), o.objective, r.loss, r.gradient,
                                        r.candidate_losses.size());
  emit(out, c.out, "adversarial", report, table);
  return kOk;
}

struct ServeOptions {
  std::string endpoints_file;
  std::string host;
  int port = -1;
  std::string meter_log;
  double duration = 0.0;
};

int cmd_serve(const Common& c, const ServeOptions& o, std::ostream& out) {
  const Ecosystem eco = load_ecosystem(c.ecosystem);
  const ExperimentConfig& config = eco.config;
  const std::string meter_path = o.meter_log.empty() ? config.endpoints.meter_log : o.meter_log;
  auto meter = std::make_shared<eaas::MeterLog>(meter_path.empty() ? std::nullopt
                                                                    : std::optional<fs::path>(meter_path));
  int port = o.port >= 0 ? o.port : config.endpoints.base_port;
  auto next_options = [&](const std::string& key) {
    eaas::EndpointOptions opts;
    opts.host = o.host.empty() ? config.endpoints.host : o.host;
    opts.port = port == 0 ? 0 : port++;
    opts.price_per_query = config.endpoints.price_per_query;
    opts.meter_key = key;
    return opts;
  };
  std::vector<std::unique_ptr<eaas::Endpoint>> endpoints;
  Json file{{"encoders", Json::array()}, {"services", Json::array()}};
  for (const auto& enc : eco.encoders) {
    endpoints.push_back(eaas::serve_encoder(enc, meter, next_options("encoder/" + enc->name())));
    file["encoders"].push_back({{"name", enc->name()}, {"url", endpoints.back()->url()}});
  }
  for (const auto& svc : eco.services) {
    endpoints.push_back(eaas::serve_service(svc, meter, next_options("service/" + svc->name())));
    file["services"].push_back({{"name", svc->name()}, {"url", endpoints.back()->url()}});
  }
  const fs::path ep_path = o.endpoints_file.empty() ? fs::path(c.ecosystem) / "endpoints.json" : fs::path(o.endpoints_file);
  write_json_file(ep_path, file);
  for (const auto& x : file["encoders"]) out << fmt::format("encoder {:<12} {}\n", x["name"].get<std::string>(), x["url"].get<std::string>());
  for (const auto& x : file["services"]) out << fmt::format("service {:<12} {}\n", x["name"].get<std::string>(), x["url"].get<std::string>());
  out << "endpoints written to " << ep_path.string() << std::endl;

  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (o.duration > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= o.duration) {
      break;
    }
  }
  for (auto& e : endpoints) e->stop();
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pei: encoder inference attack toolkit"};
  app.set_version_flag("--version", std::string(PEI_VERSION));
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool needs_eco, bool needs_out) {
    if (needs_eco) sub->add_option("-e,--ecosystem", common.ecosystem, "Ecosystem directory from `pei build`")->required();
    if (needs_out) {
      sub->add_option("-o,--out", common.out, "Output directory")->required();
      sub->add_flag("--force", common.force, "Replace an existing output directory");
    }
    sub->add_flag("-q,--quiet", common.quiet, "No progress output");
  };

  std::string config_path, preset = "toy";
  auto* build = app.add_subcommand("build", "Train the downstream heads and write the ecosystem");
  build->add_option("-c,--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  build->add_option("--preset", preset, "toy or paper-defaults when no config is given");
  add_common(build, false, true);

  SynthOptions so;
  auto* synth = app.add_subcommand("synthesize", "Synthesize attack samples for every candidate encoder");
  add_common(synth, false, false);
  synth->add_option("-e,--ecosystem", common.ecosystem, "Ecosystem directory from `pei build`");
  synth->add_option("-o,--out", common.out, "Output directory");
  synth->add_flag("--force", common.force, "Replace an existing output directory");
  synth->add_option("-j,--jobs", so.jobs, "Worker threads")->check(CLI::PositiveNumber);
  synth->add_flag("--png", so.png, "Also write PNG previews");
  synth->add_option("--sweep", so.sweep, "Sampling-number ablation, e.g. S=25,50,75,100,125");
  synth->add_flag("--paper-defaults", so.paper_defaults, "Print the budget projection at M1=10, M2=5, T=100, S=100 and exit");
  synth->add_option("--endpoints", so.endpoints, "Query encoders over HTTP using this endpoints file");

  InferOptions io_;
  auto* infer = app.add_subcommand("infer", "Score every candidate against target services");
  add_common(infer, true, true);
  infer->add_option("-s,--samples", io_.samples, "Sample directory from `pei synthesize`")->required();
  infer->add_option("--service", io_.services, "Service or hidden-encoder name (repeatable; default all)");
  infer->add_flag("--leave-one-out", io_.leave_one_out, "Drop each service's hidden encoder from the pool");
  infer->add_option("--endpoints", io_.endpoints, "Query services over HTTP using this endpoints file");

  DefendOptions dopt;
  auto* defend = app.add_subcommand("defend", "Codec defense and resize bypass experiment");
  add_common(defend, true, true);
  defend->add_option("-s,--samples", dopt.samples, "Sample directory from `pei synthesize`")->required();
  defend->add_option("--service", dopt.service, "Target service (default: the first)");
  defend->add_option("--quality", dopt.quality, "Codec quality 1..100 (default from config)");

  StealOptions sopt;
  auto* steal = app.add_subcommand("steal", "Model stealing case study");
  add_common(steal, true, true);
  steal->add_option("--service", sopt.service, "Target service (default: the first)");
  steal->add_option("--modes", sopt.modes, "Label modes to use: soft, hard")->delimiter(',');

  AdvOptions aopt;
  auto* adv = app.add_subcommand("adversarial", "White-box adversarial synthesis against one encoder");
  add_common(adv, true, true);
  adv->add_option("--encoder", aopt.encoder, "Encoder name (default: the first)");
  adv->add_option("--objective", aopt.objective, "Objective index");
  adv->add_option("-j,--jobs", aopt.jobs, "Worker threads")->check(CLI::PositiveNumber);

  ServeOptions vopt;
  auto* serve = app.add_subcommand("serve", "Expose encoders and services as metered HTTP endpoints");
  add_common(serve, true, false);
  serve->add_option("--endpoints-file", vopt.endpoints_file, "Where to write the URL list");
  serve->add_option("--host", vopt.host, "Bind address");
  serve->add_option("--port", vopt.port, "First port (0 picks free ports)");
  serve->add_option("--meter-log", vopt.meter_log, "Append-only meter log");
  serve->add_option("--duration", vopt.duration, "Stop after this many seconds");

  bool budget_paper = false;
  auto* budget = app.add_subcommand("budget", "Project query counts and cost per candidate");
  budget->add_option("-c,--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  budget->add_option("--preset", preset, "toy or paper-defaults when no config is given");
  budget->add_flag("--paper-defaults", budget_paper, "Same as --preset paper-defaults");

  std::size_t fpr_candidates = 6, fpr_trials = 100000;
  std::uint64_t fpr_seed = 1;
  double fpr_threshold = kDefaultThreshold;
  auto* fpr = app.add_subcommand("null-fpr", "Monte-Carlo false-positive rate of the decision rule");
  fpr->add_option("-n,--candidates", fpr_candidates, "Candidate pool size")->check(CLI::Range(2, 1000000));
  fpr->add_option("--trials", fpr_trials, "Trials")->check(CLI::PositiveNumber);
  fpr->add_option("--seed", fpr_seed, "Seed");
  fpr->add_option("--threshold", fpr_threshold, "z threshold");

  auto* cfg = app.add_subcommand("config", "Print a preset config");
  cfg->add_option("--preset", preset, "toy or paper-defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << PEI_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "pei: " << e.what() << '\n';
    return kConfig;
  }

  try {
    if (*build) return cmd_build(config_path, preset, common, out);
    if (*synth) {
      if (!so.paper_defaults && (common.ecosystem.empty() || common.out.empty())) {
        throw ConfigError("synthesize needs --ecosystem and --out (or --paper-defaults)");
      }
      return cmd_synthesize(common, so, out, err);
    }
    if (*infer) return cmd_infer(common, io_, out);
    if (*defend) return cmd_defend(common, dopt, out);
    if (*steal) return cmd_steal(common, sopt, out, err);
    if (*adv) return cmd_adversarial(common, aopt, out);
    if (*serve) return cmd_serve(common, vopt, out);
    if (*budget) {
      const ExperimentConfig config = config_from(config_path, budget_paper ? "paper-defaults" : preset);
      out << budget_text(config.attack, config.endpoints.price_per_query);
      return kOk;
    }
    if (*fpr) {
      const NullFprResult r = null_fpr_monte_carlo(fpr_candidates, fpr_trials, fpr_seed, fpr_threshold);
      out << fmt::format("N={} trials={} threshold={}: P(z > threshold) = {:.4f}, verdict rate = {:.4f}\n",
                         r.candidates, r.trials, r.threshold, r.per_candidate_exceedance, r.verdict_rate);
      return kOk;
    }
    if (*cfg) {
      out << to_json(config_from("", preset)).dump(2) << '\n';
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "pei: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const PrerequisiteMissing& e) {
    err << "pei: missing prerequisite: " << e.what() << '\n';
    return kPrerequisite;
  } catch (const TransportFailure& e) {
    err << "pei: transport failure: " << e.what() << '\n';
    return kTransport;
  } catch (const TrainingFailure& e) {
    err << "pei: training failed at iteration " << e.iteration() << ": " << e.what() << '\n';
    return kTraining;
  } catch (const std::exception& e) {
    err << "pei: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}

}  // namespace pei::cli
