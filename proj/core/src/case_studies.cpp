#include "pei/case_studies.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "pei/numerics.hpp"
#include "pei/synthesis.hpp"

namespace pei {

std::string_view to_string(StolenKind kind) {
  switch (kind) {
    case StolenKind::CorrectEncoderHead: return "correct-encoder";
    case StolenKind::WrongEncoderHead: return "wrong-encoder";
    case StolenKind::ScratchLinear: return "scratch-linear";
  }
  return "?";
}

StolenKind parse_stolen_kind(std::string_view tag) {
  for (auto k : {StolenKind::CorrectEncoderHead, StolenKind::WrongEncoderHead, StolenKind::ScratchLinear}) {
    if (tag == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown stolen-model kind '" + std::string(tag) + "'");
}

StealEvaluation make_evaluation(const ServiceInstance& target, LabeledDataset test) {
  StealEvaluation ev;
  ev.target_predictions = argmax_rows(target.logits_unmetered(test.images));
  ev.test = std::move(test);
  return ev;
}

double compute_fidelity(std::span<const int> stolen, std::span<const int> target) {
  if (stolen.size() != target.size()) throw std::invalid_argument("compute_fidelity: length mismatch");
  if (stolen.empty()) throw std::invalid_argument("compute_fidelity: empty prediction lists");
  std::size_t same = 0;
  for (std::size_t i = 0; i < stolen.size(); ++i) same += stolen[i] == target[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(stolen.size());
}

StealReport run_model_stealing(TargetService& target, const StealConfig& config, const StealEvaluation& evaluation,
                               DatasetGenerator downstream, std::uint64_t seed) {
  if (config.mode == OutputMode::Soft && target.widest_mode() == OutputMode::Hard) {
    throw std::invalid_argument("run_model_stealing: service " + target.name() + " does not return soft labels");
  }
  if (config.surrogate.generator == downstream) {
    throw std::invalid_argument("run_model_stealing: surrogate data must come from a different generator");
  }
  const bool scratch = config.kind == StolenKind::ScratchLinear;
  if (!scratch && !config.encoder) throw std::invalid_argument("run_model_stealing: encoder required");
  if (evaluation.test.size() == 0 || evaluation.target_predictions.size() != evaluation.test.size()) {
    throw std::invalid_argument("run_model_stealing: evaluation split and target predictions disagree");
  }
  if (config.query_batch == 0) throw std::invalid_argument("run_model_stealing: query batch must be positive");

  const auto surrogate = generate_split(config.surrogate, Split::Train);
  const std::size_t n = surrogate.size();
  const std::size_t k = target.classes();
  mlp::Matrix<float> targets(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  const std::uint64_t before = target.queries();
  for (std::size_t start = 0; start < n; start += config.query_batch) {
    const std::size_t count = std::min(config.query_batch, n - start);
    const auto answers = target.predict(std::span(surrogate.images).subspan(start, count), config.mode);
    for (std::size_t r = 0; r < count; ++r) {
      auto row = targets.row(static_cast<Eigen::Index>(start + r));
      if (config.mode == OutputMode::Hard) {
        row.setZero();
        row[top1(answers[r])] = 1.0f;
      } else {
        const auto& logits = std::get<SoftLogits>(answers[r]).logits;
        const float peak = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(logits[c]) - peak);
        for (std::size_t c = 0; c < k; ++c) {
          row[static_cast<Eigen::Index>(c)] = static_cast<float>(std::exp(static_cast<double>(logits[c]) - peak) / z);
        }
      }
    }
  }

  StealReport report;
  report.kind = config.kind;
  report.mode = config.mode;
  report.queries = target.queries() - before;

  HeadShape shape;
  shape.classes = k;
  mlp::Matrix<float> features, test_features;
  if (scratch) {
    features = pixel_matrix(surrogate.images);
    test_features = pixel_matrix(evaluation.test.images);
    shape.hidden.clear();
  } else {
    report.encoder = config.encoder->name();
    features = embedding_matrix(*config.encoder, surrogate.images);
    test_features = embedding_matrix(*config.encoder, evaluation.test.images);
    shape.hidden = config.hidden;
  }
  shape.input_dim = static_cast<std::size_t>(features.cols());

  TrainConfig recipe = config.recipe;
  recipe.seed = derive_seed(SeedSpec{seed, {}}, {"steal", to_string(config.kind), to_string(config.mode)});
  auto trained = train_classifier(features, targets, shape, recipe);
  report.training = trained.stats;

  const auto predictions = argmax_rows(trained.head.logits_batch(test_features));
  report.accuracy = compute_fidelity(predictions, evaluation.test.labels);
  report.fidelity = compute_fidelity(predictions, evaluation.target_predictions);
  return report;
}

std::string render_steal_table(std::span<const StealReport> reports) {
  std::string out = fmt::format("{:<16} | {:>9} | {:>9} | {:>9} | {:>9}\n", "stolen model", "soft acc", "soft fid",
                                "hard acc", "hard fid");
  out += std::string(16, '-') + ("-+-" + std::string(9, '-')) + ("-+-" + std::string(9, '-')) +
         ("-+-" + std::string(9, '-')) + ("-+-" + std::string(9, '-')) + "\n";
  for (auto kind : {StolenKind::CorrectEncoderHead, StolenKind::WrongEncoderHead, StolenKind::ScratchLinear}) {
    const StealReport* soft = nullptr;
    const StealReport* hard = nullptr;
    for (const auto& r : reports) {
      if (r.kind != kind) continue;
      (r.mode == OutputMode::Soft ? soft : hard) = &r;
    }
    if (!soft && !hard) continue;
    auto cell = [](const StealReport* r, bool fid) {
      return r ? fmt::format("{:.2f}", 100.0 * (fid ? r->fidelity : r->accuracy)) : std::string("-");
    };
    out += fmt::format("{:<16} | {:>9} | {:>9} | {:>9} | {:>9}\n", to_string(kind), cell(soft, false),
                       cell(soft, true), cell(hard, false), cell(hard, true));
  }
  return out;
}

void AdvConfig::validate() const {
  if (iterations == 0 || candidates == 0 || !(step > 0.0) || zo_samples == 0 || !(zo_epsilon > 0.0)) {
    throw std::invalid_argument("AdvConfig: iterations, candidates, step and estimator settings must be positive");
  }
}

namespace {

struct CandidateRun {
  ImageTensor image;
  double loss = 0.0;
};

CandidateRun sign_descent(const Encoder& encoder, const Embedding& goal, ImageTensor x, const AdvConfig& config,
                          bool analytic, const SeedSpec& seed) {
  const BatchLoss batch_loss = [&](std::span<const ImageTensor> probes) {
    const auto emb = encoder.encode_batch(probes);
    std::vector<double> out(emb.size());
    for (std::size_t i = 0; i < emb.size(); ++i) out[i] = squared_embedding_loss(emb[i], goal);
    return out;
  };
  double loss = squared_embedding_loss(encoder.encode(x), goal);
  for (std::size_t t = 0; t < config.iterations && loss > 0.0; ++t) {
    const std::vector<float> g =
        analytic ? analytic_gradient(encoder, x, goal)
                 : estimate_gradient(batch_loss, x, config.zo_samples, config.zo_epsilon,
                                     derive_seed(seed, {"iter", t}))
                       .gradient;
    auto px = x.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
      const float s = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
      px[i] = std::clamp(px[i] - static_cast<float>(config.step) * s, 0.0f, 1.0f);
    }
    loss = squared_embedding_loss(encoder.encode(x), goal);
  }
  return {std::move(x), loss};
}

}  // namespace

AdvResult whitebox_adversarial_synthesis(const Encoder& encoder, const ImageTensor& target, const AdvConfig& config,
                                         const SeedSpec& seed) {
  config.validate();
  if (target.shape() != encoder.input_shape()) {
    throw std::invalid_argument("whitebox_adversarial_synthesis: target shape does not match the encoder");
  }
  if (!target.in_unit_range()) throw std::invalid_argument("whitebox_adversarial_synthesis: target must be in [0,1]");
  if (config.initial && config.initial->shape() != target.shape()) {
    throw std::invalid_argument("whitebox_adversarial_synthesis: initial image shape mismatch");
  }
  const Embedding goal = encoder.encode(target);
  const bool analytic = dynamic_cast<const LinearProjectEncoder*>(&encoder) != nullptr;

  std::vector<CandidateRun> runs(config.candidates);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < runs.size(); c = next++) {
      try {
        const SeedSpec cs = seed.child({"adv", c});
        ImageTensor init = config.initial ? *config.initial
                                          : uniform_image(target.shape(), derive_seed(cs, {"init"}));
        runs[c] = sign_descent(encoder, goal, std::move(init), config, analytic, cs);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = runs.size();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t jobs = std::clamp<std::size_t>(config.jobs, 1, runs.size());
    for (std::size_t i = 1; i < jobs; ++i) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);

  AdvResult result;
  result.gradient = analytic ? "analytic" : "zeroth-order";
  for (std::size_t c = 0; c < runs.size(); ++c) {
    result.candidate_losses.push_back(runs[c].loss);
    if (runs[c].loss < runs[result.best_candidate].loss) result.best_candidate = c;
  }
  result.loss = runs[result.best_candidate].loss;
  result.image = std::move(runs[result.best_candidate].image);
  return result;
}

}  // namespace pei
