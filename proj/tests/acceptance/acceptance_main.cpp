// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "pei/case_studies.hpp"
#include "pei/defense.hpp"
#include "pei/eaas.hpp"
#include "pei/encoder.hpp"
#include "pei/experiment.hpp"
#include "pei/inference.hpp"
#include "pei/numerics.hpp"
#include "pei/random.hpp"
#include "pei/synthesis.hpp"

namespace {

using namespace pei;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, std::string what) {
    if (!ok) pass = false;
    notes.push_back(fmt::format("{} {}", ok ? "ok  " : "FAIL", what));
  }
};

std::vector<double> random_scores(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(n);
  for (auto& v : s) v = u(rng);
  return s;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

Outcome budget() {
  Outcome o;
  const auto c = AttackConfig::paper_defaults();
  o.check(c.objectives == 10 && c.replicas == 5 && c.iterations == 100 && c.samples == 100, "M1=10 M2=5 T=100 S=100");
  const auto p = project_budget(c, 0.0001);
  o.check(p.probe_queries_per_candidate == 1'000'000, fmt::format("probes {}", p.probe_queries_per_candidate));
  o.check(p.probe_cost_per_candidate == 100.0, fmt::format("cost ${:.6f}", p.probe_cost_per_candidate));
  return o;
}

Outcome zscore_rows() {
  Outcome o;
  const std::vector<double> row{0.52, 0.02, 0, 0, 0, 0};
  const std::vector<double> want{2.04, -0.33, -0.43, -0.43, -0.43, -0.43};
  const auto z = z_scores(row);
  bool close = true;
  std::string got;
  for (std::size_t i = 0; i < want.size(); ++i) {
    close = close && std::fabs(z.values[i] - want[i]) <= 0.01;
    got += fmt::format("{:.4f} ", z.values[i]);
  }
  o.check(close, "z = " + got);
  o.check(decide(z) == Verdict::identify(0), "verdict Identified(0)");

  const std::vector<double> svhn{0.24, 0.12, 0.16, 0.30, 0.20, 0.12};
  const auto zs = z_scores(svhn);
  const double mx = *std::max_element(zs.values.begin(), zs.values.end());
  o.check(mx <= 1.54 + 0.01, fmt::format("max z {:.4f}", mx));
  o.check(decide(zs) == Verdict::none(), "verdict none");
  return o;
}

Outcome estimator() {
  Outcome o;
  {
    const ImageShape shape{4, 4, 1};
    std::vector<double> c(16);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::sin(1.0 + i) + 0.5;
    const BatchLoss linear = [&](std::span<const ImageTensor> ps) {
      std::vector<double> out;
      for (const auto& p : ps) {
        double s = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * p.data()[i];
        out.push_back(s);
      }
      return out;
    };
    const auto x = uniform_image(shape, 1);
    constexpr int kTrials = 50'000;
    std::vector<double> mean(16, 0.0);
    for (int t = 0; t < kTrials; ++t) {
      const auto est = estimate_gradient(linear, x, 1, 1e-2, derive_seed(SeedSpec{3, {}}, {"trial", t}));
      for (std::size_t d = 0; d < 16; ++d) mean[d] += est.gradient[d] / kTrials;
    }
    double err = 0.0, norm = 0.0;
    for (std::size_t d = 0; d < 16; ++d) {
      err += (mean[d] - c[d]) * (mean[d] - c[d]);
      norm += c[d] * c[d];
    }
    const double rel = std::sqrt(err / norm);
    o.check(rel < 0.05, fmt::format("(a) relative L2 error of the mean {:.4f}", rel));
  }
  {
    // 8x8x3 keeps (D-1)/S small enough for a 0.99 cosine to be reachable.
    const ImageShape shape{8, 8, 3};
    const auto enc = build_encoder({"lin", EncoderArch::LinearProject, 21, shape, 32});
    const auto target = enc->encode(uniform_image(shape, 5));
    const auto x = uniform_image(shape, 6);
    const BatchLoss loss = [&](std::span<const ImageTensor> ps) {
      std::vector<double> out;
      for (const auto& e : enc->encode_batch(ps)) out.push_back(squared_embedding_loss(e, target));
      return out;
    };
    const auto est = estimate_gradient(loss, x, 20'000, 1e-3, 7);
    const auto exact = analytic_gradient(*enc, x, target);
    const double cs = cosine(est.gradient, exact);
    o.check(cs >= 0.99, fmt::format("(b) cosine to analytic gradient {:.5f}", cs));
  }
  return o;
}

struct ToyRun {
  ExperimentConfig config;
  Ecosystem eco;
  std::vector<ImageTensor> objectives;
  AttackSampleSet samples;
  std::vector<PeiReport> main;
  std::vector<PeiReport> loo;
  std::vector<std::uint64_t> service_queries;
};

ToyRun run_toy() {
  ToyRun r;
  r.config = ExperimentConfig::toy();
  r.eco = build_ecosystem(r.config);
  r.objectives = objective_images(r.config);
  r.samples = synthesize_zoo(r.eco, r.objectives);
  for (std::size_t i = 0; i < r.eco.services.size(); ++i) {
    auto& svc = *r.eco.services[i];
    const auto hidden = r.eco.encoders[i]->name();
    r.main.push_back(infer_service(svc, r.objectives, r.samples, r.config, hidden));
    r.service_queries.push_back(svc.queries());
    r.loo.push_back(infer_service(svc, r.objectives, r.samples, r.config, hidden, true));
  }
  return r;
}

Outcome end_to_end(const ToyRun& r) {
  Outcome o;
  std::size_t strict_max = 0, identified = 0, false_positives = 0;
  for (std::size_t i = 0; i < r.main.size(); ++i) {
    const auto& rep = r.main[i];
    const std::size_t h = i;
    bool is_max = true;
    for (std::size_t j = 0; j < rep.scores.size(); ++j) {
      if (j != h && rep.scores[j] >= rep.scores[h]) is_max = false;
    }
    strict_max += is_max;
    identified += rep.verdict == Verdict::identify(h);
    if (rep.verdict.identified() && rep.verdict != Verdict::identify(h)) ++false_positives;
    const auto& loo = r.loo[i];
    if (loo.verdict.identified()) ++false_positives;
    std::string zs;
    for (double z : rep.z.values) zs += fmt::format("{:+.2f} ", z);
    o.notes.push_back(fmt::format("     {:<14} verdict {:<9} loo {:<9} z {}", rep.service, rep.verdict_name(),
                                  loo.verdict_name(), zs));
  }
  o.check(strict_max >= 5, fmt::format("(a) hidden encoder strict max in {}/6", strict_max));
  o.check(false_positives == 0, fmt::format("(b) false positives {} over 6 + 6 runs", false_positives));
  o.check(identified >= 4, fmt::format("(c) Identified(hidden) in {}/6", identified));
  return o;
}

Outcome null_statistics() {
  Outcome o;
  std::mt19937_64 rng(11);
  bool standardized = true, bounded = true;
  for (std::size_t n : {2u, 3u, 4u, 5u, 6u, 8u, 12u}) {
    for (int t = 0; t < 1000; ++t) {
      const auto z = z_scores(random_scores(rng, n));
      double mean = 0.0, ss = 0.0;
      for (double v : z.values) mean += v / n;
      for (double v : z.values) ss += (v - mean) * (v - mean);
      standardized = standardized && std::fabs(mean) <= 1e-9 && std::fabs(std::sqrt(ss / (n - 1)) - 1.0) <= 1e-9;
      for (double v : z.values) bounded = bounded && v <= max_z_bound(n) + 1e-12;
    }
  }
  o.check(standardized, "mean 0 and SD 1 within 1e-9 on 7000 random vectors");
  o.check(bounded && std::fabs(max_z_bound(6) - 5.0 / std::sqrt(6.0)) < 1e-15,
          fmt::format("max z <= (N-1)/sqrt(N), {:.4f} at N=6", max_z_bound(6)));
  const auto mc = null_fpr_monte_carlo(6, 100'000, 2024);
  o.check(mc.per_candidate_exceedance < 0.0545,
          fmt::format("null P(z>1.7) {:.4f}, verdict rate {:.4f}", mc.per_candidate_exceedance, mc.verdict_rate));
  return o;
}

Outcome stealing(const ToyRun& r) {
  Outcome o;
  const auto& config = r.config;
  const std::size_t i = 0;
  const std::size_t wrong = 1;
  const auto evaluation = make_evaluation(*r.eco.services[i], generate_split(config.zoo.dataset, Split::Test));
  o.check(compute_fidelity(evaluation.target_predictions, evaluation.target_predictions) == 1.0,
          "fidelity(target, target) = 1");
  for (OutputMode mode : {OutputMode::Soft, OutputMode::Hard}) {
    std::vector<StealReport> reps;
    for (auto kind : {StolenKind::CorrectEncoderHead, StolenKind::WrongEncoderHead, StolenKind::ScratchLinear}) {
      StealConfig sc;
      sc.mode = mode;
      sc.kind = kind;
      sc.surrogate = config.casestudy.surrogate;
      sc.recipe = config.casestudy.recipe;
      sc.hidden = config.zoo.head_hidden;
      if (kind == StolenKind::CorrectEncoderHead) sc.encoder = r.eco.encoders[i];
      if (kind == StolenKind::WrongEncoderHead) sc.encoder = r.eco.encoders[wrong];
      reps.push_back(run_model_stealing(*r.eco.services[i], sc, evaluation, config.zoo.dataset.generator, config.seed));
    }
    const auto& c = reps[0];
    bool ok = true;
    for (std::size_t k = 1; k < 3; ++k) ok = ok && c.accuracy > reps[k].accuracy && c.fidelity > reps[k].fidelity;
    o.check(ok, fmt::format("{}: correct acc {:.3f} fid {:.3f} | wrong acc {:.3f} fid {:.3f} | scratch acc {:.3f} fid {:.3f}",
                            to_string(mode), c.accuracy, c.fidelity, reps[1].accuracy, reps[1].fidelity,
                            reps[2].accuracy, reps[2].fidelity));
  }
  return o;
}

Outcome defense(const ToyRun& r) {
  Outcome o;
  const ImageShape shape = r.config.attack.shape;
  const auto x = uniform_image(shape, 77);
  o.check(lossy_roundtrip(x, CodecConfig{30}) == lossy_roundtrip(x, CodecConfig{30}), "codec deterministic");
  double worst = 1e9;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto img = uniform_image(shape, 1000 + s);
    worst = std::min(worst, psnr(img, lossy_roundtrip(img, CodecConfig{100})));
  }
  o.check(worst >= 35.0, fmt::format("q=100 min PSNR {:.2f} dB over 20 images", worst));

  const auto& svc = *r.eco.services[0];
  const auto defended = wrap_service_with_defense(svc, CodecConfig{100});
  const auto test = generate_split(r.config.zoo.dataset, Split::Test);
  const auto a = argmax_rows(svc.logits_unmetered(test.images));
  const auto b = argmax_rows(defended.logits_unmetered(test.images));
  const double agree = compute_fidelity(b, a);
  o.check(agree >= 0.95, fmt::format("q=100 defended agreement {:.4f} on {} clean images", agree, a.size()));

  const auto rep = run_defense_experiment(svc, r.objectives, r.samples, IndicatorSimilarity{},
                                          CodecConfig{r.config.defense.quality}, r.config.defense.bypass);
  const auto zh = [](const PeiReport& p) { return p.z.values.front(); };
  o.check(rep.origin.candidates.size() == 6 && rep.defended.candidates.size() == 6 &&
              rep.defended_resized.candidates.size() == 6,
          fmt::format("three-arm report: z(hidden) origin {:+.2f} ({}), defended {:+.2f} ({}), resized {:+.2f} ({})",
                      zh(rep.origin), rep.origin.verdict_name(), zh(rep.defended), rep.defended.verdict_name(),
                      zh(rep.defended_resized), rep.defended_resized.verdict_name()));
  return o;
}

Outcome wire(const ToyRun& r) {
  Outcome o;
  auto meter = std::make_shared<eaas::MeterLog>();
  std::vector<std::unique_ptr<eaas::Endpoint>> endpoints;
  std::vector<std::unique_ptr<eaas::RemoteEncoder>> encoders;
  std::vector<const Encoder*> candidates;
  for (const auto& enc : r.eco.encoders) {
    endpoints.push_back(eaas::serve_encoder(enc, meter));
    encoders.push_back(std::make_unique<eaas::RemoteEncoder>(endpoints.back()->url()));
    candidates.push_back(encoders.back().get());
  }
  const auto remote_samples = synthesize_zoo(r.eco, r.objectives, {}, candidates);
  bool same_samples = remote_samples.samples == r.samples.samples;
  bool billed_synth = true;
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    billed_synth = billed_synth && encoders[i]->billed() == r.samples.ledger.candidate_queries(i) &&
                   remote_samples.ledger.candidate_queries(i) == r.samples.ledger.candidate_queries(i);
  }
  o.check(same_samples, "remote synthesis reproduces the in-process samples bit for bit");
  o.check(billed_synth, fmt::format("encoder meters equal the in-process ledger ({} per candidate)",
                                    r.samples.ledger.candidate_queries(0)));

  double max_dz = 0.0;
  bool verdicts = true, billed = true;
  for (std::size_t i = 0; i < r.eco.services.size(); ++i) {
    const auto& local = *r.eco.services[i];
    auto fresh = std::make_shared<ServiceInstance>(local.name(), local.encoder(), local.head(), local.widest_mode());
    auto ep = eaas::serve_service(fresh, meter);
    eaas::RemoteService remote(ep->url());
    const auto rep = infer_service(remote, r.objectives, remote_samples, r.config, r.eco.encoders[i]->name());
    for (std::size_t j = 0; j < rep.scores.size(); ++j) {
      max_dz = std::max(max_dz, std::fabs(rep.scores[j] - r.main[i].scores[j]));
    }
    verdicts = verdicts && rep.verdict == r.main[i].verdict;
    billed = billed && remote.queries() == r.service_queries[i];
  }
  o.check(max_dz <= 1e-6, fmt::format("max |zeta remote - zeta local| = {:.3g}", max_dz));
  o.check(verdicts, "identical verdicts");
  o.check(billed, fmt::format("service meters equal in-process counts ({} per service)", r.service_queries[0]));

  eaas::EndpointOptions faulty;
  faulty.fault.delayed_requests = 2;
  faulty.fault.delay = std::chrono::milliseconds(1500);
  auto ep = eaas::serve_encoder(r.eco.encoders[0], std::make_shared<eaas::MeterLog>(), faulty);
  eaas::RetryPolicy policy;
  policy.read_timeout = std::chrono::milliseconds(500);
  eaas::RemoteEncoder flaky(ep->url(), policy);
  const std::vector<ImageTensor> batch(r.objectives.begin(), r.objectives.end());
  const bool same = flaky.encode_batch(batch) == r.eco.encoders[0]->encode_batch(batch);
  flaky.encode_batch(batch);
  o.check(same && flaky.client().retries() >= 1 && flaky.billed() == 2 * batch.size(),
          fmt::format("fault injection: {} retries, billed {} for {} images", flaky.client().retries(), flaky.billed(),
                      2 * batch.size()));
  return o;
}

}  // namespace

int main() {
  bool all = true;
  const auto report = [&](int n, const char* title, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << fmt::format("criterion {}: {} {} ({:.1f}s)\n", n, o.pass ? "PASS" : "FAIL", title, secs);
    for (const auto& note : o.notes) std::cout << "    " << note << "\n";
    std::cout.flush();
  };

  report(1, "budget arithmetic", budget);
  report(2, "z-score reference rows", zscore_rows);
  report(3, "two-point estimator", estimator);

  std::unique_ptr<ToyRun> toy;
  const auto with_toy = [&](Outcome (*f)(const ToyRun&)) {
    return [&, f] {
      if (!toy) throw std::runtime_error("toy pipeline did not run");
      return f(*toy);
    };
  };
  report(4, "end-to-end toy attack", [&] {
    toy = std::make_unique<ToyRun>(run_toy());
    return end_to_end(*toy);
  });
  report(5, "finite-N statistics", null_statistics);
  report(6, "model stealing ordering", with_toy(stealing));
  report(7, "defense pipeline", with_toy(defense));
  report(8, "wire equivalence", with_toy(wire));
  return all ? 0 : 1;
}
