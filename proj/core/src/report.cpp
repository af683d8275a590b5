#include "pei/report.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace pei {

Json to_json(const PeiReport& r) {
  Json j;
  j["service"] = r.service;
  j["candidates"] = r.candidates;
  j["scores"] = r.scores;
  j["z"] = r.z.values;
  j["degenerate"] = r.z.degenerate;
  j["threshold"] = r.threshold;
  j["verdict"] = r.verdict.candidate ? Json(r.candidates.at(*r.verdict.candidate)) : Json(nullptr);
  j["service_queries"] = r.service_queries;
  j["synthesis_queries"] = r.synthesis_queries;
  if (r.hidden) j["hidden"] = *r.hidden;
  if (!r.config_fingerprint.empty()) j["config_fingerprint"] = r.config_fingerprint;
  return j;
}

Json to_json(const NullFprResult& r) {
  return Json{{"candidates", r.candidates},
              {"trials", r.trials},
              {"threshold", r.threshold},
              {"per_candidate_exceedance", r.per_candidate_exceedance},
              {"verdict_rate", r.verdict_rate}};
}

Json to_json(const DefenseReport& r) {
  Json j;
  j["codec"] = {{"quality", r.quality},
                {"note", "8x8 DCT quantization round-trip with the standard luminance table; no entropy coding"}};
  j["bypass"] = {{"height", r.bypass.height},
                 {"width", r.bypass.width},
                 {"interpolation", std::string(to_string(r.bypass.interpolation))}};
  j["origin"] = to_json(r.origin);
  j["defended"] = to_json(r.defended);
  j["defended_resized"] = to_json(r.defended_resized);
  Json rows = Json::array();
  for (const auto& row : r.losses) {
    rows.push_back({{"candidate", row.candidate},
                    {"clean_loss", row.clean_loss},
                    {"defended_loss", row.defended_loss},
                    {"increased", row.defended_loss > row.clean_loss}});
  }
  j["attack_loss"] = rows;
  return j;
}

Json to_json(const StealReport& r) {
  return Json{{"kind", std::string(to_string(r.kind))},
              {"mode", std::string(to_string(r.mode))},
              {"encoder", r.encoder},
              {"accuracy", r.accuracy},
              {"fidelity", r.fidelity},
              {"queries", r.queries},
              {"training",
               {{"iterations", r.training.iterations},
                {"final_loss", r.training.final_loss},
                {"train_accuracy", r.training.train_accuracy}}}};
}

Json to_json(const AdvResult& r) {
  return Json{{"loss", r.loss},
              {"best_candidate", r.best_candidate},
              {"candidate_losses", r.candidate_losses},
              {"gradient", r.gradient},
              {"shape", r.image.shape()}};
}

std::string render_pei_table(std::span<const PeiReport> reports) {
  if (reports.empty()) return {};
  std::size_t name_w = 7;
  std::size_t cell_w = 13;
  for (const auto& r : reports) {
    name_w = std::max(name_w, r.service.size());
    for (const auto& c : r.candidates) cell_w = std::max(cell_w, c.size() + 1);
  }
  std::string out = fmt::format("{:<{}}", "service", name_w);
  for (const auto& c : reports.front().candidates) out += fmt::format(" | {:^{}}", c, cell_w);
  out += " | verdict\n";
  out += std::string(name_w, '-');
  for (std::size_t i = 0; i < reports.front().candidates.size(); ++i) out += "-+-" + std::string(cell_w, '-');
  out += "-+--------\n";
  for (const auto& r : reports) {
    out += fmt::format("{:<{}}", r.service, name_w);
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      const bool hidden = r.hidden && *r.hidden == r.candidates[i];
      out += fmt::format(" | {:^{}}",
                         fmt::format("{:.2f} ({:+.2f}){}", r.scores[i], r.z.values[i], hidden ? "*" : ""), cell_w);
    }
    out += " | " + r.verdict_name() + "\n";
  }
  return out;
}

std::string render_defense_table(const DefenseReport& r) {
  std::string out = fmt::format("lossy-dct quality {} | bypass resize {}x{} ({})\n", r.quality, r.bypass.height,
                                r.bypass.width, to_string(r.bypass.interpolation));
  std::size_t name_w = 9;
  for (const auto& c : r.origin.candidates) name_w = std::max(name_w, c.size());
  out += fmt::format("{:<{}} | {:>8} | {:>8} | {:>8}\n", "candidate", name_w, "origin", "defended", "resized");
  for (std::size_t i = 0; i < r.origin.candidates.size(); ++i) {
    out += fmt::format("{:<{}} | {:>+8.2f} | {:>+8.2f} | {:>+8.2f}\n", r.origin.candidates[i], name_w,
                       r.origin.z.values[i], r.defended.z.values[i], r.defended_resized.z.values[i]);
  }
  out += fmt::format("{:<{}} | {:>8} | {:>8} | {:>8}\n", "verdict", name_w, r.origin.verdict_name(),
                     r.defended.verdict_name(), r.defended_resized.verdict_name());
  return out;
}

}  // namespace pei
