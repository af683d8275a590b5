#pragma once

#include <span>
#include <string>

#include "pei/case_studies.hpp"
#include "pei/defense.hpp"
#include "pei/inference.hpp"
#include "pei/json.hpp"

namespace pei {

Json to_json(const PeiReport& r);
Json to_json(const NullFprResult& r);
Json to_json(const DefenseReport& r);
Json to_json(const StealReport& r);
/// Everything but the image itself.
Json to_json(const AdvResult& r);

/// One row per service: PEI score and z-score per candidate, then the
/// verdict; the hidden candidate (when known) is marked with '*'.
std::string render_pei_table(std::span<const PeiReport> reports);

/// Origin / Defended / Defended-vs-Resized z-scores per candidate.
std::string render_defense_table(const DefenseReport& r);

}  // namespace pei
