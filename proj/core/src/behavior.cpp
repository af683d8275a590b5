#include "pei/behavior.hpp"

#include <algorithm>
#include <stdexcept>

namespace pei {

int top1(const BehaviorValue& value) {
  if (const auto* h = std::get_if<HardLabel>(&value)) return h->label;
  if (const auto* s = std::get_if<SoftLogits>(&value)) {
    if (s->logits.empty()) throw std::invalid_argument("top1: empty logit vector");
    // First maximum wins on ties.
    return static_cast<int>(std::max_element(s->logits.begin(), s->logits.end()) - s->logits.begin());
  }
  throw std::invalid_argument("top1: score outputs carry no class");
}

}  // namespace pei
