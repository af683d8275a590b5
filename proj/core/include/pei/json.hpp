#pragma once

#include <nlohmann/json.hpp>

#include "pei/dataset.hpp"
#include "pei/encoder.hpp"
#include "pei/head.hpp"
#include "pei/synthesis.hpp"

namespace pei {

using Json = nlohmann::json;

void to_json(Json& j, const ImageShape& s);
void from_json(const Json& j, ImageShape& s);

void to_json(Json& j, const AttackConfig& c);
void from_json(const Json& j, AttackConfig& c);

void to_json(Json& j, const ToyEncoderSpec& s);
void from_json(const Json& j, ToyEncoderSpec& s);

void to_json(Json& j, const DatasetSpec& s);
void from_json(const Json& j, DatasetSpec& s);

void to_json(Json& j, const HeadShape& s);
void from_json(const Json& j, HeadShape& s);

void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);

Json ledger_to_json(const BudgetLedger& ledger, std::span<const std::string> names);
BudgetLedger ledger_from_json(const Json& j);

/// 64-bit FNV-1a of the compact dump, as 16 hex digits.
std::string json_fingerprint(const Json& j);

/// Pretty-printed JSON file with a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

}  // namespace pei
