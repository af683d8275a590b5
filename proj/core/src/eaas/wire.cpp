#include <bit>
#include <cstring>
#include <stdexcept>

#include <openssl/evp.h>

#include "pei/eaas.hpp"

namespace pei::eaas {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  if (text.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw std::invalid_argument("base64: invalid character");
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

Json encode_wire_image(const ImageTensor& image) {
  const auto values = image.data();
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  const auto& s = image.shape();
  return Json{{"shape", {s.height, s.width, s.channels}}, {"payload", base64_encode(bytes)}};
}

ImageTensor decode_wire_image(const Json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("payload")) {
    throw WireError(400, "malformed_image", "image needs 'shape' and 'payload'");
  }
  const auto& shape = j.at("shape");
  if (!shape.is_array() || shape.size() != 3 || !j.at("payload").is_string()) {
    throw WireError(400, "malformed_image", "shape must be [h, w, c] and payload a string");
  }
  ImageShape s;
  try {
    s = {shape[0].get<std::uint32_t>(), shape[1].get<std::uint32_t>(), shape[2].get<std::uint32_t>()};
  } catch (const std::exception&) {
    throw WireError(400, "malformed_image", "shape entries must be non-negative integers");
  }
  if (!s.valid()) throw WireError(400, "malformed_image", "empty shape");
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(j.at("payload").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw WireError(400, "malformed_payload", e.what());
  }
  if (bytes.size() != s.size() * 4) {
    throw WireError(400, "length_mismatch", "payload holds " + std::to_string(bytes.size()) + " bytes, shape " +
                                                s.to_string() + " needs " + std::to_string(s.size() * 4));
  }
  std::vector<float> values(s.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[i * 4 + b]} << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  try {
    return ImageTensor(s, std::move(values));
  } catch (const std::invalid_argument& e) {
    throw WireError(400, "non_finite", e.what());
  }
}

}  // namespace pei::eaas
