#include "hids/sealed_document.hpp"

#include "hids/memory_hasher.hpp"

namespace hids {

namespace {

constexpr std::string_view kSealPrefix = "seal\t";

[[noreturn]] void seal_invalid(const std::string& why) {
  throw StoreError(StoreErrorCode::kSealInvalid, "SEAL_INVALID: " + why);
}

}  // namespace

std::string seal_document(std::string_view body, const SealKey& key) {
  if (!body.empty() && body.back() != '\n') {
    throw std::invalid_argument("sealed body must end with a newline");
  }
  std::string out(body);
  out += kSealPrefix;
  out += to_hex(hmac_sha256(key, body));
  out += '\n';
  return out;
}

std::string_view open_sealed_document(std::string_view document,
                                      const SealKey& key) {
  if (document.empty() || document.back() != '\n') {
    seal_invalid("document does not end with a seal line");
  }
  std::string_view without_nl = document.substr(0, document.size() - 1);
  auto prev_nl = without_nl.rfind('\n');
  std::size_t seal_start = prev_nl == std::string_view::npos ? 0 : prev_nl + 1;
  std::string_view seal_line = without_nl.substr(seal_start);
  if (seal_line.substr(0, kSealPrefix.size()) != kSealPrefix) {
    seal_invalid("missing seal line");
  }
  std::string_view seal_hex = seal_line.substr(kSealPrefix.size());
  if (!HashHex::parse(seal_hex)) seal_invalid("malformed seal value");

  std::string_view body = document.substr(0, seal_start);
  auto expected = hmac_sha256(key, body);
  auto given = from_hex(seal_hex);
  if (!constant_time_equal(
          expected, std::span(reinterpret_cast<const std::uint8_t*>(given->data()),
                              given->size()))) {
    seal_invalid("HMAC mismatch (document modified or wrong key)");
  }
  return body;
}

}  // namespace hids
