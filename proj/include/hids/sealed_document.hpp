#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "hids/crypto.hpp"

namespace hids {

enum class StoreErrorCode {
  kSealInvalid,
  kFormatError,
};

class StoreError : public std::runtime_error {
 public:
  StoreError(StoreErrorCode code, const std::string& what,
             std::size_t line_number = 0)
      : std::runtime_error(what), code_(code), line_number_(line_number) {}

  StoreErrorCode code() const noexcept { return code_; }
  std::size_t line_number() const noexcept { return line_number_; }

 private:
  StoreErrorCode code_;
  std::size_t line_number_;
};

// Appends `seal\t<hmac-sha256 hex>\n` computed over every byte of `body`.
// `body` must be empty or end with a newline.
std::string seal_document(std::string_view body, const SealKey& key);

// Returns the body of a sealed document after checking its seal. Any damage
// to the body, the seal line or the framing raises kSealInvalid.
std::string_view open_sealed_document(std::string_view document,
                                      const SealKey& key);

}  // namespace hids
