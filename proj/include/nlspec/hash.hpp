#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace nlspec {

std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view text);

template <typename T>
std::string sha256_of(std::span<const T> values) {
  return sha256_hex(std::as_bytes(values));
}

} // namespace nlspec
