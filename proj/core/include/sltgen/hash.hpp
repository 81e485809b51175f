#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace sltgen {

/// Incremental 64-bit FNV-1a. Used for state hashing and config hashes.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes) {
    for (auto b : bytes) {
      h_ ^= static_cast<std::uint64_t>(b);
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(std::string_view s) { return update(std::as_bytes(std::span(s.data(), s.size()))); }
  Fnv1a& update(std::span<const double> v) { return update(std::as_bytes(v)); }

  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

}  // namespace sltgen
