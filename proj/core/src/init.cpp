#include "sltgen/init.hpp"

#include <cmath>

#include "sltgen/error.hpp"
#include "sltgen/rng.hpp"

namespace sltgen {

std::string_view to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::kaiming_normal: return "kaiming_normal";
    case InitScheme::signed_kaiming_constant: return "signed_kaiming_constant";
    case InitScheme::xavier_uniform: return "xavier_uniform";
  }
  return "?";
}

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "kaiming_normal") return InitScheme::kaiming_normal;
  if (name == "signed_kaiming_constant") return InitScheme::signed_kaiming_constant;
  if (name == "xavier_uniform") return InitScheme::xavier_uniform;
  throw ConfigError("unknown init scheme '" + std::string(name) + "'");
}

Tensor init_weights(const Shape& shape, std::size_t fan_in, std::size_t fan_out, InitScheme scheme,
                    std::uint64_t seed) {
  if (fan_in == 0 || fan_out == 0) throw ConfigError("init_weights: fan_in and fan_out must be >= 1");
  Tensor t(shape);
  Rng rng(seed);
  switch (scheme) {
    case InitScheme::kaiming_normal: {
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) v = rng.normal(0.0, sd);
      break;
    }
    case InitScheme::signed_kaiming_constant: {
      const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) v = rng.coin() ? sigma : -sigma;
      break;
    }
    case InitScheme::xavier_uniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : t.values()) v = rng.uniform(-bound, bound);
      break;
    }
  }
  return t;
}

}  // namespace sltgen
