#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "sltgen/tensor.hpp"

namespace sltgen {

enum class InitScheme { kaiming_normal, signed_kaiming_constant, xavier_uniform };

std::string_view to_string(InitScheme scheme);
InitScheme parse_init_scheme(std::string_view name);

/// Draws a tensor from the scheme:
///   kaiming_normal           N(0, 2 / fan_in)
///   signed_kaiming_constant  +-sqrt(2 / fan_in) with a fair random sign
///   xavier_uniform           U(-b, b), b = sqrt(6 / (fan_in + fan_out))
Tensor init_weights(const Shape& shape, std::size_t fan_in, std::size_t fan_out, InitScheme scheme,
                    std::uint64_t seed);

}  // namespace sltgen
