#pragma once

#include <cstddef>
#include <string>

#include "sltgen/tensor.hpp"

namespace sltgen {

/// A weight tensor with its edge-popup score and binary mask. Weight and bias
/// tensors of one layer are separate params sharing a layer_id; masks are
/// selected per layer over their union.
struct PrunableParam {
  std::string name;      // e.g. "fc0.weight"
  std::string layer_id;  // e.g. "fc0"
  Tensor weight;
  Tensor score;          // empty until scores are initialized
  Tensor mask;           // entries in {0, 1}
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
  bool freeze_layer = false;  // layer-freeze: never pruned, mask all ones
};

}  // namespace sltgen
