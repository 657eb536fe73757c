#pragma once

#include <string>

#include "mznav/nn/tensor.hpp"

namespace mznav::sim {

// Binary PGM (P5), maxval 255, pixel = round(value * 255) clamped to [0,255].
// `frame` is a {H, W} tensor with values in [0, 1].
void write_pgm(const std::string& path, const nn::Tensor& frame);

// Reads a P5 PGM back into a {H, W} tensor with values pixel/255.
nn::Tensor read_pgm(const std::string& path);

}  // namespace mznav::sim
