#pragma once

#include "mznav/bytes.hpp"
#include "mznav/nn/adam.hpp"
#include "mznav/nn/layers.hpp"

namespace mznav::nn {

// Parameter blob: a manifest (count, then name + shape per tensor, dtype tag)
// followed by the raw little-endian float32 arrays concatenated in manifest
// order.
void write_params(io::Writer& w, const std::vector<Param>& params);
void write_params(io::Writer& w, const Network& net);

// Loads into an already-shaped parameter list; manifest names and shapes must
// match.
void read_params(io::Reader& r, std::vector<Param>& params);
void read_params(io::Reader& r, Network& net);

void write_adam(io::Writer& w, const AdamState& st);
void read_adam(io::Reader& r, const std::vector<Param>& params, AdamState& st);
void read_adam(io::Reader& r, const Network& net, AdamState& st);

void write_rng(io::Writer& w, const Rng& rng);
void read_rng(io::Reader& r, Rng& rng);

}  // namespace mznav::nn
