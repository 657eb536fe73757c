#include "mznav/nn/serialize.hpp"

namespace mznav::nn {

namespace {
constexpr std::uint8_t kDtypeF32 = 0;
}

void write_params(io::Writer& w, const std::vector<Param>& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.u8(kDtypeF32);
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (int d = 0; d < p.value.rank(); ++d) {
      w.u32(static_cast<std::uint32_t>(p.value.dim(d)));
    }
  }
  for (const auto& p : params) {
    w.f32_array(p.value.data(), static_cast<std::size_t>(p.value.numel()));
  }
}

void write_params(io::Writer& w, const Network& net) {
  write_params(w, net.params());
}

void read_params(io::Reader& r, std::vector<Param>& params) {
  const std::uint32_t n = r.u32();
  if (n != params.size()) {
    throw ConfigError("param blob: tensor count mismatch (" +
                      std::to_string(n) + " vs " +
                      std::to_string(params.size()) + ")");
  }
  for (auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) {
      throw ConfigError("param blob: expected tensor " + p.name + ", found " +
                        name);
    }
    if (r.u8() != kDtypeF32) throw ConfigError("param blob: unsupported dtype");
    const int rank = r.u8();
    if (rank != p.value.rank()) {
      throw ConfigError("param blob: rank mismatch at " + p.name);
    }
    for (int d = 0; d < rank; ++d) {
      if (static_cast<int>(r.u32()) != p.value.dim(d)) {
        throw ConfigError("param blob: shape mismatch at " + p.name);
      }
    }
  }
  for (auto& p : params) {
    r.f32_array(p.value.data(), static_cast<std::size_t>(p.value.numel()));
  }
}

void read_params(io::Reader& r, Network& net) {
  read_params(r, net.mutable_params());
}

void write_adam(io::Writer& w, const AdamState& st) {
  w.f64(st.cfg.lr);
  w.f64(st.cfg.beta1);
  w.f64(st.cfg.beta2);
  w.f64(st.cfg.eps);
  w.i64(st.t);
  w.u32(static_cast<std::uint32_t>(st.m.size()));
  for (const auto& t : st.m) {
    w.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
  }
  for (const auto& t : st.v) {
    w.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
  }
}

void read_adam(io::Reader& r, const std::vector<Param>& params, AdamState& st) {
  st.cfg.lr = r.f64();
  st.cfg.beta1 = r.f64();
  st.cfg.beta2 = r.f64();
  st.cfg.eps = r.f64();
  st.t = r.i64();
  const std::uint32_t n = r.u32();
  if (n != params.size()) {
    throw ConfigError("adam blob: tensor count mismatch");
  }
  st.m.clear();
  st.v.clear();
  for (const auto& p : params) {
    st.m.emplace_back(p.value.shape());
  }
  for (const auto& p : params) {
    st.v.emplace_back(p.value.shape());
  }
  for (auto& t : st.m) {
    r.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
  }
  for (auto& t : st.v) {
    r.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
  }
}

void read_adam(io::Reader& r, const Network& net, AdamState& st) {
  read_adam(r, net.params(), st);
}

void write_rng(io::Writer& w, const Rng& rng) {
  for (std::uint64_t s : rng.state()) w.u64(s);
}

void read_rng(io::Reader& r, Rng& rng) {
  std::array<std::uint64_t, 4> s{};
  for (auto& v : s) v = r.u64();
  rng.set_state(s);
}

}  // namespace mznav::nn
