#include "mznav/nn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mznav::nn {

namespace {
constexpr double kProbFloor = 1e-12;
}

CategoricalSample sample_categorical(const float* logits, int n, Rng& rng) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  if (!std::isfinite(mx)) throw NumericError("sample_categorical: non-finite logits");
  std::vector<double> p(static_cast<std::size_t>(n));
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[static_cast<std::size_t>(i)];
  }
  const double u = rng.uniform() * sum;
  double acc = 0;
  int idx = n - 1;
  for (int i = 0; i < n; ++i) {
    acc += p[static_cast<std::size_t>(i)];
    if (u < acc) {
      idx = i;
      break;
    }
  }
  CategoricalSample out;
  out.index = idx;
  out.logprob =
      static_cast<double>(logits[idx]) - mx - std::log(sum);
  return out;
}

CategoricalSample sample_probs(const float* probs, int n, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  int idx = n - 1;
  for (int i = 0; i < n; ++i) {
    acc += static_cast<double>(probs[i]);
    if (u < acc) {
      idx = i;
      break;
    }
  }
  CategoricalSample out;
  out.index = idx;
  out.logprob = std::log(std::max(static_cast<double>(probs[idx]), kProbFloor));
  return out;
}

double gaussian_logprob(const double* sample, const float* mean,
                        const float* log_std, int dim) {
  constexpr double kLog2Pi = 1.8378770664093455;
  double lp = 0;
  for (int d = 0; d < dim; ++d) {
    const double ls = static_cast<double>(log_std[d]);
    const double z = (sample[d] - static_cast<double>(mean[d])) / std::exp(ls);
    lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
  }
  return lp;
}

GaussianSample sample_gaussian(const float* mean, const float* log_std,
                               int dim, Rng& rng) {
  GaussianSample out;
  out.z.resize(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    out.z[static_cast<std::size_t>(d)] =
        static_cast<double>(mean[d]) +
        std::exp(static_cast<double>(log_std[d])) * rng.normal();
  }
  out.logprob = gaussian_logprob(out.z.data(), mean, log_std, dim);
  return out;
}

int argmax(const float* values, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double categorical_entropy(const float* probs, int n) {
  double h = 0;
  for (int i = 0; i < n; ++i) {
    const double p = static_cast<double>(probs[i]);
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace mznav::nn
