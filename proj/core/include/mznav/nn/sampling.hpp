#pragma once

#include <vector>

#include "mznav/common.hpp"

namespace mznav::nn {

struct CategoricalSample {
  int index = 0;
  double logprob = 0;
};

// Samples from softmax(logits); logprob is the stable log-softmax of the
// chosen index. One uniform draw per call.
CategoricalSample sample_categorical(const float* logits, int n, Rng& rng);

// Same draw path, but for an already-normalized probability row.
CategoricalSample sample_probs(const float* probs, int n, Rng& rng);

// Diagonal Gaussian log density, summed over dims.
double gaussian_logprob(const double* sample, const float* mean,
                        const float* log_std, int dim);

struct GaussianSample {
  std::vector<double> z;
  double logprob = 0;
};

// Draws z_d ~ N(mean_d, exp(log_std_d)^2); dim normals consumed in order.
GaussianSample sample_gaussian(const float* mean, const float* log_std,
                               int dim, Rng& rng);

int argmax(const float* values, int n);

double categorical_entropy(const float* probs, int n);

}  // namespace mznav::nn
