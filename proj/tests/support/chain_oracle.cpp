#include "chain_oracle.hpp"

#include <cmath>

namespace tsmooth::testing {

Chain random_chain(std::mt19937_64& rng, int states, int steps) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Chain c;
  c.prior = Vec(states);
  for (int i = 0; i < states; ++i) c.prior(i) = u(rng);
  c.prior /= c.prior.sum();
  for (int k = 0; k < steps; ++k) {
    Mat p(states, states);
    for (int i = 0; i < states; ++i) {
      for (int j = 0; j < states; ++j) p(i, j) = u(rng);
      p.row(i) /= p.row(i).sum();
    }
    Vec l(states);
    for (int i = 0; i < states; ++i) l(i) = u(rng);
    c.P.push_back(p);
    c.L.push_back(l);
  }
  return c;
}

std::vector<Vec> enumerate_posteriors(const Chain& c) {
  const int n = static_cast<int>(c.prior.size());
  const std::size_t N = c.P.size();
  std::vector<Vec> post(N + 1, Vec::Zero(n));
  std::vector<int> path(N + 1, 0);
  std::size_t total = 1;
  for (std::size_t k = 0; k <= N; ++k) total *= static_cast<std::size_t>(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t r = code;
    for (std::size_t k = 0; k <= N; ++k) {
      path[k] = static_cast<int>(r % static_cast<std::size_t>(n));
      r /= static_cast<std::size_t>(n);
    }
    double weight = c.prior(path[0]);
    for (std::size_t k = 0; k < N; ++k) weight *= c.L[k](path[k]) * c.P[k](path[k], path[k + 1]);
    for (std::size_t k = 0; k <= N; ++k) post[k](path[k]) += weight;
  }
  for (auto& p : post) p /= p.sum();
  return post;
}

ChainSteps::ChainSteps(const Chain& chain)
    : chain_(chain),
      grid_(grid::GridSpec::uniform1d(0.0, static_cast<double>(chain.prior.size() - 1),
                                      static_cast<std::size_t>(chain.prior.size()))) {
  for (const auto& p : chain_.P) {
    kernels_.push_back(std::make_shared<const kernels::TransitionKernel>(kernels::from_dense(p)));
  }
}

Vec ChainSteps::log_likelihood(std::size_t k) const { return chain_.L[k].array().log().matrix(); }

std::shared_ptr<const kernels::TransitionKernel> ChainSteps::kernel(std::size_t k) const {
  return kernels_[k];
}

grid::GridDensity ChainSteps::prior_density() const {
  return grid::GridDensity{grid_, chain_.prior.cwiseQuotient(grid_.weights()), 0.0, 0.0};
}

}  // namespace tsmooth::testing
