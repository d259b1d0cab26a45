#include "t2sql/optim.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace t2sql {

double SoftmaxInPlace(std::span<double> v) {
  if (v.empty()) return 0;
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0;
  for (double &x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double &x : v) x /= sum;
  return mx + std::log(sum);
}

size_t ArgMax(std::span<const double> v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void Adam::Step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = grad[i];
    if (g == 0 && m_[i] == 0 && v_[i] == 0) continue;  // untouched sparse rows
    m_[i] = beta1_ * m_[i] + (1 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1 - beta2_) * g * g;
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void GradientStep(std::span<double> params, std::span<const double> grad, double lr) {
  for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

void FillNormal(std::span<double> params, double stddev, std::mt19937_64 &rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double &p : params) p = dist(rng);
}

std::vector<size_t> ShuffledIndices(size_t n, std::mt19937_64 &rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace t2sql
