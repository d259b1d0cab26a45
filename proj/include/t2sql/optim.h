#ifndef T2SQL_OPTIM_H_
#define T2SQL_OPTIM_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace t2sql {

// Numerically stable in-place softmax; returns log-sum-exp of the input.
double SoftmaxInPlace(std::span<double> v);

// Index of the largest entry; the lowest index wins ties.
size_t ArgMax(std::span<const double> v);

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void Step(std::span<double> params, std::span<const double> grad);
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  int64_t t_ = 0;
};

// Plain gradient descent step: params -= lr * grad.
void GradientStep(std::span<double> params, std::span<const double> grad, double lr);

// Fills `params` with N(0, stddev) draws.
void FillNormal(std::span<double> params, double stddev, std::mt19937_64 &rng);

// Indices 0..n-1 in a seeded random order.
std::vector<size_t> ShuffledIndices(size_t n, std::mt19937_64 &rng);

}  // namespace t2sql

#endif  // T2SQL_OPTIM_H_
