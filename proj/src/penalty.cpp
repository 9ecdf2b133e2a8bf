#include "earthgan/penalty.hpp"

#include <string>

#include "earthgan/ops.hpp"

namespace earthgan::ad {
namespace {

// Keeps sqrt differentiable when a critic is locally flat.
constexpr double kNormFloor = 1e-12;

}  // namespace

template <typename T>
Var<T> input_gradient_norm(const ScalarFunction<T>& critic,
                           const Tensor<T>& point) {
  GradModeGuard recording(true);
  auto x = Var<T>::leaf(point, true);
  Var<T> score = critic(x);
  if (score.value().size() != 1) {
    throw ShapeError("gradient_penalty: critic must return a scalar, got " +
                     to_string(score.shape()));
  }
  Var<T> g = grad(score, {x}, /*create_graph=*/true, /*allow_unused=*/true)[0];
  return ops::sqrt(ops::add_scalar(ops::sum(ops::square(g)), kNormFloor));
}

template <typename T>
Var<T> gradient_penalty(const ScalarFunction<T>& critic, const Tensor<T>& real,
                        const Tensor<T>& fake, double epsilon, double lambda) {
  if (real.shape() != fake.shape()) {
    throw ShapeError("gradient_penalty: real " + to_string(real.shape()) +
                     " and fake " + to_string(fake.shape()) + " differ");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ValidationError("gradient_penalty: epsilon must lie in [0, 1], got " +
                          std::to_string(epsilon));
  }
  if (!(lambda >= 0.0)) {
    throw ValidationError("gradient_penalty: lambda must be >= 0");
  }
  Tensor<T> mixed(real.shape());
  const T e = static_cast<T>(epsilon);
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    mixed[i] = e * real[i] + (T(1) - e) * fake[i];
  }
  Var<T> norm = input_gradient_norm(critic, mixed);
  return ops::scale(ops::square(ops::add_scalar(norm, -1.0)), lambda);
}

template Var<float> gradient_penalty(const ScalarFunction<float>&,
                                     const Tensor<float>&, const Tensor<float>&,
                                     double, double);
template Var<double> gradient_penalty(const ScalarFunction<double>&,
                                      const Tensor<double>&,
                                      const Tensor<double>&, double, double);
template Var<float> input_gradient_norm(const ScalarFunction<float>&,
                                        const Tensor<float>&);
template Var<double> input_gradient_norm(const ScalarFunction<double>&,
                                         const Tensor<double>&);

}  // namespace earthgan::ad
