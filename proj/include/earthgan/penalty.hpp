#pragma once

#include <functional>

#include "earthgan/autodiff.hpp"

namespace earthgan::ad {

template <typename T>
using ScalarFunction = std::function<Var<T>(const Var<T>&)>;

// lambda * (||grad_x critic(x)|| - 1)^2 at x = eps * real + (1 - eps) * fake.
// `real` and `fake` are treated as constants; the result is differentiable
// with respect to whatever parameters `critic` closes over.
template <typename T>
Var<T> gradient_penalty(const ScalarFunction<T>& critic, const Tensor<T>& real,
                        const Tensor<T>& fake, double epsilon, double lambda);

// Norm of the input gradient used by gradient_penalty, exposed for metrics.
template <typename T>
Var<T> input_gradient_norm(const ScalarFunction<T>& critic,
                           const Tensor<T>& point);

}  // namespace earthgan::ad
