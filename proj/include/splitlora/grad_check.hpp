#pragma once

#include <functional>

#include "splitlora/matrix.hpp"

namespace splitlora {

/// Central-difference gradient estimate of a scalar function of a matrix:
/// g(i,j) = (f(x + eps*e_ij) - f(x - eps*e_ij)) / (2*eps).
/// eps must be positive; non-finite values of f raise NumericError.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double eps);

}  // namespace splitlora
