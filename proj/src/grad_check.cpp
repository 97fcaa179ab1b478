#include "splitlora/grad_check.hpp"

#include <cmath>

#include "splitlora/error.hpp"

namespace splitlora {

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double eps) {
    if (!(eps > 0.0)) {
        throw ParameterError("finite_diff_grad: eps must be > 0");
    }
    if (x.empty()) {
        throw ShapeError("finite_diff_grad: empty matrix");
    }
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double orig = probe(i, j);
            probe(i, j) = orig + eps;
            const double up = f(probe);
            probe(i, j) = orig - eps;
            const double down = f(probe);
            probe(i, j) = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("finite_diff_grad: non-finite function value");
            }
            grad(i, j) = (up - down) / (2.0 * eps);
        }
    }
    return grad;
}

}  // namespace splitlora
