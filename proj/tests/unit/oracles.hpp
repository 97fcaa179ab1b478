#pragma once

// Test-only reference implementations. These stay independent of the
// library's compute paths so they can vouch for them.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "splitlora/lora.hpp"
#include "splitlora/matrix.hpp"
#include "splitlora/model.hpp"

namespace oracles {

using splitlora::LoraAdapter;
using splitlora::Matrix;

// Naive i-j-k triple loop. Per-entry accumulation runs over ascending k,
// the same documented order the library uses, so results must match the
// library product bitwise.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

// Dense reference for the adapter forward: materializes W + s*A*B.
inline Matrix dense_adapter_forward(const Matrix& h, const Matrix& w, const LoraAdapter& ad) {
    const Matrix ab = naive_matmul(ad.a, ad.b);
    Matrix adapted = w;
    const double s = ad.scale();
    for (std::size_t i = 0; i < adapted.rows(); ++i) {
        for (std::size_t j = 0; j < adapted.cols(); ++j) {
            adapted(i, j) += s * ab(i, j);
        }
    }
    return naive_matmul(h, adapted);
}

inline double rel_diff(double a, double b, double floor = 1e-9) {
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

inline double max_rel_diff(const Matrix& a, const Matrix& b, double floor = 1e-9) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            worst = std::max(worst, rel_diff(a(i, j), b(i, j), floor));
        }
    }
    return worst;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

inline bool sets_bitwise_equal(const splitlora::AdapterSet& x, const splitlora::AdapterSet& y) {
    if (x.size() != y.size()) {
        return false;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const LoraAdapter& a = x.adapters[i];
        const LoraAdapter& b = y.adapters[i];
        if (a.site_id != b.site_id || a.alpha != b.alpha || !a.a.bitwise_equal(b.a) ||
            !a.b.bitwise_equal(b.b)) {
            return false;
        }
    }
    return true;
}

// Objective whose gradient the pipeline computes: per-client slice means
// combined with the data-share weights.
inline double weighted_objective(const splitlora::LossReport& report,
                                 std::span<const double> weights) {
    double value = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        value += weights[i] * report.per_client_ce[i];
    }
    return value;
}

}  // namespace oracles
