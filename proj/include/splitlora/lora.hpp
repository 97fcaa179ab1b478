#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "splitlora/matrix.hpp"

namespace splitlora {

class SeededRng;

/// One trainable low-rank pair attached to a frozen weight site.
/// The adapted weight is W + (alpha/rank) * A * B with A d x r, B r x m.
struct LoraAdapter {
    std::uint32_t site_id = 0;
    double alpha = 1.0;
    Matrix a;  // d x r
    Matrix b;  // r x m

    std::size_t in_dim() const { return a.rows(); }
    std::size_t rank() const { return a.cols(); }
    std::size_t out_dim() const { return b.cols(); }
    double scale() const { return alpha / static_cast<double>(rank()); }
};

/// Ordered adapter collection for one party, keyed by ascending site_id.
struct AdapterSet {
    std::vector<LoraAdapter> adapters;

    std::size_t size() const { return adapters.size(); }
    bool empty() const { return adapters.empty(); }
    const LoraAdapter* find(std::uint32_t site_id) const;
    LoraAdapter* find(std::uint32_t site_id);
    /// Keeps the set sorted; duplicate site_ids are rejected.
    void insert(LoraAdapter adapter);
};

/// Per-site gradients, shapes mirroring the owning adapters.
struct AdapterGradients {
    struct Entry {
        std::uint32_t site_id = 0;
        Matrix ga;  // d x r
        Matrix gb;  // r x m
    };
    std::vector<Entry> entries;  // ascending site_id

    const Entry* find(std::uint32_t site_id) const;
    void insert(Entry entry);
};

/// A gets a Normal(0, sigma^2) draw, B starts at zero, so the adapted model
/// initially equals the frozen model.
LoraAdapter init_adapter(std::uint32_t site_id, std::size_t d, std::size_t m, std::size_t r,
                         double alpha, double sigma, SeededRng& rng);

/// h*W + scale * (h*A)*B, computed through the rank-r bottleneck (the d x m
/// product A*B is never materialized).
Matrix adapter_forward(const Matrix& h, const Matrix& w_frozen, const LoraAdapter& adapter);

struct AdapterBackwardResult {
    Matrix ga;   // d x r
    Matrix gb;   // r x m
    Matrix g_h;  // b x d
};

/// Chain rule for adapter_forward:
///   ga  = scale * h^T * (g_out * B^T)
///   gb  = scale * (h*A)^T * g_out
///   g_h = g_out * W^T + scale * (g_out * B^T) * A^T
AdapterBackwardResult adapter_backward(const Matrix& h, const Matrix& g_out,
                                       const Matrix& w_frozen, const LoraAdapter& adapter);

/// One plain SGD step: A' = A - gamma*ga, B' = B - gamma*gb. The frozen
/// weight is untouched; site_id, rank and alpha carry over.
LoraAdapter sgd_update(const LoraAdapter& adapter, const Matrix& ga, const Matrix& gb,
                       double gamma);

/// Weighted elementwise mean of the A matrices and, separately, of the B
/// matrices, per site. All sets must be structurally identical; weights must
/// be nonnegative and sum to 1 within 1e-9. Summation runs in ascending
/// client-index order. When every contribution to a matrix is bitwise
/// identical the input is returned unchanged, so a convex combination of
/// equal points is exact.
AdapterSet aggregate(std::span<const AdapterSet> sets, std::span<const double> weights);

/// Sum over adapters of rank * (d + m).
std::uint64_t count_trainable(const AdapterSet& set);

/// Binary checkpoint: little-endian, magic "SLRA", version u32, count u32,
/// then per adapter (site_id u32, d u32, m u32, r u32, alpha f64,
/// A entries f64 row-major, B entries f64 row-major).
void save_adapters(const std::filesystem::path& path, const AdapterSet& set);
AdapterSet load_adapters(const std::filesystem::path& path);

}  // namespace splitlora
