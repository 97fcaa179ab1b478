#include "splitlora/lora.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splitlora/error.hpp"
#include "splitlora/rng.hpp"

namespace splitlora {

namespace {
std::string site_str(std::uint32_t site_id) {
    return "site " + std::to_string(site_id);
}
}  // namespace

const LoraAdapter* AdapterSet::find(std::uint32_t site_id) const {
    auto it = std::lower_bound(adapters.begin(), adapters.end(), site_id,
                               [](const LoraAdapter& a, std::uint32_t id) { return a.site_id < id; });
    if (it == adapters.end() || it->site_id != site_id) {
        return nullptr;
    }
    return &*it;
}

LoraAdapter* AdapterSet::find(std::uint32_t site_id) {
    return const_cast<LoraAdapter*>(static_cast<const AdapterSet*>(this)->find(site_id));
}

void AdapterSet::insert(LoraAdapter adapter) {
    auto it = std::lower_bound(adapters.begin(), adapters.end(), adapter.site_id,
                               [](const LoraAdapter& a, std::uint32_t id) { return a.site_id < id; });
    if (it != adapters.end() && it->site_id == adapter.site_id) {
        throw StructureError("AdapterSet::insert: duplicate " + site_str(adapter.site_id));
    }
    adapters.insert(it, std::move(adapter));
}

const AdapterGradients::Entry* AdapterGradients::find(std::uint32_t site_id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), site_id,
                               [](const Entry& e, std::uint32_t id) { return e.site_id < id; });
    if (it == entries.end() || it->site_id != site_id) {
        return nullptr;
    }
    return &*it;
}

void AdapterGradients::insert(Entry entry) {
    auto it = std::lower_bound(entries.begin(), entries.end(), entry.site_id,
                               [](const Entry& e, std::uint32_t id) { return e.site_id < id; });
    if (it != entries.end() && it->site_id == entry.site_id) {
        throw StructureError("AdapterGradients::insert: duplicate " + site_str(entry.site_id));
    }
    entries.insert(it, std::move(entry));
}

LoraAdapter init_adapter(std::uint32_t site_id, std::size_t d, std::size_t m, std::size_t r,
                         double alpha, double sigma, SeededRng& rng) {
    if (d == 0 || m == 0) {
        throw ParameterError("init_adapter: dimensions must be positive");
    }
    if (r < 1 || r > std::min(d, m)) {
        throw ParameterError("init_adapter: rank " + std::to_string(r) +
                             " outside [1, min(" + std::to_string(d) + ", " +
                             std::to_string(m) + ")]");
    }
    if (!std::isfinite(alpha / static_cast<double>(r))) {
        throw ParameterError("init_adapter: alpha/rank must be finite");
    }
    LoraAdapter adapter;
    adapter.site_id = site_id;
    adapter.alpha = alpha;
    adapter.a = gaussian_init(d, r, sigma, rng);
    adapter.b = Matrix(r, m);
    return adapter;
}

namespace {
void check_adapter_shapes(const Matrix& h, const Matrix& w, const LoraAdapter& ad,
                          const char* what) {
    if (h.empty() || w.empty() || ad.a.empty() || ad.b.empty()) {
        throw ShapeError(std::string(what) + ": empty operand");
    }
    if (h.cols() != w.rows() || w.rows() != ad.a.rows() || ad.a.cols() != ad.b.rows() ||
        w.cols() != ad.b.cols()) {
        throw ShapeError(std::string(what) + ": incompatible shapes at " + site_str(ad.site_id) +
                         ", h " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                         ", W " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                         ", A " + std::to_string(ad.a.rows()) + "x" + std::to_string(ad.a.cols()) +
                         ", B " + std::to_string(ad.b.rows()) + "x" + std::to_string(ad.b.cols()));
    }
}
}  // namespace

Matrix adapter_forward(const Matrix& h, const Matrix& w_frozen, const LoraAdapter& adapter) {
    check_adapter_shapes(h, w_frozen, adapter, "adapter_forward");
    Matrix out = matmul(h, w_frozen);
    const Matrix bottleneck = matmul(h, adapter.a);           // b x r
    add_scaled_in_place(out, adapter.scale(), matmul(bottleneck, adapter.b));
    check_finite(out, "adapter_forward");
    return out;
}

AdapterBackwardResult adapter_backward(const Matrix& h, const Matrix& g_out,
                                       const Matrix& w_frozen, const LoraAdapter& adapter) {
    check_adapter_shapes(h, w_frozen, adapter, "adapter_backward");
    if (g_out.rows() != h.rows() || g_out.cols() != w_frozen.cols()) {
        throw ShapeError("adapter_backward: g_out shape mismatch at " + site_str(adapter.site_id));
    }
    const double s = adapter.scale();
    const Matrix g_bottleneck = matmul(g_out, transpose(adapter.b));  // b x r
    AdapterBackwardResult res;
    res.ga = scaled(matmul(transpose(h), g_bottleneck), s);
    res.gb = scaled(matmul(transpose(matmul(h, adapter.a)), g_out), s);
    res.g_h = matmul(g_out, transpose(w_frozen));
    add_scaled_in_place(res.g_h, s, matmul(g_bottleneck, transpose(adapter.a)));
    check_finite(res.g_h, "adapter_backward");
    return res;
}

LoraAdapter sgd_update(const LoraAdapter& adapter, const Matrix& ga, const Matrix& gb,
                       double gamma) {
    if (!(gamma > 0.0)) {
        throw ParameterError("sgd_update: gamma must be > 0");
    }
    if (!ga.same_shape(adapter.a) || !gb.same_shape(adapter.b)) {
        throw ShapeError("sgd_update: gradient shape mismatch at " + site_str(adapter.site_id));
    }
    LoraAdapter out = adapter;
    for (std::size_t i = 0; i < out.a.size(); ++i) {
        out.a.data()[i] -= gamma * ga.data()[i];
    }
    for (std::size_t i = 0; i < out.b.size(); ++i) {
        out.b.data()[i] -= gamma * gb.data()[i];
    }
    check_finite(out.a, "sgd_update");
    check_finite(out.b, "sgd_update");
    return out;
}

namespace {
// Weighted sum over ascending client index. Zero-weight terms are skipped
// and the first contribution is assigned rather than added, so a single
// weight-1 client passes through bitwise.
Matrix weighted_mean(std::span<const AdapterSet> sets, std::span<const double> weights,
                     std::size_t adapter_idx, bool pick_a) {
    const Matrix& first = pick_a ? sets[0].adapters[adapter_idx].a : sets[0].adapters[adapter_idx].b;
    bool all_equal = true;
    for (std::size_t i = 1; i < sets.size(); ++i) {
        const Matrix& m = pick_a ? sets[i].adapters[adapter_idx].a : sets[i].adapters[adapter_idx].b;
        if (!first.bitwise_equal(m)) {
            all_equal = false;
            break;
        }
    }
    if (all_equal) {
        return first;
    }
    Matrix acc;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (weights[i] == 0.0) {
            continue;
        }
        const Matrix& m = pick_a ? sets[i].adapters[adapter_idx].a : sets[i].adapters[adapter_idx].b;
        if (acc.empty()) {
            acc = scaled(m, weights[i]);
        } else {
            add_scaled_in_place(acc, weights[i], m);
        }
    }
    if (acc.empty()) {
        acc = Matrix(first.rows(), first.cols());
    }
    check_finite(acc, "aggregate");
    return acc;
}
}  // namespace

AdapterSet aggregate(std::span<const AdapterSet> sets, std::span<const double> weights) {
    if (sets.empty()) {
        throw StructureError("aggregate: no input sets");
    }
    if (weights.size() != sets.size()) {
        throw ParameterError("aggregate: " + std::to_string(weights.size()) + " weights for " +
                             std::to_string(sets.size()) + " sets");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw ParameterError("aggregate: weights must be nonnegative");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ParameterError("aggregate: weights sum to " + std::to_string(total) +
                             ", expected 1");
    }
    const AdapterSet& first = sets[0];
    for (const AdapterSet& set : sets.subspan(1)) {
        if (set.size() != first.size()) {
            throw StructureError("aggregate: adapter count mismatch");
        }
        for (std::size_t i = 0; i < first.size(); ++i) {
            const LoraAdapter& a0 = first.adapters[i];
            const LoraAdapter& ai = set.adapters[i];
            if (ai.site_id != a0.site_id || !ai.a.same_shape(a0.a) || !ai.b.same_shape(a0.b) ||
                ai.alpha != a0.alpha) {
                throw StructureError("aggregate: structure mismatch at " + site_str(a0.site_id));
            }
        }
    }
    AdapterSet out;
    out.adapters.reserve(first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        LoraAdapter agg;
        agg.site_id = first.adapters[i].site_id;
        agg.alpha = first.adapters[i].alpha;
        agg.a = weighted_mean(sets, weights, i, /*pick_a=*/true);
        agg.b = weighted_mean(sets, weights, i, /*pick_a=*/false);
        out.adapters.push_back(std::move(agg));
    }
    return out;
}

std::uint64_t count_trainable(const AdapterSet& set) {
    std::uint64_t total = 0;
    for (const LoraAdapter& ad : set.adapters) {
        total += static_cast<std::uint64_t>(ad.rank()) *
                 (static_cast<std::uint64_t>(ad.in_dim()) + static_cast<std::uint64_t>(ad.out_dim()));
    }
    return total;
}

}  // namespace splitlora
