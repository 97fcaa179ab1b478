#include "splitlora/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "splitlora/error.hpp"
#include "splitlora/rng.hpp"

namespace splitlora {

std::vector<LayerSpec> token_stack_arch(int vocab, int embed_dim, int blocks, int mlp_hidden) {
    std::vector<LayerSpec> arch;
    arch.push_back({LayerKind::embedding, vocab, embed_dim, 0});
    for (int i = 0; i < blocks; ++i) {
        arch.push_back({LayerKind::transformer_block, embed_dim, embed_dim, mlp_hidden});
    }
    arch.push_back({LayerKind::output_head, embed_dim, vocab, 0});
    return arch;
}

std::vector<LayerSpec> block_stack_arch(int width, int mlp_hidden, int blocks) {
    std::vector<LayerSpec> arch;
    for (int i = 0; i < blocks; ++i) {
        arch.push_back({LayerKind::transformer_block, width, width, mlp_hidden});
    }
    return arch;
}

namespace {

struct SlotDesc {
    int slot;
    const char* name;
};

// Slot layout per layer kind; order fixes both site_id assignment and the
// weight draw order at build time.
std::vector<SlotDesc> slots_for(LayerKind kind) {
    switch (kind) {
        case LayerKind::embedding:
            return {};
        case LayerKind::dense_tanh:
            return {{0, "dense"}};
        case LayerKind::transformer_block:
            return {{0, "q"}, {1, "k"}, {2, "v"}, {3, "o"}, {4, "mlp_in"}, {5, "mlp_out"}};
        case LayerKind::output_head:
            return {{0, "head"}};
    }
    return {};
}

void slot_dims(const LayerSpec& spec, int slot, std::size_t& d, std::size_t& m) {
    const auto din = static_cast<std::size_t>(spec.input_dim);
    const auto dout = static_cast<std::size_t>(spec.output_dim);
    const auto hidden = static_cast<std::size_t>(spec.hidden_dim);
    if (spec.kind == LayerKind::transformer_block) {
        switch (slot) {
            case 0:
            case 1:
            case 2:
            case 3:
                d = din;
                m = din;
                return;
            case 4:
                d = din;
                m = hidden;
                return;
            case 5:
                d = hidden;
                m = din;
                return;
            default:
                break;
        }
    } else if (slot == 0) {
        d = din;
        m = dout;
        return;
    }
    throw StructureError("slot_dims: invalid slot " + std::to_string(slot));
}

Matrix tanh_map(const Matrix& x) {
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = std::tanh(out.data()[i]);
    }
    return out;
}

// g * (1 - act^2), with act the stored tanh output.
Matrix tanh_backward(const Matrix& g, const Matrix& act) {
    Matrix out = g;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= 1.0 - act.data()[i] * act.data()[i];
    }
    return out;
}

Matrix site_forward(const Matrix& x, const Matrix& w, const LoraAdapter* ad) {
    return ad != nullptr ? adapter_forward(x, w, *ad) : matmul(x, w);
}

Matrix site_backward(const Matrix& h, const Matrix& g_out, const Matrix& w,
                     const LoraAdapter* ad, AdapterGradients& grads) {
    if (ad != nullptr) {
        AdapterBackwardResult r = adapter_backward(h, g_out, w, *ad);
        grads.insert({ad->site_id, std::move(r.ga), std::move(r.gb)});
        return std::move(r.g_h);
    }
    return matmul(g_out, transpose(w));
}

void validate_adapters_in_range(const BaseModel& model, int begin, int end,
                                const AdapterSet& adapters) {
    const auto sites = model.sites(begin, end);
    for (const LoraAdapter& ad : adapters.adapters) {
        const auto it = std::find_if(sites.begin(), sites.end(), [&](const WeightSite& s) {
            return s.site_id == ad.site_id;
        });
        if (it == sites.end()) {
            throw StructureError("adapter site " + std::to_string(ad.site_id) +
                                 " outside layers [" + std::to_string(begin) + ", " +
                                 std::to_string(end) + ")");
        }
        if (ad.in_dim() != it->d || ad.out_dim() != it->m) {
            throw StructureError("adapter shape mismatch at site " + std::to_string(ad.site_id));
        }
    }
}

std::size_t sequences_of(std::size_t rows, int seq_len, const char* what) {
    const auto s = static_cast<std::size_t>(seq_len);
    if (s == 0 || rows % s != 0) {
        throw ShapeError(std::string(what) + ": " + std::to_string(rows) +
                         " rows do not form whole sequences of length " + std::to_string(seq_len));
    }
    return rows / s;
}

}  // namespace

std::vector<WeightSite> enumerate_sites(std::span<const LayerSpec> arch, int begin, int end) {
    if (begin < 0 || end > static_cast<int>(arch.size()) || begin > end) {
        throw ParameterError("enumerate_sites: invalid layer range");
    }
    std::vector<WeightSite> out;
    for (int layer = begin; layer < end; ++layer) {
        const LayerSpec& spec = arch[static_cast<std::size_t>(layer)];
        for (const SlotDesc& sd : slots_for(spec.kind)) {
            WeightSite site;
            site.site_id = static_cast<std::uint32_t>(layer) * kSiteSlotStride +
                           static_cast<std::uint32_t>(sd.slot);
            site.layer = layer;
            site.slot = sd.slot;
            site.name = sd.name;
            slot_dims(spec, sd.slot, site.d, site.m);
            out.push_back(std::move(site));
        }
    }
    return out;
}

std::vector<WeightSite> BaseModel::sites(int begin, int end) const {
    return enumerate_sites(specs_, begin, end);
}

BaseModel build_model(const std::vector<LayerSpec>& arch, int vocab, int seq_len, double sigma,
                      SeededRng& rng) {
    if (arch.empty()) {
        throw ConfigError("build_model: empty architecture");
    }
    if (vocab < 2) {
        throw ConfigError("build_model: vocab must be at least 2");
    }
    if (seq_len < 1) {
        throw ConfigError("build_model: seq_len must be at least 1");
    }
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerSpec& spec = arch[i];
        if (spec.input_dim < 1 || spec.output_dim < 1) {
            throw ConfigError("build_model: layer " + std::to_string(i) +
                              " has non-positive dims");
        }
        switch (spec.kind) {
            case LayerKind::embedding:
                if (i != 0) {
                    throw ConfigError("build_model: embedding must be the first layer");
                }
                if (spec.input_dim != vocab) {
                    throw ConfigError("build_model: embedding input_dim must equal vocab");
                }
                break;
            case LayerKind::transformer_block:
                if (spec.input_dim != spec.output_dim) {
                    throw ConfigError("build_model: transformer_block must preserve width");
                }
                if (spec.hidden_dim < 1) {
                    throw ConfigError("build_model: transformer_block needs hidden_dim >= 1");
                }
                break;
            case LayerKind::output_head:
                if (i + 1 != arch.size()) {
                    throw ConfigError("build_model: output_head must be the last layer");
                }
                if (spec.output_dim != vocab) {
                    throw ConfigError("build_model: output_head output_dim must equal vocab");
                }
                break;
            case LayerKind::dense_tanh:
                break;
        }
        if (i + 1 < arch.size() && spec.output_dim != arch[i + 1].input_dim) {
            throw ConfigError("build_model: layer " + std::to_string(i) + " output_dim " +
                              std::to_string(spec.output_dim) + " does not match layer " +
                              std::to_string(i + 1) + " input_dim " +
                              std::to_string(arch[i + 1].input_dim));
        }
    }

    BaseModel model;
    model.specs_ = arch;
    model.vocab_ = vocab;
    model.seq_len_ = seq_len;
    model.weights_.resize(arch.size());
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerSpec& spec = arch[i];
        LayerWeights& lw = model.weights_[i];
        if (spec.kind == LayerKind::embedding) {
            lw.token_table = gaussian_init(static_cast<std::size_t>(vocab),
                                           static_cast<std::size_t>(spec.output_dim), sigma, rng);
            lw.pos_table = gaussian_init(static_cast<std::size_t>(seq_len),
                                         static_cast<std::size_t>(spec.output_dim), sigma, rng);
            continue;
        }
        for (const SlotDesc& sd : slots_for(spec.kind)) {
            std::size_t d = 0;
            std::size_t m = 0;
            slot_dims(spec, sd.slot, d, m);
            lw.dense.push_back(gaussian_init(d, m, sigma, rng));
        }
    }
    return model;
}

SplitModel split(std::shared_ptr<const BaseModel> model, int cut_layer) {
    if (!model) {
        throw ParameterError("split: null model");
    }
    const int total = model->layer_count();
    if (cut_layer < 1 || cut_layer > total - 1) {
        throw ParameterError("split: cut_layer " + std::to_string(cut_layer) +
                             " outside [1, " + std::to_string(total - 1) + "]");
    }
    return SplitModel{std::move(model), cut_layer};
}

std::pair<Matrix, ForwardCache> forward_layers(const BaseModel& model, int begin, int end,
                                               const AdapterSet& adapters,
                                               const BatchInput& input) {
    if (begin < 0 || end > model.layer_count() || begin >= end) {
        throw ParameterError("forward_layers: invalid layer range");
    }
    validate_adapters_in_range(model, begin, end, adapters);

    const bool token_input = std::holds_alternative<TokenGrid>(input);
    const LayerSpec& first = model.layers()[static_cast<std::size_t>(begin)];
    if (token_input != (first.kind == LayerKind::embedding)) {
        throw ShapeError(token_input
                             ? "forward_layers: token input requires an embedding layer"
                             : "forward_layers: embedding layer requires token input");
    }

    ForwardCache cache;
    cache.begin_layer = begin;
    cache.end_layer = end;
    cache.layers.resize(static_cast<std::size_t>(end - begin));

    Matrix current;
    for (int layer = begin; layer < end; ++layer) {
        const LayerSpec& spec = model.layers()[static_cast<std::size_t>(layer)];
        const LayerWeights& lw = model.weights(layer);
        LayerCache& lc = cache.layers[static_cast<std::size_t>(layer - begin)];
        const auto site = [&](int slot) {
            return adapters.find(static_cast<std::uint32_t>(layer) * kSiteSlotStride +
                                 static_cast<std::uint32_t>(slot));
        };
        switch (spec.kind) {
            case LayerKind::embedding: {
                const TokenGrid& grid = std::get<TokenGrid>(input);
                if (grid.batch < 1 || grid.seq_len != model.seq_len() ||
                    grid.ids.size() != static_cast<std::size_t>(grid.batch) *
                                           static_cast<std::size_t>(grid.seq_len)) {
                    throw ShapeError("forward_layers: malformed token grid");
                }
                const auto width = static_cast<std::size_t>(spec.output_dim);
                const auto s = static_cast<std::size_t>(grid.seq_len);
                Matrix out(grid.ids.size(), width);
                for (std::size_t r = 0; r < grid.ids.size(); ++r) {
                    const std::uint32_t id = grid.ids[r];
                    if (id >= static_cast<std::uint32_t>(model.vocab())) {
                        throw DataError("forward_layers: token id " + std::to_string(id) +
                                        " >= vocab " + std::to_string(model.vocab()));
                    }
                    const std::size_t t = r % s;
                    for (std::size_t c = 0; c < width; ++c) {
                        out(r, c) = lw.token_table(id, c) + lw.pos_table(t, c);
                    }
                }
                current = std::move(out);
                break;
            }
            case LayerKind::dense_tanh: {
                lc.input = std::move(current);
                lc.act = tanh_map(site_forward(lc.input, lw.dense[0], site(0)));
                current = lc.act;
                break;
            }
            case LayerKind::transformer_block: {
                lc.input = std::move(current);
                const Matrix& x = lc.input;
                if (x.cols() != static_cast<std::size_t>(spec.input_dim)) {
                    throw ShapeError("forward_layers: block expects width " +
                                     std::to_string(spec.input_dim) + ", got " +
                                     std::to_string(x.cols()));
                }
                const auto s = static_cast<std::size_t>(model.seq_len());
                const std::size_t nseq = sequences_of(x.rows(), model.seq_len(), "forward_layers");
                const auto d = static_cast<std::size_t>(spec.input_dim);
                const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
                lc.q = site_forward(x, lw.dense[0], site(0));
                lc.k = site_forward(x, lw.dense[1], site(1));
                lc.v = site_forward(x, lw.dense[2], site(2));
                lc.attn = Matrix(x.rows(), s);
                lc.ctx = Matrix(x.rows(), d);
                std::vector<double> scores(s);
                for (std::size_t seq = 0; seq < nseq; ++seq) {
                    const std::size_t r0 = seq * s;
                    for (std::size_t i = 0; i < s; ++i) {
                        double max_score = -std::numeric_limits<double>::infinity();
                        for (std::size_t j = 0; j < s; ++j) {
                            double dot = 0.0;
                            for (std::size_t c = 0; c < d; ++c) {
                                dot += lc.q(r0 + i, c) * lc.k(r0 + j, c);
                            }
                            scores[j] = dot * inv_sqrt_d;
                            max_score = std::max(max_score, scores[j]);
                        }
                        double denom = 0.0;
                        for (std::size_t j = 0; j < s; ++j) {
                            scores[j] = std::exp(scores[j] - max_score);
                            denom += scores[j];
                        }
                        for (std::size_t j = 0; j < s; ++j) {
                            lc.attn(r0 + i, j) = scores[j] / denom;
                        }
                    }
                    for (std::size_t i = 0; i < s; ++i) {
                        for (std::size_t t = 0; t < s; ++t) {
                            const double a = lc.attn(r0 + i, t);
                            for (std::size_t c = 0; c < d; ++c) {
                                lc.ctx(r0 + i, c) += a * lc.v(r0 + t, c);
                            }
                        }
                    }
                }
                const Matrix attn_out = site_forward(lc.ctx, lw.dense[3], site(3));
                lc.res1 = add(x, attn_out);
                lc.mlp_act = tanh_map(site_forward(lc.res1, lw.dense[4], site(4)));
                const Matrix mlp_out = site_forward(lc.mlp_act, lw.dense[5], site(5));
                current = add(lc.res1, mlp_out);
                break;
            }
            case LayerKind::output_head: {
                lc.input = std::move(current);
                current = site_forward(lc.input, lw.dense[0], site(0));
                break;
            }
        }
    }
    cache.rows = current.rows();
    check_finite(current, "forward_layers");
    return {std::move(current), std::move(cache)};
}

LayerRangeBackward backward_layers(const BaseModel& model, const AdapterSet& adapters,
                                   const ForwardCache& cache, const Matrix& g_out) {
    if (cache.begin_layer < 0 || cache.end_layer > model.layer_count() ||
        cache.begin_layer >= cache.end_layer ||
        cache.layers.size() != static_cast<std::size_t>(cache.end_layer - cache.begin_layer)) {
        throw StateError("backward_layers: cache does not match any forward pass");
    }
    if (g_out.rows() != cache.rows) {
        throw ShapeError("backward_layers: gradient rows " + std::to_string(g_out.rows()) +
                         " do not match cached rows " + std::to_string(cache.rows));
    }
    validate_adapters_in_range(model, cache.begin_layer, cache.end_layer, adapters);

    LayerRangeBackward result;
    Matrix g = g_out;
    for (int layer = cache.end_layer - 1; layer >= cache.begin_layer; --layer) {
        const LayerSpec& spec = model.layers()[static_cast<std::size_t>(layer)];
        const LayerWeights& lw = model.weights(layer);
        const LayerCache& lc = cache.layers[static_cast<std::size_t>(layer - cache.begin_layer)];
        const auto site = [&](int slot) {
            return adapters.find(static_cast<std::uint32_t>(layer) * kSiteSlotStride +
                                 static_cast<std::uint32_t>(slot));
        };
        switch (spec.kind) {
            case LayerKind::embedding: {
                // First layer of the range; nothing upstream needs gradients.
                g = Matrix();
                break;
            }
            case LayerKind::dense_tanh: {
                const Matrix g_pre = tanh_backward(g, lc.act);
                g = site_backward(lc.input, g_pre, lw.dense[0], site(0), result.grads);
                break;
            }
            case LayerKind::output_head: {
                g = site_backward(lc.input, g, lw.dense[0], site(0), result.grads);
                break;
            }
            case LayerKind::transformer_block: {
                const Matrix& x = lc.input;
                const auto s = static_cast<std::size_t>(model.seq_len());
                const std::size_t nseq = sequences_of(x.rows(), model.seq_len(), "backward_layers");
                const auto d = static_cast<std::size_t>(spec.input_dim);
                const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

                // out = res1 + mlp_out
                Matrix g_res1 = g;
                const Matrix g_mlp_act =
                    site_backward(lc.mlp_act, g, lw.dense[5], site(5), result.grads);
                const Matrix g_mlp_pre = tanh_backward(g_mlp_act, lc.mlp_act);
                add_in_place(g_res1,
                             site_backward(lc.res1, g_mlp_pre, lw.dense[4], site(4), result.grads));

                // res1 = x + attn_out; gradient reaches x via the residual
                // copy first, then through q, k, v in that fixed order.
                Matrix g_x = g_res1;
                const Matrix g_ctx =
                    site_backward(lc.ctx, g_res1, lw.dense[3], site(3), result.grads);

                Matrix g_q(x.rows(), d);
                Matrix g_k(x.rows(), d);
                Matrix g_v(x.rows(), d);
                std::vector<double> g_attn(s * s);
                std::vector<double> g_z(s * s);
                for (std::size_t seq = 0; seq < nseq; ++seq) {
                    const std::size_t r0 = seq * s;
                    for (std::size_t i = 0; i < s; ++i) {
                        for (std::size_t j = 0; j < s; ++j) {
                            double dot = 0.0;
                            for (std::size_t c = 0; c < d; ++c) {
                                dot += g_ctx(r0 + i, c) * lc.v(r0 + j, c);
                            }
                            g_attn[i * s + j] = dot;
                        }
                    }
                    for (std::size_t t = 0; t < s; ++t) {
                        for (std::size_t c = 0; c < d; ++c) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < s; ++i) {
                                acc += lc.attn(r0 + i, t) * g_ctx(r0 + i, c);
                            }
                            g_v(r0 + t, c) = acc;
                        }
                    }
                    for (std::size_t i = 0; i < s; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < s; ++j) {
                            dot += g_attn[i * s + j] * lc.attn(r0 + i, j);
                        }
                        for (std::size_t j = 0; j < s; ++j) {
                            g_z[i * s + j] = lc.attn(r0 + i, j) * (g_attn[i * s + j] - dot);
                        }
                    }
                    for (std::size_t i = 0; i < s; ++i) {
                        for (std::size_t c = 0; c < d; ++c) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < s; ++j) {
                                acc += g_z[i * s + j] * lc.k(r0 + j, c);
                            }
                            g_q(r0 + i, c) = acc * inv_sqrt_d;
                        }
                    }
                    for (std::size_t j = 0; j < s; ++j) {
                        for (std::size_t c = 0; c < d; ++c) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < s; ++i) {
                                acc += g_z[i * s + j] * lc.q(r0 + i, c);
                            }
                            g_k(r0 + j, c) = acc * inv_sqrt_d;
                        }
                    }
                }
                add_in_place(g_x, site_backward(x, g_q, lw.dense[0], site(0), result.grads));
                add_in_place(g_x, site_backward(x, g_k, lw.dense[1], site(1), result.grads));
                add_in_place(g_x, site_backward(x, g_v, lw.dense[2], site(2), result.grads));
                g = std::move(g_x);
                break;
            }
        }
    }
    if (!g.empty()) {
        check_finite(g, "backward_layers");
    }
    result.g_input = std::move(g);
    return result;
}

ClientPass client_forward(const SplitModel& model, const AdapterSet& client_adapters,
                          const BatchInput& x) {
    auto [activations, cache] =
        forward_layers(*model.base, 0, model.cut_layer, client_adapters, x);
    return {std::move(activations), std::move(cache)};
}

ServerPass server_forward(const SplitModel& model, const AdapterSet& server_adapters,
                          const ConcatActivations& activations) {
    const LayerSpec& first = model.base->layers()[static_cast<std::size_t>(model.cut_layer)];
    if (activations.s.cols() != static_cast<std::size_t>(first.input_dim)) {
        throw ShapeError("server_forward: cut width mismatch, expected " +
                         std::to_string(first.input_dim) + ", got " +
                         std::to_string(activations.s.cols()));
    }
    std::size_t total = 0;
    for (std::size_t rows : activations.rows_per_client) {
        if (rows == 0) {
            throw ShapeError("server_forward: empty client activation slice");
        }
        total += rows;
    }
    if (activations.rows_per_client.empty() || total != activations.s.rows()) {
        throw ShapeError("server_forward: client row counts do not sum to activation rows");
    }
    auto [logits, cache] = forward_layers(*model.base, model.cut_layer,
                                          model.base->layer_count(), server_adapters,
                                          activations.s);
    cache.rows_per_client = activations.rows_per_client;
    return {std::move(logits), std::move(cache)};
}

std::pair<LossReport, Matrix> compute_loss(const Matrix& logits,
                                           std::span<const std::uint32_t> labels,
                                           std::span<const LossSlice> slices) {
    if (logits.empty()) {
        throw ShapeError("compute_loss: empty logits");
    }
    const std::size_t rows = logits.rows();
    const std::size_t vocab = logits.cols();
    if (labels.size() != rows) {
        throw ShapeError("compute_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    }
    if (slices.empty()) {
        throw StructureError("compute_loss: no client slices");
    }
    std::size_t expected_begin = 0;
    double weight_sum = 0.0;
    for (const LossSlice& slice : slices) {
        if (slice.row_begin != expected_begin || slice.row_end <= slice.row_begin ||
            slice.row_end > rows) {
            throw StructureError("compute_loss: slices must cover rows contiguously");
        }
        if (!(slice.weight >= 0.0)) {
            throw ParameterError("compute_loss: slice weights must be nonnegative");
        }
        expected_begin = slice.row_end;
        weight_sum += slice.weight;
    }
    if (expected_begin != rows) {
        throw StructureError("compute_loss: slices do not cover all rows");
    }
    if (std::abs(weight_sum - 1.0) > 1e-9) {
        throw ParameterError("compute_loss: slice weights sum to " + std::to_string(weight_sum));
    }

    Matrix g(rows, vocab);
    LossReport report;
    report.per_client_ce.reserve(slices.size());
    double total_ce = 0.0;
    std::vector<double> probs(vocab);
    for (const LossSlice& slice : slices) {
        const std::size_t slice_rows = slice.row_end - slice.row_begin;
        const double row_scale = slice.weight / static_cast<double>(slice_rows);
        double slice_ce = 0.0;
        for (std::size_t r = slice.row_begin; r < slice.row_end; ++r) {
            const std::uint32_t label = labels[r];
            if (label >= vocab) {
                throw DataError("compute_loss: label " + std::to_string(label) + " >= vocab " +
                                std::to_string(vocab));
            }
            double max_logit = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < vocab; ++c) {
                max_logit = std::max(max_logit, logits(r, c));
            }
            double denom = 0.0;
            for (std::size_t c = 0; c < vocab; ++c) {
                probs[c] = std::exp(logits(r, c) - max_logit);
                denom += probs[c];
            }
            slice_ce += max_logit + std::log(denom) - logits(r, label);
            for (std::size_t c = 0; c < vocab; ++c) {
                g(r, c) = (probs[c] / denom - (c == label ? 1.0 : 0.0)) * row_scale;
            }
        }
        report.per_client_ce.push_back(slice_ce / static_cast<double>(slice_rows));
        total_ce += slice_ce;
    }
    report.mean_ce = total_ce / static_cast<double>(rows);
    report.ppl = std::exp(report.mean_ce);
    if (!std::isfinite(report.mean_ce) || !std::isfinite(report.ppl)) {
        throw NumericError("compute_loss: non-finite loss");
    }
    check_finite(g, "compute_loss");
    return {std::move(report), std::move(g)};
}

ServerBackwardResult server_backward(const SplitModel& model, const AdapterSet& server_adapters,
                                     const ForwardCache& cache, const Matrix& g_logits) {
    if (cache.begin_layer != model.cut_layer || cache.end_layer != model.layer_count() ||
        cache.rows_per_client.empty()) {
        throw StateError("server_backward: cache was not produced by server_forward");
    }
    if (g_logits.rows() != cache.rows) {
        throw StateError("server_backward: gradient rows do not match cached pass");
    }
    LayerRangeBackward bw = backward_layers(*model.base, server_adapters, cache, g_logits);
    ServerBackwardResult result;
    result.grads = std::move(bw.grads);
    std::size_t at = 0;
    for (std::size_t rows : cache.rows_per_client) {
        result.ds.push_back(row_block(bw.g_input, at, at + rows));
        at += rows;
    }
    return result;
}

AdapterGradients client_backward(const SplitModel& model, const AdapterSet& client_adapters,
                                 const ForwardCache& cache, const Matrix& ds) {
    if (cache.begin_layer != 0 || cache.end_layer != model.cut_layer) {
        throw StateError("client_backward: cache was not produced by client_forward");
    }
    const LayerSpec& cut_spec = model.base->layers()[static_cast<std::size_t>(model.cut_layer - 1)];
    if (ds.rows() != cache.rows || ds.cols() != static_cast<std::size_t>(cut_spec.output_dim)) {
        throw ShapeError("client_backward: activation gradient shape mismatch at the cut");
    }
    return backward_layers(*model.base, client_adapters, cache, ds).grads;
}

AdapterSet init_adapter_set(const BaseModel& model, int begin, int end, std::size_t rank,
                            double alpha, double sigma, const SeededRng& base_rng,
                            std::span<const std::string> site_names) {
    AdapterSet set;
    for (const WeightSite& site : model.sites(begin, end)) {
        if (!site_names.empty() &&
            std::find(site_names.begin(), site_names.end(), site.name) == site_names.end()) {
            continue;
        }
        SeededRng site_rng = base_rng.derive(site.site_id);
        set.insert(init_adapter(site.site_id, site.d, site.m, rank, alpha, sigma, site_rng));
    }
    return set;
}

}  // namespace splitlora
