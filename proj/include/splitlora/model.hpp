#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "splitlora/lora.hpp"
#include "splitlora/matrix.hpp"

namespace splitlora {

class SeededRng;

enum class LayerKind {
    embedding,           // token + position lookup tables
    dense_tanh,          // tanh(x * W)
    transformer_block,   // single-head attention + tanh MLP, both residual
    output_head,         // x * W to vocab logits
};

struct LayerSpec {
    LayerKind kind{};
    int input_dim = 0;   // embedding: vocab size
    int output_dim = 0;  // output_head: vocab size
    int hidden_dim = 0;  // transformer_block: MLP width
};

/// Convenience stacks used by configs and tests.
std::vector<LayerSpec> token_stack_arch(int vocab, int embed_dim, int blocks, int mlp_hidden);
std::vector<LayerSpec> block_stack_arch(int width, int mlp_hidden, int blocks);

// Adapter-eligible dense weights, one slot per matrix. site_id encodes the
// position as layer_index * 16 + slot.
// transformer_block slots: 0=q 1=k 2=v 3=o 4=mlp_in 5=mlp_out
// dense_tanh slot:         0=dense
// output_head slot:        0=head
inline constexpr std::uint32_t kSiteSlotStride = 16;

struct WeightSite {
    std::uint32_t site_id = 0;
    int layer = 0;
    int slot = 0;
    std::string name;
    std::size_t d = 0;  // input width
    std::size_t m = 0;  // output width
};

struct LayerWeights {
    std::vector<Matrix> dense;  // slot order above
    Matrix token_table;         // embedding only: vocab x width
    Matrix pos_table;           // embedding only: seq_len x width
};

/// Adapter sites of layers [begin, end) of an architecture, ascending
/// site_id. Works on bare specs so configs can be checked before any
/// weights exist.
std::vector<WeightSite> enumerate_sites(std::span<const LayerSpec> arch, int begin, int end);

/// Frozen layer stack. Weights are drawn once at build time and never
/// mutated afterwards; all accessors are const.
class BaseModel {
public:
    const std::vector<LayerSpec>& layers() const { return specs_; }
    int layer_count() const { return static_cast<int>(specs_.size()); }
    int vocab() const { return vocab_; }
    int seq_len() const { return seq_len_; }
    const LayerWeights& weights(int layer) const { return weights_[static_cast<std::size_t>(layer)]; }

    /// Adapter sites of layers [begin, end), ascending site_id.
    std::vector<WeightSite> sites(int begin, int end) const;

    friend BaseModel build_model(const std::vector<LayerSpec>& arch, int vocab, int seq_len,
                                 double sigma, SeededRng& rng);

private:
    std::vector<LayerSpec> specs_;
    std::vector<LayerWeights> weights_;
    int vocab_ = 0;
    int seq_len_ = 0;
};

/// Frozen weights drawn with gaussian_init in layer order (embedding draws
/// token table then position table; blocks draw q, k, v, o, mlp_in,
/// mlp_out). Deterministic per seed.
BaseModel build_model(const std::vector<LayerSpec>& arch, int vocab, int seq_len, double sigma,
                      SeededRng& rng);

/// Partition at a cut layer: client holds [0, cut), server holds [cut, L).
struct SplitModel {
    std::shared_ptr<const BaseModel> base;
    int cut_layer = 0;

    int layer_count() const { return base->layer_count(); }
    std::span<const LayerSpec> client_layers() const {
        return {base->layers().data(), static_cast<std::size_t>(cut_layer)};
    }
    std::span<const LayerSpec> server_layers() const {
        return {base->layers().data() + cut_layer,
                static_cast<std::size_t>(layer_count() - cut_layer)};
    }
};

SplitModel split(std::shared_ptr<const BaseModel> model, int cut_layer);

/// Token ids, row-major batch x seq_len.
struct TokenGrid {
    int batch = 0;
    int seq_len = 0;
    std::vector<std::uint32_t> ids;
};

using BatchInput = std::variant<TokenGrid, Matrix>;

/// One mini-batch: inputs plus one label per flattened token row.
struct Batch {
    BatchInput x;
    std::vector<std::uint32_t> labels;
    int batch = 0;
};

/// Intermediates retained for the backward pass of one layer range.
struct LayerCache {
    Matrix input;    // layer input (empty for embedding)
    Matrix act;      // dense_tanh: tanh output
    Matrix q, k, v;  // transformer_block pieces
    Matrix attn;     // softmax rows, stacked (batch*seq) x seq
    Matrix ctx;      // attn * v
    Matrix res1;     // x + attention output
    Matrix mlp_act;  // tanh MLP hidden
};

struct ForwardCache {
    int begin_layer = -1;
    int end_layer = -1;
    std::size_t rows = 0;
    std::vector<LayerCache> layers;
    std::vector<std::size_t> rows_per_client;  // set by server_forward
};

/// Runs layers [begin, end). Token input is only valid when layer `begin`
/// is an embedding; adapters must all live inside the range.
std::pair<Matrix, ForwardCache> forward_layers(const BaseModel& model, int begin, int end,
                                               const AdapterSet& adapters, const BatchInput& input);

struct LayerRangeBackward {
    AdapterGradients grads;
    Matrix g_input;  // empty when the range starts at an embedding
};

LayerRangeBackward backward_layers(const BaseModel& model, const AdapterSet& adapters,
                                   const ForwardCache& cache, const Matrix& g_out);

struct ClientPass {
    Matrix activations;  // (batch*seq_len) x cut width
    ForwardCache cache;
};

ClientPass client_forward(const SplitModel& model, const AdapterSet& client_adapters,
                          const BatchInput& x);

/// Activation matrices of all clients stacked in ascending client order.
struct ConcatActivations {
    Matrix s;
    std::vector<std::size_t> rows_per_client;
};

struct ServerPass {
    Matrix logits;
    ForwardCache cache;
};

ServerPass server_forward(const SplitModel& model, const AdapterSet& server_adapters,
                          const ConcatActivations& activations);

/// Contiguous row range of one client inside the concatenated batch, with
/// its share of the training objective.
struct LossSlice {
    int client_id = 0;
    std::size_t row_begin = 0;
    std::size_t row_end = 0;
    double weight = 1.0;
};

struct LossReport {
    double mean_ce = 0.0;                // mean cross-entropy over all rows, nats
    double ppl = 1.0;                    // exp(mean_ce)
    std::vector<double> per_client_ce;   // slice means, ascending client order
};

/// Mean cross-entropy plus the logits gradient of the weighted per-client
/// objective: rows of slice i are scaled by weight_i / slice_rows_i. With a
/// single weight-1 slice this is exactly (softmax - onehot) / total_rows.
std::pair<LossReport, Matrix> compute_loss(const Matrix& logits,
                                           std::span<const std::uint32_t> labels,
                                           std::span<const LossSlice> slices);

struct ServerBackwardResult {
    AdapterGradients grads;
    std::vector<Matrix> ds;  // activation gradients, ascending client order
};

ServerBackwardResult server_backward(const SplitModel& model, const AdapterSet& server_adapters,
                                     const ForwardCache& cache, const Matrix& g_logits);

AdapterGradients client_backward(const SplitModel& model, const AdapterSet& client_adapters,
                                 const ForwardCache& cache, const Matrix& ds);

/// Builds adapters for every matching dense site of layers [begin, end).
/// Each adapter draws from base_rng.derive(site_id), so the same seed yields
/// the same matrices regardless of how sites are grouped into sets.
/// site_names empty means every site.
AdapterSet init_adapter_set(const BaseModel& model, int begin, int end, std::size_t rank,
                            double alpha, double sigma, const SeededRng& base_rng,
                            std::span<const std::string> site_names = {});

}  // namespace splitlora
