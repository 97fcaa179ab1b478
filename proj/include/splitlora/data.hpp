#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splitlora/model.hpp"
#include "splitlora/rng.hpp"

namespace splitlora {

/// One training example: a token sequence and one label per position.
struct Sample {
    std::vector<std::uint32_t> x;
    std::vector<std::uint32_t> y;
};

struct Dataset {
    std::vector<Sample> samples;
    int vocab = 0;
    int seq_len = 0;

    std::size_t size() const { return samples.size(); }
};

enum class SyntheticTask {
    // y is x cyclically shifted by one: y[t] = x[(t+1) mod seq_len], so the
    // last position's label wraps to the first token.
    copy_next_token,
    // The class is x[0] mod num_classes (min(8, vocab) classes), repeated at
    // every position; the remaining tokens are noise.
    pattern_classify,
};

enum class PartitionMode { iid, label_skew };

struct PartitionSpec {
    PartitionMode mode = PartitionMode::iid;
    double concentration = 1.0;  // label_skew only; must be > 0
};

Dataset gen_synthetic(SyntheticTask task, int vocab, int seq_len, std::size_t n, SeededRng& rng);

/// Disjoint cover of the input. iid deals a shuffled permutation round-robin
/// (sizes differ by at most one). label_skew groups samples by y[0] and, per
/// class, assigns each sample to a client drawn from Dirichlet(concentration)
/// proportions (gamma draws via Marsaglia-Tsang, normalized); empty clients
/// are repaired by moving one sample from the largest client.
std::vector<Dataset> partition(const Dataset& dataset, int n_clients, const PartitionSpec& spec,
                               SeededRng& rng);

/// b distinct samples drawn without replacement (partial Fisher-Yates over
/// the index range), flattened into a Batch of token rows.
Batch sample_minibatch(const Dataset& dataset, std::size_t b, SeededRng& rng);

/// One sample per line: {"x": [...], "y": [...]}.
void dump_dataset_jsonl(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset_jsonl(const std::filesystem::path& path, int vocab, int seq_len);

}  // namespace splitlora
