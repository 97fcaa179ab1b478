#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitlora/costs.hpp"
#include "splitlora/data.hpp"
#include "splitlora/lora.hpp"
#include "splitlora/messages.hpp"
#include "splitlora/model.hpp"

namespace splitlora {

enum class RunMode { splitlora, cenlora, fedlora };

struct ModelConfig {
    int vocab = 64;
    int seq_len = 16;
    int embed_dim = 32;
    int blocks = 12;
    int mlp_hidden = 64;
    double weight_sigma = 0.0;  // 0 selects 1/sqrt(embed_dim)
};

struct DataConfig {
    SyntheticTask task = SyntheticTask::copy_next_token;
    std::size_t samples = 1536;
    PartitionMode partition = PartitionMode::iid;
    double concentration = 1.0;
    bool duplicate_across_clients = false;  // give every client the full dataset
};

struct AdapterConfig {
    std::size_t rank = 4;
    double alpha = 4.0;  // default convention: alpha == rank, scale 1
    double sigma = 0.02;
    std::vector<std::string> sites;  // empty: every dense site
};

struct CostConfig {
    ComputeSpec compute;
    LinkSpec links;
    std::uint64_t wire_bytes_per_element = 4;
};

struct TrainingConfig {
    RunMode mode = RunMode::splitlora;
    std::uint64_t seed = 1;
    int rounds = 0;
    int clients = 3;
    int agg_interval = 1;  // aggregate after every round t with t % interval == 0
    int batch_size = 8;
    double client_lr = 0.0002;
    double server_lr = 0.0002;
    int cut_layer = 4;  // embedding plus three blocks on the client
    ModelConfig model;
    DataConfig data;
    AdapterConfig adapter;
    CostConfig costs;
    int checkpoint_every = 0;         // 0: final state only
    std::optional<long> epochs;       // accepted but unused by the round loop
};

/// Throws ConfigError before any compute when the config is invalid.
void validate_config(const TrainingConfig& config);

std::vector<LayerSpec> arch_from(const ModelConfig& model);
double effective_weight_sigma(const ModelConfig& model);

// Stream ids for deriving per-component generators from the run seed.
inline constexpr std::uint64_t kStreamDataset = 0;
inline constexpr std::uint64_t kStreamPartition = 1;
inline constexpr std::uint64_t kStreamModel = 2;
inline constexpr std::uint64_t kStreamAdapters = 3;
inline constexpr std::uint64_t kStreamClientBatchBase = 100;

struct ClientNode {
    int client_id = 0;
    Dataset data;
    AdapterSet adapters;
    SeededRng batch_rng{0};
    double lr = 0.0;
};

struct ServerNode {
    AdapterSet adapters;
    double lr = 0.0;
};

struct AggregatorNode {
    AdapterSet last_aggregate;
    int last_round = 0;
};

struct MessageEvent {
    int round = 0;
    char kind = '?';  // 'A' activations, 'G' activation grads, 'U' upload, 'B' broadcast
    int client_id = -1;
    std::string link;
    std::uint64_t bytes = 0;
};

/// Passive in-memory FIFO. Sending prices the message, charges the ledger,
/// and records an event for causality checks.
class Transport {
public:
    Transport(CostLedger* ledger, std::uint64_t wire_bytes_per_element)
        : ledger_(ledger), wire_bytes_(wire_bytes_per_element) {}

    std::uint64_t send(Message message, int round);
    Message receive();
    bool idle() const { return queue_.empty(); }
    const std::vector<MessageEvent>& events() const { return events_; }

private:
    CostLedger* ledger_;
    std::uint64_t wire_bytes_;
    std::deque<Message> queue_;
    std::vector<MessageEvent> events_;
};

struct ProtocolContext {
    const SplitModel* model = nullptr;
    const TrainingConfig* config = nullptr;
    std::span<const double> weights;  // |D_i| / |D|, ascending client id
};

struct RoundOutcome {
    LossReport loss;
    RoundTrace trace;
};

/// One split fine-tuning round: client forward passes, activation uplink,
/// server forward/backward and update, activation-gradient downlink, client
/// backward and update. Deterministic given the node states.
RoundOutcome run_round(int t, std::vector<ClientNode>& clients, ServerNode& server,
                       Transport& transport, const ProtocolContext& ctx);

/// Client adapter upload, separate weighted aggregation of the A and B
/// matrices, and broadcast; every client adopts the aggregate. Fills the
/// aggregation phase of `trace` when given.
AdapterSet run_aggregation(int t, std::vector<ClientNode>& clients, AggregatorNode& aggregator,
                           Transport& transport, const ProtocolContext& ctx,
                           RoundTrace* trace);

struct RoundRecord {
    int round = 0;
    LossReport loss;
    std::map<std::string, std::uint64_t> cum_bytes;
    std::map<std::string, std::uint64_t> cum_flops;
    double sim_time_s = 0.0;
};

struct CheckpointSnapshot {
    int round = 0;
    std::vector<AdapterSet> client_sets;
    AdapterSet server_set;
};

struct TrainingLog {
    std::vector<RoundRecord> records;
    std::vector<CheckpointSnapshot> checkpoints;  // cadence points plus final state
    std::vector<AdapterSet> client_adapters;      // final, ascending client id
    AdapterSet server_adapters;                   // final (empty for baselines)
    std::vector<MessageEvent> message_events;
    std::uint64_t trainable_client = 0;
    std::uint64_t trainable_server = 0;
};

TrainingLog run_training(const TrainingConfig& config);

/// Pooled-data baseline: one node fine-tunes the unsplit model with the full
/// adapter set, replaying the first client's batch schedule.
TrainingLog run_baseline_cenlora(const TrainingConfig& config);

/// Federated baseline: every client fine-tunes the full model locally; all
/// adapters are averaged every agg_interval rounds over the client-server
/// links.
TrainingLog run_baseline_fedlora(const TrainingConfig& config);

TrainingLog run_mode(const TrainingConfig& config);

}  // namespace splitlora
