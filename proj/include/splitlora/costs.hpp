#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitlora/messages.hpp"
#include "splitlora/model.hpp"

namespace splitlora {

/// Peak compute per entity, FLOP/s.
struct ComputeSpec {
    double client_flops_per_sec = 35.6e12;
    double server_flops_per_sec = 284.8e12;
    double aggregator_flops_per_sec = 35.6e12;
};

/// Fixed-rate links, bit/s.
struct LinkSpec {
    double client_server_bits_per_sec = 600e6;
    double client_aggregator_bits_per_sec = 300e6;
};

enum class PassDirection { forward, backward };

/// Dense-product cost model: forward costs 2 * rows * d_in * d_out per
/// dense matrix, backward twice that (data-grad plus weight-grad products).
/// Embedding lookups, attention score/value products, nonlinearities and
/// rank-r adapter terms are excluded from the model.
std::uint64_t flops_of_pass(std::span<const LayerSpec> layers, std::size_t batch_rows,
                            PassDirection direction);

inline constexpr std::uint64_t kMessageHeaderBytes = 64;

/// Wire size: element_count * wire_bytes_per_element + 64 header bytes.
/// Elements are matrix entries plus labels (labels count as one element).
std::uint64_t payload_bytes(const Message& message, std::uint64_t wire_bytes_per_element = 4);

/// Per-phase costs of one synchronous round; client vectors run in
/// ascending client order and must all have the same length.
struct RoundTrace {
    std::vector<std::uint64_t> client_forward_flops;   // a1
    std::vector<std::uint64_t> uplink_bytes;           // a2
    std::uint64_t server_flops = 0;                    // a3
    std::vector<std::uint64_t> downlink_bytes;         // a4
    std::vector<std::uint64_t> client_backward_flops;  // a5

    struct Aggregation {
        std::vector<std::uint64_t> upload_bytes;     // b1
        std::uint64_t aggregator_flops = 0;          // b2
        std::vector<std::uint64_t> broadcast_bytes;  // b3
    };
    std::optional<Aggregation> aggregation;
};

/// Synchronous barrier latency:
///   max_i(a1_i + a2_i) + a3 + max_i(a4_i) + max_i(a5_i)
/// plus, on aggregation rounds, max_i(b1_i) + b2 + max_i(b3_i),
/// where each term converts as flops / flops_per_sec and bytes * 8 /
/// bits_per_sec. a2/a4 use the client-server link, b1/b3 the
/// client-aggregator link.
double round_latency(const RoundTrace& trace, const ComputeSpec& compute, const LinkSpec& links);

/// Cumulative counters owned by the orchestrator. All counters are
/// monotone; simulated time only advances through advance_time.
struct CostLedger {
    std::map<std::string, std::uint64_t> flops;  // entity -> cumulative FLOPs
    std::map<std::string, std::uint64_t> bytes;  // link -> cumulative bytes
    double sim_time_s = 0.0;

    void add_flops(const std::string& entity, std::uint64_t n) { flops[entity] += n; }
    void add_bytes(const std::string& link, std::uint64_t n) { bytes[link] += n; }
    void advance_time(double seconds);
};

}  // namespace splitlora
