#include "splitlora/costs.hpp"

#include <algorithm>

#include "splitlora/error.hpp"

namespace splitlora {

std::uint64_t flops_of_pass(std::span<const LayerSpec> layers, std::size_t batch_rows,
                            PassDirection direction) {
    std::uint64_t forward = 0;
    const auto rows = static_cast<std::uint64_t>(batch_rows);
    for (const LayerSpec& spec : layers) {
        const auto din = static_cast<std::uint64_t>(spec.input_dim);
        const auto dout = static_cast<std::uint64_t>(spec.output_dim);
        const auto hidden = static_cast<std::uint64_t>(spec.hidden_dim);
        switch (spec.kind) {
            case LayerKind::embedding:
                break;  // table lookup, no dense product
            case LayerKind::dense_tanh:
            case LayerKind::output_head:
                forward += 2 * rows * din * dout;
                break;
            case LayerKind::transformer_block:
                forward += 2 * rows * (4 * din * din + 2 * din * hidden);
                break;
        }
    }
    return direction == PassDirection::forward ? forward : 2 * forward;
}

std::uint64_t payload_bytes(const Message& message, std::uint64_t wire_bytes_per_element) {
    std::uint64_t elements = 0;
    if (const auto* act = std::get_if<ActivationsMsg>(&message.payload)) {
        elements = static_cast<std::uint64_t>(act->s.size()) +
                   static_cast<std::uint64_t>(act->labels.size());
    } else if (const auto* grads = std::get_if<ActivationGradsMsg>(&message.payload)) {
        elements = static_cast<std::uint64_t>(grads->ds.size());
    } else if (const auto* up = std::get_if<AdapterUploadMsg>(&message.payload)) {
        elements = count_trainable(up->set);
    } else if (const auto* down = std::get_if<AdapterBroadcastMsg>(&message.payload)) {
        elements = count_trainable(down->set);
    }
    return elements * wire_bytes_per_element + kMessageHeaderBytes;
}

namespace {
double compute_term(std::uint64_t flops, double flops_per_sec) {
    return static_cast<double>(flops) / flops_per_sec;
}

double link_term(std::uint64_t bytes, double bits_per_sec) {
    return static_cast<double>(bytes) * 8.0 / bits_per_sec;
}
}  // namespace

double round_latency(const RoundTrace& trace, const ComputeSpec& compute, const LinkSpec& links) {
    const std::size_t clients = trace.client_forward_flops.size();
    if (clients == 0 || trace.uplink_bytes.size() != clients ||
        trace.downlink_bytes.size() != clients || trace.client_backward_flops.size() != clients) {
        throw AccountingError("round_latency: trace is missing a client phase");
    }
    double client_up = 0.0;
    for (std::size_t i = 0; i < clients; ++i) {
        client_up = std::max(client_up,
                             compute_term(trace.client_forward_flops[i],
                                          compute.client_flops_per_sec) +
                                 link_term(trace.uplink_bytes[i], links.client_server_bits_per_sec));
    }
    double down = 0.0;
    double client_back = 0.0;
    for (std::size_t i = 0; i < clients; ++i) {
        down = std::max(down, link_term(trace.downlink_bytes[i], links.client_server_bits_per_sec));
        client_back = std::max(client_back, compute_term(trace.client_backward_flops[i],
                                                         compute.client_flops_per_sec));
    }
    double latency = client_up + compute_term(trace.server_flops, compute.server_flops_per_sec) +
                     down + client_back;
    if (trace.aggregation) {
        const auto& agg = *trace.aggregation;
        if (agg.upload_bytes.size() != clients || agg.broadcast_bytes.size() != clients) {
            throw AccountingError("round_latency: aggregation trace is missing a client phase");
        }
        double upload = 0.0;
        double broadcast = 0.0;
        for (std::size_t i = 0; i < clients; ++i) {
            upload = std::max(upload,
                              link_term(agg.upload_bytes[i], links.client_aggregator_bits_per_sec));
            broadcast = std::max(broadcast, link_term(agg.broadcast_bytes[i],
                                                      links.client_aggregator_bits_per_sec));
        }
        latency += upload + compute_term(agg.aggregator_flops, compute.aggregator_flops_per_sec) +
                   broadcast;
    }
    return latency;
}

void CostLedger::advance_time(double seconds) {
    if (!(seconds >= 0.0)) {
        throw AccountingError("CostLedger::advance_time: negative duration");
    }
    sim_time_s += seconds;
}

}  // namespace splitlora
