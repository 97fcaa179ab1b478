#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "splitlora/lora.hpp"
#include "splitlora/matrix.hpp"

namespace splitlora {

// Protocol payloads. Each message carries the simulated link it travels on.

struct ActivationsMsg {
    int client_id = 0;
    int round = 0;
    Matrix s;                           // cut-layer activations
    std::vector<std::uint32_t> labels;  // one per activation row
};

struct ActivationGradsMsg {
    int client_id = 0;
    int round = 0;
    Matrix ds;
};

struct AdapterUploadMsg {
    int client_id = 0;
    int round = 0;
    AdapterSet set;
};

struct AdapterBroadcastMsg {
    int round = 0;
    AdapterSet set;
};

using MessagePayload =
    std::variant<ActivationsMsg, ActivationGradsMsg, AdapterUploadMsg, AdapterBroadcastMsg>;

struct Message {
    std::string link_id;
    MessagePayload payload;
};

inline std::string client_server_link(int client_id) {
    return "client" + std::to_string(client_id) + "<->server";
}

inline std::string client_aggregator_link(int client_id) {
    return "client" + std::to_string(client_id) + "<->aggregator";
}

}  // namespace splitlora
