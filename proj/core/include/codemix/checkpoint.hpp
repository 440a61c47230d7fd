#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "codemix/error.hpp"
#include "codemix/tensor.hpp"

namespace codemix {

class CheckpointError : public Error {
public:
    using Error::Error;
};

class CheckpointIncompatible : public Error {
public:
    explicit CheckpointIncompatible(const std::string& detail)
        : Error("incompatible checkpoint: " + detail) {}
};

// Named parameter set plus the owning model's kind and config. Values are
// serialized as shortest-round-trip decimal strings, so save/load is
// bit-exact for every finite double.
struct Checkpoint {
    std::string model_kind;  // "transformer" or "blstm"
    std::string config_json; // model config as a JSON object
    std::vector<std::pair<std::string, Tensor>> params;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

// FNV-1a over names, shapes, and raw value bits, order-independent (entries
// are hashed in sorted-name order). Used to verify two-step loads.
std::uint64_t parameter_digest(const std::vector<std::pair<std::string, Tensor>>& params);

} // namespace codemix
