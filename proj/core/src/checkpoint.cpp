#include "codemix/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace codemix {

namespace {

using Json = nlohmann::ordered_json;

std::string double_to_string(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw CheckpointError("failed to format value");
    return std::string(buf, ptr);
}

double string_to_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw CheckpointError("bad value literal '" + s + "'");
    }
    return v;
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    Json root;
    root["schema_version"] = 1;
    root["model_kind"] = ckpt.model_kind;
    root["config"] = ckpt.config_json.empty() ? Json::object() : Json::parse(ckpt.config_json);
    Json params = Json::array();
    for (const auto& [name, tensor] : ckpt.params) {
        Json entry;
        entry["name"] = name;
        entry["shape"] = tensor.shape();
        Json values = Json::array();
        for (double v : tensor.values()) values.push_back(double_to_string(v));
        entry["values"] = std::move(values);
        params.push_back(std::move(entry));
    }
    root["params"] = std::move(params);
    return root.dump(1);
}

Checkpoint parse_checkpoint(const std::string& text) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const Json::exception& e) {
        throw CheckpointError(std::string("not valid JSON: ") + e.what());
    }
    try {
        if (root.value("schema_version", 0) != 1) {
            throw CheckpointError("unsupported schema_version");
        }
        Checkpoint ckpt;
        ckpt.model_kind = root.at("model_kind").get<std::string>();
        ckpt.config_json = root.at("config").dump();
        for (const auto& entry : root.at("params")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<int>>();
            std::vector<double> values;
            values.reserve(entry.at("values").size());
            for (const auto& v : entry.at("values")) {
                values.push_back(string_to_double(v.get<std::string>()));
            }
            try {
                ckpt.params.emplace_back(name, Tensor(shape, std::move(values)));
            } catch (const Error& e) {
                throw CheckpointError("parameter '" + name + "': " + e.what());
            }
        }
        return ckpt;
    } catch (const Json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
    out << serialize_checkpoint(ckpt) << "\n";
    if (!out.flush()) throw CheckpointError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_checkpoint(buf.str());
}

std::uint64_t parameter_digest(const std::vector<std::pair<std::string, Tensor>>& params) {
    std::vector<const std::pair<std::string, Tensor>*> sorted;
    sorted.reserve(params.size());
    for (const auto& p : params) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto* a, const auto* b) { return a->first < b->first; });

    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    auto mix_u64 = [&mix](std::uint64_t v) {
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        mix(bytes, 8);
    };

    for (const auto* p : sorted) {
        mix(p->first.data(), p->first.size());
        mix_u64(0); // name terminator
        mix_u64(static_cast<std::uint64_t>(p->second.ndim()));
        for (int e : p->second.shape()) mix_u64(static_cast<std::uint64_t>(e));
        for (double v : p->second.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            mix_u64(bits);
        }
    }
    return h;
}

} // namespace codemix
