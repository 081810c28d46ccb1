// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <fstream>

#include "fontcraft/nn.hpp"

namespace fontcraft::nn {

using nlohmann::json;

void save_checkpoint(const std::string& path, const ParamStore<float>& store, const json& meta) {
    json tensors = json::array();
    uint64_t offset = 0;
    for (const auto& e : store.entries) {
        tensors.push_back({{"name", e.name},
                           {"shape", e.value.shape},
                           {"offset", offset},
                           {"trainable", e.trainable}});
        offset += uint64_t(e.value.numel()) * 4;
    }
    const std::string header = json({{"meta", meta}, {"tensors", tensors}}).dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for write: " + path);
    const uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(header.data(), std::streamsize(header.size()));
    for (const auto& e : store.entries)
        f.write(reinterpret_cast<const char*>(e.value.data()),
                std::streamsize(e.value.numel() * 4));
    if (!f) throw IoError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for read: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    if (!f || hlen == 0 || hlen > (64u << 20)) throw IoError("corrupt checkpoint header: " + path);
    std::string header(hlen, '\0');
    f.read(header.data(), std::streamsize(hlen));
    json doc;
    try {
        doc = json::parse(header);
    } catch (const json::exception& e) {
        throw IoError("corrupt checkpoint header: " + std::string(e.what()));
    }
    if (!doc.contains("tensors") || !doc["tensors"].is_array())
        throw IoError("corrupt checkpoint header: missing tensors");

    LoadedCheckpoint out;
    out.meta = doc.value("meta", json::object());
    for (const auto& t : doc["tensors"]) {
        const std::string name = t.at("name").get<std::string>();
        const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
        const bool trainable = t.value("trainable", true);
        TensorF v(shape);
        f.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.numel() * 4));
        if (!f) throw IoError("truncated checkpoint data: " + path);
        out.store.add(name, std::move(v), trainable);
    }
    return out;
}

}  // namespace fontcraft::nn
