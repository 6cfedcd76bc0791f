#include "dcp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dcp {

static_assert(std::endian::native == std::endian::little,
              "DCPG1 serialization assumes a little-endian host");

static const char kMagic[6] = {'D', 'C', 'P', 'G', '1', '\n'};

void save_container(const std::string& path, const nlohmann::json& header,
                    const std::map<std::string, Tensor>& tensors) {
    nlohmann::json h = header;
    nlohmann::json index = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset},
                         {"len", t.numel()}});
        offset += t.numel();
    }
    h["tensors"] = index;
    std::string hs = h.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors) {
        auto d = t.data();
        f.write(reinterpret_cast<const char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!f) throw CheckpointError("write failed: " + path);
}

Checkpoint load_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open: " + path);
    char magic[6];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("bad magic in " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f) throw CheckpointError("truncated header length in " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw CheckpointError("truncated header in " + path);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("invalid header JSON in " + path + ": " + e.what());
    }
    if (!h.contains("tensors") || !h["tensors"].is_array())
        throw CheckpointError("header missing tensor index in " + path);

    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(double) != 0)
        throw CheckpointError("truncated blob in " + path + " (not a whole number of floats)");
    std::vector<double> floats(raw.size() / sizeof(double));
    std::memcpy(floats.data(), raw.data(), raw.size());

    Checkpoint out;
    for (const auto& e : h["tensors"]) {
        std::string name = e.at("name").get<std::string>();
        Shape shape = e.at("shape").get<Shape>();
        int64_t offset = e.at("offset").get<int64_t>();
        int64_t len = e.at("len").get<int64_t>();
        if (len != numel(shape))
            throw CheckpointError("header mismatch for tensor '" + name + "': shape " +
                                  shape_str(shape) + " vs len " + std::to_string(len));
        if (offset < 0 || offset + len > static_cast<int64_t>(floats.size()))
            throw CheckpointError("truncated blob in " + path + " for tensor '" + name + "'");
        std::vector<double> d(floats.begin() + offset, floats.begin() + offset + len);
        out.tensors.emplace(name, Tensor::from(shape, std::move(d)));
    }
    h.erase("tensors");
    out.header = std::move(h);
    return out;
}

}  // namespace dcp
