#include "fewrec/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fewrec {

namespace {
constexpr char kMagic[8] = {'F', 'E', 'W', 'R', 'E', 'C', '0', '1'};
}

std::vector<std::uint8_t> serialize_checkpoint(const ParamStore& params,
                                               const std::string& meta_json) {
    nlohmann::json header;
    header["meta"] = meta_json.empty() ? nlohmann::json(nullptr)
                                       : nlohmann::json::parse(meta_json);
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, p] : params.all()) {
        dir.push_back({{"name", name}, {"shape", p.value.shape()}, {"trainable", p.trainable}});
    }
    header["tensors"] = dir;
    std::string header_str = header.dump();

    std::vector<std::uint8_t> out(sizeof(kMagic) + 8);
    std::memcpy(out.data(), kMagic, sizeof(kMagic));
    std::uint64_t hlen = header_str.size();
    std::memcpy(out.data() + sizeof(kMagic), &hlen, 8);
    out.insert(out.end(), header_str.begin(), header_str.end());
    for (const auto& [name, p] : params.all()) {
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.value.data());
        out.insert(out.end(), bytes, bytes + p.value.numel() * sizeof(double));
    }
    return out;
}

std::string deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, ParamStore& params) {
    if (bytes.size() < sizeof(kMagic) + 8 ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError("checkpoint: bad magic");
    }
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + sizeof(kMagic), 8);
    std::size_t pos = sizeof(kMagic) + 8;
    if (pos + hlen > bytes.size()) {
        throw DataError("checkpoint: truncated header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<long>(pos),
                                       bytes.begin() + static_cast<long>(pos + hlen));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed header: ") + e.what());
    }
    pos += hlen;

    for (const auto& entry : header.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        bool trainable = entry.at("trainable").get<bool>();
        std::size_t n = Tensor::numel_of(shape);
        if (pos + n * sizeof(double) > bytes.size()) {
            throw DataError("checkpoint: truncated tensor data for '" + name + "'");
        }
        Param* p;
        if (params.contains(name)) {
            p = &params.get(name);
            if (p->value.shape() != shape) {
                throw DataError("checkpoint: shape mismatch for '" + name + "'");
            }
        } else {
            p = &params.create(name, shape, trainable);
        }
        p->trainable = trainable;
        std::memcpy(p->value.data(), bytes.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
    }
    if (pos != bytes.size()) {
        throw DataError("checkpoint: trailing bytes");
    }
    const auto& meta = header.at("meta");
    return meta.is_null() ? std::string() : meta.dump();
}

void save_checkpoint(const ParamStore& params, const std::string& meta_json,
                     const std::string& path) {
    auto bytes = serialize_checkpoint(params, meta_json);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, params);
}

}  // namespace fewrec
