#include "fewrec/manifest.hpp"

#include <fstream>

#include "fewrec/errors.hpp"

namespace fewrec {

std::vector<std::string> DatasetManifest::class_ids() const {
    std::vector<std::string> out;
    for (const auto& [cls, _] : class_roles) out.push_back(cls);
    return out;
}

std::vector<std::string> DatasetManifest::classes_with_role(const std::string& role) const {
    std::vector<std::string> out;
    for (const auto& [cls, r] : class_roles) {
        if (r == role) out.push_back(cls);
    }
    return out;
}

std::vector<ManifestEntry> DatasetManifest::select(const std::string& class_id,
                                                   const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (e.class_id == class_id && (split.empty() || e.split == split)) out.push_back(e);
    }
    return out;
}

void DatasetManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("manifest: cannot write " + path);
    nlohmann::json header = {{"header",
                              {{"seed", seed},
                               {"generator_version", generator_version},
                               {"class_roles", class_roles},
                               {"provenance", provenance}}}};
    out << header.dump() << "\n";
    for (const auto& e : entries) {
        nlohmann::json line = {{"image", e.image},
                               {"shape", e.shape},
                               {"class", e.class_id},
                               {"view", e.view},
                               {"split", e.split}};
        out << line.dump() << "\n";
    }
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest: cannot open " + path);
    DatasetManifest m;
    std::string line;
    bool saw_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest: " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!saw_header) {
            if (!j.contains("header")) {
                throw DataError("manifest: " + path + " missing header line");
            }
            const auto& h = j.at("header");
            m.seed = h.at("seed").get<std::uint64_t>();
            m.generator_version = h.at("generator_version").get<std::string>();
            m.class_roles = h.at("class_roles").get<std::map<std::string, std::string>>();
            m.provenance = h.value("provenance", nlohmann::json::object());
            saw_header = true;
            continue;
        }
        ManifestEntry e;
        e.image = j.at("image").get<std::string>();
        e.shape = j.at("shape").get<std::string>();
        e.class_id = j.at("class").get<std::string>();
        e.view = j.at("view").get<int>();
        e.split = j.at("split").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    if (!saw_header) throw DataError("manifest: " + path + " is empty");
    return m;
}

}  // namespace fewrec
