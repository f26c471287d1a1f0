#ifndef FEWREC_MANIFEST_HPP
#define FEWREC_MANIFEST_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace fewrec {

struct ManifestEntry {
    std::string image;   // path, relative to the manifest file
    std::string shape;   // path to a binvox file
    std::string class_id;
    int view = 0;
    std::string split;   // "train" | "test"
};

// Declarative dataset listing. Serialized as one JSON object per line; the
// first line is a header object carrying seed, generator version, class roles
// and free-form provenance (generator spec or distillation parameters).
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::map<std::string, std::string> class_roles;  // class_id -> "base" | "novel"
    std::uint64_t seed = 0;
    std::string generator_version = "fewrec-synth-1";
    nlohmann::json provenance = nlohmann::json::object();

    std::vector<std::string> class_ids() const;
    std::vector<std::string> classes_with_role(const std::string& role) const;
    std::vector<ManifestEntry> select(const std::string& class_id, const std::string& split) const;

    void save(const std::string& path) const;
    static DatasetManifest load(const std::string& path);
};

}  // namespace fewrec

#endif
