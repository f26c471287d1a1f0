#ifndef FEWREC_CHECKPOINT_HPP
#define FEWREC_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fewrec/params.hpp"

namespace fewrec {

// Single-archive checkpoint: magic, a JSON header (caller metadata plus the
// contractual tensor name/shape directory), then raw little-endian doubles in
// directory order. Deterministic bytes for identical contents, so freeze
// contracts can be checked by byte comparison.
std::vector<std::uint8_t> serialize_checkpoint(const ParamStore& params,
                                               const std::string& meta_json);

// Rebuilds the store (names, shapes, trainable flags, values) and returns the
// metadata JSON string.
std::string deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, ParamStore& params);

void save_checkpoint(const ParamStore& params, const std::string& meta_json,
                     const std::string& path);
std::string load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace fewrec

#endif
