#pragma once

#include <string>

#include "randsac/model.hpp"

namespace randsac {

// Versioned binary container: magic, format version, config record, then
// named float32 parameter tensors with shape headers. Writes go to a
// temporary file followed by an atomic rename; loads reject any magic,
// version, or config mismatch.
void save_checkpoint(ModelState<float>& state, const std::string& path);
ModelState<float> load_checkpoint(const std::string& path);

// Order-independent digest of all parameter bytes (probe freeze assertions).
std::uint64_t parameter_checksum(ModelState<float>& state);

}  // namespace randsac
