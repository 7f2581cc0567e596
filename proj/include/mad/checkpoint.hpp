#pragma once

#include <string>

#include "mad/model.hpp"

namespace mad {

// Versioned binary checkpoint: magic + version, the vocab manifest hash, a
// per-tensor header (name, rows, cols), then raw little-endian float64 data.
// Loading rejects a magic/version mismatch, a vocab hash mismatch, or any
// missing or shape-mismatched tensor.
void save_checkpoint(const std::string& path, const Model& m, const Vocab& vocab);
void load_checkpoint(const std::string& path, Model& m, const Vocab& vocab);

}  // namespace mad
