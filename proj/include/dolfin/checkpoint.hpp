#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "dolfin/model.hpp"
#include "dolfin/subspace.hpp"

namespace dolfin {

struct Checkpoint {
    ModelState model;
    std::vector<std::array<SubspaceMemory, 2>> memories;  // [layer][projection]
};

// Binary format: magic "DOLF", one version byte, tensor count, then
// length-prefixed named tensors of little-endian 64-bit floats. Round trips
// are bit-exact. Malformed input raises FormatError with the byte offset.
void save_checkpoint(const ModelState& model,
                     const std::vector<std::array<SubspaceMemory, 2>>& memories,
                     const std::string& path);

// The frozen backbone is not stored; the caller supplies it and its checksum
// is verified against the one recorded at save time.
Checkpoint load_checkpoint(const std::string& path, std::shared_ptr<const Backbone> backbone);

// In-memory variants used by the file ones (and handy for tests).
std::string encode_checkpoint(const ModelState& model,
                              const std::vector<std::array<SubspaceMemory, 2>>& memories);
Checkpoint decode_checkpoint(const std::string& bytes,
                             std::shared_ptr<const Backbone> backbone);

}  // namespace dolfin
