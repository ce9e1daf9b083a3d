#pragma once

#include <cstdint>
#include <vector>

#include "dolfin/linalg.hpp"
#include "dolfin/matrix.hpp"
#include "dolfin/rng.hpp"

namespace dolfin {

enum class Projection { Key = 0, Value = 1 };

inline const char* projection_name(Projection p) {
    return p == Projection::Key ? "key" : "value";
}

enum class StoredSide : std::uint8_t { GradientSpace = 0, Complement = 1 };

// DualGPM memory for one (layer, projection) pair: an orthonormal basis of
// the past-gradient subspace, stored as either that side or its orthogonal
// complement, whichever is smaller.
struct SubspaceMemory {
    int ambient_dim = 0;
    StoredSide stored_side = StoredSide::GradientSpace;
    DenseMatrix basis;   // ambient_dim x stored column count, orthonormal
    int memory_dim = 0;  // dimension of the gradient-space side
    bool saturated = false;
};

struct MemoryConfig {
    double energy_threshold = 0.95;  // in (0, 1)
    int activation_cap = 256;
    int rank = 2;
};

// Bounded reservoir of token-embedding columns captured at one projection.
class ActivationBuffer {
public:
    ActivationBuffer() = default;
    ActivationBuffer(int layer_id, Projection projection, int dim, int cap, std::uint64_t seed)
        : layer_id_(layer_id), projection_(projection), dim_(dim), cap_(cap), rng_(seed) {}

    int layer_id() const { return layer_id_; }
    Projection projection() const { return projection_; }
    int size() const { return static_cast<int>(columns_.size()); }
    bool empty() const { return columns_.empty(); }
    long long offered() const { return offered_; }

    // Reservoir-sample one column.
    void offer(const std::vector<double>& column);

    // Collected columns as a dim x n matrix.
    DenseMatrix samples() const;

    void clear();
    void reseed(std::uint64_t seed) { rng_ = SplitMix64(seed); }

private:
    int layer_id_ = 0;
    Projection projection_ = Projection::Key;
    int dim_ = 0;
    int cap_ = 0;
    std::vector<std::vector<double>> columns_;
    long long offered_ = 0;
    SplitMix64 rng_{0};
};

// Empty memory for a d-dimensional ambient space.
SubspaceMemory memory_init(int d);

// Materializes the gradient-space basis regardless of which side is stored.
DenseMatrix effective_gradient_basis(const SubspaceMemory& mem);

// Top-r left singular vectors of (I - M M^T) H: the interference-free adapter
// basis for the next task.
DenseMatrix select_adapter_basis(const SubspaceMemory& mem, const ActivationBuffer& buf, int r);

// Grows the gradient-space side until the covered-energy ratio of H reaches
// the threshold; switches stored representation to keep the smaller side.
SubspaceMemory update_memory(const SubspaceMemory& mem, const ActivationBuffer& buf,
                             const MemoryConfig& cfg);

}  // namespace dolfin
