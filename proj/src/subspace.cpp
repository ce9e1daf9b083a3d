#include "dolfin/subspace.hpp"

#include <cmath>
#include <string>

namespace dolfin {

namespace la = linalg;

void ActivationBuffer::offer(const std::vector<double>& column) {
    if (static_cast<int>(column.size()) != dim_) {
        throw DimensionError("ActivationBuffer: column length " +
                             std::to_string(column.size()) + " vs dim " + std::to_string(dim_));
    }
    for (double v : column) {
        if (!std::isfinite(v)) {
            throw ContractViolation("ActivationBuffer: non-finite activation entry");
        }
    }
    ++offered_;
    if (static_cast<int>(columns_.size()) < cap_) {
        columns_.push_back(column);
        return;
    }
    // Vitter's reservoir rule keeps each offered column with probability cap/offered.
    std::uint64_t j = rng_.below(static_cast<std::uint64_t>(offered_));
    if (j < static_cast<std::uint64_t>(cap_)) {
        columns_[static_cast<std::size_t>(j)] = column;
    }
}

DenseMatrix ActivationBuffer::samples() const {
    DenseMatrix h(dim_, static_cast<int>(columns_.size()));
    for (int j = 0; j < h.cols(); ++j)
        for (int i = 0; i < dim_; ++i) h(i, j) = columns_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    return h;
}

void ActivationBuffer::clear() {
    columns_.clear();
    offered_ = 0;
}

SubspaceMemory memory_init(int d) {
    if (d < 1) throw ConfigError("memory_init: ambient dim must be >= 1");
    SubspaceMemory mem;
    mem.ambient_dim = d;
    mem.stored_side = StoredSide::GradientSpace;
    mem.basis = DenseMatrix(d, 0);
    mem.memory_dim = 0;
    return mem;
}

DenseMatrix effective_gradient_basis(const SubspaceMemory& mem) {
    if (mem.stored_side == StoredSide::GradientSpace) return mem.basis;
    return la::complement_basis(mem.basis, mem.ambient_dim);
}

namespace {

constexpr double kSigmaTol = 1e-10;

int ceil_half(int d) { return (d + 1) / 2; }

}  // namespace

DenseMatrix select_adapter_basis(const SubspaceMemory& mem, const ActivationBuffer& buf, int r) {
    if (buf.empty()) throw ContractViolation("select_adapter_basis: empty activation buffer");
    if (r < 1) throw ConfigError("select_adapter_basis: rank must be >= 1");
    const int d = mem.ambient_dim;
    if (r > d - mem.memory_dim) {
        throw CapacityError("select_adapter_basis: rank " + std::to_string(r) +
                            " exceeds free dimensions " + std::to_string(d - mem.memory_dim) +
                            " orthogonal to memory");
    }
    DenseMatrix m = effective_gradient_basis(mem);
    DenseMatrix h_hat = la::project_complement(m, buf.samples());
    la::SvdResult svd = la::thin_svd(h_hat);
    int usable = 0;
    for (double s : svd.singular_values)
        if (s > kSigmaTol) ++usable;
    if (usable < r) {
        throw RankError("select_adapter_basis: only " + std::to_string(usable) +
                        " directions carry energy; use a rank <= " + std::to_string(usable));
    }
    DenseMatrix a(d, r);
    for (int j = 0; j < r; ++j)
        for (int i = 0; i < d; ++i) a(i, j) = svd.u(i, j);
    return a;
}

SubspaceMemory update_memory(const SubspaceMemory& mem, const ActivationBuffer& buf,
                             const MemoryConfig& cfg) {
    if (buf.empty()) throw ContractViolation("update_memory: empty activation buffer");
    if (cfg.energy_threshold <= 0.0 || cfg.energy_threshold >= 1.0) {
        throw ConfigError("update_memory: energy threshold must lie in (0, 1)");
    }
    const int d = mem.ambient_dim;
    DenseMatrix h = buf.samples();
    DenseMatrix m_basis = effective_gradient_basis(mem);

    double total = 0.0;
    for (double v : h.data()) total += v * v;
    if (total == 0.0) return mem;

    double covered = 0.0;
    if (m_basis.cols() > 0) {
        DenseMatrix coeff = la::matmul(m_basis.transpose(), h);
        for (double v : coeff.data()) covered += v * v;
    }

    int k = 0;
    DenseMatrix new_dirs(d, 0);
    if (covered / total < cfg.energy_threshold && mem.memory_dim < d) {
        DenseMatrix h_hat = la::project_complement(m_basis, h);
        la::SvdResult svd = la::thin_svd(h_hat);
        double acc = covered;
        int limit = std::min<int>(static_cast<int>(svd.singular_values.size()),
                                  d - mem.memory_dim);
        while (k < limit && acc / total < cfg.energy_threshold &&
               svd.singular_values[static_cast<std::size_t>(k)] > kSigmaTol) {
            acc += svd.singular_values[static_cast<std::size_t>(k)] *
                   svd.singular_values[static_cast<std::size_t>(k)];
            ++k;
        }
        new_dirs = DenseMatrix(d, k);
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < d; ++i) new_dirs(i, j) = svd.u(i, j);
    }

    if (k == 0) {
        SubspaceMemory out = mem;
        out.saturated = (out.memory_dim == d);
        return out;
    }

    SubspaceMemory out;
    out.ambient_dim = d;
    out.memory_dim = mem.memory_dim + k;
    out.saturated = (out.memory_dim == d);

    if (out.memory_dim <= ceil_half(d)) {
        // Gradient side stays the smaller one: append the new directions.
        DenseMatrix grown(d, out.memory_dim);
        for (int j = 0; j < m_basis.cols(); ++j)
            for (int i = 0; i < d; ++i) grown(i, j) = m_basis(i, j);
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < d; ++i) grown(i, m_basis.cols() + j) = new_dirs(i, j);
        out.stored_side = StoredSide::GradientSpace;
        out.basis = std::move(grown);
        return out;
    }

    out.stored_side = StoredSide::Complement;
    int comp_cols = d - out.memory_dim;
    if (comp_cols == 0) {
        out.basis = DenseMatrix(d, 0);
        return out;
    }
    if (mem.stored_side == StoredSide::Complement) {
        // Remove the new directions from the stored complement and
        // re-orthonormalize what is left.
        DenseMatrix reduced = la::project_complement(new_dirs, mem.basis);
        la::SvdResult svd = la::thin_svd(reduced);
        DenseMatrix comp(d, comp_cols);
        for (int j = 0; j < comp_cols; ++j)
            for (int i = 0; i < d; ++i) comp(i, j) = svd.u(i, j);
        out.basis = std::move(comp);
    } else {
        DenseMatrix grown(d, out.memory_dim);
        for (int j = 0; j < m_basis.cols(); ++j)
            for (int i = 0; i < d; ++i) grown(i, j) = m_basis(i, j);
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < d; ++i) grown(i, m_basis.cols() + j) = new_dirs(i, j);
        out.basis = la::complement_basis(grown, d);
    }
    return out;
}

}  // namespace dolfin
