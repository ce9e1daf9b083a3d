#include "dolfin/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dolfin::linalg {

namespace {

void require_finite(const DenseMatrix& m, const char* who) {
    if (!m.all_finite()) {
        throw ContractViolation(std::string(who) + ": non-finite entries in input");
    }
}

// Flip each column of u so its largest-magnitude entry (lowest index on ties)
// is positive; v, when present, is flipped in tandem.
void fix_column_signs(DenseMatrix& u, DenseMatrix* v) {
    for (int j = 0; j < u.cols(); ++j) {
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < u.rows(); ++i) {
            double a = std::fabs(u(i, j));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) {
            for (int i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
            if (v) {
                for (int i = 0; i < v->rows(); ++i) (*v)(i, j) = -(*v)(i, j);
            }
        }
    }
}

constexpr double kRankTol = 1e-10;

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: shape mismatch " + a.shape_string() + " * " +
                             b.shape_string());
    }
    require_finite(a, "matmul");
    require_finite(b, "matmul");
    DenseMatrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

DenseMatrix qr_orthonormalize(const DenseMatrix& m) {
    if (m.rows() < m.cols()) {
        throw DimensionError("qr_orthonormalize: need rows >= cols, got " + m.shape_string());
    }
    require_finite(m, "qr_orthonormalize");
    const int rows = m.rows();
    const int cols = m.cols();
    DenseMatrix r = m;
    // Householder vectors, stored column by column.
    std::vector<std::vector<double>> reflectors;
    reflectors.reserve(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) {
        double norm = 0.0;
        for (int i = j; i < rows; ++i) norm += r(i, j) * r(i, j);
        norm = std::sqrt(norm);
        if (norm < kRankTol) {
            throw RankError("qr_orthonormalize: rank deficient at column " + std::to_string(j), j);
        }
        double alpha = (r(j, j) > 0.0) ? -norm : norm;
        std::vector<double> v(static_cast<std::size_t>(rows - j));
        v[0] = r(j, j) - alpha;
        for (int i = j + 1; i < rows; ++i) v[static_cast<std::size_t>(i - j)] = r(i, j);
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 > 0.0) {
            for (int k = j; k < cols; ++k) {
                double dot = 0.0;
                for (int i = j; i < rows; ++i) dot += v[static_cast<std::size_t>(i - j)] * r(i, k);
                double f = 2.0 * dot / vnorm2;
                for (int i = j; i < rows; ++i) r(i, k) -= f * v[static_cast<std::size_t>(i - j)];
            }
        }
        reflectors.push_back(std::move(v));
    }
    // Accumulate thin Q by applying the reflectors to the first cols columns of I.
    DenseMatrix q(rows, cols);
    for (int j = 0; j < cols; ++j) q(j, j) = 1.0;
    for (int j = cols - 1; j >= 0; --j) {
        const auto& v = reflectors[static_cast<std::size_t>(j)];
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 == 0.0) continue;
        for (int k = 0; k < cols; ++k) {
            double dot = 0.0;
            for (int i = j; i < rows; ++i) dot += v[static_cast<std::size_t>(i - j)] * q(i, k);
            double f = 2.0 * dot / vnorm2;
            for (int i = j; i < rows; ++i) q(i, k) -= f * v[static_cast<std::size_t>(i - j)];
        }
    }
    fix_column_signs(q, nullptr);
    return q;
}

namespace {

// One-sided Jacobi on a (rows >= cols assumed by the caller).
SvdResult jacobi_svd_tall(const DenseMatrix& a) {
    const int rows = a.rows();
    const int cols = a.cols();
    DenseMatrix u = a;
    DenseMatrix v = DenseMatrix::identity(cols);
    const int max_sweeps = 100 * std::min(rows, cols);
    const double tol = 1e-14;
    const double cutoff = std::numeric_limits<double>::epsilon() * a.frobenius_norm();
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < cols - 1; ++p) {
            for (int q = p + 1; q < cols; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < rows; ++i) {
                    alpha += u(i, p) * u(i, p);
                    beta += u(i, q) * u(i, q);
                    gamma += u(i, p) * u(i, q);
                }
                // Columns whose norm fell below working precision of the
                // whole matrix carry numerically-zero singular values;
                // rotating them against real columns only trades rounding
                // noise back and forth and can cycle forever.
                if (std::sqrt(alpha) <= cutoff || std::sqrt(beta) <= cutoff || gamma == 0.0)
                    continue;
                // Separate square roots: alpha * beta can underflow even
                // when both norms are representable.
                if (std::fabs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;
                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = std::copysign(1.0, zeta) /
                           (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (int i = 0; i < rows; ++i) {
                    double up = u(i, p), uq = u(i, q);
                    u(i, p) = c * up - s * uq;
                    u(i, q) = s * up + c * uq;
                }
                for (int i = 0; i < cols; ++i) {
                    double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
    if (sweep >= max_sweeps) {
        throw NumericalError("thin_svd: Jacobi sweeps did not converge after " +
                                 std::to_string(max_sweeps) + " sweeps",
                             max_sweeps);
    }
    // Column norms are the singular values; sort descending (stable).
    std::vector<double> sigma(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < rows; ++i) s += u(i, j) * u(i, j);
        sigma[static_cast<std::size_t>(j)] = std::sqrt(s);
    }
    std::vector<int> order(static_cast<std::size_t>(cols));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return sigma[static_cast<std::size_t>(x)] > sigma[static_cast<std::size_t>(y)];
    });
    DenseMatrix us(rows, cols);
    DenseMatrix vs(cols, cols);
    std::vector<double> ss(static_cast<std::size_t>(cols));
    double smax = sigma.empty() ? 0.0 : sigma[static_cast<std::size_t>(order[0])];
    for (int j = 0; j < cols; ++j) {
        int src = order[static_cast<std::size_t>(j)];
        double s = sigma[static_cast<std::size_t>(src)];
        ss[static_cast<std::size_t>(j)] = s;
        if (s > std::max(1e-300, smax * 1e-15)) {
            for (int i = 0; i < rows; ++i) us(i, j) = u(i, src) / s;
        }
        for (int i = 0; i < cols; ++i) vs(i, j) = v(i, src);
    }
    // Zero singular values leave empty U columns; fill them with orthonormal
    // directions so U^T U = I still holds. Deterministic: project coordinate
    // vectors against the accumulated columns.
    for (int j = 0; j < cols; ++j) {
        double n = 0.0;
        for (int i = 0; i < rows; ++i) n += us(i, j) * us(i, j);
        if (n > 0.5) continue;
        for (int e = 0; e < rows; ++e) {
            std::vector<double> cand(static_cast<std::size_t>(rows), 0.0);
            cand[static_cast<std::size_t>(e)] = 1.0;
            for (int k = 0; k < cols; ++k) {
                if (k == j) continue;
                double dot = 0.0;
                for (int i = 0; i < rows; ++i) dot += us(i, k) * cand[static_cast<std::size_t>(i)];
                for (int i = 0; i < rows; ++i) cand[static_cast<std::size_t>(i)] -= dot * us(i, k);
            }
            double cn = 0.0;
            for (double x : cand) cn += x * x;
            cn = std::sqrt(cn);
            if (cn > 1e-6) {
                for (int i = 0; i < rows; ++i) us(i, j) = cand[static_cast<std::size_t>(i)] / cn;
                break;
            }
        }
    }
    fix_column_signs(us, &vs);
    return SvdResult{std::move(us), std::move(ss), std::move(vs)};
}

}  // namespace

SvdResult thin_svd(const DenseMatrix& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DimensionError("thin_svd: empty input " + m.shape_string());
    }
    require_finite(m, "thin_svd");
    if (m.rows() >= m.cols()) {
        return jacobi_svd_tall(m);
    }
    SvdResult t = jacobi_svd_tall(m.transpose());
    SvdResult r{std::move(t.v), std::move(t.singular_values), std::move(t.u)};
    fix_column_signs(r.u, &r.v);
    return r;
}

DenseMatrix project_complement(const DenseMatrix& basis, const DenseMatrix& h) {
    require_finite(h, "project_complement");
    if (basis.cols() == 0) return h;
    if (basis.rows() != h.rows()) {
        throw DimensionError("project_complement: basis " + basis.shape_string() +
                             " incompatible with h " + h.shape_string());
    }
    if (orthonormality_defect(basis) > 1e-8) {
        throw ContractViolation("project_complement: basis columns are not orthonormal");
    }
    DenseMatrix coeff = matmul(basis.transpose(), h);
    return h - matmul(basis, coeff);
}

DenseMatrix complement_basis(const DenseMatrix& basis, int ambient_dim) {
    int m = basis.cols();
    if (m == 0) return DenseMatrix::identity(ambient_dim);
    if (basis.rows() != ambient_dim) {
        throw DimensionError("complement_basis: basis rows " + basis.shape_string() +
                             " vs ambient dim " + std::to_string(ambient_dim));
    }
    if (m >= ambient_dim) return DenseMatrix(ambient_dim, 0);
    // SVD of the projector I - B B^T: the top (d - m) left singular vectors
    // span the complement.
    DenseMatrix proj = DenseMatrix::identity(ambient_dim) - matmul(basis, basis.transpose());
    SvdResult svd = thin_svd(proj);
    DenseMatrix out(ambient_dim, ambient_dim - m);
    for (int j = 0; j < ambient_dim - m; ++j)
        for (int i = 0; i < ambient_dim; ++i) out(i, j) = svd.u(i, j);
    return out;
}

double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("frobenius_dot: shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

double orthonormality_defect(const DenseMatrix& a) {
    DenseMatrix g = matmul(a.transpose(), a);
    for (int i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
    return g.frobenius_norm();
}

double max_principal_angle(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() == 0 && b.cols() == 0) return 0.0;
    SvdResult svd = thin_svd(matmul(a.transpose(), b));
    double smin = 1.0;
    for (double s : svd.singular_values) smin = std::min(smin, s);
    smin = std::clamp(smin, -1.0, 1.0);
    return std::acos(smin);
}

}  // namespace dolfin::linalg
