#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dolfin/errors.hpp"

namespace dolfin {

// Row-major dense real matrix, the universal numeric carrier.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) {
            throw DimensionError("DenseMatrix: negative dimensions");
        }
    }

    DenseMatrix(int rows, int cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != static_cast<std::size_t>(rows) * cols) {
            throw DimensionError("DenseMatrix: data length does not match rows*cols");
        }
    }

    static DenseMatrix identity(int n) {
        DenseMatrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    DenseMatrix transpose() const {
        DenseMatrix t(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    DenseMatrix column(int j) const {
        DenseMatrix c(rows_, 1);
        for (int i = 0; i < rows_; ++i) c(i, 0) = (*this)(i, j);
        return c;
    }

    std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool operator==(const DenseMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

    DenseMatrix& operator+=(const DenseMatrix& o) {
        if (rows_ != o.rows_ || cols_ != o.cols_) {
            throw DimensionError("operator+=: shape mismatch " + shape_string() + " vs " +
                                 o.shape_string());
        }
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    DenseMatrix& operator-=(const DenseMatrix& o) {
        if (rows_ != o.rows_ || cols_ != o.cols_) {
            throw DimensionError("operator-=: shape mismatch " + shape_string() + " vs " +
                                 o.shape_string());
        }
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    DenseMatrix& operator*=(double a) {
        for (double& v : data_) v *= a;
        return *this;
    }

    friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
    friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
    friend DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
    friend DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

}  // namespace dolfin
