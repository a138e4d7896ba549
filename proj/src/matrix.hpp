#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecnet {

/// Thrown when operand shapes do not line up; the message carries both shapes.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of 64-bit floats. Row and column vectors are
/// 1xN / Nx1 matrices; there is no separate vector type.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    Matrix row(std::size_t r) const;
    void set_row(std::size_t r, const Matrix& v);

    /// Columns [c0, c1) as a new matrix.
    Matrix col_range(std::size_t c0, std::size_t c1) const;

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Deterministic generator with a platform-fixed algorithm (mt19937_64 raw
/// stream; real-valued draws derived by exact arithmetic on the raw bits, so
/// identical seeds give identical streams everywhere).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n). Rejection sampling, unbiased.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Box-Muller; uses libm, so only the integer/uniform streams carry the
    /// cross-platform bit-identity guarantee.
    double normal(double mean, double sd);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix sigmoid(const Matrix& x);
Matrix tanh_m(const Matrix& x);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& x);

/// Uniform init on +-sqrt(6 / (rows + cols)).
Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b);

/// a += row broadcast of b (b is 1 x a.cols).
Matrix add_bias_rows(const Matrix& a, const Matrix& bias);

/// Column sums as a 1 x cols matrix.
Matrix col_sums(const Matrix& a);

/// Horizontal concatenation [a | b].
Matrix hconcat(const Matrix& a, const Matrix& b);

}  // namespace ecnet
