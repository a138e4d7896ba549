#include "matrix.hpp"

#include <cmath>
#include <limits>

namespace ecnet {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m.cols_) throw ShapeError("from_rows: ragged initializer");
        std::size_t c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

Matrix Matrix::row(std::size_t r) const {
    Matrix out(1, cols_);
    for (std::size_t c = 0; c < cols_; ++c) out(0, c) = (*this)(r, c);
    return out;
}

void Matrix::set_row(std::size_t r, const Matrix& v) {
    if (v.rows() != 1 || v.cols() != cols_)
        throw ShapeError("set_row: shape mismatch " + v.shape_str() + " into row of " +
                         shape_str());
    for (std::size_t c = 0; c < cols_; ++c) (*this)(r, c) = v(0, c);
}

Matrix Matrix::col_range(std::size_t c0, std::size_t c1) const {
    if (c0 > c1 || c1 > cols_) throw ShapeError("col_range: bad range on " + shape_str());
    Matrix out(rows_, c1 - c0);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = c0; c < c1; ++c) out(r, c - c0) = (*this)(r, c);
    return out;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Matrix::shape_str() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be > 0");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (n - 1);
    std::uint64_t x, r;
    do {
        x = next_u64();
        r = x % n;
    } while (x - r > limit);
    return r;
}

double Rng::normal(double mean, double sd) {
    if (have_spare_) {
        have_spare_ = false;
        return mean + sd * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + sd * r * std::cos(theta);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str());
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* out_row = out.row_ptr(i);
        const double* a_row = a.row_ptr(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a_row[p];
            const double* b_row = b.row_ptr(p);
            for (std::size_t j = 0; j < m; ++j) out_row[j] += av * b_row[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: shape mismatch " + a.shape_str() + " * " +
                         b.shape_str() + "^T");
    Matrix out(a.rows(), b.rows());
    const std::size_t k = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* a_row = a.row_ptr(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* b_row = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: shape mismatch " + a.shape_str() + "^T * " +
                         b.shape_str());
    Matrix out(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p) {
        const double* a_row = a.row_ptr(p);
        const double* b_row = b.row_ptr(p);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double av = a_row[i];
            double* out_row = out.row_ptr(i);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += av * b_row[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

Matrix sigmoid(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        // split on sign to avoid exp overflow
        out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                 : std::exp(v) / (1.0 + std::exp(v));
    }
    return out;
}

Matrix tanh_m(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
    return out;
}

Matrix softmax_rows(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double e = std::exp(x(r, c) - mx);
            out(r, c) = e;
            sum += e;
        }
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= sum;
    }
    return out;
}

Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("xavier_init: empty shape");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = rng.uniform(-bound, bound);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
    return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_in_place");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

Matrix add_bias_rows(const Matrix& a, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeError("add_bias_rows: bias " + bias.shape_str() + " vs " + a.shape_str());
    Matrix out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) + bias(0, c);
    return out;
}

Matrix col_sums(const Matrix& a) {
    Matrix out(1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
    return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("hconcat: row mismatch " + a.shape_str() + " | " + b.shape_str());
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
        for (std::size_t c = 0; c < b.cols(); ++c) out(r, a.cols() + c) = b(r, c);
    }
    return out;
}

}  // namespace ecnet
