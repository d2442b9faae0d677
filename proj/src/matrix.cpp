#include "shiftmmd/matrix.hpp"

#include <cmath>

#include "shiftmmd/errors.hpp"

namespace shiftmmd {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
    if (rows < 0 || cols < 0) {
        throw ArgumentError("matrix dimensions must be nonnegative");
    }
}

Matrix Matrix::row_vector(const std::vector<double>& v) {
    Matrix m(1, static_cast<int>(v.size()));
    for (std::size_t j = 0; j < v.size(); ++j) m.data_[j] = v[j];
    return m;
}

Matrix Matrix::column_vector(const std::vector<double>& v) {
    Matrix m(static_cast<int>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m.data_[i] = v[i];
    return m;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double v) {
    for (auto& x : data_) x = v;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
    }
    Matrix c(a.rows(), b.cols());
    const int n = a.rows(), k = a.cols(), m = b.cols();
    for (int i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_trans_a(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_trans_a: " + a.shape_str() + "^T * " + b.shape_str());
    }
    Matrix c(a.cols(), b.cols());
    const int n = a.rows(), k = a.cols(), m = b.cols();
    for (int p = 0; p < n; ++p) {
        const double* ap = a.row(p);
        const double* bp = b.row(p);
        for (int i = 0; i < k; ++i) {
            const double api = ap[i];
            if (api == 0.0) continue;
            double* ci = c.row(i);
            for (int j = 0; j < m; ++j) ci[j] += api * bp[j];
        }
    }
    return c;
}

Matrix matmul_trans_b(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_trans_b: " + a.shape_str() + " * " + b.shape_str() + "^T");
    }
    Matrix c(a.rows(), b.rows());
    const int n = a.rows(), k = a.cols(), m = b.rows();
    for (int i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < m; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

void add_in_place(Matrix& dst, const Matrix& src) {
    if (!dst.same_shape(src)) {
        throw ShapeError("add_in_place: " + dst.shape_str() + " += " + src.shape_str());
    }
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void add_scaled_in_place(Matrix& dst, const Matrix& src, double scale) {
    if (!dst.same_shape(src)) {
        throw ShapeError("add_scaled_in_place: " + dst.shape_str() + " += " + src.shape_str());
    }
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

std::vector<double> row_sums(const Matrix& a) {
    std::vector<double> s(a.rows(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        double acc = 0.0;
        for (int j = 0; j < a.cols(); ++j) acc += ai[j];
        s[i] = acc;
    }
    return s;
}

std::vector<double> col_sums(const Matrix& a) {
    std::vector<double> s(a.cols(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        for (int j = 0; j < a.cols(); ++j) s[j] += ai[j];
    }
    return s;
}

double sum_all_entries(const Matrix& a) {
    const double* d = a.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += d[i];
    return acc;
}

Matrix gather_rows(const Matrix& a, const std::vector<int>& rows) {
    Matrix out(static_cast<int>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= a.rows()) throw ArgumentError("gather_rows: index out of range");
        const double* src = a.row(rows[i]);
        double* dst = out.row(static_cast<int>(i));
        for (int j = 0; j < a.cols(); ++j) dst[j] = src[j];
    }
    return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("hcat: " + a.shape_str() + " | " + b.shape_str());
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        double* oi = out.row(i);
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (int j = 0; j < a.cols(); ++j) oi[j] = ai[j];
        for (int j = 0; j < b.cols(); ++j) oi[a.cols() + j] = bi[j];
    }
    return out;
}

} // namespace shiftmmd
