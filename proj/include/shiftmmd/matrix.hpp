#pragma once

#include <string>
#include <vector>

namespace shiftmmd {

// Dense row-major matrix of doubles. The only storage type in the library;
// vectors are represented as n x 1 or 1 x n as context requires.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0);

    static Matrix row_vector(const std::vector<double>& v);
    static Matrix column_vector(const std::vector<double>& v);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

    void fill(double v);
    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_trans_a(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_trans_b(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Accumulate: dst += src (shapes must match).
void add_in_place(Matrix& dst, const Matrix& src);
void add_scaled_in_place(Matrix& dst, const Matrix& src, double scale);

std::vector<double> row_sums(const Matrix& a);
std::vector<double> col_sums(const Matrix& a);
double sum_all_entries(const Matrix& a);

Matrix gather_rows(const Matrix& a, const std::vector<int>& rows);
Matrix hcat(const Matrix& a, const Matrix& b);

} // namespace shiftmmd
