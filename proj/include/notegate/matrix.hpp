#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "notegate/common.hpp"

namespace notegate {

// Dense row-major matrix, doubles in memory. Framewise data throughout the
// pipeline is stored as one frame per row.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill)
    {
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return v_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    bool all_finite() const
    {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool operator==(const Matrix& o) const
    {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

// Timing of framewise rows: frame i is centered at frame_zero_time + i * hop.
struct FrameGrid {
    double hop_seconds = 0.020;
    double frame_zero_time = 0.0;

    double time(std::size_t frame) const { return frame_zero_time + frame * hop_seconds; }

    bool same_grid(const FrameGrid& o, double tol = 1e-9) const
    {
        return std::abs(hop_seconds - o.hop_seconds) <= tol &&
               std::abs(frame_zero_time - o.frame_zero_time) <= tol;
    }
};

struct FramedMatrix {
    Matrix m;
    FrameGrid grid;
};

// "F32M" container: magic "F32M", u8 version=1, u32 rows, u32 cols,
// f64 hop_seconds, f64 frame_zero_time, then rows*cols little-endian float32
// row-major.
std::string encode_f32m(const Matrix& m, const FrameGrid& grid);
FramedMatrix decode_f32m(const std::string& bytes, const std::string& origin = "<memory>");
void write_f32m(const std::string& path, const Matrix& m, const FrameGrid& grid);
FramedMatrix read_f32m(const std::string& path);

// One frame per row, tab-separated, 9 significant digits.
void write_matrix_tsv(const std::string& path, const Matrix& m);

} // namespace notegate
