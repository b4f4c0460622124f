#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcluster {

// Dense row-major matrix of doubles. Small sizes throughout this project, so
// no attempt at expression templates or SIMD.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

    bool all_finite() const {
        for (const double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Matrix&) const = default;
};

// out = a * b^T  (a: n x d, b: m x d) -> n x m
inline Matrix multiply_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("multiply_bt: inner dimensions differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(j, k);
            out.at(i, j) = s;
        }
    return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

// Feature matrix = values + ordered column labels. Row i always corresponds to
// record i of the table it was derived from.
struct FeatureMatrix {
    Matrix values;
    std::vector<std::string> column_names;

    std::size_t rows() const { return values.rows; }
    std::size_t cols() const { return values.cols; }

    bool operator==(const FeatureMatrix&) const = default;
};

inline void write_delimited(const FeatureMatrix& m, std::ostream& out, char delimiter = ',') {
    for (std::size_t c = 0; c < m.column_names.size(); ++c) {
        if (c) out << delimiter;
        out << m.column_names[c];
    }
    out << '\n';
    out.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out << delimiter;
            out << m.values.at(r, c);
        }
        out << '\n';
    }
}

// Binary interchange: magic, version, dims, column names, row-major doubles.
// Used for feature hand-off between pipeline stages and for snapshots.
namespace detail {
constexpr char kMatrixMagic[4] = {'Q', 'C', 'F', 'M'};

inline void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("matrix interchange: truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
}  // namespace detail

inline void write_binary(const FeatureMatrix& m, std::ostream& out) {
    out.write(detail::kMatrixMagic, 4);
    detail::put_u64(out, 1);  // version
    detail::put_u64(out, m.rows());
    detail::put_u64(out, m.cols());
    detail::put_u64(out, m.column_names.size());
    for (const auto& name : m.column_names) {
        detail::put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(m.values.data.data()),
              static_cast<std::streamsize>(m.values.data.size() * sizeof(double)));
}

inline FeatureMatrix read_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != std::string_view(detail::kMatrixMagic, 4))
        throw std::runtime_error("matrix interchange: bad magic");
    if (detail::get_u64(in) != 1) throw std::runtime_error("matrix interchange: unsupported version");
    FeatureMatrix m;
    const auto rows = detail::get_u64(in);
    const auto cols = detail::get_u64(in);
    const auto names = detail::get_u64(in);
    m.column_names.resize(names);
    for (auto& name : m.column_names) {
        name.resize(detail::get_u64(in));
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
    }
    m.values = Matrix(rows, cols);
    in.read(reinterpret_cast<char*>(m.values.data.data()),
            static_cast<std::streamsize>(m.values.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("matrix interchange: truncated stream");
    return m;
}

}  // namespace qcluster
