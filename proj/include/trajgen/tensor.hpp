#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trajgen/errors.hpp"

namespace trajgen {

using Vec = std::vector<double>;

/// Dense row-major matrix of 64-bit floats.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    std::size_t size() const { return data.size(); }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Tensor2& t) { return all_finite(t.data); }

// y = A x
inline Vec matvec(const Tensor2& a, const Vec& x) {
    if (x.size() != a.cols)
        throw ConfigError("matvec: matrix is " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                          " but vector has length " + std::to_string(x.size()));
    Vec y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* r = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

// y = A^T x
inline Vec matvec_transposed(const Tensor2& a, const Vec& x) {
    if (x.size() != a.rows)
        throw ConfigError("matvec_transposed: matrix is " + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + " but vector has length " + std::to_string(x.size()));
    Vec y(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* r = a.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += r[j] * xi;
    }
    return y;
}

// A += u v^T
inline void add_outer(Tensor2& a, const Vec& u, const Vec& v) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* r = a.row(i);
        const double ui = u[i];
        for (std::size_t j = 0; j < a.cols; ++j) r[j] += ui * v[j];
    }
}

inline double dot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline Vec concat(const std::vector<const Vec*>& parts) {
    std::size_t n = 0;
    for (const Vec* p : parts) n += p->size();
    Vec out;
    out.reserve(n);
    for (const Vec* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

inline double mean(const Vec& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

inline double stddev(const Vec& v, double m) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

inline double median(Vec v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace trajgen
