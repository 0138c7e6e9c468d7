// Dense row-major 64-bit float tensor and the forward kernels shared by the
// autodiff tape and the no-tape inference path. Both paths call these exact
// functions, so their outputs are bit-identical.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rulkit/common.hpp"

namespace rulkit {

struct Tensor {
    std::vector<std::size_t> shape;  // row-major
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : shape{rows, cols}, data(rows * cols, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

namespace tk {  // tensor kernels

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

inline MapC map(const Tensor& t) {
    return MapC(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
inline MapM map(Tensor& t) {
    return MapM(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

inline void require_2d(const Tensor& t, const char* who) {
    if (t.shape.size() != 2)
        throw Error(std::string(who) + ": tensor must be 2-D, got shape " + shape_str(t.shape));
}

// Hand-rolled i-k-j product. Each output element accumulates its k-terms in
// ascending order through the same fused multiply-add chain no matter how
// many rows share the batch or where the buffers happen to live, so a row's
// result is reproducible bit-for-bit under any batching. (Library GEMV/GEMM
// kernels peel loops based on runtime addresses, which breaks that.) The
// j-loop vectorizes; ~22 GFLOP/s at the shapes used here.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows())
        throw Error("matmul: shape mismatch " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* cr = c.data.data() + i * n;
        const double* ar = a.data.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = ar[kk];
            const double* br = b.data.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += aik * br[j];
        }
    }
    return c;
}

// dC contributions for matmul backward.
inline void matmul_acc_agrad(Tensor& da, const Tensor& dc, const Tensor& b) {
    map(da).noalias() += map(dc) * map(b).transpose();
}
inline void matmul_acc_bgrad(Tensor& db, const Tensor& a, const Tensor& dc) {
    map(db).noalias() += map(a).transpose() * map(dc);
}

// add: equal shapes, or b a (1 x c) row vector broadcast over rows (bias).
inline Tensor add(const Tensor& a, const Tensor& b) {
    Tensor c = a;
    if (a.same_shape(b)) {
        map(c) += map(b);
    } else if (b.rows() == 1 && b.cols() == a.cols()) {
        map(c).rowwise() += map(b).row(0);
    } else {
        throw Error("add: shape mismatch " + shape_str(a.shape) + " + " + shape_str(b.shape));
    }
    return c;
}

// mul: Hadamard product; b may be (r x 1), broadcast over columns (masks).
inline Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor c = a;
    if (a.same_shape(b)) {
        map(c).array() *= map(b).array();
    } else if (b.cols() == 1 && b.rows() == a.rows()) {
        map(c).array().colwise() *= map(b).col(0).array();
    } else {
        throw Error("mul: shape mismatch " + shape_str(a.shape) + " * " + shape_str(b.shape));
    }
    return c;
}

inline Tensor add_const(const Tensor& a, double v) {
    Tensor c = a;
    map(c).array() += v;
    return c;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    map(c) *= s;
    return c;
}

// Transcendentals run element-by-element through libm. Vectorized math
// kernels use a different polynomial in the SIMD body than in the scalar
// tail, which would make an element's bits depend on its position; scalar
// evaluation keeps every element's result a function of its value alone.
inline Tensor tanh(const Tensor& a) {
    Tensor c = a;
    for (double& v : c.data) v = std::tanh(v);
    return c;
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor c = a;
    for (double& v : c.data) v = 1.0 / (1.0 + std::exp(-v));
    return c;
}

/// log(max(a, eps)); the clamp keeps adversarial losses finite at 0 and 1.
inline Tensor log_clamped(const Tensor& a, double eps) {
    Tensor c = a;
    for (double& v : c.data) v = std::log(std::max(v, eps));
    return c;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat");
    require_2d(b, "concat");
    if (a.rows() != b.rows())
        throw Error("concat: row mismatch " + shape_str(a.shape) + " | " + shape_str(b.shape));
    Tensor c(a.rows(), a.cols() + b.cols());
    map(c).leftCols(static_cast<Eigen::Index>(a.cols())) = map(a);
    map(c).rightCols(static_cast<Eigen::Index>(b.cols())) = map(b);
    return c;
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    require_2d(a, "slice");
    if (c0 >= c1 || c1 > a.cols())
        throw Error("slice: bad column range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                    ") for shape " + shape_str(a.shape));
    Tensor c(a.rows(), c1 - c0);
    map(c) = map(a).middleCols(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(c1 - c0));
    return c;
}

// Reductions accumulate sequentially in storage order. Vectorized reductions
// sum SIMD lanes in an order that shifts with the buffer's heap alignment,
// which would let the same tensor reduce to different last-ulp values from
// one allocation to the next.
inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    return Tensor::scalar(s);
}

inline Tensor mean_all(const Tensor& a) {
    if (a.size() == 0) throw Error("mean: empty tensor");
    double s = 0.0;
    for (double v : a.data) s += v;
    return Tensor::scalar(s / static_cast<double>(a.size()));
}

inline Tensor sum_squares(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return Tensor::scalar(s);
}

}  // namespace tk

}  // namespace rulkit
