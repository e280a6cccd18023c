// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors, trainable parameter containers and the handful of
// elementwise functions shared by the model layers. Activations are stored
// one token per row.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace diamoe {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// A trainable tensor and its accumulated gradient (same shape).
struct Param {
    Mat value;
    Mat grad;

    Param() = default;
    explicit Param(Mat v) : value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
    Eigen::Index rows() const { return value.rows(); }
    Eigen::Index cols() const { return value.cols(); }
};

/// Coarse ownership classes used by the stage freeze rules.
enum class ParamGroup { Embedding, Backbone, Gate, Experts, Lora, Adapter };

std::string_view to_string(ParamGroup group);

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

/// d/dx gelu(x) = Phi(x) + x * phi(x)
inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

inline Mat gelu(const Mat& x) {
    return x.unaryExpr([](double v) { return gelu(v); });
}

inline Mat gelu_grad(const Mat& x) {
    return x.unaryExpr([](double v) { return gelu_grad(v); });
}

/// Numerically stable softmax of a vector.
inline Vec softmax(const Vec& logits) {
    const double m = logits.maxCoeff();
    Vec e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

/// Row-wise softmax.
inline Mat softmax_rows(const Mat& scores) {
    Mat out(scores.rows(), scores.cols());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        out.row(r) = softmax(scores.row(r).transpose()).transpose();
    }
    return out;
}

inline Mat gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    // Fill in row-major order so the draw sequence does not depend on Eigen's storage order.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = dist(rng);
        }
    }
    return m;
}

}  // namespace diamoe
