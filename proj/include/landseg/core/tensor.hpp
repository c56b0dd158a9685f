#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "landseg/core/errors.hpp"

namespace landseg {

// Dense n-d array over a flat Eigen column, row-major strides.
// Rank is dynamic; most of the codebase uses rank 1..4:
//   [C]           per-channel vectors
//   [H,W]         single-band grids / label maps
//   [C,H,W]       feature grids and multispectral pixels
//   [K,C,kh,kw]   convolution kernels
template <class Scalar>
struct Tensor {
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using MatrixMap =
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstMatrixMap =
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    std::vector<int> shape;
    Storage data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data = Storage::Zero(count(shape));
    }
    Tensor(std::vector<int> s, Storage d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape)) throw ValidationError("tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, Scalar v) {
        Tensor t(std::move(s));
        t.data.setConstant(v);
        return t;
    }
    static Tensor scalar(Scalar v) { return full({1}, v); }

    static Eigen::Index count(const std::vector<int>& s) {
        Eigen::Index n = 1;
        for (int d : s) {
            if (d < 0) throw ValidationError("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    Eigen::Index numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    Scalar& operator()(Eigen::Index i) { return data[i]; }
    Scalar operator()(Eigen::Index i) const { return data[i]; }

    Scalar& at(int i, int j) { return data[static_cast<Eigen::Index>(i) * dim(1) + j]; }
    Scalar at(int i, int j) const { return data[static_cast<Eigen::Index>(i) * dim(1) + j]; }
    Scalar& at(int c, int i, int j) {
        return data[(static_cast<Eigen::Index>(c) * dim(1) + i) * dim(2) + j];
    }
    Scalar at(int c, int i, int j) const {
        return data[(static_cast<Eigen::Index>(c) * dim(1) + i) * dim(2) + j];
    }

    // 2-d view of the flat buffer; rows*cols must cover it exactly.
    MatrixMap mat(Eigen::Index rows, Eigen::Index cols) {
        if (rows * cols != numel()) throw ValidationError("tensor: mat view size mismatch");
        return MatrixMap(data.data(), rows, cols);
    }
    ConstMatrixMap mat(Eigen::Index rows, Eigen::Index cols) const {
        if (rows * cols != numel()) throw ValidationError("tensor: mat view size mismatch");
        return ConstMatrixMap(data.data(), rows, cols);
    }

    // [C,H,W] channel plane as an H×W matrix view.
    MatrixMap plane(int c) {
        const Eigen::Index hw = static_cast<Eigen::Index>(dim(1)) * dim(2);
        return MatrixMap(data.data() + c * hw, dim(1), dim(2));
    }
    ConstMatrixMap plane(int c) const {
        const Eigen::Index hw = static_cast<Eigen::Index>(dim(1)) * dim(2);
        return ConstMatrixMap(data.data() + c * hw, dim(1), dim(2));
    }

    Tensor reshaped(std::vector<int> s) const {
        if (count(s) != numel()) throw ValidationError("tensor: reshape element count mismatch");
        return Tensor(std::move(s), data);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "[";
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + "]";
    }
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;
using TensorI = Tensor<int32_t>;

}  // namespace landseg
