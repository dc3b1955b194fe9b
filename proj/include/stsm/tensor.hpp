#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "stsm/common.hpp"

namespace stsm {

// Dense row-major tensor of doubles. Rank 1..3 is what the model uses.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(count(shape)), fill);
    }
    static Tensor from(std::vector<int> s, std::vector<double> d) {
        Tensor t;
        t.shape = std::move(s);
        if (static_cast<long long>(d.size()) != count(t.shape))
            throw InternalError("tensor data size does not match shape");
        t.data = std::move(d);
        return t;
    }

    static long long count(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    long long size() const { return static_cast<long long>(data.size()); }

    double& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
    double operator()(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    double& operator()(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double operator()(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// C = A(m x k) * B(k x n), accumulating into C which must be pre-sized.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
Tensor matmul_val(const Tensor& a, const Tensor& b);
Tensor transpose_val(const Tensor& a);

}  // namespace stsm
