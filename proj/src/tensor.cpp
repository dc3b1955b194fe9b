#include "stsm/tensor.hpp"

namespace stsm {

void matmul_into(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw InternalError("matmul shape mismatch");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0) == k ? b.dim(1) : 0;
    if (c.shape != std::vector<int>{m, n}) c = Tensor({m, n}, 0.0);
    else if (!accumulate) std::fill(c.data.begin(), c.data.end(), 0.0);
    const double* ap = a.data.data();
    const double* bp = b.data.data();
    double* cp = c.data.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = ap + static_cast<std::size_t>(i) * k;
        double* crow = cp + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = bp + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor matmul_val(const Tensor& a, const Tensor& b) {
    Tensor c;
    matmul_into(a, b, c);
    return c;
}

Tensor transpose_val(const Tensor& a) {
    if (a.ndim() != 2) throw InternalError("transpose expects rank 2");
    Tensor t({a.dim(1), a.dim(0)});
    for (int i = 0; i < a.dim(0); ++i)
        for (int j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
    return t;
}

}  // namespace stsm
