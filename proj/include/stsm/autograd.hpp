#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stsm/tensor.hpp"

namespace stsm::ag {

struct Node;
using Var = std::shared_ptr<Node>;

// A node in the reverse-mode tape. `backward` reads this node's grad and
// accumulates into its parents' grads.
struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward;

    Tensor& g() {
        if (grad.shape != val.shape) grad = Tensor(val.shape, 0.0);
        return grad;
    }
    void zero_grad() {
        if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0);
    }
};

// When false, ops compute values only and record no tape.
bool& grad_enabled();
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

Var constant(Tensor t);
Var param(Tensor t);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var log_(const Var& a);
Var exp_(const Var& a);
Var sqrt_(const Var& a);

Var matmul(const Var& a, const Var& b);
// x [..., Cin] -> [..., Cout]; W [Cin, Cout], b [Cout].
Var affine_lastdim(const Var& x, const Var& w, const Var& b);
// x [N,T,C], W [ks,C,Cout], bias [Cout]; left zero-padded causal conv, dilation d.
Var conv1d_causal(const Var& x, const Var& w, const Var& b, int dilation);
Var time_slice(const Var& x, int t);                  // [N,T,C] -> [N,C]
Var stack_time(const std::vector<Var>& slices);       // T x [N,C] -> [N,T,C]
Var mul_time(const Var& x, const Var& m);             // [N,T,C] * [T,C] broadcast over N
Var sum_rows(const Var& x);                           // [N,C] -> [C]
Var dot(const Var& a, const Var& b);                  // flat -> scalar [1]
Var mse(const Var& a, const Tensor& target);          // mean squared error, scalar [1]
Var cosine(const Var& a, const Var& b);               // scalar [1]

void backward(const Var& root);
// Break parent links so a deep graph frees without recursive destructor chains.
void release_graph(const Var& root);

}  // namespace stsm::ag
