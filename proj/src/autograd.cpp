#include "stsm/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace stsm::ag {

bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return n;
}

Var param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = true;
    return n;
}

namespace {

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    if (grad_enabled()) {
        bool any = false;
        for (const auto& p : parents) any = any || p->requires_grad;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward = std::move(bw);
        }
    }
    return n;
}

void check_same(const Var& a, const Var& b, const char* op) {
    if (!a->val.same_shape(b->val)) throw InternalError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    Tensor v = a->val;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] += b->val.data[i];
    return make_node(std::move(v), {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        if (a->requires_grad) {
            auto& g = a->g();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    Tensor v = a->val;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] -= b->val.data[i];
    return make_node(std::move(v), {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        if (a->requires_grad) {
            auto& g = a->g();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    Tensor v = a->val;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] *= b->val.data[i];
    return make_node(std::move(v), {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        if (a->requires_grad) {
            auto& g = a->g();
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += n.grad.data[i] * b->val.data[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += n.grad.data[i] * a->val.data[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same(a, b, "div");
    Tensor v = a->val;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] /= b->val.data[i];
    return make_node(std::move(v), {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        if (a->requires_grad) {
            auto& g = a->g();
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += n.grad.data[i] / b->val.data[i];
        }
        if (b->requires_grad) {
            auto& g = b->g();
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] -= n.grad.data[i] * n.val.data[i] / b->val.data[i];
        }
    });
}

Var maximum(const Var& a, const Var& b) {
    check_same(a, b, "maximum");
    Tensor v = a->val;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = std::max(v.data[i], b->val.data[i]);
    return make_node(std::move(v), {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        // Ties route to the first argument so backward is deterministic.
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            if (a->val.data[i] >= b->val.data[i]) {
                if (a->requires_grad) a->g().data[i] += n.grad.data[i];
            } else {
                if (b->requires_grad) b->g().data[i] += n.grad.data[i];
            }
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor v = a->val;
    for (double& x : v.data) x *= c;
    return make_node(std::move(v), {a}, [c](Node& n) {
        auto& a = n.parents[0];
        if (a->requires_grad) {
            auto& g = a->g();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += c * n.grad.data[i];
        }
    });
}

Var relu(const Var& a) {
    Tensor v = a->val;
    for (double& x : v.data) x = x > 0.0 ? x : 0.0;
    return make_node(std::move(v), {a}, [](Node& n) {
        auto& a = n.parents[0];
        if (!a->requires_grad) return;
        auto& g = a->g();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (a->val.data[i] > 0.0) g.data[i] += n.grad.data[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor v = a->val;
    for (double& x : v.data) x = 1.0 / (1.0 + std::exp(-x));
    return make_node(std::move(v), {a}, [](Node& n) {
        auto& a = n.parents[0];
        if (!a->requires_grad) return;
        auto& g = a->g();
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double s = n.val.data[i];
            g.data[i] += n.grad.data[i] * s * (1.0 - s);
        }
    });
}

Var log_(const Var& a) {
    Tensor v = a->val;
    for (double& x : v.data) x = std::log(x);
    return make_node(std::move(v), {a}, [](Node& n) {
        auto& a = n.parents[0];
        if (!a->requires_grad) return;
        auto& g = a->g();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] += n.grad.data[i] / a->val.data[i];
    });
}

Var exp_(const Var& a) {
    Tensor v = a->val;
    for (double& x : v.data) x = std::exp(x);
    return make_node(std::move(v), {a}, [](Node& n) {
        auto& a = n.parents[0];
        if (!a->requires_grad) return;
        auto& g = a->g();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] += n.grad.data[i] * n.val.data[i];
    });
}

Var sqrt_(const Var& a) {
    Tensor v = a->val;
    for (double& x : v.data) x = std::sqrt(x);
    return make_node(std::move(v), {a}, [](Node& n) {
        auto& a = n.parents[0];
        if (!a->requires_grad) return;
        auto& g = a->g();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] += n.grad.data[i] * 0.5 / n.val.data[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    Tensor v = matmul_val(a->val, b->val);
    return make_node(std::move(v), {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        if (a->requires_grad) matmul_into(n.grad, transpose_val(b->val), a->g(), true);
        if (b->requires_grad) matmul_into(transpose_val(a->val), n.grad, b->g(), true);
    });
}

namespace {
// View [..., C] as a 2-D [rows, C] for last-dim affine transforms.
int lead_rows(const Tensor& t) {
    long long r = 1;
    for (int i = 0; i + 1 < t.ndim(); ++i) r *= t.dim(i);
    return static_cast<int>(r);
}
}  // namespace

Var affine_lastdim(const Var& x, const Var& w, const Var& b) {
    const int cin = x->val.dim(x->val.ndim() - 1);
    if (w->val.ndim() != 2 || w->val.dim(0) != cin)
        throw InternalError("affine_lastdim: weight shape mismatch");
    const int cout = w->val.dim(1);
    if (b->val.size() != cout) throw InternalError("affine_lastdim: bias shape mismatch");
    const int rows = lead_rows(x->val);
    std::vector<int> out_shape = x->val.shape;
    out_shape.back() = cout;
    Tensor v(out_shape);
    for (int i = 0; i < rows; ++i) {
        const double* xi = x->val.data.data() + static_cast<std::size_t>(i) * cin;
        double* vi = v.data.data() + static_cast<std::size_t>(i) * cout;
        for (int j = 0; j < cout; ++j) vi[j] = b->val.data[static_cast<std::size_t>(j)];
        for (int k = 0; k < cin; ++k) {
            const double xv = xi[k];
            if (xv == 0.0) continue;
            const double* wrow = w->val.data.data() + static_cast<std::size_t>(k) * cout;
            for (int j = 0; j < cout; ++j) vi[j] += xv * wrow[j];
        }
    }
    return make_node(std::move(v), {x, w, b}, [cin, cout, rows](Node& n) {
        auto& x = n.parents[0];
        auto& w = n.parents[1];
        auto& b = n.parents[2];
        if (b->requires_grad) {
            auto& g = b->g();
            for (int i = 0; i < rows; ++i) {
                const double* gi = n.grad.data.data() + static_cast<std::size_t>(i) * cout;
                for (int j = 0; j < cout; ++j) g.data[static_cast<std::size_t>(j)] += gi[j];
            }
        }
        if (w->requires_grad) {
            auto& g = w->g();
            for (int i = 0; i < rows; ++i) {
                const double* xi = x->val.data.data() + static_cast<std::size_t>(i) * cin;
                const double* gi = n.grad.data.data() + static_cast<std::size_t>(i) * cout;
                for (int k = 0; k < cin; ++k) {
                    const double xv = xi[k];
                    if (xv == 0.0) continue;
                    double* grow = g.data.data() + static_cast<std::size_t>(k) * cout;
                    for (int j = 0; j < cout; ++j) grow[j] += xv * gi[j];
                }
            }
        }
        if (x->requires_grad) {
            auto& g = x->g();
            for (int i = 0; i < rows; ++i) {
                double* gx = g.data.data() + static_cast<std::size_t>(i) * cin;
                const double* gi = n.grad.data.data() + static_cast<std::size_t>(i) * cout;
                for (int k = 0; k < cin; ++k) {
                    const double* wrow = w->val.data.data() + static_cast<std::size_t>(k) * cout;
                    double acc = 0.0;
                    for (int j = 0; j < cout; ++j) acc += wrow[j] * gi[j];
                    gx[k] += acc;
                }
            }
        }
    });
}

Var conv1d_causal(const Var& x, const Var& w, const Var& b, int dilation) {
    if (x->val.ndim() != 3 || w->val.ndim() != 3)
        throw InternalError("conv1d_causal: expects x [N,T,C], w [ks,C,Cout]");
    const int N = x->val.dim(0), T = x->val.dim(1), C = x->val.dim(2);
    const int ks = w->val.dim(0), cout = w->val.dim(2);
    if (w->val.dim(1) != C) throw InternalError("conv1d_causal: channel mismatch");
    if (ks < 1 || dilation < 1) throw ConfigError("conv1d_causal: kernel size and dilation must be >= 1");
    if ((ks - 1) * dilation + 1 > 2 * T)
        throw ConfigError("conv1d_causal: kernel span exceeds padded input");
    Tensor v({N, T, cout});
    for (int n = 0; n < N; ++n)
        for (int t = 0; t < T; ++t) {
            double* out = &v(n, t, 0);
            for (int j = 0; j < cout; ++j) out[j] = b->val.data[static_cast<std::size_t>(j)];
            for (int s = 0; s < ks; ++s) {
                const int tp = t - (ks - 1 - s) * dilation;
                if (tp < 0) continue;  // left zero-padding
                const double* xi = &x->val(n, tp, 0);
                for (int ci = 0; ci < C; ++ci) {
                    const double xv = xi[ci];
                    if (xv == 0.0) continue;
                    const double* wrow = &w->val(s, ci, 0);
                    for (int j = 0; j < cout; ++j) out[j] += xv * wrow[j];
                }
            }
        }
    return make_node(std::move(v), {x, w, b}, [N, T, C, ks, cout, dilation](Node& nd) {
        auto& x = nd.parents[0];
        auto& w = nd.parents[1];
        auto& b = nd.parents[2];
        for (int n = 0; n < N; ++n)
            for (int t = 0; t < T; ++t) {
                const double* g = &nd.grad(n, t, 0);
                if (b->requires_grad) {
                    auto& gb = b->g();
                    for (int j = 0; j < cout; ++j) gb.data[static_cast<std::size_t>(j)] += g[j];
                }
                for (int s = 0; s < ks; ++s) {
                    const int tp = t - (ks - 1 - s) * dilation;
                    if (tp < 0) continue;
                    const double* xi = &x->val(n, tp, 0);
                    if (w->requires_grad) {
                        auto& gw = w->g();
                        for (int ci = 0; ci < C; ++ci) {
                            const double xv = xi[ci];
                            if (xv == 0.0) continue;
                            double* grow = &gw(s, ci, 0);
                            for (int j = 0; j < cout; ++j) grow[j] += xv * g[j];
                        }
                    }
                    if (x->requires_grad) {
                        auto& gx = x->g();
                        double* gxi = &gx(n, tp, 0);
                        for (int ci = 0; ci < C; ++ci) {
                            const double* wrow = &w->val(s, ci, 0);
                            double acc = 0.0;
                            for (int j = 0; j < cout; ++j) acc += wrow[j] * g[j];
                            gxi[ci] += acc;
                        }
                    }
                }
            }
    });
}

Var time_slice(const Var& x, int t) {
    if (x->val.ndim() != 3) throw InternalError("time_slice: expects [N,T,C]");
    const int N = x->val.dim(0), T = x->val.dim(1), C = x->val.dim(2);
    if (t < 0 || t >= T) throw InternalError("time_slice: index out of range");
    Tensor v({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) v(n, c) = x->val(n, t, c);
    return make_node(std::move(v), {x}, [N, C, t](Node& nd) {
        auto& x = nd.parents[0];
        if (!x->requires_grad) return;
        auto& g = x->g();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) g(n, t, c) += nd.grad(n, c);
    });
}

Var stack_time(const std::vector<Var>& slices) {
    if (slices.empty()) throw InternalError("stack_time: empty");
    const int N = slices[0]->val.dim(0), C = slices[0]->val.dim(1);
    const int T = static_cast<int>(slices.size());
    Tensor v({N, T, C});
    for (int t = 0; t < T; ++t) {
        if (!slices[static_cast<std::size_t>(t)]->val.same_shape(slices[0]->val))
            throw InternalError("stack_time: slice shape mismatch");
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) v(n, t, c) = slices[static_cast<std::size_t>(t)]->val(n, c);
    }
    std::vector<Var> parents(slices.begin(), slices.end());
    return make_node(std::move(v), std::move(parents), [N, T, C](Node& nd) {
        for (int t = 0; t < T; ++t) {
            auto& p = nd.parents[static_cast<std::size_t>(t)];
            if (!p->requires_grad) continue;
            auto& g = p->g();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) g(n, c) += nd.grad(n, t, c);
        }
    });
}

Var mul_time(const Var& x, const Var& m) {
    if (x->val.ndim() != 3 || m->val.ndim() != 2 || x->val.dim(1) != m->val.dim(0) ||
        x->val.dim(2) != m->val.dim(1))
        throw InternalError("mul_time: shape mismatch");
    const int N = x->val.dim(0), T = x->val.dim(1), C = x->val.dim(2);
    Tensor v({N, T, C});
    for (int n = 0; n < N; ++n)
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c) v(n, t, c) = x->val(n, t, c) * m->val(t, c);
    return make_node(std::move(v), {x, m}, [N, T, C](Node& nd) {
        auto& x = nd.parents[0];
        auto& m = nd.parents[1];
        if (x->requires_grad) {
            auto& g = x->g();
            for (int n = 0; n < N; ++n)
                for (int t = 0; t < T; ++t)
                    for (int c = 0; c < C; ++c) g(n, t, c) += nd.grad(n, t, c) * m->val(t, c);
        }
        if (m->requires_grad) {
            auto& g = m->g();
            for (int n = 0; n < N; ++n)
                for (int t = 0; t < T; ++t)
                    for (int c = 0; c < C; ++c) g(t, c) += nd.grad(n, t, c) * x->val(n, t, c);
        }
    });
}

Var sum_rows(const Var& x) {
    if (x->val.ndim() != 2) throw InternalError("sum_rows: expects [N,C]");
    const int N = x->val.dim(0), C = x->val.dim(1);
    Tensor v({C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) v(c) += x->val(n, c);
    return make_node(std::move(v), {x}, [N, C](Node& nd) {
        auto& x = nd.parents[0];
        if (!x->requires_grad) return;
        auto& g = x->g();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) g(n, c) += nd.grad(c);
    });
}

Var dot(const Var& a, const Var& b) {
    if (a->val.size() != b->val.size()) throw InternalError("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a->val.data.size(); ++i) acc += a->val.data[i] * b->val.data[i];
    return make_node(Tensor::from({1}, {acc}), {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        const double g = n.grad.data[0];
        if (a->requires_grad) {
            auto& ga = a->g();
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g * b->val.data[i];
        }
        if (b->requires_grad) {
            auto& gb = b->g();
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g * a->val.data[i];
        }
    });
}

Var mse(const Var& a, const Tensor& target) {
    if (!a->val.same_shape(target)) throw InternalError("mse: shape mismatch");
    const double inv = 1.0 / static_cast<double>(a->val.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a->val.data.size(); ++i) {
        const double d = a->val.data[i] - target.data[i];
        acc += d * d;
    }
    Tensor tgt = target;
    return make_node(Tensor::from({1}, {acc * inv}), {a}, [inv, tgt = std::move(tgt)](Node& n) {
        auto& a = n.parents[0];
        if (!a->requires_grad) return;
        auto& g = a->g();
        const double gl = n.grad.data[0];
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] += gl * 2.0 * inv * (a->val.data[i] - tgt.data[i]);
    });
}

Var cosine(const Var& a, const Var& b) {
    // Denominator floored at 1e-12 so an exactly-zero vector yields cos = 0
    // instead of a division by zero.
    Var denom = mul(sqrt_(dot(a, a)), sqrt_(dot(b, b)));
    return div(dot(a, b), maximum(denom, constant(Tensor::from({1}, {1e-12}))));
}

namespace {
std::vector<Node*> topo_order(const Var& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (root->requires_grad) stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}
}  // namespace

void backward(const Var& root) {
    if (root->val.size() != 1) throw InternalError("backward: root must be scalar");
    if (!root->requires_grad) return;
    auto order = topo_order(root);
    root->g().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.shape == n->val.shape) n->backward(*n);
    }
}

void release_graph(const Var& root) {
    // Hold owning references while unlinking, otherwise clearing a parent list
    // can trigger a recursive destructor chain through the whole graph.
    std::vector<Var> nodes{root};
    std::unordered_set<Node*> visited{root.get()};
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (auto& p : nodes[i]->parents)
            if (visited.insert(p.get()).second) nodes.push_back(p);
    }
    for (auto& n : nodes) {
        n->parents.clear();
        n->backward = nullptr;
    }
}

}  // namespace stsm::ag
