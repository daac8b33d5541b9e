#include "cfc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace cfc::ad {

namespace {

void ensure_grad(Node& n) {
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
}

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bp) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    auto n = std::make_shared<Node>(std::move(value), req);
    if (req) {
        n->parents = std::move(parents);
        n->backprop = std::move(bp);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

} // namespace

Var constant(Tensor t) { return std::make_shared<Node>(std::move(t), false); }

Var leaf(Tensor t) {
    auto n = std::make_shared<Node>(std::move(t), true);
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    // iterative post-order topological sort
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    ensure_grad(*root);
    root->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.data.empty()) {
            for (auto& p : n->parents)
                if (p->requires_grad) ensure_grad(*p);
            n->backprop(*n);
        }
    }
}

// ---------------------------------------------------------------- arithmetic

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *n.parents[k];
            if (!p.requires_grad) continue;
            for (size_t i = 0; i < n.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad)
            for (size_t i = 0; i < n.grad.data.size(); ++i) pa.grad.data[i] += n.grad.data[i];
        if (pb.requires_grad)
            for (size_t i = 0; i < n.grad.data.size(); ++i) pb.grad.data[i] -= n.grad.data[i];
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad)
            for (size_t i = 0; i < n.grad.data.size(); ++i)
                pa.grad.data[i] += n.grad.data[i] * pb.value.data[i];
        if (pb.requires_grad)
            for (size_t i = 0; i < n.grad.data.size(); ++i)
                pb.grad.data[i] += n.grad.data[i] * pa.value.data[i];
    });
}

Var mul_const(const Var& a, const Tensor& m) {
    if (!a->value.same_shape(m)) throw std::invalid_argument("mul_const: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= m.data[i];
    Tensor mask = m;
    return make(std::move(out), {a}, [mask](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i)
            p.grad.data[i] += n.grad.data[i] * mask.data[i];
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v *= s;
    return make(std::move(out), {a}, [s](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i) p.grad.data[i] += s * n.grad.data[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v += s;
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
    });
}

Var abs(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::fabs(v);
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            double x = p.value.data[i];
            double sgn = (x > 0.0) - (x < 0.0);
            p.grad.data[i] += sgn * n.grad.data[i];
        }
    });
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v *= v;
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i)
            p.grad.data[i] += 2.0 * p.value.data[i] * n.grad.data[i];
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return make(std::move(out), {a}, [lo, hi](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            double x = p.value.data[i];
            if (x >= lo && x <= hi) p.grad.data[i] += n.grad.data[i];
        }
    });
}

Var log(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::log(v);
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i)
            p.grad.data[i] += n.grad.data[i] / p.value.data[i];
    });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
    Tensor out({1});
    out.data[0] = a->value.sum();
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        double g = n.grad.data[0];
        for (double& v : p.grad.data) v += g;
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a->value.numel())); }

Var spatial_mean(const Var& a) {
    const auto& s = a->value.shape;
    if (s.size() != 3) throw std::invalid_argument("spatial_mean: expected [C,H,W]");
    int C = s[0];
    int hw = s[1] * s[2];
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (int i = 0; i < hw; ++i) acc += a->value.data[c * hw + i];
        out.data[c] = acc / hw;
    }
    return make(std::move(out), {a}, [C, hw](Node& n) {
        Node& p = *n.parents[0];
        for (int c = 0; c < C; ++c) {
            double g = n.grad.data[c] / hw;
            for (int i = 0; i < hw; ++i) p.grad.data[c * hw + i] += g;
        }
    });
}

Var add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("add_n: empty");
    Var acc = xs[0];
    for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return acc;
}

// --------------------------------------------------------------- activations

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            double y = n.value.data[i];
            p.grad.data[i] += n.grad.data[i] * y * (1.0 - y);
        }
    });
}

Var tanh_(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::tanh(v);
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            double y = n.value.data[i];
            p.grad.data[i] += n.grad.data[i] * (1.0 - y * y);
        }
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out = a->value;
    for (double& v : out.data)
        if (v < 0.0) v *= slope;
    return make(std::move(out), {a}, [slope](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i)
            p.grad.data[i] += n.grad.data[i] * (p.value.data[i] >= 0.0 ? 1.0 : slope);
    });
}

// ------------------------------------------------------------------- shaping

Var reshape(const Var& a, std::vector<int> shape) {
    if (Tensor::count(shape) != a->value.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out = a->value;
    out.shape = shape;
    return make(std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        for (size_t i = 0; i < n.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
    });
}

Var concat_c(const Var& a, const Var& b) {
    const auto& sa = a->value.shape;
    const auto& sb = b->value.shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[1] != sb[1] || sa[2] != sb[2])
        throw std::invalid_argument("concat_c: incompatible shapes");
    Tensor out({sa[0] + sb[0], sa[1], sa[2]});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + a->value.numel());
    return make(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        size_t na = pa.value.data.size();
        if (pa.requires_grad)
            for (size_t i = 0; i < na; ++i) pa.grad.data[i] += n.grad.data[i];
        if (pb.requires_grad)
            for (size_t i = 0; i < pb.value.data.size(); ++i)
                pb.grad.data[i] += n.grad.data[na + i];
    });
}

Var slice_c(const Var& a, int c0, int c1) {
    const auto& s = a->value.shape;
    if (s.size() != 3 || c0 < 0 || c1 > s[0] || c0 >= c1)
        throw std::invalid_argument("slice_c: bad channel range");
    int hw = s[1] * s[2];
    Tensor out({c1 - c0, s[1], s[2]});
    std::copy(a->value.data.begin() + static_cast<size_t>(c0) * hw,
              a->value.data.begin() + static_cast<size_t>(c1) * hw, out.data.begin());
    return make(std::move(out), {a}, [c0, hw](Node& n) {
        Node& p = *n.parents[0];
        size_t off = static_cast<size_t>(c0) * hw;
        for (size_t i = 0; i < n.grad.data.size(); ++i) p.grad.data[off + i] += n.grad.data[i];
    });
}

// -------------------------------------------------------------------- layers

Var linear(const Var& w, const Var& b, const Var& x) {
    const auto& sw = w->value.shape;
    if (sw.size() != 2 || x->value.numel() != sw[1] || b->value.numel() != sw[0])
        throw std::invalid_argument("linear: shape mismatch");
    int M = sw[0], N = sw[1];
    Tensor out({M});
    const double* W = w->value.data.data();
    const double* X = x->value.data.data();
    for (int m = 0; m < M; ++m) {
        double acc = b->value.data[m];
        const double* row = W + static_cast<size_t>(m) * N;
        for (int j = 0; j < N; ++j) acc += row[j] * X[j];
        out.data[m] = acc;
    }
    return make(std::move(out), {w, b, x}, [M, N](Node& n) {
        Node& pw = *n.parents[0];
        Node& pb = *n.parents[1];
        Node& px = *n.parents[2];
        const double* G = n.grad.data.data();
        if (pw.requires_grad) {
            const double* X = px.value.data.data();
            for (int m = 0; m < M; ++m) {
                double g = G[m];
                double* row = pw.grad.data.data() + static_cast<size_t>(m) * N;
                for (int j = 0; j < N; ++j) row[j] += g * X[j];
            }
        }
        if (pb.requires_grad)
            for (int m = 0; m < M; ++m) pb.grad.data[m] += G[m];
        if (px.requires_grad) {
            const double* W = pw.value.data.data();
            for (int m = 0; m < M; ++m) {
                double g = G[m];
                const double* row = W + static_cast<size_t>(m) * N;
                for (int j = 0; j < N; ++j) px.grad.data[j] += g * row[j];
            }
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const auto& sx = x->value.shape;
    const auto& sw = w->value.shape;
    if (sx.size() != 3 || sw.size() != 4 || sw[1] != sx[0])
        throw std::invalid_argument("conv2d: shape mismatch");
    int Ci = sx[0], H = sx[1], W = sx[2];
    int Co = sw[0], K = sw[2];
    if (sw[3] != K) throw std::invalid_argument("conv2d: non-square kernel");
    int Ho = (H + 2 * pad - K) / stride + 1;
    int Wo = (W + 2 * pad - K) / stride + 1;
    Tensor out({Co, Ho, Wo});
    const double* X = x->value.data.data();
    const double* Wt = w->value.data.data();
    for (int co = 0; co < Co; ++co) {
        double* O = out.data.data() + static_cast<size_t>(co) * Ho * Wo;
        double bias = b->value.data[co];
        for (int i = 0; i < Ho * Wo; ++i) O[i] = bias;
        for (int ci = 0; ci < Ci; ++ci) {
            const double* Xc = X + static_cast<size_t>(ci) * H * W;
            const double* Wk = Wt + ((static_cast<size_t>(co) * Ci) + ci) * K * K;
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    double wv = Wk[ky * K + kx];
                    for (int oy = 0; oy < Ho; ++oy) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        const double* Xrow = Xc + static_cast<size_t>(iy) * W;
                        double* Orow = O + static_cast<size_t>(oy) * Wo;
                        for (int ox = 0; ox < Wo; ++ox) {
                            int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= W) continue;
                            Orow[ox] += wv * Xrow[ix];
                        }
                    }
                }
            }
        }
    }
    return make(std::move(out), {x, w, b},
                [Ci, H, W, Co, K, Ho, Wo, stride, pad](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        const double* G = n.grad.data.data();
        if (pb.requires_grad) {
            for (int co = 0; co < Co; ++co) {
                const double* Gc = G + static_cast<size_t>(co) * Ho * Wo;
                double acc = 0.0;
                for (int i = 0; i < Ho * Wo; ++i) acc += Gc[i];
                pb.grad.data[co] += acc;
            }
        }
        for (int co = 0; co < Co; ++co) {
            const double* Gc = G + static_cast<size_t>(co) * Ho * Wo;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* Xc = px.value.data.data() + static_cast<size_t>(ci) * H * W;
                double* GXc = px.requires_grad
                                  ? px.grad.data.data() + static_cast<size_t>(ci) * H * W
                                  : nullptr;
                size_t wbase = ((static_cast<size_t>(co) * Ci) + ci) * K * K;
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        double wv = pw.value.data[wbase + ky * K + kx];
                        double wgrad = 0.0;
                        for (int oy = 0; oy < Ho; ++oy) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            const double* Xrow = Xc + static_cast<size_t>(iy) * W;
                            double* GXrow = GXc ? GXc + static_cast<size_t>(iy) * W : nullptr;
                            const double* Grow = Gc + static_cast<size_t>(oy) * Wo;
                            for (int ox = 0; ox < Wo; ++ox) {
                                int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= W) continue;
                                double g = Grow[ox];
                                wgrad += g * Xrow[ix];
                                if (GXrow) GXrow[ix] += g * wv;
                            }
                        }
                        if (pw.requires_grad) pw.grad.data[wbase + ky * K + kx] += wgrad;
                    }
                }
            }
        }
    });
}

Var upsample2(const Var& x) {
    const auto& s = x->value.shape;
    if (s.size() != 3) throw std::invalid_argument("upsample2: need [C,H,W]");
    int C = s[0], H = s[1], W = s[2];
    Tensor out({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int x2 = 0; x2 < 2 * W; ++x2)
                out.at3(c, y, x2) = x->value.at3(c, y / 2, x2 / 2);
    return make(std::move(out), {x}, [C, H, W](Node& n) {
        Node& p = *n.parents[0];
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int x2 = 0; x2 < 2 * W; ++x2)
                    p.grad.at3(c, y / 2, x2 / 2) += n.grad.at3(c, y, x2);
    });
}

Var l2_normalize(const Var& x, double eps) {
    size_t n = x->value.data.size();
    double norm = std::sqrt(x->value.sq_norm());
    double denom = std::max(norm, eps);
    Tensor out = x->value;
    for (double& v : out.data) v /= denom;
    Tensor yv = out;
    return make(std::move(out), {x}, [yv, denom, n](Node& node) {
        Node& xp = *node.parents[0];
        if (!xp.requires_grad) return;
        ensure_grad(xp);
        double dot = 0;
        for (size_t i = 0; i < n; ++i) dot += node.grad.data[i] * yv.data[i];
        for (size_t i = 0; i < n; ++i)
            xp.grad.data[i] += (node.grad.data[i] - yv.data[i] * dot) / denom;
    });
}

Var softmax_ce(const Var& logits, int label) {
    const auto& s = logits->value.shape;
    if (s.size() != 1 || label < 0 || label >= s[0])
        throw std::invalid_argument("softmax_ce: bad logits/label");
    int N = s[0];
    double mx = logits->value.max();
    double denom = 0.0;
    for (double v : logits->value.data) denom += std::exp(v - mx);
    Tensor out({1});
    out.data[0] = std::log(denom) - (logits->value.data[label] - mx);
    return make(std::move(out), {logits}, [label, N, mx, denom](Node& n) {
        Node& p = *n.parents[0];
        double g = n.grad.data[0];
        for (int i = 0; i < N; ++i) {
            double soft = std::exp(p.value.data[i] - mx) / denom;
            p.grad.data[i] += g * (soft - (i == label ? 1.0 : 0.0));
        }
    });
}

// ----------------------------------------------------------------- sampling

Var grid_sample(const Var& tex, const Var& coords, const Tensor& valid) {
    const auto& st = tex->value.shape;
    const auto& sc = coords->value.shape;
    if (st.size() != 3 || sc.size() != 3 || sc[0] != 2)
        throw std::invalid_argument("grid_sample: bad shapes");
    int C = st[0], Ht = st[1], Wt = st[2];
    int H = sc[1], W = sc[2];
    if (valid.shape != std::vector<int>{H, W})
        throw std::invalid_argument("grid_sample: valid mask shape mismatch");
    Tensor out({C, H, W});
    Tensor vmask = valid;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (vmask.at2(y, x) == 0.0) continue;
            double px = coords->value.at3(0, y, x) * (Wt - 1);
            double py = coords->value.at3(1, y, x) * (Ht - 1);
            px = std::min(static_cast<double>(Wt - 1), std::max(0.0, px));
            py = std::min(static_cast<double>(Ht - 1), std::max(0.0, py));
            int x0 = std::min(static_cast<int>(px), Wt - 2 >= 0 ? Wt - 2 : 0);
            int y0 = std::min(static_cast<int>(py), Ht - 2 >= 0 ? Ht - 2 : 0);
            int x1 = std::min(x0 + 1, Wt - 1);
            int y1 = std::min(y0 + 1, Ht - 1);
            double fx = px - x0, fy = py - y0;
            for (int c = 0; c < C; ++c) {
                double v00 = tex->value.at3(c, y0, x0), v01 = tex->value.at3(c, y0, x1);
                double v10 = tex->value.at3(c, y1, x0), v11 = tex->value.at3(c, y1, x1);
                out.at3(c, y, x) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                   fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }
    return make(std::move(out), {tex, coords}, [C, Ht, Wt, H, W, vmask](Node& n) {
        Node& pt = *n.parents[0];
        Node& pc = *n.parents[1];
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                if (vmask.at2(y, x) == 0.0) continue;
                double u = pc.value.at3(0, y, x);
                double v = pc.value.at3(1, y, x);
                double px = u * (Wt - 1), py = v * (Ht - 1);
                bool cx = px < 0.0 || px > Wt - 1; // clamped: no coord gradient
                bool cy = py < 0.0 || py > Ht - 1;
                px = std::min(static_cast<double>(Wt - 1), std::max(0.0, px));
                py = std::min(static_cast<double>(Ht - 1), std::max(0.0, py));
                int x0 = std::min(static_cast<int>(px), Wt - 2 >= 0 ? Wt - 2 : 0);
                int y0 = std::min(static_cast<int>(py), Ht - 2 >= 0 ? Ht - 2 : 0);
                int x1 = std::min(x0 + 1, Wt - 1);
                int y1 = std::min(y0 + 1, Ht - 1);
                double fx = px - x0, fy = py - y0;
                double gu = 0.0, gv = 0.0;
                for (int c = 0; c < C; ++c) {
                    double g = n.grad.at3(c, y, x);
                    if (g == 0.0) continue;
                    double v00 = pt.value.at3(c, y0, x0), v01 = pt.value.at3(c, y0, x1);
                    double v10 = pt.value.at3(c, y1, x0), v11 = pt.value.at3(c, y1, x1);
                    if (pt.requires_grad) {
                        pt.grad.at3(c, y0, x0) += g * (1 - fy) * (1 - fx);
                        pt.grad.at3(c, y0, x1) += g * (1 - fy) * fx;
                        pt.grad.at3(c, y1, x0) += g * fy * (1 - fx);
                        pt.grad.at3(c, y1, x1) += g * fy * fx;
                    }
                    gu += g * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                    gv += g * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                }
                if (pc.requires_grad) {
                    if (!cx) pc.grad.at3(0, y, x) += gu * (Wt - 1);
                    if (!cy) pc.grad.at3(1, y, x) += gv * (Ht - 1);
                }
            }
        }
    });
}

// ------------------------------------------------------------------- wavelet

Var haar_ll(const Var& x) {
    const auto& s = x->value.shape;
    if (s.size() != 3 || s[1] % 2 || s[2] % 2)
        throw std::invalid_argument("haar_ll: need even [C,H,W]");
    int C = s[0], H = s[1], W = s[2];
    Tensor out({C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int xx = 0; xx < W / 2; ++xx) {
                double a = x->value.at3(c, 2 * y, 2 * xx), b = x->value.at3(c, 2 * y, 2 * xx + 1);
                double cc = x->value.at3(c, 2 * y + 1, 2 * xx),
                       d = x->value.at3(c, 2 * y + 1, 2 * xx + 1);
                out.at3(c, y, xx) = 0.5 * (a + b + cc + d);
            }
    return make(std::move(out), {x}, [C, H, W](Node& n) {
        Node& p = *n.parents[0];
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H / 2; ++y)
                for (int xx = 0; xx < W / 2; ++xx) {
                    double g = 0.5 * n.grad.at3(c, y, xx);
                    p.grad.at3(c, 2 * y, 2 * xx) += g;
                    p.grad.at3(c, 2 * y, 2 * xx + 1) += g;
                    p.grad.at3(c, 2 * y + 1, 2 * xx) += g;
                    p.grad.at3(c, 2 * y + 1, 2 * xx + 1) += g;
                }
    });
}

Var haar_high(const Var& x) {
    const auto& s = x->value.shape;
    if (s.size() != 3 || s[1] % 2 || s[2] % 2)
        throw std::invalid_argument("haar_high: need even [C,H,W]");
    int C = s[0], H = s[1], W = s[2];
    Tensor out({3 * C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int xx = 0; xx < W / 2; ++xx) {
                double a = x->value.at3(c, 2 * y, 2 * xx), b = x->value.at3(c, 2 * y, 2 * xx + 1);
                double cc = x->value.at3(c, 2 * y + 1, 2 * xx),
                       d = x->value.at3(c, 2 * y + 1, 2 * xx + 1);
                out.at3(c, y, xx) = 0.5 * (a - b + cc - d);           // lh
                out.at3(C + c, y, xx) = 0.5 * (a + b - cc - d);       // hl
                out.at3(2 * C + c, y, xx) = 0.5 * (a - b - cc + d);   // hh
            }
    return make(std::move(out), {x}, [C, H, W](Node& n) {
        Node& p = *n.parents[0];
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H / 2; ++y)
                for (int xx = 0; xx < W / 2; ++xx) {
                    double glh = 0.5 * n.grad.at3(c, y, xx);
                    double ghl = 0.5 * n.grad.at3(C + c, y, xx);
                    double ghh = 0.5 * n.grad.at3(2 * C + c, y, xx);
                    p.grad.at3(c, 2 * y, 2 * xx) += glh + ghl + ghh;
                    p.grad.at3(c, 2 * y, 2 * xx + 1) += -glh + ghl - ghh;
                    p.grad.at3(c, 2 * y + 1, 2 * xx) += glh - ghl - ghh;
                    p.grad.at3(c, 2 * y + 1, 2 * xx + 1) += -glh - ghl + ghh;
                }
    });
}

} // namespace cfc::ad
