#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cfc/tensor.hpp"

namespace cfc::ad {

// Reverse-mode autodiff over Tensor. A Node owns its forward value and (after
// backward()) the gradient of the scalar root with respect to it. Graphs are
// built per forward pass on top of persistent leaf nodes that hold network
// parameters.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad; // allocated lazily in backward()
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop; // scatter node.grad into parents' grads

    explicit Node(Tensor v, bool req = false) : value(std::move(v)), requires_grad(req) {}
};

Var constant(Tensor t);
Var leaf(Tensor t); // requires_grad leaf (network parameter)

// Runs reverse accumulation from a scalar root. Gradients accumulate into
// node.grad for every reachable node with requires_grad.
void backward(const Var& root);

// ---- elementwise / arithmetic ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);           // elementwise, same shape
Var mul_const(const Var& a, const Tensor& m);  // elementwise by a constant mask
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var abs(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi); // zero gradient outside [lo, hi]
Var log(const Var& a);                         // caller guarantees positivity (clamp first)

// ---- reductions ----
Var sum(const Var& a);  // -> scalar [1]
Var mean(const Var& a); // -> scalar [1]
Var spatial_mean(const Var& a); // [C,H,W] -> [C], per-channel average pool

// sum of n scalar vars
Var add_n(const std::vector<Var>& xs);

// ---- activations ----
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);

// ---- shaping ----
Var reshape(const Var& a, std::vector<int> shape);
Var concat_c(const Var& a, const Var& b); // along channel dim of [C,H,W]
Var slice_c(const Var& a, int c0, int c1);

// ---- dense / conv layers ----
// y[M] = W[M,N] x[N] + b[M]
Var linear(const Var& w, const Var& b, const Var& x);

// x:[Ci,H,W], w:[Co,Ci,k,k], b:[Co]; zero padding `pad`, stride `stride`
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

Var upsample2(const Var& x); // nearest-neighbor 2x

// stable softmax cross-entropy of a logit vector against an integer label
Var softmax_ce(const Var& logits, int label);

// x / max(||x||, eps) for a vector
Var l2_normalize(const Var& x, double eps = 1e-12);

// ---- sampling / wavelet ----
// tex:[C,Ht,Wt], coords:[2,H,W] with (u,v) in [0,1]^2, valid:[H,W] 0/1 mask.
// Bilinear sample at (u*(Wt-1), v*(Ht-1)); coords clamped to the texture
// border; invalid pixels output 0. Differentiable in tex and coords.
Var grid_sample(const Var& tex, const Var& coords, const Tensor& valid);

// One-level orthonormal Haar bands of [C,H,W] (H, W even).
Var haar_ll(const Var& x);   // -> [C,H/2,W/2]
Var haar_high(const Var& x); // -> [3C,H/2,W/2] as (lh, hl, hh) channel blocks

} // namespace cfc::ad
