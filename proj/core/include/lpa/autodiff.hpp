#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lpa/tensor.hpp"

namespace lpa::nn {

struct Node;
using Var = std::shared_ptr<Node>;

/// One node of the reverse-mode tape. `backprop` scatters this node's grad
/// into the parents' grads; it is only installed when some parent requires
/// gradients and no-grad mode is off.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;

  const std::vector<int>& shape() const { return value.shape(); }
  void accumulate(const Tensor& g);
  Tensor& grad_ref();
};

Var make_var(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
Var scalar_var(Real v);

/// While alive, newly created ops do not record backprop closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

/// Reverse pass from a scalar root (seeds d(root)/d(root) = 1).
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, Real s);
Var mul_scalar(const Var& a, Real s);
Var mul_const(const Var& a, const Tensor& m);   // elementwise, constant factor
Var add_const(const Var& a, const Tensor& c);
Var relu(const Var& a);
Var leaky_relu(const Var& a, Real slope = 0.2);
Var softplus(const Var& a);
Var sigmoid(const Var& a);
Var tanh_v(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var square(const Var& a);
Var abs_v(const Var& a);

// ---- shape ----
Var reshape(const Var& a, std::vector<int> shape);
Var transpose2d(const Var& a);  // [M,N] -> [N,M]
Var slice_cols(const Var& a, int c0, int c1);  // 2D [M, N] -> [M, c1-c0]
Var concat_cols(const Var& a, const Var& b);   // 2D
Var concat_channels(const Var& a, const Var& b);  // [B,C,H,W]
Var broadcast_batch(const Var& a, int batch);     // [...] -> [batch, ...]
Var concat_batch(const std::vector<Var>& items);  // k x [1,...] -> [k,...]
/// Value copy cut off from the tape.
Var detach(const Var& a);

// ---- reductions ----
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_cols(const Var& a);  // 2D [M,N] -> [M,1]
Var mean_rows(const Var& a); // 2D [M,N] -> [1,N]

// ---- linear algebra / nets ----
Var matmul(const Var& a, const Var& b);            // [M,K]x[K,N]
Var add_row_bias(const Var& a, const Var& bias);   // [M,N] + [N]
Var linear(const Var& x, const Var& w, const Var& b);  // x[M,K], w[K,N], b[N]

/// [B,Cin,H,W] * w[Cout,Cin,k,k] + b[Cout], zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = -1);
Var upsample2x(const Var& x);          // nearest neighbor, [B,C,H,W]
Var global_avg_pool(const Var& x);     // [B,C,H,W] -> [B,C]
Var add_channel_bias(const Var& x, const Var& b);        // [B,C,H,W] + [C]
Var scale_channels(const Var& x, const Var& s);          // [B,C,H,W] * [B,C]
Var shift_channels(const Var& x, const Var& s);          // [B,C,H,W] + [B,C]

/// Softmax cross-entropy per row against integer targets; returns [M,1].
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& targets);
/// Row-wise softmax probabilities (value path; differentiable).
Var softmax_rows(const Var& logits);

/// Bilinear sample of a [C,N,N] plane at M normalized coords in [-1,1]^2
/// (align-corners). Returns [M,C]. Out-of-range coords clamp to the border.
Var grid_sample_plane(const Var& plane, const Eigen::Matrix<Real, Eigen::Dynamic, 2,
                      Eigen::RowMajor>& coords);

/// Emission-absorption quadrature over S samples per ray.
/// sigma [R,S] (nonnegative), color [R,S*3] in [0,1], t/delta [R,S] constants.
/// Returns [R,5]: columns 0..2 rgb composited on bg, 3 depth (far-completed),
/// 4 accumulated opacity.
Var volume_integrate(const Var& sigma, const Var& color, const Tensor& t,
                     const Tensor& delta, Real far, const Real bg[3]);

}  // namespace lpa::nn
