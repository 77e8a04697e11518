#include "lpa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace lpa::nn {

namespace {

thread_local int g_no_grad_depth = 0;

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool req = false;
  if (g_no_grad_depth == 0) {
    for (const auto& p : parents) req = req || (p && p->requires_grad);
  }
  n->requires_grad = req;
  if (req) {
    n->parents = std::move(parents);
    n->backprop = std::move(fn);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->value.size() != b->value.size()) {
    throw std::invalid_argument(std::string(op) + ": operand size mismatch");
  }
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) grad = Tensor(value.shape());
  grad.add_(g);
}

Tensor& Node::grad_ref() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var make_var(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_no_grad_depth == 0;
  return n;
}

Var constant(Tensor value) { return make_var(std::move(value), false); }
Var scalar_var(Real v) { return constant(Tensor::scalar(v)); }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

void backward(const Var& root) {
  if (!root || root->value.size() != 1) {
    throw std::logic_error("backward: root must be a scalar");
  }
  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_ref().fill(Real(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  out.vec() += b->value.vec();
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) b->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  out.vec() -= b->value.vec();
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) {
      Tensor g = n.grad;
      g.vec() *= Real(-1);
      b->accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  out.vec() = out.vec().cwiseProduct(b->value.vec());
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor g = n.grad;
      g.vec() = g.vec().cwiseProduct(b->value.vec());
      a->accumulate(g);
    }
    if (b->requires_grad) {
      Tensor g = n.grad;
      g.vec() = g.vec().cwiseProduct(a->value.vec());
      b->accumulate(g);
    }
  });
}

Var neg(const Var& a) { return mul_scalar(a, Real(-1)); }

Var add_scalar(const Var& a, Real s) {
  Tensor out = a->value;
  out.vec().array() += s;
  return make_op(std::move(out), {a}, [a](Node& n) { a->accumulate(n.grad); });
}

Var mul_scalar(const Var& a, Real s) {
  Tensor out = a->value;
  out.vec() *= s;
  return make_op(std::move(out), {a}, [a, s](Node& n) {
    Tensor g = n.grad;
    g.vec() *= s;
    a->accumulate(g);
  });
}

Var mul_const(const Var& a, const Tensor& m) {
  if (m.size() != a->value.size()) throw std::invalid_argument("mul_const: size mismatch");
  Tensor out = a->value;
  out.vec() = out.vec().cwiseProduct(m.vec());
  return make_op(std::move(out), {a}, [a, m](Node& n) {
    Tensor g = n.grad;
    g.vec() = g.vec().cwiseProduct(m.vec());
    a->accumulate(g);
  });
}

Var add_const(const Var& a, const Tensor& c) {
  if (c.size() != a->value.size()) throw std::invalid_argument("add_const: size mismatch");
  Tensor out = a->value;
  out.vec() += c.vec();
  return make_op(std::move(out), {a}, [a](Node& n) { a->accumulate(n.grad); });
}

namespace {

template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF df, const char*) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
  return make_op(std::move(out), {a}, [a, df](Node& n) {
    Tensor g = n.grad;
    const Tensor& x = a->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= df(x[i]);
    a->accumulate(g);
  });
}

}  // namespace

Var relu(const Var& a) {
  return unary_op(
      a, [](Real x) { return x > 0 ? x : Real(0); },
      [](Real x) { return x > 0 ? Real(1) : Real(0); }, "relu");
}

Var leaky_relu(const Var& a, Real slope) {
  return unary_op(
      a, [slope](Real x) { return x > 0 ? x : slope * x; },
      [slope](Real x) { return x > 0 ? Real(1) : slope; }, "leaky_relu");
}

Var softplus(const Var& a) {
  return unary_op(
      a,
      [](Real x) { return std::max(x, Real(0)) + std::log1p(std::exp(-std::abs(x))); },
      [](Real x) { return Real(1) / (Real(1) + std::exp(-x)); }, "softplus");
}

Var sigmoid(const Var& a) {
  return unary_op(
      a, [](Real x) { return Real(1) / (Real(1) + std::exp(-x)); },
      [](Real x) {
        const Real s = Real(1) / (Real(1) + std::exp(-x));
        return s * (Real(1) - s);
      },
      "sigmoid");
}

Var tanh_v(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::tanh(x); },
      [](Real x) {
        const Real t = std::tanh(x);
        return Real(1) - t * t;
      },
      "tanh");
}

Var exp_v(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::exp(x); }, [](Real x) { return std::exp(x); }, "exp");
}

Var log_v(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::log(x); }, [](Real x) { return Real(1) / x; }, "log");
}

Var square(const Var& a) {
  return unary_op(
      a, [](Real x) { return x * x; }, [](Real x) { return Real(2) * x; }, "square");
}

Var abs_v(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::abs(x); },
      [](Real x) { return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0)); }, "abs");
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  return make_op(std::move(out), {a}, [a](Node& n) {
    a->accumulate(n.grad.reshaped(a->value.shape()));
  });
}

Var transpose2d(const Var& a) {
  const int m = a->value.dim(0);
  const int n = static_cast<int>(a->value.size()) / m;
  Tensor out({n, m});
  out.mat2d() = a->value.mat(m, n).transpose();
  return make_op(std::move(out), {a}, [a, m, n](Node& nd) {
    Tensor g(a->value.shape());
    g.mat(m, n) = nd.grad.mat(n, m).transpose();
    a->accumulate(g);
  });
}

Var slice_cols(const Var& a, int c0, int c1) {
  const int rows = a->value.dim(0);
  const int cols = static_cast<int>(a->value.size()) / rows;
  if (c0 < 0 || c1 > cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  Tensor out({rows, c1 - c0});
  out.mat2d() = a->value.mat(rows, cols).middleCols(c0, c1 - c0);
  return make_op(std::move(out), {a}, [a, rows, cols, c0, c1](Node& n) {
    Tensor g(a->value.shape());
    g.mat(rows, cols).middleCols(c0, c1 - c0) = n.grad.mat2d();
    a->accumulate(g);
  });
}

Var concat_cols(const Var& a, const Var& b) {
  const int rows = a->value.dim(0);
  if (b->value.dim(0) != rows) throw std::invalid_argument("concat_cols: row mismatch");
  const int ca = static_cast<int>(a->value.size()) / rows;
  const int cb = static_cast<int>(b->value.size()) / rows;
  Tensor out({rows, ca + cb});
  out.mat2d().leftCols(ca) = a->value.mat(rows, ca);
  out.mat2d().rightCols(cb) = b->value.mat(rows, cb);
  return make_op(std::move(out), {a, b}, [a, b, rows, ca, cb](Node& n) {
    if (a->requires_grad) {
      Tensor g(a->value.shape());
      g.mat(rows, ca) = n.grad.mat2d().leftCols(ca);
      a->accumulate(g);
    }
    if (b->requires_grad) {
      Tensor g(b->value.shape());
      g.mat(rows, cb) = n.grad.mat2d().rightCols(cb);
      b->accumulate(g);
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw std::invalid_argument("concat_channels: shape mismatch");
  }
  const int B = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor out({B, Ca + Cb, H, W});
  for (int bi = 0; bi < B; ++bi) {
    std::copy_n(a->value.data() + bi * Ca * hw, Ca * hw, out.data() + bi * (Ca + Cb) * hw);
    std::copy_n(b->value.data() + bi * Cb * hw, Cb * hw,
                out.data() + bi * (Ca + Cb) * hw + Ca * hw);
  }
  return make_op(std::move(out), {a, b}, [a, b, B, Ca, Cb, hw](Node& n) {
    if (a->requires_grad) {
      Tensor g(a->value.shape());
      for (int bi = 0; bi < B; ++bi) {
        CMapVec src(n.grad.data() + bi * (Ca + Cb) * hw, static_cast<Eigen::Index>(Ca * hw));
        MapVec(g.data() + bi * Ca * hw, static_cast<Eigen::Index>(Ca * hw)) = src;
      }
      a->accumulate(g);
    }
    if (b->requires_grad) {
      Tensor g(b->value.shape());
      for (int bi = 0; bi < B; ++bi) {
        CMapVec src(n.grad.data() + bi * (Ca + Cb) * hw + Ca * hw,
                    static_cast<Eigen::Index>(Cb * hw));
        MapVec(g.data() + bi * Cb * hw, static_cast<Eigen::Index>(Cb * hw)) = src;
      }
      b->accumulate(g);
    }
  });
}

Var broadcast_batch(const Var& a, int batch) {
  std::vector<int> shape = a->value.shape();
  shape.insert(shape.begin(), batch);
  Tensor out(shape);
  const std::size_t n = a->value.size();
  for (int bi = 0; bi < batch; ++bi) {
    std::copy_n(a->value.data(), n, out.data() + static_cast<std::size_t>(bi) * n);
  }
  return make_op(std::move(out), {a}, [a, batch, n](Node& g_node) {
    Tensor g(a->value.shape());
    for (int bi = 0; bi < batch; ++bi) {
      g.vec() += CMapVec(g_node.grad.data() + static_cast<std::size_t>(bi) * n,
                         static_cast<Eigen::Index>(n));
    }
    a->accumulate(g);
  });
}

Var concat_batch(const std::vector<Var>& items) {
  if (items.empty()) throw std::invalid_argument("concat_batch: empty list");
  const std::size_t per = items[0]->value.size();
  std::vector<int> shape = items[0]->value.shape();
  if (shape.empty() || shape[0] != 1) throw std::invalid_argument("concat_batch: leading dim must be 1");
  shape[0] = static_cast<int>(items.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->value.size() != per) throw std::invalid_argument("concat_batch: size mismatch");
    std::copy_n(items[i]->value.data(), per, out.data() + i * per);
  }
  std::vector<Var> parents(items.begin(), items.end());
  return make_op(std::move(out), parents, [items, per](Node& n) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!items[i]->requires_grad) continue;
      Tensor g(items[i]->value.shape());
      std::copy_n(n.grad.data() + i * per, per, g.data());
      items[i]->accumulate(g);
    }
  });
}

Var detach(const Var& a) { return constant(a->value); }

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum(const Var& a) {
  Tensor out = Tensor::scalar(a->value.vec().sum());
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor g(a->value.shape());
    g.vec().array() = n.grad[0];
    a->accumulate(g);
  });
}

Var mean(const Var& a) {
  const Real inv = Real(1) / static_cast<Real>(a->value.size());
  Tensor out = Tensor::scalar(a->value.vec().sum() * inv);
  return make_op(std::move(out), {a}, [a, inv](Node& n) {
    Tensor g(a->value.shape());
    g.vec().array() = n.grad[0] * inv;
    a->accumulate(g);
  });
}

Var sum_cols(const Var& a) {
  const int rows = a->value.dim(0);
  const int cols = static_cast<int>(a->value.size()) / rows;
  Tensor out({rows, 1});
  out.vec() = a->value.mat(rows, cols).rowwise().sum();
  return make_op(std::move(out), {a}, [a, rows, cols](Node& n) {
    Tensor g(a->value.shape());
    g.mat(rows, cols).colwise() = n.grad.vec();
    a->accumulate(g);
  });
}

Var mean_rows(const Var& a) {
  const int rows = a->value.dim(0);
  const int cols = static_cast<int>(a->value.size()) / rows;
  const Real inv = Real(1) / static_cast<Real>(rows);
  Tensor out({1, cols});
  out.vec() = a->value.mat(rows, cols).colwise().sum().transpose() * inv;
  return make_op(std::move(out), {a}, [a, rows, cols, inv](Node& n) {
    Tensor g(a->value.shape());
    g.mat(rows, cols).rowwise() = n.grad.vec().transpose() * inv;
    a->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// linear algebra / nets
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const int m = a->value.dim(0);
  const int k = static_cast<int>(a->value.size()) / m;
  const int k2 = b->value.dim(0);
  const int n = static_cast<int>(b->value.size()) / k2;
  if (k != k2) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tensor out({m, n});
  out.mat2d().noalias() = a->value.mat(m, k) * b->value.mat(k, n);
  return make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
    if (a->requires_grad) {
      Tensor g(a->value.shape());
      g.mat(m, k).noalias() = nd.grad.mat(m, n) * b->value.mat(k, n).transpose();
      a->accumulate(g);
    }
    if (b->requires_grad) {
      Tensor g(b->value.shape());
      g.mat(k, n).noalias() = a->value.mat(m, k).transpose() * nd.grad.mat(m, n);
      b->accumulate(g);
    }
  });
}

Var add_row_bias(const Var& a, const Var& bias) {
  const int m = a->value.dim(0);
  const int n = static_cast<int>(a->value.size()) / m;
  if (static_cast<int>(bias->value.size()) != n) {
    throw std::invalid_argument("add_row_bias: bias size mismatch");
  }
  Tensor out = a->value;
  out.mat(m, n).rowwise() += bias->value.vec().transpose();
  return make_op(std::move(out), {a, bias}, [a, bias, m, n](Node& nd) {
    if (a->requires_grad) a->accumulate(nd.grad);
    if (bias->requires_grad) {
      Tensor g(bias->value.shape());
      g.vec() = nd.grad.mat(m, n).colwise().sum().transpose();
      bias->accumulate(g);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  return add_row_bias(matmul(x, w), b);
}

namespace {

struct ConvDims {
  int B, Cin, H, W, Cout, k, stride, pad, Ho, Wo;
};

ConvDims conv_dims(const Var& x, const Var& w, int stride, int pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4) throw std::invalid_argument("conv2d: rank mismatch");
  if (xs[1] != ws[1]) throw std::invalid_argument("conv2d: channel mismatch");
  ConvDims d;
  d.B = xs[0];
  d.Cin = xs[1];
  d.H = xs[2];
  d.W = xs[3];
  d.Cout = ws[0];
  d.k = ws[2];
  d.stride = stride;
  d.pad = pad < 0 ? d.k / 2 : pad;
  d.Ho = (d.H + 2 * d.pad - d.k) / d.stride + 1;
  d.Wo = (d.W + 2 * d.pad - d.k) / d.stride + 1;
  return d;
}

// col layout: [Cin*k*k, Ho*Wo], row-major.
void im2col(const Real* x, const ConvDims& d, Real* col) {
  const int khw = d.k * d.k;
  for (int c = 0; c < d.Cin; ++c) {
    for (int ki = 0; ki < d.k; ++ki) {
      for (int kj = 0; kj < d.k; ++kj) {
        Real* dst = col + (static_cast<std::size_t>(c) * khw + ki * d.k + kj) *
                              (static_cast<std::size_t>(d.Ho) * d.Wo);
        for (int ho = 0; ho < d.Ho; ++ho) {
          const int hi = ho * d.stride - d.pad + ki;
          for (int wo = 0; wo < d.Wo; ++wo) {
            const int wi = wo * d.stride - d.pad + kj;
            const bool in = hi >= 0 && hi < d.H && wi >= 0 && wi < d.W;
            dst[ho * d.Wo + wo] =
                in ? x[(static_cast<std::size_t>(c) * d.H + hi) * d.W + wi] : Real(0);
          }
        }
      }
    }
  }
}

void col2im_add(const Real* col, const ConvDims& d, Real* x) {
  const int khw = d.k * d.k;
  for (int c = 0; c < d.Cin; ++c) {
    for (int ki = 0; ki < d.k; ++ki) {
      for (int kj = 0; kj < d.k; ++kj) {
        const Real* src = col + (static_cast<std::size_t>(c) * khw + ki * d.k + kj) *
                                    (static_cast<std::size_t>(d.Ho) * d.Wo);
        for (int ho = 0; ho < d.Ho; ++ho) {
          const int hi = ho * d.stride - d.pad + ki;
          if (hi < 0 || hi >= d.H) continue;
          for (int wo = 0; wo < d.Wo; ++wo) {
            const int wi = wo * d.stride - d.pad + kj;
            if (wi < 0 || wi >= d.W) continue;
            x[(static_cast<std::size_t>(c) * d.H + hi) * d.W + wi] += src[ho * d.Wo + wo];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  const int ck = d.Cin * d.k * d.k;
  const std::size_t howo = static_cast<std::size_t>(d.Ho) * d.Wo;
  const std::size_t in_sz = static_cast<std::size_t>(d.Cin) * d.H * d.W;
  const std::size_t out_sz = static_cast<std::size_t>(d.Cout) * howo;

  auto cols = std::make_shared<std::vector<Tensor>>();
  cols->reserve(static_cast<std::size_t>(d.B));
  Tensor out({d.B, d.Cout, d.Ho, d.Wo});
  for (int bi = 0; bi < d.B; ++bi) {
    Tensor col({ck, static_cast<int>(howo)});
    im2col(x->value.data() + bi * in_sz, d, col.data());
    MapMat(out.data() + bi * out_sz, d.Cout, static_cast<Eigen::Index>(howo)).noalias() =
        w->value.mat(d.Cout, ck) * col.mat2d();
    if (!b->value.empty()) {
      MapMat(out.data() + bi * out_sz, d.Cout, static_cast<Eigen::Index>(howo)).colwise() +=
          b->value.vec();
    }
    cols->push_back(std::move(col));
  }
  return make_op(std::move(out), {x, w, b}, [x, w, b, d, ck, howo, in_sz, out_sz,
                                             cols](Node& n) {
    for (int bi = 0; bi < d.B; ++bi) {
      CMapMat dy(n.grad.data() + bi * out_sz, d.Cout, static_cast<Eigen::Index>(howo));
      if (w->requires_grad) {
        Tensor gw(w->value.shape());
        gw.mat(d.Cout, ck).noalias() = dy * (*cols)[static_cast<std::size_t>(bi)].mat2d().transpose();
        w->accumulate(gw);
      }
      if (b->requires_grad && !b->value.empty()) {
        Tensor gb(b->value.shape());
        gb.vec() = dy.rowwise().sum();
        b->accumulate(gb);
      }
      if (x->requires_grad) {
        Tensor dcol({ck, static_cast<int>(howo)});
        dcol.mat2d().noalias() = w->value.mat(d.Cout, ck).transpose() * dy;
        Tensor gx({d.Cin, d.H, d.W});
        col2im_add(dcol.data(), d, gx.data());
        if (x->grad.empty()) x->grad = Tensor(x->value.shape());
        MapVec(x->grad.data() + bi * in_sz, static_cast<Eigen::Index>(in_sz)) += gx.vec();
      }
    }
  });
}

Var upsample2x(const Var& x) {
  const auto& s = x->value.shape();
  if (s.size() != 4) throw std::invalid_argument("upsample2x: rank mismatch");
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  Tensor out({B, C, 2 * H, 2 * W});
  for (int bc = 0; bc < B * C; ++bc) {
    const Real* src = x->value.data() + static_cast<std::size_t>(bc) * H * W;
    Real* dst = out.data() + static_cast<std::size_t>(bc) * 4 * H * W;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const Real v = src[i * W + j];
        dst[(2 * i) * 2 * W + 2 * j] = v;
        dst[(2 * i) * 2 * W + 2 * j + 1] = v;
        dst[(2 * i + 1) * 2 * W + 2 * j] = v;
        dst[(2 * i + 1) * 2 * W + 2 * j + 1] = v;
      }
    }
  }
  return make_op(std::move(out), {x}, [x, B, C, H, W](Node& n) {
    Tensor g(x->value.shape());
    for (int bc = 0; bc < B * C; ++bc) {
      const Real* src = n.grad.data() + static_cast<std::size_t>(bc) * 4 * H * W;
      Real* dst = g.data() + static_cast<std::size_t>(bc) * H * W;
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          dst[i * W + j] = src[(2 * i) * 2 * W + 2 * j] + src[(2 * i) * 2 * W + 2 * j + 1] +
                           src[(2 * i + 1) * 2 * W + 2 * j] +
                           src[(2 * i + 1) * 2 * W + 2 * j + 1];
        }
      }
    }
    x->accumulate(g);
  });
}

Var global_avg_pool(const Var& x) {
  const auto& s = x->value.shape();
  if (s.size() != 4) throw std::invalid_argument("global_avg_pool: rank mismatch");
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  const Real inv = Real(1) / static_cast<Real>(H * W);
  Tensor out({B, C});
  for (int bc = 0; bc < B * C; ++bc) {
    out[static_cast<std::size_t>(bc)] =
        CMapVec(x->value.data() + static_cast<std::size_t>(bc) * H * W, H * W).sum() * inv;
  }
  return make_op(std::move(out), {x}, [x, B, C, H, W, inv](Node& n) {
    Tensor g(x->value.shape());
    for (int bc = 0; bc < B * C; ++bc) {
      MapVec(g.data() + static_cast<std::size_t>(bc) * H * W, H * W).array() =
          n.grad[static_cast<std::size_t>(bc)] * inv;
    }
    x->accumulate(g);
  });
}

Var add_channel_bias(const Var& x, const Var& b) {
  const auto& s = x->value.shape();
  if (s.size() != 4) throw std::invalid_argument("add_channel_bias: rank mismatch");
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  if (static_cast<int>(b->value.size()) != C) {
    throw std::invalid_argument("add_channel_bias: bias size mismatch");
  }
  Tensor out = x->value;
  for (int bi = 0; bi < B; ++bi) {
    for (int c = 0; c < C; ++c) {
      MapVec(out.data() + (static_cast<std::size_t>(bi) * C + c) * H * W, H * W).array() +=
          b->value[static_cast<std::size_t>(c)];
    }
  }
  return make_op(std::move(out), {x, b}, [x, b, B, C, H, W](Node& n) {
    if (x->requires_grad) x->accumulate(n.grad);
    if (b->requires_grad) {
      Tensor g(b->value.shape());
      for (int bi = 0; bi < B; ++bi) {
        for (int c = 0; c < C; ++c) {
          g[static_cast<std::size_t>(c)] +=
              CMapVec(n.grad.data() + (static_cast<std::size_t>(bi) * C + c) * H * W, H * W)
                  .sum();
        }
      }
      b->accumulate(g);
    }
  });
}

namespace {

Var channel_affine(const Var& x, const Var& s, bool multiply) {
  const auto& xs = x->value.shape();
  if (xs.size() != 4) throw std::invalid_argument("channel_affine: rank mismatch");
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (static_cast<int>(s->value.size()) != B * C) {
    throw std::invalid_argument("channel_affine: scale size mismatch");
  }
  Tensor out = x->value;
  for (int bc = 0; bc < B * C; ++bc) {
    auto seg = MapVec(out.data() + static_cast<std::size_t>(bc) * H * W, H * W);
    if (multiply) {
      seg *= s->value[static_cast<std::size_t>(bc)];
    } else {
      seg.array() += s->value[static_cast<std::size_t>(bc)];
    }
  }
  return make_op(std::move(out), {x, s}, [x, s, B, C, H, W, multiply](Node& n) {
    if (x->requires_grad) {
      Tensor g = n.grad;
      if (multiply) {
        for (int bc = 0; bc < B * C; ++bc) {
          MapVec(g.data() + static_cast<std::size_t>(bc) * H * W, H * W) *=
              s->value[static_cast<std::size_t>(bc)];
        }
      }
      x->accumulate(g);
    }
    if (s->requires_grad) {
      Tensor g(s->value.shape());
      for (int bc = 0; bc < B * C; ++bc) {
        auto dy = CMapVec(n.grad.data() + static_cast<std::size_t>(bc) * H * W, H * W);
        if (multiply) {
          g[static_cast<std::size_t>(bc)] =
              dy.cwiseProduct(CMapVec(x->value.data() + static_cast<std::size_t>(bc) * H * W,
                                      H * W))
                  .sum();
        } else {
          g[static_cast<std::size_t>(bc)] = dy.sum();
        }
      }
      s->accumulate(g);
    }
  });
}

}  // namespace

Var scale_channels(const Var& x, const Var& s) { return channel_affine(x, s, true); }
Var shift_channels(const Var& x, const Var& s) { return channel_affine(x, s, false); }

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& targets) {
  const int m = logits->value.dim(0);
  const int k = static_cast<int>(logits->value.size()) / m;
  if (static_cast<int>(targets.size()) != m) {
    throw std::invalid_argument("softmax_cross_entropy: target count mismatch");
  }
  Tensor out({m, 1});
  auto lm = logits->value.mat(m, k);
  for (int i = 0; i < m; ++i) {
    const Real mx = lm.row(i).maxCoeff();
    const Real lse = std::log((lm.row(i).array() - mx).exp().sum()) + mx;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= k) throw std::invalid_argument("softmax_cross_entropy: bad target");
    out[static_cast<std::size_t>(i)] = lse - lm(i, t);
  }
  return make_op(std::move(out), {logits}, [logits, targets, m, k](Node& n) {
    Tensor g(logits->value.shape());
    auto gm = g.mat(m, k);
    auto lm2 = logits->value.mat(m, k);
    for (int i = 0; i < m; ++i) {
      const Real mx = lm2.row(i).maxCoeff();
      Eigen::Array<Real, 1, Eigen::Dynamic> p = (lm2.row(i).array() - mx).exp();
      p /= p.sum();
      gm.row(i) = p.matrix() * n.grad[static_cast<std::size_t>(i)];
      gm(i, targets[static_cast<std::size_t>(i)]) -= n.grad[static_cast<std::size_t>(i)];
    }
    logits->accumulate(g);
  });
}

Var softmax_rows(const Var& logits) {
  const int m = logits->value.dim(0);
  const int k = static_cast<int>(logits->value.size()) / m;
  Tensor out({m, k});
  auto lm = logits->value.mat(m, k);
  auto om = out.mat2d();
  for (int i = 0; i < m; ++i) {
    const Real mx = lm.row(i).maxCoeff();
    Eigen::Array<Real, 1, Eigen::Dynamic> p = (lm.row(i).array() - mx).exp();
    om.row(i) = (p / p.sum()).matrix();
  }
  return make_op(std::move(out), {logits}, [logits, m, k](Node& n) {
    Tensor g(logits->value.shape());
    auto gm = g.mat(m, k);
    auto ym = n.value.mat(m, k);
    auto dy = n.grad.mat(m, k);
    for (int i = 0; i < m; ++i) {
      const Real dot = dy.row(i).cwiseProduct(ym.row(i)).sum();
      gm.row(i) = ym.row(i).cwiseProduct(
          (dy.row(i).array() - dot).matrix());
    }
    logits->accumulate(g);
  });
}

Var grid_sample_plane(const Var& plane,
                      const Eigen::Matrix<Real, Eigen::Dynamic, 2, Eigen::RowMajor>& coords) {
  const auto& s = plane->value.shape();
  if (s.size() != 3 || s[1] != s[2] || s[1] < 2) {
    throw std::invalid_argument("grid_sample_plane: bad plane");
  }
  const int C = s[0], N = s[1];
  const auto M = static_cast<int>(coords.rows());
  Tensor out({M, C});
  const Real* pd = plane->value.data();
  const std::size_t nn = static_cast<std::size_t>(N) * N;

  struct Tap {
    int i00, i01, i10, i11;
    Real w00, w01, w10, w11;
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(M));
  for (int mI = 0; mI < M; ++mI) {
    const Real gx = std::clamp((coords(mI, 0) + Real(1)) / Real(2) * (N - 1), Real(0), Real(N - 1));
    const Real gy = std::clamp((coords(mI, 1) + Real(1)) / Real(2) * (N - 1), Real(0), Real(N - 1));
    const int x0 = std::min(static_cast<int>(gx), N - 2 >= 0 ? N - 2 : 0);
    const int y0 = std::min(static_cast<int>(gy), N - 2 >= 0 ? N - 2 : 0);
    const Real fx = gx - x0, fy = gy - y0;
    Tap t;
    t.i00 = y0 * N + x0;
    t.i01 = y0 * N + x0 + 1;
    t.i10 = (y0 + 1) * N + x0;
    t.i11 = (y0 + 1) * N + x0 + 1;
    t.w00 = (1 - fy) * (1 - fx);
    t.w01 = (1 - fy) * fx;
    t.w10 = fy * (1 - fx);
    t.w11 = fy * fx;
    (*taps)[static_cast<std::size_t>(mI)] = t;
    for (int c = 0; c < C; ++c) {
      const Real* pc = pd + static_cast<std::size_t>(c) * nn;
      out[static_cast<std::size_t>(mI) * C + c] =
          t.w00 * pc[t.i00] + t.w01 * pc[t.i01] + t.w10 * pc[t.i10] + t.w11 * pc[t.i11];
    }
  }
  return make_op(std::move(out), {plane}, [plane, taps, C, nn, M](Node& n) {
    Tensor g(plane->value.shape());
    Real* gd = g.data();
    for (int mI = 0; mI < M; ++mI) {
      const Tap& t = (*taps)[static_cast<std::size_t>(mI)];
      for (int c = 0; c < C; ++c) {
        const Real dy = n.grad[static_cast<std::size_t>(mI) * C + c];
        Real* gc = gd + static_cast<std::size_t>(c) * nn;
        gc[t.i00] += t.w00 * dy;
        gc[t.i01] += t.w01 * dy;
        gc[t.i10] += t.w10 * dy;
        gc[t.i11] += t.w11 * dy;
      }
    }
    plane->accumulate(g);
  });
}

Var volume_integrate(const Var& sigma, const Var& color, const Tensor& t,
                     const Tensor& delta, Real far, const Real bg[3]) {
  const int R = sigma->value.dim(0);
  const int S = static_cast<int>(sigma->value.size()) / R;
  if (color->value.size() != static_cast<std::size_t>(R) * S * 3 ||
      t.size() != sigma->value.size() || delta.size() != sigma->value.size()) {
    throw std::invalid_argument("volume_integrate: shape mismatch");
  }
  // transmittance[r*(S+1) + i] = prod_{j<i} exp(-sigma_j * delta_j)
  auto trans = std::make_shared<Tensor>(Tensor({R, S + 1}));
  Tensor out({R, 5});
  const Real* sg = sigma->value.data();
  const Real* cl = color->value.data();
  const Real* td = t.data();
  const Real* dd = delta.data();
  Real* tr = trans->data();
  for (int r = 0; r < R; ++r) {
    Real T = 1;
    Real rgb[3] = {0, 0, 0};
    Real depth = 0;
    tr[r * (S + 1)] = 1;
    for (int i = 0; i < S; ++i) {
      const std::size_t idx = static_cast<std::size_t>(r) * S + i;
      const Real Tn = T * std::exp(-sg[idx] * dd[idx]);
      const Real w = T - Tn;
      for (int ch = 0; ch < 3; ++ch) rgb[ch] += w * cl[idx * 3 + ch];
      depth += w * td[idx];
      T = Tn;
      tr[r * (S + 1) + i + 1] = Tn;
    }
    out[static_cast<std::size_t>(r) * 5 + 0] = rgb[0] + T * bg[0];
    out[static_cast<std::size_t>(r) * 5 + 1] = rgb[1] + T * bg[1];
    out[static_cast<std::size_t>(r) * 5 + 2] = rgb[2] + T * bg[2];
    out[static_cast<std::size_t>(r) * 5 + 3] = depth + T * far;
    out[static_cast<std::size_t>(r) * 5 + 4] = 1 - T;
  }
  const Real bg0 = bg[0], bg1 = bg[1], bg2 = bg[2];
  return make_op(std::move(out), {sigma, color},
                 [sigma, color, t, delta, far, bg0, bg1, bg2, trans, R, S](Node& n) {
    const Real* sgv = sigma->value.data();
    (void)sgv;
    const Real* cl = color->value.data();
    const Real* td = t.data();
    const Real* dd = delta.data();
    const Real* tr = trans->data();
    Tensor gs(sigma->value.shape());
    Tensor gc(color->value.shape());
    for (int r = 0; r < R; ++r) {
      const Real* g = n.grad.data() + static_cast<std::size_t>(r) * 5;
      const Real q = g[0] * bg0 + g[1] * bg1 + g[2] * bg2 + g[3] * far - g[4];
      const Real t_end = tr[r * (S + 1) + S];
      // suffix sums of w_i * p_i where p_i is the upstream-weighted sample term
      Real suffix = 0;
      // First pass (reverse) accumulates dA_k = T_{k+1} p_k - suffix_{k+1} - T_S q.
      for (int i = S - 1; i >= 0; --i) {
        const std::size_t idx = static_cast<std::size_t>(r) * S + i;
        const Real w = tr[r * (S + 1) + i] - tr[r * (S + 1) + i + 1];
        const Real p = g[0] * cl[idx * 3] + g[1] * cl[idx * 3 + 1] + g[2] * cl[idx * 3 + 2] +
                       g[3] * td[idx];
        const Real dA = tr[r * (S + 1) + i + 1] * p - suffix - t_end * q;
        gs[idx] = dA * dd[idx];
        gc[idx * 3] = g[0] * w;
        gc[idx * 3 + 1] = g[1] * w;
        gc[idx * 3 + 2] = g[2] * w;
        suffix += w * p;
      }
    }
    if (sigma->requires_grad) sigma->accumulate(gs);
    if (color->requires_grad) color->accumulate(gc);
  });
}

}  // namespace lpa::nn
