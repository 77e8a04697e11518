#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "lpa/autodiff.hpp"
#include "lpa/rng.hpp"

namespace lpa::nn {

/// Flat registry of named trainable tensors. Nets register their parameters
/// here; checkpoints, hashes and optimizers all work off the same list.
class ParamSet {
 public:
  Var create(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::vector<Var> vars() const;
  std::size_t count() const;  // total scalar count

  std::uint64_t content_hash() const;
  void save(const std::string& path) const;
  void load(const std::string& path);  // shapes must match
  void save_stream(std::FILE* f) const;
  void load_stream(std::FILE* f);

 private:
  std::vector<std::pair<std::string, Var>> items_;
  std::map<std::string, std::size_t> index_;
};

struct Linear {
  Var w, b;
  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng);
  Var operator()(const Var& x) const { return linear(x, w, b); }
};

struct Conv {
  Var w, b;
  int stride = 1;
  Conv() = default;
  Conv(ParamSet& ps, const std::string& name, int cin, int cout, int k, int stride, Rng& rng);
  Var operator()(const Var& x) const { return conv2d(x, w, b, stride); }
};

/// Adam over a fixed parameter list. Moment buffers are serialized alongside
/// the step counter so a resumed run is bit-identical.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, Real lr, Real beta1 = 0.9, Real beta2 = 0.999,
       Real eps = 1e-8);

  void step();
  void zero_grad();
  Real lr() const { return lr_; }
  void set_lr(Real lr) { lr_ = lr; }
  long step_count() const { return t_; }

  void save(std::FILE* f) const;
  void load(std::FILE* f);

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  Real lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

// Raw tensor (de)serialization used by ParamSet and checkpoints.
void write_tensor(std::FILE* f, const Tensor& t);
Tensor read_tensor(std::FILE* f);

}  // namespace lpa::nn
