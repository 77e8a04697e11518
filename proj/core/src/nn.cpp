#include "lpa/nn.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "lpa/common.hpp"

namespace lpa::nn {

Var ParamSet::create(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::logic_error("ParamSet: duplicate name " + name);
  Var v = make_var(std::move(init), true);
  index_[name] = items_.size();
  items_.emplace_back(name, v);
  return v;
}

Var ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("ParamSet: unknown name " + name);
  return items_[it->second].second;
}

std::vector<Var> ParamSet::vars() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& [name, v] : items_) out.push_back(v);
  return out;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : items_) n += v->value.size();
  return n;
}

std::uint64_t ParamSet::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, v] : items_) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(v->value.data(), v->value.size() * sizeof(Real), h);
  }
  return h;
}

namespace {
constexpr std::uint32_t kParamMagic = 0x4c504131;  // "LPA1"

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, std::uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }
std::uint32_t read_u32(std::FILE* f) {
  std::uint32_t v = 0;
  if (std::fread(&v, sizeof(v), 1, f) != 1) throw std::runtime_error("param file: truncated");
  return v;
}
}  // namespace

void write_tensor(std::FILE* f, const Tensor& t) {
  write_u32(f, static_cast<std::uint32_t>(t.shape().size()));
  for (int d : t.shape()) write_u32(f, static_cast<std::uint32_t>(d));
  std::fwrite(t.data(), sizeof(Real), t.size(), f);
}

Tensor read_tensor(std::FILE* f) {
  const std::uint32_t rank = read_u32(f);
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(read_u32(f));
  Tensor t(shape);
  if (std::fread(t.data(), sizeof(Real), t.size(), f) != t.size()) {
    throw std::runtime_error("param file: truncated tensor");
  }
  return t;
}

void ParamSet::save_stream(std::FILE* f) const {
  write_u32(f, kParamMagic);
  write_u32(f, static_cast<std::uint32_t>(items_.size()));
  for (const auto& [name, v] : items_) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    std::fwrite(name.data(), 1, name.size(), f);
    write_tensor(f, v->value);
  }
}

void ParamSet::load_stream(std::FILE* f) {
  if (read_u32(f) != kParamMagic) throw std::runtime_error("param stream: bad magic");
  const std::uint32_t n = read_u32(f);
  if (n != items_.size()) throw std::runtime_error("param stream: parameter count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t len = read_u32(f);
    std::string name(len, '\0');
    if (std::fread(name.data(), 1, len, f) != len) {
      throw std::runtime_error("param stream: truncated");
    }
    Tensor t = read_tensor(f);
    Var v = get(name);
    if (t.shape() != v->value.shape()) {
      throw std::runtime_error("param stream: shape mismatch for " + name);
    }
    v->value = std::move(t);
  }
}

void ParamSet::save(const std::string& path) const {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write " + path);
  save_stream(f.get());
}

void ParamSet::load(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot read " + path);
  load_stream(f.get());
}

Linear::Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng) {
  const Real scale = std::sqrt(Real(2) / static_cast<Real>(in));
  w = ps.create(name + ".w", Tensor::randn({in, out}, rng, scale));
  b = ps.create(name + ".b", Tensor({out}));
}

Conv::Conv(ParamSet& ps, const std::string& name, int cin, int cout, int k, int stride_in,
           Rng& rng)
    : stride(stride_in) {
  const Real scale = std::sqrt(Real(2) / static_cast<Real>(cin * k * k));
  w = ps.create(name + ".w", Tensor::randn({cout, cin, k, k}, rng, scale));
  b = ps.create(name + ".b", Tensor({cout}));
}

Adam::Adam(std::vector<Var> params, Real lr, Real beta1, Real beta2, Real eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const Real bc1 = Real(1) - std::pow(beta1_, static_cast<Real>(t_));
  const Real bc2 = Real(1) - std::pow(beta2_, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    const std::size_t n = p->value.size();
    Real* w = p->value.data();
    Real* m = m_[i].data();
    Real* v = v_[i].data();
    const Real* g = p->grad.empty() ? nullptr : p->grad.data();
    for (std::size_t j = 0; j < n; ++j) {
      const Real gj = g ? g[j] : Real(0);
      m[j] = beta1_ * m[j] + (Real(1) - beta1_) * gj;
      v[j] = beta2_ * v[j] + (Real(1) - beta2_) * gj * gj;
      const Real mh = m[j] / bc1;
      const Real vh = v[j] / bc2;
      w[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (!p->grad.empty()) p->grad.fill(Real(0));
  }
}

void Adam::save(std::FILE* f) const {
  const std::uint64_t t = static_cast<std::uint64_t>(t_);
  std::fwrite(&t, sizeof(t), 1, f);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    write_tensor(f, m_[i]);
    write_tensor(f, v_[i]);
  }
}

void Adam::load(std::FILE* f) {
  std::uint64_t t = 0;
  if (std::fread(&t, sizeof(t), 1, f) != 1) throw std::runtime_error("optimizer: truncated");
  t_ = static_cast<long>(t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor m = read_tensor(f);
    Tensor v = read_tensor(f);
    if (m.shape() != m_[i].shape() || v.shape() != v_[i].shape()) {
      throw std::runtime_error("optimizer: shape mismatch");
    }
    m_[i] = std::move(m);
    v_[i] = std::move(v);
  }
}

}  // namespace lpa::nn
