#include "lpa/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace lpa {

using nn::Tensor;
using nn::Var;

nn::Tensor images_to_tensor(const std::vector<const ImageU8*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int w = images[0]->width, h = images[0]->height, c = images[0]->channels;
  Tensor t({static_cast<int>(images.size()), c, h, w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const ImageU8& img = *images[b];
    if (img.width != w || img.height != h || img.channels != c) {
      throw std::invalid_argument("images_to_tensor: mixed shapes");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          t[((b * c + ch) * h + y) * w + x] = img.at(x, y, ch) / 255.0;
        }
      }
    }
  }
  return t;
}

nn::Tensor image_to_tensor(const Image& img) {
  Tensor t({1, img.channels, img.height, img.width});
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int ch = 0; ch < img.channels; ++ch) {
        t[(static_cast<std::size_t>(ch) * img.height + y) * img.width + x] = img.at(x, y, ch);
      }
    }
  }
  return t;
}

Image tensor_to_image(const nn::Tensor& t, int batch_index) {
  const auto& s = t.shape();
  if (s.size() != 4) throw std::invalid_argument("tensor_to_image: rank mismatch");
  const int c = s[1], h = s[2], w = s[3];
  Image img(w, h, c);
  const std::size_t base = static_cast<std::size_t>(batch_index) * c * h * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        img.at(x, y, ch) = t[base + (static_cast<std::size_t>(ch) * h + y) * w + x];
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

namespace {
int generator_levels(int plane_res) {
  int levels = 0;
  int r = 4;
  while (r < plane_res) {
    r *= 2;
    ++levels;
  }
  if (r != plane_res) throw std::invalid_argument("plane_res must be 4 * 2^k");
  return levels;
}
}  // namespace

Generator::Generator(const NetConfig& net, const FieldConfig& field, Rng& rng)
    : net_(net), field_(field) {
  const int levels = generator_levels(field.plane_res);
  const int base = net.gen_base;
  const int style = net.gen_base;

  const_input_ = params_.create("g.const", Tensor::randn({base, 4, 4}, rng, 1.0));
  map1_ = nn::Linear(params_, "g.map1", net.latent_dim, style, rng);
  map2_ = nn::Linear(params_, "g.map2", style, style, rng);
  for (int l = 0; l < levels; ++l) {
    const std::string tag = "g.l" + std::to_string(l);
    convs_.emplace_back(params_, tag + ".conv", base, base, 3, 1, rng);
    style_affines_.emplace_back(params_, tag + ".style", style, 2 * base, rng);
    // near-identity modulation at the start, but still latent-dependent
    style_affines_.back().w->value.vec() *= 0.1;
    room_encoders_.emplace_back(params_, tag + ".room", 2, base, 1, 1, rng);
  }
  for (int p = 0; p < 3; ++p) {
    plane_heads_[static_cast<std::size_t>(p)] =
        nn::Conv(params_, "g.head" + std::to_string(p), base, field.channels, 3, 1, rng);
  }
  const int h = field.decoder_hidden;
  auto mk = [&](const std::string& name, std::vector<int> shape, double scale) {
    return params_.create(name, scale > 0 ? Tensor::randn(std::move(shape), rng, scale)
                                          : Tensor(std::move(shape)));
  };
  decoder_.w1 = mk("g.dec.w1", {field.channels, h}, std::sqrt(2.0 / field.channels));
  decoder_.b1 = mk("g.dec.b1", {h}, 0);
  decoder_.w2 = mk("g.dec.w2", {h, h}, std::sqrt(2.0 / h));
  decoder_.b2 = mk("g.dec.b2", {h}, 0);
  decoder_.w3 = mk("g.dec.w3", {h, 4}, 0.5 * std::sqrt(2.0 / h));
  decoder_.b3 = mk("g.dec.b3", {4}, 0);
  // Near-transparent start: a saturated initial field pins rendered depth to
  // the first sample and starves both L_B and the adversarial gradients.
  decoder_.b3->value[0] = -2.5;
}

Var Generator::room_grid(const RoomBox& room, int res) const {
  Tensor g({1, 2, res, res});
  const double fx = room.size.x() / field_.max_room_x;
  const double fz = room.size.z() / field_.max_room_z;
  const double fy = room.size.y() / field_.max_room_y;
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res; ++i) {
      const double nx = (i + 0.5) / res * 2.0 - 1.0;
      const double nz = (j + 0.5) / res * 2.0 - 1.0;
      const bool inside = std::abs(nx) <= fx && std::abs(nz) <= fz;
      g[static_cast<std::size_t>(j) * res + i] = inside ? 1.0 : 0.0;
      g[static_cast<std::size_t>(res) * res + j * res + i] = fy;
    }
  }
  return nn::constant(std::move(g));
}

TriPlaneField Generator::generate(const nn::Tensor& z, const RoomBox& room) const {
  if (static_cast<int>(z.size()) != net_.latent_dim) {
    throw std::invalid_argument("generate: latent size mismatch");
  }
  Var w = nn::leaky_relu(map1_(nn::constant(z.reshaped({1, net_.latent_dim}))));
  w = nn::leaky_relu(map2_(w));

  Var x = nn::reshape(const_input_, {1, net_.gen_base, 4, 4});
  int res = 4;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    res *= 2;
    x = nn::upsample2x(x);
    x = convs_[l](x);
    const Var affine = style_affines_[l](w);  // [1, 2*base]
    const Var scale = nn::add_scalar(nn::slice_cols(affine, 0, net_.gen_base), 1.0);
    const Var shift = nn::slice_cols(affine, net_.gen_base, 2 * net_.gen_base);
    x = nn::shift_channels(nn::scale_channels(x, scale), shift);
    x = nn::add(x, room_encoders_[l](room_grid(room, res)));
    x = nn::leaky_relu(x);
  }

  std::array<Var, 3> planes;
  for (int p = 0; p < 3; ++p) {
    planes[static_cast<std::size_t>(p)] =
        nn::reshape(plane_heads_[static_cast<std::size_t>(p)](x),
                    {field_.channels, field_.plane_res, field_.plane_res});
  }
  return TriPlaneField(field_, room, planes, decoder_);
}

RoomSizeGrid Generator::encode_room_size(const RoomBox& room) const {
  nn::NoGradGuard ng;
  RoomSizeGrid out;
  int res = 4;
  for (std::size_t l = 0; l < room_encoders_.size(); ++l) {
    res *= 2;
    out.levels.push_back(room_encoders_[l](room_grid(room, res))->value);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator::Discriminator(const NetConfig& net, int image_size, Rng& rng)
    : net_(net), image_size_(image_size) {
  const int base = net.disc_base;
  stem_ = nn::Conv(params_, "d.stem", 3, base, 3, 1, rng);
  int res = image_size;
  int c = base;
  while (res > 4) {
    const int cn = std::min(2 * c, 4 * base);
    downs_.emplace_back(params_, "d.down" + std::to_string(downs_.size()), c, cn, 3, 2, rng);
    c = cn;
    res /= 2;
  }
  fc_ = nn::Linear(params_, "d.fc", c * res * res, 2 * base, rng);
  score_head_ = nn::Linear(params_, "d.score", 2 * base, 1, rng);
  const PoseCodec codec(net.pose_bins, FieldConfig{});
  pose_head_ = nn::Linear(params_, "d.pose", 2 * base, codec.logits_size(), rng);
}

Discriminator::Out Discriminator::forward(const Var& images) const {
  const auto& s = images->value.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != image_size_ || s[3] != image_size_) {
    throw std::invalid_argument("discriminate: image batch must be [B,3,W,W]");
  }
  Var x = nn::leaky_relu(stem_(images));
  Var mid;
  for (std::size_t i = 0; i < downs_.size(); ++i) {
    x = nn::leaky_relu(downs_[i](x));
    if (i == downs_.size() / 2) mid = x;
  }
  if (!mid) mid = x;
  const int b = s[0];
  Var flat = nn::reshape(x, {b, static_cast<int>(x->value.size()) / b});
  Var feat = nn::leaky_relu(fc_(flat));
  Out out;
  out.score = score_head_(feat);
  out.pose_logits = pose_head_(feat);
  out.mid_features = nn::global_avg_pool(mid);
  return out;
}

// ---------------------------------------------------------------------------
// Backbone / Segmenter
// ---------------------------------------------------------------------------

Backbone::Backbone(const NetConfig& net, nn::ParamSet& ps, const std::string& prefix,
                   Rng& rng) {
  c0 = net.backbone_base;
  c1 = 2 * net.backbone_base;
  c2 = 4 * net.backbone_base;
  stem_ = nn::Conv(ps, prefix + ".stem", 3, c0, 3, 1, rng);
  down1_ = nn::Conv(ps, prefix + ".down1", c0, c1, 3, 2, rng);
  down2_ = nn::Conv(ps, prefix + ".down2", c1, c2, 3, 2, rng);
}

Backbone::Features Backbone::forward(const Var& images) const {
  Features f;
  f.f0 = nn::leaky_relu(stem_(images));
  f.f1 = nn::leaky_relu(down1_(f.f0));
  f.f2 = nn::leaky_relu(down2_(f.f1));
  return f;
}

std::vector<Var> Backbone::vars() const {
  return {stem_.w, stem_.b, down1_.w, down1_.b, down2_.w, down2_.b};
}

void Backbone::copy_weights_from(const Backbone& other) {
  const auto src = other.vars();
  const auto dst = vars();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (src[i]->value.shape() != dst[i]->value.shape()) {
      throw std::invalid_argument("Backbone::copy_weights_from: shape mismatch");
    }
    dst[i]->value = src[i]->value;
  }
}

void Backbone::set_trainable(bool trainable) {
  for (auto& v : vars()) v->requires_grad = trainable;
}

Segmenter::Segmenter(const NetConfig& net, Rng& rng) : net_(net) {
  backbone_ = Backbone(net, params_, "s.bb", rng);
  const int c0 = backbone_.c0, c1 = backbone_.c1, c2 = backbone_.c2;
  up1_ = nn::Conv(params_, "s.up1", c2, c1, 3, 1, rng);
  proj1_ = nn::Conv(params_, "s.proj1", c1, c1, 1, 1, rng);
  up2_ = nn::Conv(params_, "s.up2", c1, c0, 3, 1, rng);
  proj0_ = nn::Conv(params_, "s.proj0", c0, c0, 1, 1, rng);
  head_ = nn::Conv(params_, "s.head", c0, 1, 1, 1, rng);
}

Var Segmenter::logits(const Var& images) const {
  const Backbone::Features f = backbone_.forward(images);
  Var u = nn::leaky_relu(nn::add(up1_(nn::upsample2x(f.f2)), proj1_(f.f1)));
  u = nn::leaky_relu(nn::add(up2_(nn::upsample2x(u)), proj0_(f.f0)));
  return head_(u);
}

nn::Tensor Segmenter::segment_tensor(const nn::Tensor& images) const {
  nn::NoGradGuard ng;
  const Var lg = logits(nn::constant(images));
  Tensor out(lg->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lg->value[i] > 0 ? 1.0 : 0.0;
  return out;
}

Image Segmenter::segment(const Image& img) const {
  const Tensor mask = segment_tensor(image_to_tensor(img));
  Image out(img.width, img.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = mask[i];
  return out;
}

Var Segmenter::embed_var(const Var& images) const {
  return nn::global_avg_pool(backbone_.forward(images).f2);
}

Eigen::VectorXd Segmenter::embed(const Image& img) const {
  nn::NoGradGuard ng;
  const Var e = embed_var(nn::constant(image_to_tensor(img)));
  Eigen::VectorXd out(e->value.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = e->value[static_cast<std::size_t>(i)];
  return out;
}

// ---------------------------------------------------------------------------
// CameraPredictor
// ---------------------------------------------------------------------------

CameraPredictor::CameraPredictor(const NetConfig& net, const FieldConfig& field,
                                 int image_size, bool anchor_free, Rng& rng)
    : net_(net), codec_(net.pose_bins, field, anchor_free) {
  backbone_ = Backbone(net, params_, "c.bb", rng);
  const int c0 = backbone_.c0, c1 = backbone_.c1, c2 = backbone_.c2;
  g0a_ = nn::Conv(params_, "c.g0a", c0, c1, 3, 2, rng);
  g0b_ = nn::Conv(params_, "c.g0b", c1, c2, 3, 2, rng);
  g1_ = nn::Conv(params_, "c.g1", c1, c2, 3, 2, rng);
  g2_ = nn::Conv(params_, "c.g2", c2, c2, 1, 1, rng);
  fuse_ = nn::Conv(params_, "c.fuse", c2, c2, 3, 2, rng);
  if (image_size % 8 != 0) throw std::invalid_argument("image_size must be divisible by 8");
  const int fr = image_size / 8;
  out_ = nn::Linear(params_, "c.out", c2 * fr * fr, codec_.logits_size(), rng);
  // uniform logits before training, so decode starts at the range midpoints
  out_.w->value.fill(0.0);
}

Var CameraPredictor::forward(const Var& images) const {
  const Backbone::Features f = backbone_.forward(images);
  Var g0 = g0b_(nn::leaky_relu(g0a_(f.f0)));
  Var g1 = g1_(f.f1);
  Var g2 = g2_(f.f2);
  Var fused = nn::leaky_relu(nn::add(nn::add(g0, g1), g2));
  fused = nn::leaky_relu(fuse_(fused));
  const int b = images->value.dim(0);
  return out_(nn::reshape(fused, {b, static_cast<int>(fused->value.size()) / b}));
}

void CameraPredictor::init_backbone_from(const Segmenter& seg, bool freeze) {
  backbone_.copy_weights_from(seg.backbone());
  backbone_.set_trainable(!freeze);
  backbone_frozen_ = freeze;
}

std::vector<Var> CameraPredictor::trainable_vars() const {
  std::vector<Var> out;
  for (const auto& [name, v] : params_.items()) {
    if (v->requires_grad) out.push_back(v);
  }
  return out;
}

PoseLogits CameraPredictor::predict(const Image& img) const {
  nn::NoGradGuard ng;
  const Var lg = forward(nn::constant(image_to_tensor(img)));
  PoseLogits out;
  out.bins = codec_.bins();
  out.data = Eigen::VectorXd(lg->value.size());
  for (Eigen::Index i = 0; i < out.data.size(); ++i) {
    out.data(i) = lg->value[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<PoseLogits> CameraPredictor::predict_batch(
    const std::vector<const ImageU8*>& images) const {
  nn::NoGradGuard ng;
  const Var lg = forward(nn::constant(images_to_tensor(images)));
  const int m = lg->value.dim(0);
  const int k = static_cast<int>(lg->value.size()) / m;
  std::vector<PoseLogits> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    out[static_cast<std::size_t>(i)].bins = codec_.bins();
    out[static_cast<std::size_t>(i)].data = Eigen::VectorXd(k);
    for (int j = 0; j < k; ++j) {
      out[static_cast<std::size_t>(i)].data(j) =
          lg->value[static_cast<std::size_t>(i) * k + j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AnchorClassifier
// ---------------------------------------------------------------------------

AnchorClassifier::AnchorClassifier(const NetConfig& net, Rng& rng) : net_(net) {
  backbone_ = Backbone(net, params_, "a.bb", rng);
  const int w = net.classifier_width;
  int cin = backbone_.c2;
  for (int i = 0; i < 6; ++i) {
    convs_[static_cast<std::size_t>(i)] =
        nn::Conv(params_, "a.conv" + std::to_string(i), cin, w, 3, 1, rng);
    cin = w;
  }
  out_ = nn::Linear(params_, "a.out", w, 4, rng);
}

Var AnchorClassifier::forward(const Var& images) const {
  Var x = backbone_.forward(images).f2;
  for (const auto& c : convs_) x = nn::leaky_relu(c(x));
  return out_(nn::global_avg_pool(x));
}

void AnchorClassifier::init_backbone_from(const Segmenter& seg, bool freeze) {
  backbone_.copy_weights_from(seg.backbone());
  backbone_.set_trainable(!freeze);
  backbone_frozen_ = freeze;
}

std::vector<Var> AnchorClassifier::trainable_vars() const {
  std::vector<Var> out;
  for (const auto& [name, v] : params_.items()) {
    if (v->requires_grad) out.push_back(v);
  }
  return out;
}

int AnchorClassifier::classify(const Image& img) const {
  nn::NoGradGuard ng;
  const Var lg = forward(nn::constant(image_to_tensor(img)));
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    if (lg->value[static_cast<std::size_t>(i)] > lg->value[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Supervised training loops
// ---------------------------------------------------------------------------

SupervisedTrainResult train_anchor_classifier(AnchorClassifier& cls,
                                              const std::vector<const DatasetRecord*>& labeled,
                                              const SupervisedTrainOptions& opt, Rng& rng) {
  if (labeled.size() < 8) throw std::invalid_argument("train_anchor_classifier: too few labels");
  std::vector<std::size_t> idx(labeled.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
  }
  const std::size_t holdout = std::max<std::size_t>(1, static_cast<std::size_t>(
                                  static_cast<double>(idx.size()) * opt.holdout_frac));
  const std::size_t train_n = idx.size() - holdout;

  std::array<int, 4> class_count{};
  for (std::size_t i = 0; i < train_n; ++i) class_count[static_cast<std::size_t>(labeled[idx[i]]->anchor_label)]++;
  for (int a = 0; a < 4; ++a) {
    if (class_count[static_cast<std::size_t>(a)] == 0) {
      std::fprintf(stderr, "warning: anchor class %d missing from training labels\n", a);
    }
  }

  nn::Adam adam(cls.trainable_vars(), opt.lr);
  SupervisedTrainResult res;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = train_n - 1; i > 0; --i) {
      std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
    }
    for (std::size_t off = 0; off + 1 <= train_n; off += static_cast<std::size_t>(opt.batch)) {
      const std::size_t end = std::min(train_n, off + static_cast<std::size_t>(opt.batch));
      std::vector<const ImageU8*> imgs;
      std::vector<int> targets;
      for (std::size_t i = off; i < end; ++i) {
        imgs.push_back(&labeled[idx[i]]->image);
        targets.push_back(labeled[idx[i]]->anchor_label);
      }
      const Var loss = nn::mean(nn::softmax_cross_entropy(
          cls.forward(nn::constant(images_to_tensor(imgs))), targets));
      adam.zero_grad();
      nn::backward(loss);
      adam.step();
      ++res.steps;
      if (opt.log_every > 0 && res.steps % opt.log_every == 0) {
        std::fprintf(stderr, "classifier step %d loss %.4f\n", res.steps, loss->value[0]);
      }
    }
  }
  int correct = 0;
  for (std::size_t i = train_n; i < idx.size(); ++i) {
    if (cls.classify(labeled[idx[i]]->image.to_image()) == labeled[idx[i]]->anchor_label) {
      ++correct;
    }
  }
  res.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(holdout);
  return res;
}

SupervisedTrainResult train_segmenter(Segmenter& seg,
                                      const std::vector<const DatasetRecord*>& pairs,
                                      const std::vector<std::pair<Image, Image>>& extra,
                                      const SupervisedTrainOptions& opt, Rng& rng) {
  struct Item {
    Tensor image;  // [1,3,H,W]
    Tensor mask;   // [1,1,H,W]
  };
  std::vector<Item> items;
  items.reserve(pairs.size() + extra.size());
  for (const auto* r : pairs) {
    Item it;
    it.image = images_to_tensor({&r->image});
    it.mask = images_to_tensor({&r->mask});
    items.push_back(std::move(it));
  }
  for (const auto& [img, mask] : extra) {
    Item it;
    it.image = image_to_tensor(img);
    it.mask = image_to_tensor(mask);
    items.push_back(std::move(it));
  }
  if (items.empty()) throw std::invalid_argument("train_segmenter: no pairs");

  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
  }
  const std::size_t holdout = std::max<std::size_t>(1, static_cast<std::size_t>(
                                  static_cast<double>(items.size()) * opt.holdout_frac));
  const std::size_t train_n = items.size() - holdout;

  nn::Adam adam(seg.params().vars(), opt.lr);
  SupervisedTrainResult res;
  const auto& shape = items[0].image.shape();
  const int h = shape[2], w = shape[3];
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = train_n - 1; i > 0; --i) {
      std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
    }
    for (std::size_t off = 0; off + 1 <= train_n; off += static_cast<std::size_t>(opt.batch)) {
      const std::size_t end = std::min(train_n, off + static_cast<std::size_t>(opt.batch));
      const int b = static_cast<int>(end - off);
      Tensor images({b, 3, h, w});
      Tensor masks({b, 1, h, w});
      for (int k = 0; k < b; ++k) {
        const Item& it = items[idx[off + static_cast<std::size_t>(k)]];
        std::copy_n(it.image.data(), it.image.size(),
                    images.data() + static_cast<std::size_t>(k) * it.image.size());
        std::copy_n(it.mask.data(), it.mask.size(),
                    masks.data() + static_cast<std::size_t>(k) * it.mask.size());
      }
      // Binary cross entropy with logits: mean(softplus(x) - x*y).
      const Var lg = seg.logits(nn::constant(std::move(images)));
      const Var loss = nn::mean(nn::sub(nn::softplus(lg), nn::mul_const(lg, masks)));
      adam.zero_grad();
      nn::backward(loss);
      adam.step();
      ++res.steps;
      if (opt.log_every > 0 && res.steps % opt.log_every == 0) {
        std::fprintf(stderr, "segmenter step %d loss %.4f\n", res.steps, loss->value[0]);
      }
    }
  }

  // Held-out pixel accuracy.
  std::size_t correct = 0, total = 0;
  for (std::size_t i = train_n; i < idx.size(); ++i) {
    const Item& it = items[idx[i]];
    const Tensor pred = seg.segment_tensor(it.image);
    for (std::size_t p = 0; p < pred.size(); ++p) {
      correct += (pred[p] > 0.5) == (it.mask[p] > 0.5) ? 1 : 0;
      ++total;
    }
  }
  res.holdout_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return res;
}

}  // namespace lpa
