#include "lpa/trainer.hpp"

#include "lpa/eval.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace lpa {

namespace fs = std::filesystem;
using nn::Tensor;
using nn::Var;

bool StepLog::finite() const {
  for (double v : {loss_g, adv_g, lb, lcd_g, loss_d, r1, lcd_d, lk, lc_cam}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const char* StepLog::csv_header() {
  return "step,phase,loss_g,adv_g,lb,lcd_g,loss_d,r1,lcd_d,lk,lc_cam,aborted";
}

std::string StepLog::csv_row() const {
  std::ostringstream os;
  os << step << "," << phase << "," << loss_g << "," << adv_g << "," << lb << "," << lcd_g
     << "," << loss_d << "," << r1 << "," << lcd_d << "," << lk << "," << lc_cam << ","
     << (aborted ? 1 : 0);
  return os.str();
}

namespace {

std::vector<Tensor> snapshot(const nn::ParamSet& ps) {
  std::vector<Tensor> out;
  for (const auto& [name, v] : ps.items()) out.push_back(v->value);
  return out;
}

void restore(nn::ParamSet& ps, const std::vector<Tensor>& snap) {
  std::size_t i = 0;
  for (const auto& [name, v] : ps.items()) v->value = snap[i++];
}

void zero_grads(const std::vector<Var>& vars) {
  for (const auto& v : vars) {
    if (!v->grad.empty()) v->grad.fill(0.0);
  }
}

}  // namespace

Trainer::Trainer(const Config& cfg, Dataset dataset, std::shared_ptr<Segmenter> segmenter,
                 std::string run_dir)
    : cfg_(cfg),
      dataset_(std::move(dataset)),
      seg_(std::move(segmenter)),
      run_dir_(std::move(run_dir)),
      rng_(cfg.train.seed),
      codec_(cfg.net.pose_bins, cfg.field, cfg.train.anchor_free),
      gen_(cfg.net, cfg.field, rng_),
      disc_(cfg.net, cfg.train.image_size, rng_),
      pred_(cfg.net, cfg.field, cfg.train.image_size, cfg.train.anchor_free, rng_) {
  if (dataset_.records.empty()) throw std::invalid_argument("Trainer: empty dataset");
  if (dataset_.image_size != cfg.train.image_size) {
    throw std::invalid_argument("Trainer: dataset image size does not match config");
  }
  if (!seg_) throw std::invalid_argument("Trainer: segmenter required");

  if (!cfg_.train.scratch_predictor) pred_.init_backbone_from(*seg_, /*freeze=*/true);

  std::vector<int> labels;
  labels.reserve(dataset_.records.size());
  for (const auto& r : dataset_.records) labels.push_back(r.anchor_label);
  if (cfg_.train.balance && !cfg_.train.anchor_free) {
    train_indices_ = balance_indices_by_anchor(labels);
  } else {
    train_indices_.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) train_indices_[i] = i;
  }

  opt_g_ = nn::Adam(gen_.params().vars(), cfg.train.lr_g);
  opt_d_ = nn::Adam(disc_.params().vars(), cfg.train.lr_d);
  opt_c_ = nn::Adam(pred_.trainable_vars(), cfg.train.lr_c);

  fs::create_directories(run_dir_);
  std::ofstream(run_dir_ + "/metrics.csv") << StepLog::csv_header() << "\n";
  std::ofstream(run_dir_ + "/eval.csv")
      << "step,mae_x,mae_y,mae_z,mae_yaw,mae_pitch,mae_roll,mae_fov,anchor_acc,count\n";
  cfg_.save(run_dir_ + "/config.json");
}

RoomBox Trainer::sample_room(Rng& rng) const {
  const SynthConfig& p = cfg_.synth;
  return RoomBox(rng.uniform(p.room_min_x, p.room_max_x),
                 rng.uniform(p.room_min_y, p.room_max_y),
                 rng.uniform(p.room_min_z, p.room_max_z));
}

Trainer::FakeItem Trainer::make_fake(bool warmup_pose,
                                     const std::vector<LpaPose>& candidates) {
  const int w = cfg_.train.image_size;
  const Tensor z = Tensor::randn({cfg_.net.latent_dim}, rng_);
  const RoomBox room = sample_room(rng_);
  TriPlaneField field = gen_.generate(z, room);

  LpaPose pose;
  if (warmup_pose || candidates.empty()) {
    pose = psr_sample(field, room, 1, rng_, codec_, cfg_.sampler)[0];
  } else {
    try {
      pose = gsr_select(field, room, candidates, rng_, codec_, cfg_.sampler);
    } catch (const std::invalid_argument&) {
      ++gsr_fallbacks_;
      pose = psr_sample(field, room, 1, rng_, codec_, cfg_.sampler)[0];
    }
  }

  const GlobalCamera cam = codec_.to_global(pose, room);
  const RaySet rays = generate_rays(cam, w, w);
  RenderResult rr = render(field, rays, cfg_.field.render_steps, &rng_);

  FakeItem item;
  item.pose = pose;
  item.image = nn::reshape(nn::transpose2d(rr.rgb()), {1, 3, w, w});

  // d_b per pixel; the origin is nudged to the strict interior so samplers
  // that land exactly on the boundary stay valid.
  Vec3 origin = cam.position;
  const Vec3 lo = room.lo(), hi = room.hi();
  for (int i = 0; i < 3; ++i) {
    origin[i] = std::min(std::max(origin[i], lo[i] + 1e-9), hi[i] - 1e-9);
  }
  const int r = rays.count();
  Tensor db({r, 1});
  for (int i = 0; i < r; ++i) {
    db[static_cast<std::size_t>(i)] = ray_box_distance(origin, rays.directions.col(i), room);
  }
  const Tensor mask4 = seg_->segment_tensor(item.image->value);
  Tensor fg({r, 1});
  std::copy_n(mask4.data(), static_cast<std::size_t>(r), fg.data());
  item.boundary = boundary_loss(rr.depth(), fg, db);
  return item;
}

nn::Tensor Trainer::real_batch_tensor(int batch, std::vector<int>* anchor_labels) {
  std::vector<const ImageU8*> imgs;
  imgs.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const std::size_t idx = train_indices_[rng_.uniform_index(train_indices_.size())];
    imgs.push_back(&dataset_.records[idx].image);
    if (anchor_labels) anchor_labels->push_back(dataset_.records[idx].anchor_label);
  }
  return images_to_tensor(imgs);
}

StepLog Trainer::train_step_gan() {
  const TrainConfig& tc = cfg_.train;
  const bool warmup = gan_steps_done_ < tc.warmup_steps;
  StepLog log;
  log.step = gan_steps_done_;
  log.phase = 'g';

  std::vector<LpaPose> candidates;
  if (!warmup) {
    std::vector<const ImageU8*> imgs;
    for (int i = 0; i < cfg_.sampler.gsr_candidates; ++i) {
      const std::size_t idx = train_indices_[rng_.uniform_index(train_indices_.size())];
      imgs.push_back(&dataset_.records[idx].image);
    }
    for (const PoseLogits& pl : pred_.predict_batch(imgs)) {
      candidates.push_back(codec_.decode(pl));
    }
  }

  const auto snap_g = snapshot(gen_.params());
  const auto snap_d = snapshot(disc_.params());
  const auto rng_snap = rng_.state();

  std::vector<FakeItem> items;
  std::vector<Var> fake_imgs;
  std::vector<LpaPose> poses;
  for (int b = 0; b < tc.batch_gan; ++b) {
    items.push_back(make_fake(warmup, candidates));
    fake_imgs.push_back(items.back().image);
    poses.push_back(items.back().pose);
  }
  const Var fakes = nn::concat_batch(fake_imgs);

  LossWeights w;
  w.lambda_b = tc.lambda_b;
  w.lambda_c = tc.lambda_c;
  w.lambda_r1 = tc.lambda_r1;
  w.lambda_k = tc.lambda_k;

  // --- generator update (D frozen by not stepping it) ---
  {
    const Discriminator::Out d_out = disc_.forward(fakes);
    Var lb = items[0].boundary;
    for (std::size_t i = 1; i < items.size(); ++i) lb = nn::add(lb, items[i].boundary);
    lb = nn::mul_scalar(lb, 1.0 / static_cast<double>(items.size()));
    const Var lcd = camera_ce_loss(d_out.pose_logits, poses, codec_);
    const Var lg = generator_loss(d_out.score, lb, lcd, w);
    opt_g_.zero_grad();
    zero_grads(disc_.params().vars());
    nn::backward(lg);
    log.loss_g = lg->value[0];
    log.adv_g = nn::mean(nn::softplus(nn::neg(nn::detach(d_out.score))))->value[0];
    log.lb = lb->value[0];
    log.lcd_g = lcd->value[0];
    if (std::isfinite(log.loss_g)) opt_g_.step();
  }

  // --- discriminator update ---
  {
    std::vector<int> real_anchors;
    const Tensor real = real_batch_tensor(tc.batch_gan, &real_anchors);

    // R1: input gradients, squared norms, and the parameter gradient of the
    // penalty via a central-difference Hessian-vector product.
    const auto d_vars = disc_.params().vars();
    zero_grads(d_vars);
    Var x = nn::make_var(real, true);
    nn::backward(nn::sum(disc_.forward(x).score));
    Tensor gx = x->grad;
    zero_grads(d_vars);

    const int batch = real.dim(0);
    Tensor norms({batch, 1});
    const std::size_t per = gx.size() / static_cast<std::size_t>(batch);
    double total_sq = 0;
    for (int b = 0; b < batch; ++b) {
      double s = 0;
      for (std::size_t i = 0; i < per; ++i) {
        const double g = gx[static_cast<std::size_t>(b) * per + i];
        s += g * g;
      }
      norms[static_cast<std::size_t>(b)] = s;
      total_sq += s;
    }
    const double rms = std::sqrt(total_sq / static_cast<double>(gx.size()));
    const double eps = 1e-4 / (rms + 1e-12);

    auto grads_at = [&](double sign) {
      Tensor shifted = real;
      shifted.vec() += sign * eps * gx.vec();
      zero_grads(d_vars);
      nn::backward(nn::sum(disc_.forward(nn::constant(std::move(shifted))).score));
      std::vector<Tensor> out;
      out.reserve(d_vars.size());
      for (const auto& v : d_vars) {
        out.push_back(v->grad.empty() ? Tensor(v->value.shape()) : v->grad);
      }
      return out;
    };
    const std::vector<Tensor> gp = grads_at(1.0);
    const std::vector<Tensor> gm = grads_at(-1.0);
    zero_grads(d_vars);

    const Discriminator::Out d_real = disc_.forward(nn::constant(real));
    const Discriminator::Out d_fake = disc_.forward(nn::detach(fakes));
    Var lcd = camera_ce_loss(d_fake.pose_logits, poses, codec_);
    if (tc.anchor_ce_on_real && !tc.anchor_free) {
      lcd = nn::add(lcd, anchor_ce_loss(d_real.pose_logits, real_anchors, codec_));
    }
    Var lk;
    if (tc.enable_distill) {
      // Distillation stub: L2 between pooled mid-level D features and the
      // frozen backbone embedding of the same real images.
      const Var target = nn::constant(
          seg_->embed_var(nn::constant(real))->value);
      const int fd = static_cast<int>(d_real.mid_features->value.size()) / batch;
      const int td = static_cast<int>(target->value.size()) / batch;
      const Var projected = nn::slice_cols(d_real.mid_features, 0, std::min(fd, td));
      const Var target_cut = nn::slice_cols(target, 0, std::min(fd, td));
      lk = nn::mean(nn::square(nn::sub(projected, target_cut)));
    }
    const Var ld =
        discriminator_loss(d_real.score, d_fake.score, nn::constant(norms), lcd, lk, w);
    opt_d_.zero_grad();
    nn::backward(ld);
    const double hvp_scale = tc.lambda_r1 / (2.0 * eps * static_cast<double>(batch));
    for (std::size_t i = 0; i < d_vars.size(); ++i) {
      Tensor& g = d_vars[i]->grad_ref();
      g.vec() += hvp_scale * (gp[i].vec() - gm[i].vec());
    }
    log.loss_d = ld->value[0];
    log.r1 = 0.5 * norms.vec().mean();
    log.lcd_d = lcd->value[0];
    log.lk = lk ? lk->value[0] : 0.0;
    if (std::isfinite(log.loss_d)) opt_d_.step();
  }

  if (!log.finite()) {
    restore(gen_.params(), snap_g);
    restore(disc_.params(), snap_d);
    rng_.restore(rng_snap);
    // Skip past the aborted step's draws so the next step sees fresh noise.
    for (int i = 0; i < 97; ++i) rng_.next_u64();
    log.aborted = true;
  }
  ++gan_steps_done_;
  append_metrics(log);
  return log;
}

StepLog Trainer::train_step_camera() {
  const TrainConfig& tc = cfg_.train;
  const int w = cfg_.train.image_size;
  StepLog log;
  log.step = cam_steps_done_;
  log.phase = 'c';

  Tensor images({tc.batch_cam, 3, w, w});
  std::vector<LpaPose> poses;
  {
    nn::NoGradGuard ng;
    const Tensor z = Tensor::randn({cfg_.net.latent_dim}, rng_);
    const RoomBox room = sample_room(rng_);
    const TriPlaneField field = gen_.generate(z, room);
    poses = psr_sample(field, room, tc.batch_cam, rng_, codec_, cfg_.sampler);
    for (int b = 0; b < tc.batch_cam; ++b) {
      const GlobalCamera cam = codec_.to_global(poses[static_cast<std::size_t>(b)], room);
      const RaySet rays = generate_rays(cam, w, w);
      const RenderResult rr = render(field, rays, cfg_.field.render_steps, &rng_);
      const nn::Real* packed = rr.packed->value.data();
      for (int p = 0; p < w * w; ++p) {
        for (int c = 0; c < 3; ++c) {
          images[((static_cast<std::size_t>(b) * 3 + c) * w * w) + p] = packed[p * 5 + c];
        }
      }
    }
  }

  const auto snap_c = snapshot(pred_.params());
  const Var logits = pred_.forward(nn::constant(std::move(images)));
  const Var lc = camera_ce_loss(logits, poses, codec_);
  opt_c_.zero_grad();
  nn::backward(lc);
  log.lc_cam = lc->value[0];
  if (std::isfinite(log.lc_cam)) {
    opt_c_.step();
  } else {
    restore(pred_.params(), snap_c);
    log.aborted = true;
  }
  ++cam_steps_done_;
  append_metrics(log);
  return log;
}

void Trainer::train() {
  const TrainConfig& tc = cfg_.train;
  const bool have_gt = fs::exists(fs::path(dataset_.dir) / "poses_gt.csv");
  if (tc.eval_every > 0 && have_gt) {
    write_eval_row(gan_steps_done_, evaluate_pose_mae(tc.eval_subset));
  }
  while (gan_steps_done_ < tc.total_gan_steps) {
    for (int k = 0; k < tc.gan_steps_per_cam && gan_steps_done_ < tc.total_gan_steps; ++k) {
      train_step_gan();
      if (tc.ckpt_every > 0 && gan_steps_done_ % tc.ckpt_every == 0) {
        save_checkpoint(run_dir_ + "/ckpt_" + std::to_string(gan_steps_done_));
      }
      if (tc.eval_every > 0 && have_gt && gan_steps_done_ % tc.eval_every == 0) {
        write_eval_row(gan_steps_done_, evaluate_pose_mae(tc.eval_subset));
      }
    }
    train_step_camera();
  }
  save_checkpoint(run_dir_ + "/ckpt_" + std::to_string(gan_steps_done_));
  if (tc.eval_every > 0 && have_gt) {
    write_eval_row(gan_steps_done_, evaluate_pose_mae(tc.eval_subset));
  }
}

PoseMae Trainer::evaluate_pose_mae(int subset) {
  if (!gt_loaded_) {
    gt_cache_ = load_gt_sidecar(dataset_.dir, GtAccess::Evaluation);
    gt_loaded_ = true;
  }
  return eval_pose_mae(pred_, dataset_, gt_cache_, subset);
}

void Trainer::append_metrics(const StepLog& log) {
  logs_.push_back(log);
  std::ofstream f(run_dir_ + "/metrics.csv", std::ios::app);
  f << log.csv_row() << "\n";
}

void Trainer::write_eval_row(long step, const PoseMae& mae) {
  std::ofstream f(run_dir_ + "/eval.csv", std::ios::app);
  f << step << "," << mae.x << "," << mae.y << "," << mae.z << "," << mae.yaw << ","
    << mae.pitch << "," << mae.roll << "," << mae.fov << "," << mae.anchor_accuracy << ","
    << mae.count << "\n";
}

namespace {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
constexpr std::uint64_t kCkptMagic = 0x4c50414743485031ull;  // "LPAGCHP1"
}  // namespace

void Trainer::save_checkpoint(const std::string& dir) const {
  fs::create_directories(dir);
  {
    FilePtr f(std::fopen((dir + "/params").c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write " + dir + "/params");
    const std::uint64_t magic = kCkptMagic;
    const std::uint64_t fp = cfg_.fingerprint();
    std::fwrite(&magic, sizeof(magic), 1, f.get());
    std::fwrite(&fp, sizeof(fp), 1, f.get());
    gen_.params().save_stream(f.get());
    disc_.params().save_stream(f.get());
    pred_.params().save_stream(f.get());
    seg_->params().save_stream(f.get());
  }
  {
    FilePtr f(std::fopen((dir + "/optimizer").c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write " + dir + "/optimizer");
    opt_g_.save(f.get());
    opt_d_.save(f.get());
    opt_c_.save(f.get());
    const Rng::State rs = rng_.state();
    std::fwrite(&rs, sizeof(rs), 1, f.get());
    const std::uint64_t counters[3] = {static_cast<std::uint64_t>(gan_steps_done_),
                                       static_cast<std::uint64_t>(cam_steps_done_),
                                       static_cast<std::uint64_t>(gsr_fallbacks_)};
    std::fwrite(counters, sizeof(counters), 1, f.get());
  }
  cfg_.save(dir + "/config.json");
  {
    std::ofstream f(dir + "/metrics.csv");
    f << StepLog::csv_header() << "\n";
    for (const auto& log : logs_) f << log.csv_row() << "\n";
  }
}

void Trainer::load_checkpoint(const std::string& dir) {
  {
    FilePtr f(std::fopen((dir + "/params").c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot read " + dir + "/params");
    std::uint64_t magic = 0, fp = 0;
    if (std::fread(&magic, sizeof(magic), 1, f.get()) != 1 ||
        std::fread(&fp, sizeof(fp), 1, f.get()) != 1) {
      throw std::runtime_error(dir + "/params: truncated header");
    }
    if (magic != kCkptMagic) throw std::runtime_error(dir + "/params: bad magic");
    if (fp != cfg_.fingerprint()) {
      throw std::runtime_error(dir + "/params: config fingerprint mismatch");
    }
    gen_.params().load_stream(f.get());
    disc_.params().load_stream(f.get());
    pred_.params().load_stream(f.get());
    seg_->params().load_stream(f.get());
  }
  {
    FilePtr f(std::fopen((dir + "/optimizer").c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot read " + dir + "/optimizer");
    opt_g_.load(f.get());
    opt_d_.load(f.get());
    opt_c_.load(f.get());
    Rng::State rs{};
    if (std::fread(&rs, sizeof(rs), 1, f.get()) != 1) {
      throw std::runtime_error(dir + "/optimizer: truncated rng state");
    }
    rng_.restore(rs);
    std::uint64_t counters[3] = {0, 0, 0};
    if (std::fread(counters, sizeof(counters), 1, f.get()) != 1) {
      throw std::runtime_error(dir + "/optimizer: truncated counters");
    }
    gan_steps_done_ = static_cast<long>(counters[0]);
    cam_steps_done_ = static_cast<long>(counters[1]);
    gsr_fallbacks_ = static_cast<int>(counters[2]);
  }
}

CheckpointBundle load_checkpoint_bundle(const std::string& ckpt_dir) {
  CheckpointBundle b;
  b.cfg = Config::load(ckpt_dir + "/config.json");
  Rng init_rng(0);
  b.gen = std::make_unique<Generator>(b.cfg.net, b.cfg.field, init_rng);
  b.disc = std::make_unique<Discriminator>(b.cfg.net, b.cfg.train.image_size, init_rng);
  b.pred = std::make_unique<CameraPredictor>(b.cfg.net, b.cfg.field, b.cfg.train.image_size,
                                             b.cfg.train.anchor_free, init_rng);
  b.seg = std::make_shared<Segmenter>(b.cfg.net, init_rng);

  FilePtr f(std::fopen((ckpt_dir + "/params").c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot read " + ckpt_dir + "/params");
  std::uint64_t magic = 0, fp = 0;
  if (std::fread(&magic, sizeof(magic), 1, f.get()) != 1 ||
      std::fread(&fp, sizeof(fp), 1, f.get()) != 1) {
    throw std::runtime_error(ckpt_dir + "/params: truncated header");
  }
  if (magic != kCkptMagic) throw std::runtime_error(ckpt_dir + "/params: bad magic");
  if (fp != b.cfg.fingerprint()) {
    throw std::runtime_error(ckpt_dir + "/params: config fingerprint mismatch");
  }
  b.gen->params().load_stream(f.get());
  b.disc->params().load_stream(f.get());
  b.pred->params().load_stream(f.get());
  b.seg->params().load_stream(f.get());
  return b;
}

}  // namespace lpa
