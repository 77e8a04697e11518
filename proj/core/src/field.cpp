#include "lpa/field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lpa {

using nn::Tensor;
using nn::Var;

TriPlaneField::TriPlaneField(const FieldConfig& cfg, RoomBox room,
                             std::array<nn::Var, 3> planes, Decoder decoder)
    : cfg_(cfg),
      room_(room),
      max_volume_(cfg.max_room_x, cfg.max_room_y, cfg.max_room_z),
      planes_(std::move(planes)),
      decoder_(std::move(decoder)) {
  for (const auto& p : planes_) {
    const auto& s = p->value.shape();
    if (s.size() != 3 || s[0] != cfg.channels || s[1] != cfg.plane_res || s[2] != cfg.plane_res) {
      throw std::invalid_argument("TriPlaneField: plane shape mismatch");
    }
  }
}

TriPlaneField TriPlaneField::random_field(const FieldConfig& cfg, const RoomBox& room,
                                          Rng& rng, double plane_scale) {
  auto mk = [&](std::vector<int> shape, double s) {
    return nn::make_var(Tensor::randn(std::move(shape), rng, s), true);
  };
  std::array<nn::Var, 3> planes = {
      mk({cfg.channels, cfg.plane_res, cfg.plane_res}, plane_scale),
      mk({cfg.channels, cfg.plane_res, cfg.plane_res}, plane_scale),
      mk({cfg.channels, cfg.plane_res, cfg.plane_res}, plane_scale)};
  const int h = cfg.decoder_hidden;
  Decoder dec;
  dec.w1 = mk({cfg.channels, h}, std::sqrt(2.0 / cfg.channels));
  dec.b1 = nn::make_var(Tensor({h}), true);
  dec.w2 = mk({h, h}, std::sqrt(2.0 / h));
  dec.b2 = nn::make_var(Tensor({h}), true);
  dec.w3 = mk({h, 4}, std::sqrt(2.0 / h));
  dec.b3 = nn::make_var(Tensor({4}), true);
  return TriPlaneField(cfg, room, std::move(planes), std::move(dec));
}

namespace {

using Coords = Eigen::Matrix<nn::Real, Eigen::Dynamic, 2, Eigen::RowMajor>;

// Normalized projections of points onto the three planes, plus the
// in-max-volume mask.
struct Projections {
  Coords xy, xz, yz;
  Eigen::VectorXd mask;
};

Projections project_points(const PointMatrix& pts, const RoomBox& max_volume) {
  const double hx = max_volume.size.x() / 2.0;
  const double hy = max_volume.size.y();
  const double hz = max_volume.size.z() / 2.0;
  const auto m = pts.rows();
  Projections pr;
  pr.xy.resize(m, 2);
  pr.xz.resize(m, 2);
  pr.yz.resize(m, 2);
  pr.mask.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = pts(i, 0), y = pts(i, 1), z = pts(i, 2);
    const double nx = x / hx;
    const double ny = 2.0 * y / hy - 1.0;
    const double nz = z / hz;
    pr.xy(i, 0) = nx;
    pr.xy(i, 1) = ny;
    pr.xz(i, 0) = nx;
    pr.xz(i, 1) = nz;
    pr.yz(i, 0) = ny;
    pr.yz(i, 1) = nz;
    pr.mask(i) = (std::abs(nx) <= 1.0 && std::abs(ny) <= 1.0 && std::abs(nz) <= 1.0) ? 1.0 : 0.0;
  }
  return pr;
}

}  // namespace

std::pair<Var, Var> TriPlaneField::sample(const PointMatrix& points) const {
  const auto m = static_cast<int>(points.rows());
  const Projections pr = project_points(points, max_volume_);

  Var feat = nn::grid_sample_plane(planes_[0], pr.xy);
  feat = nn::add(feat, nn::grid_sample_plane(planes_[1], pr.xz));
  feat = nn::add(feat, nn::grid_sample_plane(planes_[2], pr.yz));

  Var h = nn::leaky_relu(nn::linear(feat, decoder_.w1, decoder_.b1));
  h = nn::leaky_relu(nn::linear(h, decoder_.w2, decoder_.b2));
  Var out = nn::linear(h, decoder_.w3, decoder_.b3);

  Tensor mask_sigma({m, 1});
  Tensor mask_rgb({m, 3});
  Tensor bg_rgb({m, 3});
  for (int i = 0; i < m; ++i) {
    const double mk = pr.mask(i);
    mask_sigma[static_cast<std::size_t>(i)] = mk;
    for (int c = 0; c < 3; ++c) {
      mask_rgb[static_cast<std::size_t>(i) * 3 + c] = mk;
      bg_rgb[static_cast<std::size_t>(i) * 3 + c] = (1.0 - mk) * cfg_.background;
    }
  }

  Var sigma = nn::softplus(nn::slice_cols(out, 0, 1));
  if (density_scale != 1.0) sigma = nn::mul_scalar(sigma, density_scale);
  sigma = nn::mul_const(sigma, mask_sigma);
  Var rgb = nn::sigmoid(nn::slice_cols(out, 1, 4));
  rgb = nn::add_const(nn::mul_const(rgb, mask_rgb), bg_rgb);
  return {sigma, rgb};
}

std::pair<double, Eigen::Vector3d> TriPlaneField::decode_features(
    const Eigen::VectorXd& feature) const {
  const int c = cfg_.channels;
  const int h = cfg_.decoder_hidden;
  if (feature.size() != c) throw std::invalid_argument("decode_features: wrong size");
  auto lrelu = [](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = v(i) > 0 ? v(i) : 0.2 * v(i);
    return v;
  };
  const Eigen::VectorXd h1 =
      lrelu(decoder_.w1->value.mat(c, h).transpose() * feature + decoder_.b1->value.vec());
  const Eigen::VectorXd h2 =
      lrelu(decoder_.w2->value.mat(h, h).transpose() * h1 + decoder_.b2->value.vec());
  const Eigen::VectorXd out =
      decoder_.w3->value.mat(h, 4).transpose() * h2 + decoder_.b3->value.vec();
  const double pre = out(0);
  const double sigma =
      (std::max(pre, 0.0) + std::log1p(std::exp(-std::abs(pre)))) * density_scale;
  Eigen::Vector3d rgb;
  for (int i = 0; i < 3; ++i) rgb(i) = 1.0 / (1.0 + std::exp(-out(i + 1)));
  return {sigma, rgb};
}

std::pair<double, Eigen::Vector3d> TriPlaneField::sample_point(const Vec3& point) const {
  if (!max_volume_.contains(point)) {
    return {0.0, Eigen::Vector3d::Constant(cfg_.background)};
  }
  PointMatrix pts(1, 3);
  pts.row(0) = point.transpose();
  const Projections pr = project_points(pts, max_volume_);
  const int c = cfg_.channels;
  const int n = cfg_.plane_res;
  Eigen::VectorXd feat = Eigen::VectorXd::Zero(c);
  const std::array<const Coords*, 3> coords = {&pr.xy, &pr.xz, &pr.yz};
  for (int p = 0; p < 3; ++p) {
    const double gx = std::clamp(((*coords[p])(0, 0) + 1.0) / 2.0 * (n - 1), 0.0, double(n - 1));
    const double gy = std::clamp(((*coords[p])(0, 1) + 1.0) / 2.0 * (n - 1), 0.0, double(n - 1));
    const int x0 = std::min(static_cast<int>(gx), n - 2);
    const int y0 = std::min(static_cast<int>(gy), n - 2);
    const double fx = gx - x0, fy = gy - y0;
    const nn::Real* pd = planes_[static_cast<std::size_t>(p)]->value.data();
    const std::size_t nn2 = static_cast<std::size_t>(n) * n;
    for (int ch = 0; ch < c; ++ch) {
      const nn::Real* pc = pd + static_cast<std::size_t>(ch) * nn2;
      feat(ch) += (1 - fy) * ((1 - fx) * pc[y0 * n + x0] + fx * pc[y0 * n + x0 + 1]) +
                  fy * ((1 - fx) * pc[(y0 + 1) * n + x0] + fx * pc[(y0 + 1) * n + x0 + 1]);
    }
  }
  return decode_features(feat);
}

double TriPlaneField::density_at(const Vec3& point) const { return sample_point(point).first; }

Eigen::VectorXd TriPlaneField::densities_at(const PointMatrix& points) const {
  Eigen::VectorXd out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out(i) = density_at(points.row(i).transpose());
  }
  return out;
}

RenderOutput RenderResult::to_output() const {
  RenderOutput o;
  o.width = width;
  o.height = height;
  const int r = width * height;
  o.rgb.resize(static_cast<std::size_t>(r) * 3);
  o.depth.resize(static_cast<std::size_t>(r));
  o.opacity.resize(static_cast<std::size_t>(r));
  const nn::Real* d = packed->value.data();
  for (int i = 0; i < r; ++i) {
    o.rgb[static_cast<std::size_t>(i) * 3 + 0] = d[i * 5 + 0];
    o.rgb[static_cast<std::size_t>(i) * 3 + 1] = d[i * 5 + 1];
    o.rgb[static_cast<std::size_t>(i) * 3 + 2] = d[i * 5 + 2];
    o.depth[static_cast<std::size_t>(i)] = d[i * 5 + 3];
    o.opacity[static_cast<std::size_t>(i)] = d[i * 5 + 4];
  }
  return o;
}

RenderResult render_field(const FieldSampler& field, const RaySet& rays,
                          const FieldConfig& cfg, int steps, Rng* rng,
                          double near_override, double far_override) {
  if (steps < 2) throw std::invalid_argument("render: steps must be >= 2");
  const int r = rays.count();
  const double near = near_override > 0 ? near_override : cfg.near_dist;
  const double far = far_override > 0 ? far_override : cfg.far_dist();
  const double seg = (far - near) / steps;

  Tensor t({r, steps});
  Tensor delta({r, steps});
  PointMatrix points(static_cast<Eigen::Index>(r) * steps, 3);
  for (int i = 0; i < r; ++i) {
    double prev = 0;
    const Vec3 origin = rays.origin_of(i);
    for (int s = 0; s < steps; ++s) {
      const double u = rng ? rng->uniform() : 0.5;
      const double ts = near + (s + u) * seg;
      t[static_cast<std::size_t>(i) * steps + s] = ts;
      if (s > 0) {
        delta[static_cast<std::size_t>(i) * steps + s - 1] = ts - prev;
      }
      prev = ts;
      points.row(static_cast<Eigen::Index>(i) * steps + s) =
          (origin + ts * rays.directions.col(i)).transpose();
    }
    delta[static_cast<std::size_t>(i) * steps + steps - 1] = far - prev;
  }

  auto [sigma, rgb] = field.sample(points);
  sigma = nn::reshape(sigma, {r, steps});
  rgb = nn::reshape(rgb, {r, steps * 3});
  const nn::Real bg[3] = {cfg.background, cfg.background, cfg.background};
  RenderResult res;
  res.packed = nn::volume_integrate(sigma, rgb, t, delta, far, bg);
  res.width = rays.width;
  res.height = rays.height;
  return res;
}

RenderResult render(const TriPlaneField& field, const RaySet& rays, int steps, Rng* rng) {
  return render_field(field, rays, field.config(), steps, rng);
}

}  // namespace lpa
