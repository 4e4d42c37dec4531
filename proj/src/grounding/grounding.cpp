#include "colf/grounding/grounding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace colf::grounding {

double CameraModel::fx() const { return (width / 2.0) / std::tan(hfov / 2.0); }
double CameraModel::fy() const { return (height / 2.0) / std::tan(vfov / 2.0); }

CameraModel CameraModel::sim() { return CameraModel{}; }

CameraModel CameraModel::real() {
  CameraModel c;
  c.mount_height = 0.55;
  return c;
}

CameraModel CameraModel::at_resolution(int w, int h) const {
  CameraModel c = *this;
  c.width = w;
  c.height = h;
  return c;
}

void CameraModel::validate() const {
  require(width > 0 && height > 0, "CameraModel: image size must be positive");
  require(hfov > 0 && hfov < M_PI && vfov > 0 && vfov < M_PI, "CameraModel: fields of view must lie in (0, pi)");
}

Pixel CameraModel::project(const Vec3& p) const {
  require(p.z() > 0, "CameraModel::project: point is not in front of the camera");
  return {fx() * p.x() / p.z() + cx(), fy() * p.y() / p.z() + cy()};
}

Vec3 CameraModel::unproject(const Pixel& px, double depth) const {
  return depth * Vec3((px.x() - cx()) / fx(), (px.y() - cy()) / fy(), 1.0);
}

namespace {

// Camera-frame vector -> base-frame vector (rotation only).
Vec3 cam_to_base_rot(const Vec3& c) { return {c.z(), -c.x(), -c.y()}; }
Vec3 base_to_cam_rot(const Vec3& b) { return {-b.y(), -b.z(), b.x()}; }

Vec3 base_to_world_rot(const Vec3& b, double yaw) {
  const double cs = std::cos(yaw), sn = std::sin(yaw);
  return {cs * b.x() - sn * b.y(), sn * b.x() + cs * b.y(), b.z()};
}
Vec3 world_to_base_rot(const Vec3& w, double yaw) { return base_to_world_rot(w, -yaw); }

}  // namespace

Vec3 CameraModel::camera_position(const env::Pose2& robot) const {
  return Vec3(robot.x, robot.y, 0) + base_to_world_rot(Vec3(mount_forward, 0, mount_height), robot.yaw);
}

Vec3 CameraModel::camera_to_world(const Vec3& p_cam, const env::Pose2& robot) const {
  return camera_position(robot) + base_to_world_rot(cam_to_base_rot(p_cam), robot.yaw);
}

Vec3 CameraModel::world_to_camera(const Vec3& p_world, const env::Pose2& robot) const {
  return base_to_cam_rot(world_to_base_rot(p_world - camera_position(robot), robot.yaw));
}

Vec3 CameraModel::ray_direction(const Pixel& px, const env::Pose2& robot) const {
  return base_to_world_rot(cam_to_base_rot(unproject(px, 1.0)), robot.yaw);
}

bool CameraModel::in_image(const Pixel& px) const {
  return px.x() >= -0.5 && px.x() < width - 0.5 && px.y() >= -0.5 && px.y() < height - 0.5;
}

Pixel rescale_pixel(const Pixel& px, const CameraModel& from, int w, int h) {
  return {px.x() * w / from.width, px.y() * h / from.height};
}

SimilarityMap::SimilarityMap(int w, int h, MapSource src)
    : width(w), height(h), scores(static_cast<std::size_t>(w) * h, 0.0f), source(src) {
  require(w > 0 && h > 0, "SimilarityMap: size must be positive");
}

void SimilarityMap::validate() const {
  require(width > 0 && height > 0 && scores.size() == static_cast<std::size_t>(width) * height,
          "SimilarityMap: inconsistent shape");
  for (float s : scores) require(s >= 0.0f && s <= 1.0f, "SimilarityMap: score outside [0, 1]");
}

DepthMap::DepthMap(int w, int h)
    : width(w),
      height(h),
      depth(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::quiet_NaN()),
      valid(static_cast<std::size_t>(w) * h, 0) {
  require(w > 0 && h > 0, "DepthMap: size must be positive");
}

void DepthMap::set(int u, int v, double d) {
  const std::size_t i = static_cast<std::size_t>(v) * width + u;
  if (std::isfinite(d) && d > 0) {
    depth[i] = static_cast<float>(std::clamp(d, kMinDepth, kMaxDepth));
    valid[i] = 1;
  } else {
    depth[i] = std::numeric_limits<float>::quiet_NaN();
    valid[i] = 0;
  }
}

DepthMap DepthMap::from_raw(int w, int h, const std::vector<float>& raw) {
  require(raw.size() == static_cast<std::size_t>(w) * h, "DepthMap::from_raw: size mismatch");
  DepthMap d(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) d.set(u, v, raw[static_cast<std::size_t>(v) * w + u]);
  return d;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::ok: return "ok";
    case Status::no_region: return "no_region";
    case Status::invalid_depth: return "invalid_depth";
  }
  return "?";
}

CentroidResult threshold_centroid(const SimilarityMap& map, double tau) {
  require(tau > 0 && tau < 1, "threshold_centroid: tau must be in (0, 1)");
  double su = 0, sv = 0;
  int n = 0;
  for (int v = 0; v < map.height; ++v)
    for (int u = 0; u < map.width; ++u)
      if (map.at(u, v) >= tau) {
        su += u;
        sv += v;
        ++n;
      }
  if (n == 0) return {};
  return {Status::ok, Pixel(su / n, sv / n), n};
}

PointResult backproject(const Pixel& px, double depth, const CameraModel& cam, const env::Pose2& robot) {
  if (!(std::isfinite(depth) && depth >= kMinDepth && depth <= kMaxDepth)) return {};
  require(cam.in_image(px), "backproject: pixel outside the image");
  return {Status::ok, cam.camera_to_world(cam.unproject(px, depth), robot)};
}

PointResult backproject(const Pixel& px, const DepthMap& depth, const CameraModel& cam, const env::Pose2& robot) {
  require(depth.width == cam.width && depth.height == cam.height, "backproject: depth map / camera size mismatch");
  require(cam.in_image(px), "backproject: pixel outside the image");
  const int u = static_cast<int>(std::lround(px.x())), v = static_cast<int>(std::lround(px.y()));
  if (!depth.valid_at(u, v)) return {};
  return backproject(px, depth.at(u, v), cam, robot);
}

GroundingResult ground(const SimilarityMap& map, const DepthMap& depth, const CameraModel& cam,
                       const env::Pose2& robot, double tau, RegionDepth mode) {
  require(map.width == cam.width && map.height == cam.height, "ground: similarity map / camera size mismatch");
  require(depth.width == cam.width && depth.height == cam.height, "ground: depth map / camera size mismatch");
  const CentroidResult c = threshold_centroid(map, tau);
  GroundingResult r;
  r.status = c.status;
  if (c.status != Status::ok) return r;
  r.pixel = c.pixel;

  if (mode == RegionDepth::median) {
    std::vector<double> d;
    for (int v = 0; v < map.height; ++v)
      for (int u = 0; u < map.width; ++u)
        if (map.at(u, v) >= tau && depth.valid_at(u, v)) d.push_back(depth.at(u, v));
    if (d.empty()) {
      r.status = Status::invalid_depth;
      return r;
    }
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size() / 2;
    const double med = d.size() % 2 == 1 ? d[m] : 0.5 * (d[m - 1] + d[m]);
    const PointResult p = backproject(c.pixel, med, cam, robot);
    r.status = p.status;
    r.position = p.point;
    return r;
  }

  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (int v = 0; v < map.height; ++v)
    for (int u = 0; u < map.width; ++u)
      if (map.at(u, v) >= tau && depth.valid_at(u, v)) {
        const PointResult p = backproject(Pixel(u, v), depth.at(u, v), cam, robot);
        if (p.status != Status::ok) continue;
        sum += p.point;
        ++n;
      }
  if (n == 0) {
    r.status = Status::invalid_depth;
    return r;
  }
  r.position = sum / n;
  return r;
}

// ---------------------------------------------------------------------------

std::vector<Entity> scene_entities(const env::WorldState& s, const env::ScenarioConfig& c, const SceneSpec& spec,
                                   const std::vector<int>& goal_indices) {
  std::vector<Entity> out;
  Entity obj;
  obj.label = kObjectLabel;
  obj.shape = Entity::Shape::box;
  obj.pose = s.object.pose;
  obj.half_extents = c.object_half_extents;
  obj.height = spec.object_height;
  out.push_back(obj);
  std::vector<int> idx = goal_indices;
  if (idx.empty())
    for (int i = 0; i < static_cast<int>(s.goals.size()); ++i) idx.push_back(i);
  for (int i : idx) {
    Entity g;
    g.label = kGoalLabel;
    g.shape = Entity::Shape::cylinder;
    g.pose = {s.goals.at(i).x(), s.goals.at(i).y(), 0.0};
    g.radius = spec.landmark_radius;
    g.height = spec.landmark_height;
    out.push_back(g);
  }
  return out;
}

const SimilarityMap& RenderedView::map(const std::string& label) const {
  const auto it = maps.find(label);
  if (it == maps.end()) throw std::out_of_range("RenderedView: no map for label '" + label + "'");
  return it->second;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Smallest positive ray parameter hitting the entity's solid, or +inf.
double intersect(const Entity& e, const Vec3& o, const Vec3& d) {
  if (e.shape == Entity::Shape::box) {
    const double cs = std::cos(-e.pose.yaw), sn = std::sin(-e.pose.yaw);
    const double ox = o.x() - e.pose.x, oy = o.y() - e.pose.y;
    const std::array<double, 3> lo{-e.half_extents.x(), -e.half_extents.y(), 0.0};
    const std::array<double, 3> hi{e.half_extents.x(), e.half_extents.y(), e.height};
    const std::array<double, 3> org{cs * ox - sn * oy, sn * ox + cs * oy, o.z()};
    const std::array<double, 3> dir{cs * d.x() - sn * d.y(), sn * d.x() + cs * d.y(), d.z()};
    double t0 = -kInf, t1 = kInf;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(dir[k]) < 1e-15) {
        if (org[k] < lo[k] || org[k] > hi[k]) return kInf;
        continue;
      }
      double a = (lo[k] - org[k]) / dir[k], b = (hi[k] - org[k]) / dir[k];
      if (a > b) std::swap(a, b);
      t0 = std::max(t0, a);
      t1 = std::min(t1, b);
    }
    if (t1 < t0 || t0 <= 0) return kInf;
    return t0;
  }
  double best = kInf;
  const double px = o.x() - e.pose.x, py = o.y() - e.pose.y;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = 2 * (px * d.x() + py * d.y());
    const double c = px * px + py * py - e.radius * e.radius;
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double t = (-b - std::sqrt(disc)) / (2 * a);
      const double z = o.z() + t * d.z();
      if (t > 0 && z >= 0 && z <= e.height) best = t;
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    const double t = (e.height - o.z()) / d.z();
    const double x = px + t * d.x(), y = py + t * d.y();
    if (t > 0 && x * x + y * y <= e.radius * e.radius) best = std::min(best, t);
  }
  return best;
}

}  // namespace

RenderedView render_synthetic(const std::vector<Entity>& entities, const CameraModel& cam, const env::Pose2& robot,
                              const RenderOptions& opt) {
  cam.validate();
  const int W = cam.width, H = cam.height;
  RenderedView view;
  view.depth = DepthMap(W, H);
  for (const Entity& e : entities)
    if (!view.maps.count(e.label)) view.maps.emplace(e.label, SimilarityMap(W, H));

  // Strongest blob per pixel, for the depth mask and entity-centre depth.
  std::vector<float> best(static_cast<std::size_t>(W) * H, 0.0f);
  std::vector<int> owner(static_cast<std::size_t>(W) * H, -1);
  std::vector<double> centre_depth(entities.size(), 0.0);
  const double half_max = std::sqrt(2.0 * std::log(2.0));

  for (std::size_t k = 0; k < entities.size(); ++k) {
    const Entity& e = entities[k];
    const Vec3 c = cam.world_to_camera(e.centre(), robot);
    centre_depth[k] = c.z();
    if (c.z() <= kMinDepth) continue;
    const Pixel p = cam.project(c);
    const double planar = e.shape == Entity::Shape::box ? 0.5 * (e.half_extents.x() + e.half_extents.y()) : e.radius;
    const double su = cam.fx() * planar / c.z() / half_max;
    const double sv = cam.fy() * (e.height / 2) / c.z() / half_max;
    const int u0 = std::max(0, static_cast<int>(std::floor(p.x() - 4 * su)));
    const int u1 = std::min(W - 1, static_cast<int>(std::ceil(p.x() + 4 * su)));
    const int v0 = std::max(0, static_cast<int>(std::floor(p.y() - 4 * sv)));
    const int v1 = std::min(H - 1, static_cast<int>(std::ceil(p.y() + 4 * sv)));
    SimilarityMap& m = view.maps.at(e.label);
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) {
        const double du = (u - p.x()) / su, dv = (v - p.y()) / sv;
        const float s = static_cast<float>(std::exp(-0.5 * (du * du + dv * dv)));
        m.at(u, v) = std::max(m.at(u, v), s);
        const std::size_t i = static_cast<std::size_t>(v) * W + u;
        if (s > best[i]) {
          best[i] = s;
          owner[i] = static_cast<int>(k);
        }
      }
  }

  const Vec3 origin = cam.camera_position(robot);
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * W + u;
      if (best[i] < opt.depth_mask) continue;
      if (opt.depth == DepthRender::entity_centre) {
        view.depth.set(u, v, centre_depth[owner[i]]);
        continue;
      }
      const Vec3 d = cam.ray_direction(Pixel(u, v), robot);
      double t = d.z() < 0 ? -origin.z() / d.z() : kInf;
      for (const Entity& e : entities) t = std::min(t, intersect(e, origin, d));
      view.depth.set(u, v, t);  // t is the z-depth since the ray has unit camera-z
    }
  return view;
}

// ---------------------------------------------------------------------------

void MisalignmentModel::validate() const {
  require(p_wrong >= 0 && p_wrong <= 1, "MisalignmentModel: p_wrong must be in [0, 1]");
  require(noise_std >= 0, "MisalignmentModel: noise std must be >= 0");
  require(bias.allFinite(), "MisalignmentModel: bias must be finite");
}

int MisalignmentModel::resolve_landmark(int instructed, int num_goals, Rng& rng) const {
  validate();
  require(instructed >= 0 && instructed < num_goals, "resolve_landmark: instructed goal out of range");
  const bool wrong = uniform(rng, 0.0, 1.0) < p_wrong;
  if (!wrong || num_goals < 2) return instructed;
  return (instructed + 1) % num_goals;
}

Eigen::Vector2d MisalignmentModel::perturb(const Eigen::Vector2d& p, Rng& rng) const {
  Eigen::Vector2d out = p + bias;
  if (noise_std > 0) {
    out.x() += noise_std * standard_normal(rng);
    out.y() += noise_std * standard_normal(rng);
  }
  return out;
}

PlanarEstimate estimate_position(const CameraModel& cam, const env::Pose2& robot, const RenderedView& view,
                                 const std::string& label, const MisalignmentModel& mis, Rng& rng, double tau,
                                 RegionDepth mode) {
  PlanarEstimate e;
  const auto it = view.maps.find(label);
  if (it == view.maps.end()) return e;
  const GroundingResult g = ground(it->second, view.depth, cam, robot, tau, mode);
  e.status = g.status;
  e.pixel = g.pixel;
  if (g.status == Status::ok) e.position = mis.perturb(g.position.head<2>(), rng);
  return e;
}

Eigen::Vector2d EstimateHold::update(const PlanarEstimate& e, const env::Pose2& robot) {
  if (e.status == Status::ok) {
    current_ = e.position;
    age_ = 0;
  } else if (current_) {
    if (++age_ > max_hold_) current_.reset();
  }
  if (!current_) return Eigen::Vector2d::Zero();
  return env::to_frame(robot, *current_);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kGridMagic[8] = {'C', 'O', 'L', 'F', 'G', 'R', 'I', 'D'};
constexpr std::uint32_t kGridVersion = 1;

void put_u32(std::string& s, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}
std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return x;
}

void write_grid(const std::filesystem::path& p, std::uint32_t kind, int w, int h, const std::vector<float>& data) {
  std::string out(kGridMagic, 8);
  put_u32(out, kGridVersion);
  put_u32(out, kind);
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(h));
  for (float f : data) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write fixture " + p.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("short write to fixture " + p.string());
}

std::vector<float> read_grid(const std::filesystem::path& p, std::uint32_t kind, int& w, int& h) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open fixture " + p.string());
  const std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (s.size() < 24 || std::memcmp(s.data(), kGridMagic, 8) != 0)
    throw std::runtime_error("fixture " + p.string() + ": bad magic");
  if (get_u32(s, 8) != kGridVersion) throw std::runtime_error("fixture " + p.string() + ": unsupported version");
  if (get_u32(s, 12) != kind) throw std::runtime_error("fixture " + p.string() + ": wrong grid kind");
  w = static_cast<int>(get_u32(s, 16));
  h = static_cast<int>(get_u32(s, 20));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (w <= 0 || h <= 0 || s.size() != 24 + 4 * n) throw std::runtime_error("fixture " + p.string() + ": bad size");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = get_u32(s, 24 + 4 * i);
    std::memcpy(&data[i], &bits, 4);
  }
  return data;
}

}  // namespace

void save_similarity(const std::filesystem::path& p, const SimilarityMap& m) {
  m.validate();
  write_grid(p, 0, m.width, m.height, m.scores);
}

void save_depth(const std::filesystem::path& p, const DepthMap& d) { write_grid(p, 1, d.width, d.height, d.depth); }

SimilarityMap load_similarity(const std::filesystem::path& p) {
  int w = 0, h = 0;
  SimilarityMap m;
  m.scores = read_grid(p, 0, w, h);
  m.width = w;
  m.height = h;
  m.source = MapSource::external;
  m.validate();
  return m;
}

DepthMap load_depth(const std::filesystem::path& p) {
  int w = 0, h = 0;
  const std::vector<float> raw = read_grid(p, 1, w, h);
  return DepthMap::from_raw(w, h, raw);
}

}  // namespace colf::grounding
