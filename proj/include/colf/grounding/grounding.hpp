#pragma once

#include "colf/env/transport_env.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace colf::grounding {

using Vec3 = Eigen::Vector3d;
using Pixel = Eigen::Vector2d;  // (u, v) = (column, row); integer values are pixel centres

inline constexpr int kFullWidth = 1280;
inline constexpr int kFullHeight = 720;
inline constexpr double kMinDepth = 0.1;
inline constexpr double kMaxDepth = 10.0;
inline constexpr double kSimilarityThreshold = 0.5;

/**
 * Forward-facing pinhole camera on a robot base.
 *
 * Camera frame: x right, y down, z along the optical axis. Base frame: x
 * forward, y left, z up. The camera sits `mount_forward` ahead of and
 * `mount_height` above the base origin, looking along base x.
 */
struct CameraModel {
  int width = 224;
  int height = 224;
  double hfov = 1.5;
  double vfov = 1.0;
  double mount_height = 0.40;
  double mount_forward = 0.0;

  double fx() const;
  double fy() const;
  double cx() const { return width / 2.0; }
  double cy() const { return height / 2.0; }

  static CameraModel sim();   // 224 x 224 working resolution, 0.40 m mount
  static CameraModel real();  // 224 x 224 working resolution, 0.55 m mount
  CameraModel at_resolution(int w, int h) const;

  // Camera-frame point -> pixel. Requires z > 0.
  Pixel project(const Vec3& p_cam) const;
  // Pixel and z-depth -> camera-frame point: depth * [(u-cx)/fx, (v-cy)/fy, 1].
  Vec3 unproject(const Pixel& px, double depth) const;

  Vec3 camera_to_world(const Vec3& p_cam, const env::Pose2& robot) const;
  Vec3 world_to_camera(const Vec3& p_world, const env::Pose2& robot) const;
  Vec3 camera_position(const env::Pose2& robot) const;
  // World-frame direction of the ray through `px`, scaled so its camera z component is 1.
  Vec3 ray_direction(const Pixel& px, const env::Pose2& robot) const;

  bool in_image(const Pixel& px) const;
  void validate() const;
};

// Coordinates at the working resolution of `cam` mapped onto a `w` x `h` image.
Pixel rescale_pixel(const Pixel& px, const CameraModel& from, int w, int h);

enum class MapSource { synthetic, external };

struct SimilarityMap {
  int width = 0;
  int height = 0;
  std::vector<float> scores;  // row-major
  MapSource source = MapSource::synthetic;

  SimilarityMap() = default;
  SimilarityMap(int w, int h, MapSource src = MapSource::synthetic);
  float at(int u, int v) const { return scores[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return scores[static_cast<std::size_t>(v) * width + u]; }
  // Throws if any score lies outside [0, 1] or the shape is inconsistent.
  void validate() const;
};

/**
 * Metric z-depth grid with a validity mask. Finite positive depths are
 * clipped into [kMinDepth, kMaxDepth]; NaN, infinite, zero and negative
 * readings are marked invalid.
 */
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h);  // all invalid
  static DepthMap from_raw(int w, int h, const std::vector<float>& raw);
  void set(int u, int v, double d);  // applies the same clipping rule
  bool valid_at(int u, int v) const { return valid[static_cast<std::size_t>(v) * width + u] != 0; }
  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
};

enum class Status { ok, no_region, invalid_depth };
std::string to_string(Status s);

struct CentroidResult {
  Status status = Status::no_region;
  Pixel pixel{0, 0};
  int count = 0;
};

// Mean pixel coordinate over {score >= tau}; no_region when the set is empty.
CentroidResult threshold_centroid(const SimilarityMap& map, double tau = kSimilarityThreshold);

struct PointResult {
  Status status = Status::invalid_depth;
  Vec3 point{0, 0, 0};
};

// World point for a pixel at a given z-depth; depths outside [0.1, 10] m are refused.
PointResult backproject(const Pixel& px, double depth, const CameraModel& cam, const env::Pose2& robot);
// Same, reading the depth map at the nearest pixel.
PointResult backproject(const Pixel& px, const DepthMap& depth, const CameraModel& cam, const env::Pose2& robot);

enum class RegionDepth {
  median,             // median valid depth over the thresholded region, applied at the centroid
  per_pixel_average,  // back-project every valid region pixel, average the 3D points
};

struct GroundingResult {
  Status status = Status::no_region;
  Pixel pixel{0, 0};     // 2D centroid
  Vec3 position{0, 0, 0};  // world frame
};

// threshold -> centroid -> depth -> back-projection, without misalignment.
GroundingResult ground(const SimilarityMap& map, const DepthMap& depth, const CameraModel& cam,
                       const env::Pose2& robot, double tau = kSimilarityThreshold,
                       RegionDepth mode = RegionDepth::median);

// ---------------------------------------------------------------------------
// Synthetic scene renderer standing in for the vision-language model.

struct Entity {
  enum class Shape { box, cylinder };
  std::string label;
  Shape shape = Shape::box;
  env::Pose2 pose;                     // planar centre and yaw
  Eigen::Vector2d half_extents{0, 0};  // box
  double radius = 0;                   // cylinder
  double height = 0;                   // prism / cylinder from z = 0 to z = height

  Vec3 centre() const { return {pose.x, pose.y, height / 2}; }
};

struct SceneSpec {
  double object_height = 0.35;
  double landmark_radius = 0.3;
  double landmark_height = 0.8;
};

inline const std::string kObjectLabel = "object";
inline const std::string kGoalLabel = "goal";

/**
 * Entities of a transport scene: the target object, and the goal landmarks
 * listed in `goal_indices` (all landmarks when empty).
 */
std::vector<Entity> scene_entities(const env::WorldState& s, const env::ScenarioConfig& c, const SceneSpec& spec = {},
                                   const std::vector<int>& goal_indices = {});

enum class DepthRender {
  surface,        // ray cast against prisms, cylinders and the ground plane
  entity_centre,  // every pixel of an entity's blob reports the z-depth of that entity's centre
};

struct RenderOptions {
  DepthRender depth = DepthRender::surface;
  // Depth is only rendered where some label scores at least this much; elsewhere it is invalid.
  double depth_mask = 0.25;
};

struct RenderedView {
  std::map<std::string, SimilarityMap> maps;  // one per label present in the entity list
  DepthMap depth;

  const SimilarityMap& map(const std::string& label) const;
};

/**
 * Each entity in front of the camera contributes a Gaussian blob with peak
 * 1.0 at its projected centre; the blob's half-maximum ellipse matches the
 * entity's apparent half-width and half-height. Labels are combined by max.
 */
RenderedView render_synthetic(const std::vector<Entity>& entities, const CameraModel& cam, const env::Pose2& robot,
                              const RenderOptions& opt = {});

// ---------------------------------------------------------------------------
// Misalignment injection.

struct MisalignmentModel {
  double p_wrong = 0.0;            // probability of grounding the other landmark (two-goal scenes)
  double noise_std = 0.0;          // additive planar noise per estimate (m)
  Eigen::Vector2d bias{0.0, 0.0};  // constant planar offset (m)

  static MisalignmentModel identity() { return {}; }
  bool is_identity() const { return p_wrong == 0 && noise_std == 0 && bias.isZero(); }
  void validate() const;

  // Goal landmark this robot grounds for one trial: the instructed one, or
  // with probability p_wrong another landmark when the scene has one.
  int resolve_landmark(int instructed, int num_goals, Rng& rng) const;
  // Planar world position after bias and noise.
  Eigen::Vector2d perturb(const Eigen::Vector2d& p, Rng& rng) const;
};

/**
 * Grounded planar estimate for one label: ground() followed by the
 * misalignment model's bias and noise. A failed grounding is returned with
 * its status and no perturbation.
 */
struct PlanarEstimate {
  Status status = Status::no_region;
  Eigen::Vector2d position{0, 0};  // world frame
  Pixel pixel{0, 0};
};
PlanarEstimate estimate_position(const CameraModel& cam, const env::Pose2& robot, const RenderedView& view,
                                 const std::string& label, const MisalignmentModel& mis, Rng& rng,
                                 double tau = kSimilarityThreshold, RegionDepth mode = RegionDepth::median);

/**
 * Holds the last valid world-frame estimate for up to `max_hold` failed
 * updates. The returned value is the robot-frame planar position, or the
 * zero vector once the hold has expired (or before any valid estimate).
 */
class EstimateHold {
 public:
  explicit EstimateHold(int max_hold = 20) : max_hold_(max_hold) {}
  Eigen::Vector2d update(const PlanarEstimate& e, const env::Pose2& robot);
  // World-frame estimate currently in force, if any.
  std::optional<Eigen::Vector2d> current() const { return current_; }
  int age() const { return age_; }

 private:
  int max_hold_;
  std::optional<Eigen::Vector2d> current_;
  int age_ = 0;
};

// ---------------------------------------------------------------------------
// Fixture grids: "COLFGRID", uint32 version, uint32 kind (0 similarity, 1 depth),
// uint32 width, uint32 height, then float32 row-major, all little-endian.
// Invalid depth cells are stored as NaN.

void save_similarity(const std::filesystem::path& p, const SimilarityMap& m);
void save_depth(const std::filesystem::path& p, const DepthMap& d);
SimilarityMap load_similarity(const std::filesystem::path& p);
// The loaded grid passes through DepthMap::from_raw, so clipping applies.
DepthMap load_depth(const std::filesystem::path& p);

}  // namespace colf::grounding
