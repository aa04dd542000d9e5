#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "gcbf/dynamics/dynamics.hpp"
#include "gcbf/numerics/rng.hpp"

namespace gcbf::world {

using dyn::Mat;
using dyn::Vec;

// 2D worlds hold axis-aligned boxes, 3D worlds hold spheres.
struct Obstacle {
  Vec center;  // pos_dim
  Vec half;    // box half side lengths (2D)
  double radius = 0.0;  // sphere radius (3D)

  static Obstacle box(const Vec& center, const Vec& side) { return {center, 0.5 * side, 0.0}; }
  static Obstacle sphere(const Vec& center, double radius) { return {center, Vec(), radius}; }
  bool is_sphere() const { return half.size() == 0; }
  // Signed distance from a point to the obstacle surface (negative inside).
  double signed_distance(const Vec& p) const;
};

struct WorldParams {
  double sense_radius = 0.5;  // R
  double agent_radius = 0.05;  // r
  int n_rays = 0;  // 0 selects 32 in 2D and 130 in 3D
  double area = 4.0;  // l
};

struct World {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  std::vector<Vec> states;  // N x n
  std::vector<Vec> goals;   // N x pos_dim
  std::vector<Obstacle> obstacles;
  WorldParams params;
  std::int64_t time_index = 0;

  int n_agents() const { return static_cast<int>(states.size()); }
  int pos_dim() const { return dyn::env_shape(env).pos_dim; }
  int n_rays() const;
  Vec position(int i) const { return states[static_cast<std::size_t>(i)].head(pos_dim()); }
  // Throws ConfigError unless R > 2r > 0, shapes agree and everything is finite.
  void validate() const;
};

struct LidarHit {
  int owner = 0;
  Vec position;   // pos_dim
  Vec direction;  // unit ray direction
  Vec normal;     // outward surface normal at the hit
  double distance = 0.0;
};

// Unit ray directions: evenly spaced angles in 2D, a Fibonacci lattice in 3D.
std::vector<Vec> ray_directions(int pos_dim, int n_rays);

// Distance along the ray to the nearest surface point with 0 < t, or nullopt.
std::optional<double> ray_box(const Vec& origin, const Vec& dir, const Obstacle& box, Vec* normal = nullptr);
std::optional<double> ray_sphere(const Vec& origin, const Vec& dir, const Obstacle& sphere, Vec* normal = nullptr);

// Nearest hit of every ray strictly inside R; rays that see nothing produce no hit.
std::vector<LidarHit> cast_lidar(const Vec& position, int owner, const std::vector<Obstacle>& obstacles,
                                 const std::vector<Vec>& directions, double range);

// Per-agent safety: every other agent farther than 2r, every LiDAR hit farther
// than r, and the agent not inside an obstacle.
std::vector<bool> safety_status(const World& w);
std::vector<bool> safety_status(const World& w, const std::vector<LidarHit>& hits);

// Pairs (i, j), i < j, closer than `radius`, found with a uniform cell grid.
std::vector<std::pair<int, int>> close_pairs(const std::vector<Vec>& positions, double radius);

// Uniform sampling with rejection. Throws InfeasibleScenarioError when the
// rejection budget runs out.
World sample_scenario(dyn::EnvKind env, int n_agents, const WorldParams& params, int n_obstacles, num::Rng& rng,
                      int rejection_budget = 10000);

}  // namespace gcbf::world
