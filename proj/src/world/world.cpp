#include "gcbf/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "gcbf/error.hpp"

namespace gcbf::world {

double Obstacle::signed_distance(const Vec& p) const {
  if (is_sphere()) return (p - center).norm() - radius;
  const Vec q = (p - center).cwiseAbs() - half;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

int World::n_rays() const {
  if (params.n_rays > 0) return params.n_rays;
  return pos_dim() == 2 ? 32 : 130;
}

void World::validate() const {
  const auto shape = dyn::env_shape(env);
  const double big_r = params.sense_radius, r = params.agent_radius;
  if (!(r > 0 && big_r > 2 * r)) {
    throw ConfigError("need R > 2r > 0, got R=" + std::to_string(big_r) + " r=" + std::to_string(r));
  }
  if (states.size() != goals.size()) throw ConfigError("agent and goal counts differ");
  for (const Vec& x : states) {
    if (x.size() != shape.n) throw ConfigError("agent state has wrong dimension");
    if (!x.allFinite()) throw ConfigError("agent state is not finite");
  }
  for (const Vec& g : goals) {
    if (g.size() != shape.pos_dim || !g.allFinite()) throw ConfigError("goal has wrong dimension or is not finite");
  }
  for (const Obstacle& o : obstacles) {
    if (o.center.size() != shape.pos_dim) throw ConfigError("obstacle centre has wrong dimension");
    if (shape.pos_dim == 2 && (o.is_sphere() || o.half.size() != 2)) throw ConfigError("2D obstacles must be boxes");
    if (shape.pos_dim == 3 && !o.is_sphere()) throw ConfigError("3D obstacles must be spheres");
  }
}

std::vector<Vec> ray_directions(int pos_dim, int n_rays) {
  std::vector<Vec> dirs;
  dirs.reserve(static_cast<std::size_t>(n_rays));
  if (pos_dim == 2) {
    for (int k = 0; k < n_rays; ++k) {
      const double a = 2 * std::numbers::pi * k / n_rays;
      dirs.push_back(Eigen::Vector2d(std::cos(a), std::sin(a)));
    }
    return dirs;
  }
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n_rays; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / n_rays;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    dirs.push_back(Eigen::Vector3d(rho * std::cos(phi), rho * std::sin(phi), z));
  }
  return dirs;
}

std::optional<double> ray_box(const Vec& origin, const Vec& dir, const Obstacle& box, Vec* normal) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1, far_axis = -1;
  for (int k = 0; k < origin.size(); ++k) {
    const double lo = box.center[k] - box.half[k];
    const double hi = box.center[k] + box.half[k];
    if (std::abs(dir[k]) < 1e-15) {
      if (origin[k] < lo || origin[k] > hi) return std::nullopt;
      continue;
    }
    double t1 = (lo - origin[k]) / dir[k];
    double t2 = (hi - origin[k]) / dir[k];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > t_near) {
      t_near = t1;
      near_axis = k;
    }
    if (t2 < t_far) {
      t_far = t2;
      far_axis = k;
    }
  }
  if (t_far < t_near || t_far <= 0) return std::nullopt;
  const bool entering = t_near > 0;
  const int axis = entering ? near_axis : far_axis;
  if (normal) {
    *normal = Vec::Zero(origin.size());
    // outward normal: against the ray when entering, along it when leaving
    (*normal)[axis] = (dir[axis] > 0) == entering ? -1.0 : 1.0;
  }
  return entering ? t_near : t_far;
}

std::optional<double> ray_sphere(const Vec& origin, const Vec& dir, const Obstacle& sphere, Vec* normal) {
  const Vec oc = origin - sphere.center;
  const double b = dir.dot(oc);
  const double c = oc.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  const double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= 0) t = -b + s;
  if (t <= 0) return std::nullopt;
  if (normal) *normal = (origin + t * dir - sphere.center) / sphere.radius;
  return t;
}

std::vector<LidarHit> cast_lidar(const Vec& position, int owner, const std::vector<Obstacle>& obstacles,
                                 const std::vector<Vec>& directions, double range) {
  std::vector<LidarHit> hits;
  std::vector<const Obstacle*> nearby;
  for (const Obstacle& o : obstacles) {
    if (o.signed_distance(position) < range) nearby.push_back(&o);
  }
  if (nearby.empty()) return hits;
  for (const Vec& d : directions) {
    double best = range;
    Vec best_normal;
    for (const Obstacle* o : nearby) {
      Vec nrm;
      const auto t = o->is_sphere() ? ray_sphere(position, d, *o, &nrm) : ray_box(position, d, *o, &nrm);
      if (t && *t < best) {
        best = *t;
        best_normal = nrm;
      }
    }
    if (best < range) hits.push_back({owner, position + best * d, d, best_normal, best});
  }
  return hits;
}

std::vector<std::pair<int, int>> close_pairs(const std::vector<Vec>& positions, double radius) {
  std::vector<std::pair<int, int>> pairs;
  const int n = static_cast<int>(positions.size());
  const double r2 = radius * radius;
  if (n <= 64) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if ((positions[i] - positions[j]).squaredNorm() < r2) pairs.emplace_back(i, j);
      }
    }
    return pairs;
  }
  const int dim = static_cast<int>(positions[0].size());
  auto cell_of = [&](const Vec& p) {
    std::array<long, 3> c{0, 0, 0};
    for (int k = 0; k < dim; ++k) c[k] = static_cast<long>(std::floor(p[k] / radius));
    return c;
  };
  std::map<std::array<long, 3>, std::vector<int>> grid;
  for (int i = 0; i < n; ++i) grid[cell_of(positions[i])].push_back(i);
  for (int i = 0; i < n; ++i) {
    const auto c = cell_of(positions[i]);
    const int dz = dim == 3 ? 1 : 0;
    for (long x = -1; x <= 1; ++x) {
      for (long y = -1; y <= 1; ++y) {
        for (long z = -dz; z <= dz; ++z) {
          const auto it = grid.find({c[0] + x, c[1] + y, c[2] + z});
          if (it == grid.end()) continue;
          for (int j : it->second) {
            if (j > i && (positions[i] - positions[j]).squaredNorm() < r2) pairs.emplace_back(i, j);
          }
        }
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::vector<bool> safety_status(const World& w, const std::vector<LidarHit>& hits) {
  const int n = w.n_agents();
  const double r = w.params.agent_radius;
  std::vector<bool> safe(static_cast<std::size_t>(n), true);
  std::vector<Vec> pos;
  for (int i = 0; i < n; ++i) pos.push_back(w.position(i));
  for (auto [i, j] : close_pairs(pos, 2 * r + 1e-12)) {
    if ((pos[i] - pos[j]).norm() <= 2 * r) safe[i] = safe[j] = false;
  }
  for (const LidarHit& h : hits) {
    if (h.distance <= r) safe[h.owner] = false;
  }
  for (int i = 0; i < n; ++i) {
    for (const Obstacle& o : w.obstacles) {
      if (o.signed_distance(pos[i]) <= 0) safe[i] = false;
    }
  }
  return safe;
}

std::vector<bool> safety_status(const World& w) {
  const auto dirs = ray_directions(w.pos_dim(), w.n_rays());
  std::vector<LidarHit> hits;
  for (int i = 0; i < w.n_agents(); ++i) {
    auto h = cast_lidar(w.position(i), i, w.obstacles, dirs, w.params.sense_radius);
    hits.insert(hits.end(), h.begin(), h.end());
  }
  return safety_status(w, hits);
}

World sample_scenario(dyn::EnvKind env, int n_agents, const WorldParams& params, int n_obstacles, num::Rng& rng,
                      int rejection_budget) {
  World w;
  w.env = env;
  w.params = params;
  const int pd = w.pos_dim();
  const int n = dyn::env_shape(env).n;
  const double l = params.area, r = params.agent_radius;
  auto uniform_point = [&] {
    Vec p(pd);
    for (int k = 0; k < pd; ++k) p[k] = rng.uniform(0.0, l);
    return p;
  };
  for (int k = 0; k < n_obstacles; ++k) {
    const Vec c = uniform_point();
    if (pd == 2) {
      w.obstacles.push_back(Obstacle::box(c, Eigen::Vector2d(rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5))));
    } else {
      w.obstacles.push_back(Obstacle::sphere(c, rng.uniform(0.15, 0.3)));
    }
  }
  int rejections = 0;
  auto place = [&](std::vector<Vec>& placed, const char* what) {
    for (;;) {
      const Vec p = uniform_point();
      bool ok = true;
      for (const Vec& q : placed) ok = ok && (p - q).norm() > 4 * r;
      for (const Obstacle& o : w.obstacles) ok = ok && o.signed_distance(p) > 2 * r;
      if (ok) {
        placed.push_back(p);
        return;
      }
      if (++rejections > rejection_budget) {
        std::ostringstream os;
        os << "could not place " << what << " " << placed.size() << " of " << n_agents << " within "
           << rejection_budget << " rejections (density N/l^" << pd << " = " << n_agents / std::pow(l, pd) << ", "
           << n_obstacles << " obstacles)";
        throw InfeasibleScenarioError(os.str());
      }
    }
  };
  std::vector<Vec> starts, goals;
  for (int i = 0; i < n_agents; ++i) place(starts, "agent");
  for (int i = 0; i < n_agents; ++i) place(goals, "goal");
  for (int i = 0; i < n_agents; ++i) {
    Vec x = Vec::Zero(n);
    x.head(pd) = starts[static_cast<std::size_t>(i)];
    w.states.push_back(x);
  }
  w.goals = std::move(goals);
  return w;
}

}  // namespace gcbf::world
