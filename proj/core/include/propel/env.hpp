#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "propel/rng.hpp"

namespace propel {

using Vec = Eigen::VectorXd;

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  int act_dim = 0;
  Vec act_low;
  Vec act_high;
  double dt = 0.0;      // seconds advanced per step() call
  int max_horizon = 0;  // episode ends at this many steps at the latest
  std::vector<std::string> obs_names;
  Vec obs_low, obs_high;  // nominal per-dimension observation ranges
};

struct StepResult {
  Vec obs;
  double reward = 0.0;
  bool done = false;
};

// Closed-loop 2-D waypoint track. The centerline is the closed polyline
// through the waypoints; the drivable band extends width/2 to each side.
struct TrackSpec {
  std::vector<Eigen::Vector2d> waypoints;
  double width = 0.0;
  double friction = 1.0;

  void validate() const;  // >= 4 waypoints, simple closed polyline, width > 0
  static TrackSpec load(const std::string& path);
  static TrackSpec default_oval();
};

// Closest-point frame of a position against the track centerline.
struct TrackFrame {
  double lateral = 0.0;        // signed distance to centerline, left positive
  double tangent_angle = 0.0;  // heading of the centerline at closest point
  int segment = 0;
};
TrackFrame track_frame(const TrackSpec& track, double x, double y);

enum class EnvKind { pendulum, mountain_car, track };

// Deterministic, seedable continuous-control environment. Value-semantic:
// copies are independent; run parallel episodes on copies with distinct
// seeds. A single handle is not meant to be shared across threads.
class Env {
 public:
  // name in {pendulum, mountain_car, track}; the returned handle is reset.
  static Env make(const std::string& name, std::uint64_t seed);
  static Env make_track(TrackSpec track, std::uint64_t seed);

  const EnvSpec& spec() const { return spec_; }
  EnvKind kind() const { return kind_; }

  Vec reset();                   // new episode from the handle's seed stream
  Vec reset(std::uint64_t seed);  // reseed the episode stream, then reset
  StepResult step(const Vec& action);

  bool done() const { return done_; }
  int steps_taken() const { return steps_; }
  Vec observation() const;

  // Smooth ODE right-hand side d(state)/dt under an already-clipped action.
  // step() integrates exactly this field (semi-implicit Euler, substeps()
  // slices per dt); tests integrate it with an independent scheme.
  Vec state_derivative(const Vec& state, const Vec& action) const;
  int substeps() const { return substeps_; }

  // Raw physical state, exposed for oracles and probes.
  Vec state() const { return state_; }
  void set_state(const Vec& s);

  Vec clip_action(const Vec& action) const;
  const TrackSpec& track() const { return track_; }

 private:
  Env() = default;
  void integrate(const Vec& action);
  double reward_and_done(const Vec& pre_state, const Vec& action, bool* done);

  EnvKind kind_ = EnvKind::pendulum;
  EnvSpec spec_;
  Vec state_;
  TrackSpec track_;
  Rng rng_;
  std::uint64_t seed_ = 0;
  int substeps_ = 1;
  int steps_ = 0;
  bool done_ = false;
};

double wrap_angle(double a);  // into [-pi, pi)

}  // namespace propel
