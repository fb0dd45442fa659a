#include "propel/env.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "propel/errors.hpp"

namespace propel {

namespace {

// Pendulum: theta = 0 is upright, gravity destabilizes. g=10, m=1, l=1.
constexpr double kPendG = 10.0;
constexpr double kPendMaxSpeed = 8.0;
constexpr double kPendMaxTorque = 2.0;
constexpr double kPendDt = 0.05;
constexpr int kPendHorizon = 200;
constexpr int kPendSubsteps = 640;

constexpr double kMcPower = 0.0015;
constexpr double kMcGravity = 0.0025;
constexpr double kMcMinPos = -1.2;
constexpr double kMcMaxPos = 0.6;
constexpr double kMcMaxSpeed = 0.07;
constexpr double kMcGoal = 0.45;
constexpr double kMcDt = 1.0;
constexpr int kMcHorizon = 500;
constexpr int kMcSubsteps = 16;

constexpr double kTrackAccel = 4.0;    // m/s^2 at full throttle, friction 1
constexpr double kTrackDrag = 0.4;     // 1/s
constexpr double kTrackCurv = 0.2;     // rad/m at full steer
constexpr double kTrackDt = 0.1;
constexpr int kTrackHorizon = 400;
constexpr int kTrackSubsteps = 160;
constexpr double kTrackCenterPenalty = 2.0;

}  // namespace

double wrap_angle(double a) {
  double w = std::fmod(a + M_PI, 2.0 * M_PI);
  if (w < 0) w += 2.0 * M_PI;
  return w - M_PI;
}

// ---------------------------------------------------------------------------
// TrackSpec

namespace {

int orientation(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                const Eigen::Vector2d& c) {
  double v = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  if (v > 1e-12) return 1;
  if (v < -1e-12) return -1;
  return 0;
}

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                        const Eigen::Vector2d& q1, const Eigen::Vector2d& q2) {
  int o1 = orientation(p1, p2, q1);
  int o2 = orientation(p1, p2, q2);
  int o3 = orientation(q1, q2, p1);
  int o4 = orientation(q1, q2, p2);
  return o1 != o2 && o3 != o4;
}

}  // namespace

void TrackSpec::validate() const {
  if (waypoints.size() < 4)
    throw ConfigError("track needs >= 4 waypoints, got " +
                      std::to_string(waypoints.size()));
  if (!(width > 0)) throw ConfigError("track width must be > 0");
  if (!(friction > 0)) throw ConfigError("track friction must be > 0");
  const size_t n = waypoints.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& a = waypoints[i];
    const auto& b = waypoints[(i + 1) % n];
    if (!a.allFinite()) throw ConfigError("non-finite waypoint");
    if ((b - a).norm() < 1e-9)
      throw ConfigError("degenerate track segment at waypoint " +
                        std::to_string(i));
  }
  // Simple closed polyline: non-adjacent segments must not cross.
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(waypoints[i], waypoints[(i + 1) % n],
                             waypoints[j], waypoints[(j + 1) % n]))
        throw ConfigError("track polyline self-intersects (segments " +
                          std::to_string(i) + ", " + std::to_string(j) + ")");
    }
  }
}

TrackSpec TrackSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open track file: " + path);
  TrackSpec spec;
  std::string line;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    size_t h = trimmed.find('#');
    if (h != std::string::npos) trimmed = trimmed.substr(0, h);
    std::istringstream ss(trimmed);
    if (!header_seen) {
      std::string kw, kf;
      double w, f;
      if (!(ss >> kw >> w >> kf >> f) || kw != "width" || kf != "friction")
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected header 'width W friction F'");
      spec.width = w;
      spec.friction = f;
      header_seen = true;
      continue;
    }
    double x, y;
    if (!(ss >> x)) continue;  // blank / comment-only line
    if (!(ss >> y))
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 'x y' waypoint pair");
    spec.waypoints.emplace_back(x, y);
  }
  if (!header_seen) throw ConfigError(path + ": missing track header line");
  spec.validate();
  return spec;
}

TrackSpec TrackSpec::default_oval() {
  // Rounded rectangle, roughly 46 x 26 m outer span.
  TrackSpec spec;
  spec.width = 8.0;
  spec.friction = 1.0;
  const double rx = 20.0, ry = 10.0, cx = 0.0, cy = 0.0;
  const int n = 16;
  for (int i = 0; i < n; ++i) {
    double a = 2.0 * M_PI * i / n;
    spec.waypoints.emplace_back(cx + rx * std::cos(a), cy + ry * std::sin(a));
  }
  spec.validate();
  return spec;
}

TrackFrame track_frame(const TrackSpec& track, double x, double y) {
  const Eigen::Vector2d p(x, y);
  const size_t n = track.waypoints.size();
  TrackFrame best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& a = track.waypoints[i];
    const Eigen::Vector2d& b = track.waypoints[(i + 1) % n];
    const Eigen::Vector2d ab = b - a;
    double t = (p - a).dot(ab) / ab.squaredNorm();
    t = std::clamp(t, 0.0, 1.0);
    const Eigen::Vector2d q = a + t * ab;
    double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      const Eigen::Vector2d dir = ab.normalized();
      double cross = dir.x() * (p - q).y() - dir.y() * (p - q).x();
      best.lateral = (cross >= 0 ? 1.0 : -1.0) * std::sqrt(d2);
      best.tangent_angle = std::atan2(dir.y(), dir.x());
      best.segment = static_cast<int>(i);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Env

Env Env::make(const std::string& name, std::uint64_t seed) {
  if (name == "track") return make_track(TrackSpec::default_oval(), seed);
  Env env;
  if (name == "pendulum") {
    env.kind_ = EnvKind::pendulum;
    env.spec_.name = "pendulum";
    env.spec_.obs_dim = 3;
    env.spec_.act_dim = 1;
    env.spec_.act_low = Vec::Constant(1, -kPendMaxTorque);
    env.spec_.act_high = Vec::Constant(1, kPendMaxTorque);
    env.spec_.dt = kPendDt;
    env.spec_.max_horizon = kPendHorizon;
    env.spec_.obs_names = {"cos_theta", "sin_theta", "theta_dot"};
    env.spec_.obs_low = Vec(3);
    env.spec_.obs_low << -1.0, -1.0, -kPendMaxSpeed;
    env.spec_.obs_high = Vec(3);
    env.spec_.obs_high << 1.0, 1.0, kPendMaxSpeed;
    env.substeps_ = kPendSubsteps;
  } else if (name == "mountain_car") {
    env.kind_ = EnvKind::mountain_car;
    env.spec_.name = "mountain_car";
    env.spec_.obs_dim = 2;
    env.spec_.act_dim = 1;
    env.spec_.act_low = Vec::Constant(1, -1.0);
    env.spec_.act_high = Vec::Constant(1, 1.0);
    env.spec_.dt = kMcDt;
    env.spec_.max_horizon = kMcHorizon;
    env.spec_.obs_names = {"position", "velocity"};
    env.spec_.obs_low = Vec(2);
    env.spec_.obs_low << kMcMinPos, -kMcMaxSpeed;
    env.spec_.obs_high = Vec(2);
    env.spec_.obs_high << kMcMaxPos, kMcMaxSpeed;
    env.substeps_ = kMcSubsteps;
  } else {
    throw ConfigError("unknown environment '" + name +
                      "' (expected pendulum | mountain_car | track)");
  }
  env.reset(seed);
  return env;
}

Env Env::make_track(TrackSpec track, std::uint64_t seed) {
  track.validate();
  Env env;
  env.kind_ = EnvKind::track;
  env.track_ = std::move(track);
  env.spec_.name = "track";
  env.spec_.obs_dim = 3;
  env.spec_.act_dim = 2;
  env.spec_.act_low = Vec(2);
  env.spec_.act_low << -1.0, 0.0;
  env.spec_.act_high = Vec(2);
  env.spec_.act_high << 1.0, 1.0;
  env.spec_.dt = kTrackDt;
  env.spec_.max_horizon = kTrackHorizon;
  env.spec_.obs_names = {"angle_to_axis", "dist_center_norm", "speed_along"};
  env.spec_.obs_low = Vec(3);
  env.spec_.obs_low << -M_PI, -1.2, -2.0;
  env.spec_.obs_high = Vec(3);
  env.spec_.obs_high << M_PI, 1.2, 12.0;
  env.substeps_ = kTrackSubsteps;
  env.reset(seed);
  return env;
}

Vec Env::reset(std::uint64_t seed) {
  seed_ = seed;
  rng_ = make_rng(seed, 0xE57);
  return reset();
}

Vec Env::reset() {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  switch (kind_) {
    case EnvKind::pendulum: {
      state_ = Vec(2);
      state_[0] = -M_PI + 2.0 * M_PI * uni(rng_);
      state_[1] = -1.0 + 2.0 * uni(rng_);
      break;
    }
    case EnvKind::mountain_car: {
      state_ = Vec(2);
      state_[0] = -0.6 + 0.2 * uni(rng_);
      state_[1] = 0.0;
      break;
    }
    case EnvKind::track: {
      const Eigen::Vector2d& a = track_.waypoints[0];
      const Eigen::Vector2d& b = track_.waypoints[1];
      const Eigen::Vector2d dir = (b - a).normalized();
      const Eigen::Vector2d normal(-dir.y(), dir.x());
      double lateral = (uni(rng_) - 0.5) * 0.4 * (track_.width / 2.0);
      double heading = std::atan2(dir.y(), dir.x()) + (uni(rng_) - 0.5) * 0.3;
      Eigen::Vector2d pos = a + lateral * normal;
      state_ = Vec(4);
      state_ << pos.x(), pos.y(), heading, 1.0;
      break;
    }
  }
  steps_ = 0;
  done_ = false;
  return observation();
}

void Env::set_state(const Vec& s) {
  int want = kind_ == EnvKind::track ? 4 : 2;
  if (s.size() != want)
    throw ContractError("state size " + std::to_string(s.size()) +
                        " != " + std::to_string(want));
  state_ = s;
  done_ = false;
}

Vec Env::observation() const {
  switch (kind_) {
    case EnvKind::pendulum: {
      Vec obs(3);
      obs << std::cos(state_[0]), std::sin(state_[0]), state_[1];
      return obs;
    }
    case EnvKind::mountain_car:
      return state_;
    case EnvKind::track: {
      TrackFrame f = track_frame(track_, state_[0], state_[1]);
      double angle = wrap_angle(state_[2] - f.tangent_angle);
      Vec obs(3);
      obs << angle, f.lateral / (track_.width / 2.0), state_[3] * std::cos(angle);
      return obs;
    }
  }
  return {};
}

Vec Env::clip_action(const Vec& action) const {
  if (action.size() != spec_.act_dim)
    throw ContractError("action size " + std::to_string(action.size()) +
                        " != act_dim " + std::to_string(spec_.act_dim));
  if (!action.allFinite()) throw ContractError("non-finite action");
  return action.cwiseMax(spec_.act_low).cwiseMin(spec_.act_high);
}

Vec Env::state_derivative(const Vec& state, const Vec& action) const {
  switch (kind_) {
    case EnvKind::pendulum: {
      Vec d(2);
      d[0] = state[1];
      d[1] = 3.0 * kPendG / 2.0 * std::sin(state[0]) + 3.0 * action[0];
      return d;
    }
    case EnvKind::mountain_car: {
      Vec d(2);
      d[0] = state[1];
      d[1] = kMcPower * action[0] - kMcGravity * std::cos(3.0 * state[0]);
      return d;
    }
    case EnvKind::track: {
      Vec d(4);
      double v = state[3], psi = state[2];
      d[0] = v * std::cos(psi);
      d[1] = v * std::sin(psi);
      d[2] = action[0] * kTrackCurv * v;
      d[3] = kTrackAccel * action[1] * track_.friction - kTrackDrag * v;
      return d;
    }
  }
  return {};
}

void Env::integrate(const Vec& action) {
  const double h = spec_.dt / substeps_;
  switch (kind_) {
    case EnvKind::pendulum: {
      double th = state_[0], thd = state_[1];
      const double u = action[0];
      for (int i = 0; i < substeps_; ++i) {
        thd += h * (3.0 * kPendG / 2.0 * std::sin(th) + 3.0 * u);
        th += h * thd;
      }
      state_[0] = th;
      state_[1] = std::clamp(thd, -kPendMaxSpeed, kPendMaxSpeed);
      break;
    }
    case EnvKind::mountain_car: {
      double x = state_[0], v = state_[1];
      const double u = action[0];
      for (int i = 0; i < substeps_; ++i) {
        v += h * (kMcPower * u - kMcGravity * std::cos(3.0 * x));
        x += h * v;
      }
      v = std::clamp(v, -kMcMaxSpeed, kMcMaxSpeed);
      x = std::clamp(x, kMcMinPos, kMcMaxPos);
      if (x <= kMcMinPos && v < 0) v = 0.0;  // inelastic left wall
      state_[0] = x;
      state_[1] = v;
      break;
    }
    case EnvKind::track: {
      double x = state_[0], y = state_[1], psi = state_[2], v = state_[3];
      const double steer = action[0], throttle = action[1];
      for (int i = 0; i < substeps_; ++i) {
        v += h * (kTrackAccel * throttle * track_.friction - kTrackDrag * v);
        psi += h * (steer * kTrackCurv * v);
        x += h * v * std::cos(psi);
        y += h * v * std::sin(psi);
      }
      state_ << x, y, psi, std::max(v, 0.0);
      break;
    }
  }
}

double Env::reward_and_done(const Vec& pre_state, const Vec& action,
                            bool* done) {
  switch (kind_) {
    case EnvKind::pendulum: {
      double th = wrap_angle(pre_state[0]);
      double thd = pre_state[1];
      double u = action[0];
      *done = steps_ >= spec_.max_horizon;
      return -(th * th + 0.1 * thd * thd + 0.001 * u * u);
    }
    case EnvKind::mountain_car: {
      double r = -0.1 * action[0] * action[0];
      bool goal = state_[0] >= kMcGoal;
      if (goal) r += 100.0;
      *done = goal || steps_ >= spec_.max_horizon;
      return r;
    }
    case EnvKind::track: {
      TrackFrame f = track_frame(track_, state_[0], state_[1]);
      double angle = wrap_angle(state_[2] - f.tangent_angle);
      double d_norm = f.lateral / (track_.width / 2.0);
      bool off = std::abs(f.lateral) > track_.width / 2.0;
      *done = off || steps_ >= spec_.max_horizon;
      return state_[3] * std::cos(angle) - kTrackCenterPenalty * d_norm * d_norm;
    }
  }
  return 0.0;
}

StepResult Env::step(const Vec& action) {
  if (done_) throw StateError("step() on a finished episode");
  const Vec a = clip_action(action);
  const Vec pre = state_;
  integrate(a);
  ++steps_;
  bool done = false;
  double reward = reward_and_done(pre, a, &done);
  done_ = done;
  return {observation(), reward, done};
}

}  // namespace propel
