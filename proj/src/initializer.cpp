#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mapfusion/initializer.hpp"

namespace mapfusion::initializer {

namespace {

double circular_mean(const std::vector<ScaleSample>& samples,
                     double ScaleSample::* member) {
  double s = 0.0, c = 0.0;
  for (const auto& sample : samples) {
    s += std::sin(sample.*member);
    c += std::cos(sample.*member);
  }
  return std::atan2(s, c);
}

}  // namespace

Counts measurement_counts(const InitConfig& cfg) {
  if (!cfg.valid()) throw std::invalid_argument("invalid initializer config");
  Counts counts;
  counts.c_gps =
      static_cast<int>(std::ceil(cfg.md_m * 3.6 * cfg.f_gps_hz / cfg.ms_kmh));
  counts.c_gps = std::max(counts.c_gps, 1);
  counts.c_vo = static_cast<int>(
      std::lround(static_cast<double>(counts.c_gps) * cfg.f_vo_hz / cfg.f_gps_hz));
  counts.c_vo = std::max(counts.c_vo, 1);
  return counts;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

InitState::InitState(const InitConfig& cfg) : cfg_(cfg) {
  if (!cfg.valid()) throw std::invalid_argument("invalid initializer config");
  counts_ = measurement_counts(cfg);
}

const Initialization& InitState::result() const {
  if (!initialized_) throw std::logic_error("initializer not finished");
  return *initialized_;
}

void InitState::reset_window() {
  // Restart from the most recent fix so windows tile the stream without gaps.
  window_gps_t0_ = window_gps_t1_;
  window_gps_first_ = window_gps_last_;
  window_gps_dist_ = 0.0;
  window_gps_intervals_ = 0;
  window_vo_t0_ = vo_time_;
  window_vo_t1_ = vo_time_;
  window_vo_first_ = vo_pose_.position;
  window_vo_dist_ = 0.0;
  window_vo_intervals_ = 0;
  window_has_vo_ = false;
}

void InitState::feed_gps(double t, const Eigen::Vector3d& enu) {
  if (initialized_) return;
  if (!have_first_fix_) {
    have_first_fix_ = true;
    first_fix_ = enu;
    vo_at_first_fix_ = vo_pose_;
  }
  if (!window_open_) {
    window_open_ = true;
    window_gps_t0_ = window_gps_t1_ = t;
    window_gps_first_ = window_gps_last_ = enu;
    window_vo_t0_ = window_vo_t1_ = vo_time_;
    window_vo_first_ = vo_pose_.position;
    return;
  }
  window_gps_dist_ += (enu - window_gps_last_).head<2>().norm();
  window_gps_last_ = enu;
  window_gps_t1_ = t;
  ++window_gps_intervals_;
  try_emit_sample();
}

void InitState::feed_vo(double t, const geom::Pose& delta) {
  if (initialized_) return;
  vo_pose_ = geom::compose(vo_pose_, delta);
  vo_time_ = t;
  if (window_open_) {
    window_vo_dist_ += delta.position.norm();
    window_vo_t1_ = t;
    ++window_vo_intervals_;
    window_has_vo_ = true;
  }
}

void InitState::try_emit_sample() {
  if (window_gps_dist_ < cfg_.md_m) {
    // Too slow: the measurement budget ran out before covering md.
    if (window_gps_intervals_ >= counts_.c_gps) reset_window();
    return;
  }
  const bool within_budget = window_gps_intervals_ <= counts_.c_gps &&
                             window_vo_intervals_ <= counts_.c_vo;
  if (within_budget && window_has_vo_ && window_vo_dist_ > 1e-12) {
    const double t_gps = window_gps_t1_ - window_gps_t0_;
    const double t_vo = window_vo_t1_ - window_vo_t0_;
    if (t_gps > 1e-9 && t_vo > 1e-9) {
      ScaleSample sample;
      const double ratio = window_gps_dist_ / window_vo_dist_;
      const double time_factor = t_vo / t_gps;
      sample.literal_squared = ratio * ratio * time_factor;
      sample.linear_ratio = ratio * time_factor;
      sample.gps_heading =
          geom::heading_between(window_gps_first_.head<2>(), window_gps_last_.head<2>())
              .value_or(0.0);
      sample.vo_heading =
          geom::heading_between(window_vo_first_.head<2>(), vo_pose_.position.head<2>())
              .value_or(0.0);
      samples_.push_back(sample);
      if (static_cast<int>(samples_.size()) >= cfg_.samples_required) {
        finalize();
        return;
      }
    }
  }
  reset_window();
}

double InitState::scale_from_samples(const std::vector<ScaleSample>& samples,
                                     ScaleMode mode) {
  std::vector<double> values;
  values.reserve(samples.size());
  for (const auto& s : samples)
    values.push_back(mode == ScaleMode::literal_squared ? s.literal_squared
                                                        : s.linear_ratio);
  return median(std::move(values));
}

void InitState::finalize() {
  Initialization init;
  init.scale = scale_from_samples(samples_, cfg_.scale_mode);
  init.gps_heading = circular_mean(samples_, &ScaleSample::gps_heading);
  const double vo_heading = circular_mean(samples_, &ScaleSample::vo_heading);
  init.yaw_offset = geom::wrap_angle(init.gps_heading - vo_heading);
  init.anchor_gps = first_fix_;
  init.anchor_vo = vo_at_first_fix_;
  initialized_ = init;
}

geom::Pose apply_initialization(const Initialization& init, const geom::Pose& p) {
  const Eigen::Quaterniond rot = geom::quat_from_ypr(init.yaw_offset, 0.0, 0.0);
  geom::Pose out;
  out.position =
      init.anchor_gps + rot * (init.scale * (p.position - init.anchor_vo.position));
  out.orientation = (rot * p.orientation).normalized();
  return out;
}

std::vector<geom::Pose> apply_initialization(const Initialization& init,
                                             std::span<const geom::Pose> prefix) {
  std::vector<geom::Pose> out;
  out.reserve(prefix.size());
  for (const auto& p : prefix) out.push_back(apply_initialization(init, p));
  return out;
}

}  // namespace mapfusion::initializer
