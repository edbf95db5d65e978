#pragma once

#include <span>
#include <vector>

#include "mapfusion/geom.hpp"

namespace mapfusion::initializer {

enum class ScaleMode {
  literal_squared,  // S = (d_gps^2 / d_vo^2) * (t_vo / t_gps)
  linear_ratio,     // S = (d_gps / d_vo) * (t_vo / t_gps)
};

struct InitConfig {
  double md_m = 10.0;    // minimum GPS distance per scale sample
  double ms_kmh = 18.0;  // minimum average speed
  double f_gps_hz = 1.0;
  double f_vo_hz = 10.0;
  int samples_required = 50;
  ScaleMode scale_mode = ScaleMode::linear_ratio;

  bool valid() const {
    return md_m > 0 && ms_kmh > 0 && f_gps_hz > 0 && f_vo_hz > 0 &&
           samples_required >= 1;
  }
};

struct Counts {
  int c_gps = 0;  // GPS measurement intervals allowed per sample window
  int c_vo = 0;
};

/// Measurement budget to cover md_m at ms_kmh:
///   C_gps = ceil(md * 3.6 * f_gps / ms), C_vo = round(C_gps * f_vo / f_gps).
Counts measurement_counts(const InitConfig& cfg);

/// One scale sample window, kept for inspection and the median-robustness
/// checks.
struct ScaleSample {
  double literal_squared = 0.0;
  double linear_ratio = 0.0;
  double gps_heading = 0.0;  // first->last fix of the window
  double vo_heading = 0.0;   // matching span of the integrated odometry
};

/// Alignment from odometry-local to the global frame.
struct Initialization {
  double scale = 1.0;
  double gps_heading = 0.0;       // averaged over sample windows
  double yaw_offset = 0.0;        // gps_heading - vo_heading, wrapped
  Eigen::Vector3d anchor_gps{0, 0, 0};  // first GPS fix
  geom::Pose anchor_vo;           // integrated odometry pose at that fix
};

/// Exact median; even counts average the middle two.
double median(std::vector<double> values);

/// Accumulates GPS/odometry displacement windows until enough scale samples
/// are collected, then freezes scale and heading. Single-owner, sequential.
class InitState {
 public:
  explicit InitState(const InitConfig& cfg);

  void feed_gps(double t, const Eigen::Vector3d& enu);
  void feed_vo(double t, const geom::Pose& delta);

  bool initialized() const { return initialized_.has_value(); }
  const Initialization& result() const;

  const std::vector<ScaleSample>& samples() const { return samples_; }
  const InitConfig& config() const { return cfg_; }

  /// Scale per the configured mode from an explicit sample set (the median
  /// rule, exposed so outlier robustness is testable at the sample level).
  static double scale_from_samples(const std::vector<ScaleSample>& samples,
                                   ScaleMode mode);

 private:
  void try_emit_sample();
  void reset_window();
  void finalize();

  InitConfig cfg_;
  Counts counts_;

  // integrated raw odometry
  geom::Pose vo_pose_;
  double vo_time_ = 0.0;

  // current sample window
  bool window_open_ = false;
  double window_gps_t0_ = 0.0, window_gps_t1_ = 0.0;
  Eigen::Vector3d window_gps_first_{0, 0, 0}, window_gps_last_{0, 0, 0};
  double window_gps_dist_ = 0.0;
  int window_gps_intervals_ = 0;
  double window_vo_t0_ = 0.0, window_vo_t1_ = 0.0;
  Eigen::Vector3d window_vo_first_{0, 0, 0};
  double window_vo_dist_ = 0.0;
  int window_vo_intervals_ = 0;
  bool window_has_vo_ = false;

  bool have_first_fix_ = false;
  Eigen::Vector3d first_fix_{0, 0, 0};
  geom::Pose vo_at_first_fix_;

  std::vector<ScaleSample> samples_;
  std::optional<Initialization> initialized_;
};

/// Scale, rotate and translate a raw odometry pose prefix into the global
/// frame described by an Initialization.
std::vector<geom::Pose> apply_initialization(const Initialization& init,
                                             std::span<const geom::Pose> prefix);

geom::Pose apply_initialization(const Initialization& init, const geom::Pose& p);

}  // namespace mapfusion::initializer
