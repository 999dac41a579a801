#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l3gs/common.hpp"
#include "l3gs/viewport.hpp"

namespace l3gs {

/// Head-pose samples at a strict 36 Hz spacing (validated to 1e-6 s).
struct ViewportTrace {
  std::vector<Viewport> samples;
};

struct BandwidthSample {
  double t = 0.0;     // seconds
  double mbps = 0.0;  // megabits per second (1e6 bits)
};

/// Throughput samples at arbitrary, strictly increasing timestamps.
struct BandwidthTrace {
  std::vector<BandwidthSample> samples;
};

struct PredictorConfig {
  double history_window = 0.5;    // seconds of history fed to the predictors
  double prediction_window = 1.0; // seconds of pose frames to emit
  double sample_rate = 36.0;      // Hz of both trace and predictions
};

/// Per-feature least-squares extrapolation over the history window
/// (now - hw, now], fit against relative sample order. Yaw and roll are
/// unwrapped (first sample pinned, deltas over 180 degrees treated as
/// wraparound) before fitting and rewrapped to [-180, 180) after; pitch is
/// clamped to [-90, 90]. Returns one frame per future sample time
/// now + k/rate, k = 1..round(pw * rate). Fewer than two history samples
/// fall back to repeating the last pose.
std::vector<Viewport> predict_viewport(const ViewportTrace& trace, double now,
                                       const PredictorConfig& cfg = {});

/// Harmonic-mean throughput estimate: the history window [now - hw, now] is
/// resampled by linear interpolation onto the 36 Hz lattice
/// now - (n-k)/rate, k = 1..n (n = round(hw * rate)), and the prediction is
/// n / sum(1/a_k). Any non-positive resampled throughput yields 0.
double predict_bandwidth(const BandwidthTrace& trace, double now,
                         const PredictorConfig& cfg = {});

/// Throws ValidationError if timestamps are not strictly increasing at the
/// configured spacing (tolerance 1e-6 s).
void validate_trace(const ViewportTrace& trace, double sample_rate = 36.0);

/// CSV with header t,x,y,z,yaw,pitch,roll. Angles are normalized on load and
/// the 36 Hz spacing is validated.
ViewportTrace load_viewport_trace(const std::string& path);
void save_viewport_trace(const ViewportTrace& trace, const std::string& path);

/// CSV with header t,mbps. Each throughput is multiplied by `scale`.
BandwidthTrace load_bandwidth_trace(const std::string& path, double scale = 1.0);
void save_bandwidth_trace(const BandwidthTrace& trace, const std::string& path);

/// Pose at time t by linear interpolation (angles take the short way around);
/// clamps to the trace ends.
Viewport interpolate(const ViewportTrace& trace, double t);

/// Mean throughput over [t0, t1) of the piecewise-linear trace (end-clamped).
double average_mbps(const BandwidthTrace& trace, double t0, double t1);

/// Deterministic synthetic head-motion traces. Kinds: "ellipse", "circle",
/// "spiral" (walking paths facing the travel direction), "spin" (turning in
/// place), "testset_sequence" (smooth seeded 6DoF wandering).
ViewportTrace generate_synthetic_trace(const std::string& kind, double duration,
                                       std::uint64_t seed,
                                       double sample_rate = 36.0);

}  // namespace l3gs
