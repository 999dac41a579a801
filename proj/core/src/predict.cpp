#include "l3gs/predict.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "io_util.hpp"

namespace l3gs {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt(double v) {
  char buf[40];
  // 17 significant digits: doubles survive a write/parse round trip bit-exactly.
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_field(std::string_view field, const char* what, std::size_t line_no) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " value '" +
                     std::string(field) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

struct LineFit {
  double intercept = 0.0, slope = 0.0;
};

// Ordinary least squares of y against x = 0..n-1.
LineFit fit_line(const std::vector<double>& y) {
  const std::size_t n = y.size();
  LineFit f;
  if (n == 0) return f;
  if (n == 1) {
    f.intercept = y[0];
    return f;
  }
  const double mean_x = 0.5 * double(n - 1);
  double mean_y = 0.0;
  for (double v : y) mean_y += v;
  mean_y /= double(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = double(i) - mean_x;
    sxx += dx * dx;
    sxy += dx * (y[i] - mean_y);
  }
  f.slope = sxy / sxx;
  f.intercept = mean_y - f.slope * mean_x;
  return f;
}

// Unwraps an angle sequence: the first sample anchors the line and every
// step takes the short way around the circle.
std::vector<double> unwrap(const std::vector<double>& a) {
  std::vector<double> u(a.size());
  if (a.empty()) return u;
  u[0] = 0.0;
  for (std::size_t i = 1; i < a.size(); ++i)
    u[i] = u[i - 1] + wrap_angle(a[i] - a[i - 1]);
  return u;
}

double interp_mbps(const BandwidthTrace& trace, double t) {
  const auto& s = trace.samples;
  if (s.empty()) return 0.0;
  if (t <= s.front().t) return s.front().mbps;
  if (t >= s.back().t) return s.back().mbps;
  const auto it = std::upper_bound(
      s.begin(), s.end(), t,
      [](double v, const BandwidthSample& b) { return v < b.t; });
  const BandwidthSample& hi = *it;
  const BandwidthSample& lo = *(it - 1);
  const double span = hi.t - lo.t;
  const double f = span > 0 ? (t - lo.t) / span : 0.0;
  return lo.mbps + f * (hi.mbps - lo.mbps);
}

}  // namespace

std::vector<Viewport> predict_viewport(const ViewportTrace& trace, double now,
                                       const PredictorConfig& cfg) {
  const auto& s = trace.samples;
  std::vector<Viewport> out;
  const int horizon = std::max(1, int(std::llround(cfg.prediction_window * cfg.sample_rate)));
  if (s.empty()) return out;

  // History window (now - hw, now].
  std::size_t end = 0;
  while (end < s.size() && s[end].timestamp <= now + 1e-9) ++end;
  std::size_t begin = end;
  while (begin > 0 && s[begin - 1].timestamp > now - cfg.history_window - 1e-9) --begin;
  const std::size_t m = end - begin;

  const Viewport& last = end > 0 ? s[end - 1] : s.front();
  const double step = 1.0 / cfg.sample_rate;

  if (m < 2) {
    for (int k = 1; k <= horizon; ++k) {
      Viewport vp = last;
      vp.timestamp = last.timestamp + k * step;
      out.push_back(vp);
    }
    return out;
  }

  std::vector<double> xs(m), ys(m), zs(m), yaws(m), pitches(m), rolls(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Viewport& vp = s[begin + i];
    xs[i] = vp.position.x();
    ys[i] = vp.position.y();
    zs[i] = vp.position.z();
    yaws[i] = vp.yaw;
    pitches[i] = vp.pitch;
    rolls[i] = vp.roll;
  }
  const LineFit fx = fit_line(xs), fy = fit_line(ys), fz = fit_line(zs);
  const LineFit fp = fit_line(pitches);
  const LineFit fyaw = fit_line(unwrap(yaws));
  const LineFit froll = fit_line(unwrap(rolls));

  for (int k = 1; k <= horizon; ++k) {
    const double order = double(m - 1 + k);
    Viewport vp = last;
    vp.timestamp = last.timestamp + k * step;
    vp.position = {fx.intercept + fx.slope * order, fy.intercept + fy.slope * order,
                   fz.intercept + fz.slope * order};
    vp.yaw = wrap_angle(yaws[0] + fyaw.intercept + fyaw.slope * order);
    vp.roll = wrap_angle(rolls[0] + froll.intercept + froll.slope * order);
    vp.pitch = std::clamp(fp.intercept + fp.slope * order, -90.0, 90.0);
    out.push_back(vp);
  }
  return out;
}

double predict_bandwidth(const BandwidthTrace& trace, double now,
                         const PredictorConfig& cfg) {
  if (trace.samples.empty()) return 0.0;
  const int n = std::max(1, int(std::llround(cfg.history_window * cfg.sample_rate)));
  double inv_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double t = now - double(n - k) / cfg.sample_rate;
    const double a = interp_mbps(trace, t);
    if (a <= 0.0) return 0.0;
    inv_sum += 1.0 / a;
  }
  return double(n) / inv_sum;
}

void validate_trace(const ViewportTrace& trace, double sample_rate) {
  const double step = 1.0 / sample_rate;
  for (std::size_t i = 1; i < trace.samples.size(); ++i) {
    const double dt = trace.samples[i].timestamp - trace.samples[i - 1].timestamp;
    if (dt <= 0.0)
      throw ValidationError("trace sample " + std::to_string(i) +
                            ": timestamps not strictly increasing");
    if (std::abs(dt - step) > 1e-6)
      throw ValidationError("trace sample " + std::to_string(i) + ": spacing " + fmt(dt) +
                            " s deviates from the " + fmt(sample_rate) + " Hz lattice");
  }
}

ViewportTrace load_viewport_trace(const std::string& path) {
  const std::string data = io::read_file(path);
  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;
  ViewportTrace trace;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line.rfind("t,", 0) != 0)
        throw ParseError(path + ": expected header t,x,y,z,yaw,pitch,roll");
      header_seen = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 7)
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 7 fields, found " + std::to_string(f.size()));
    Viewport vp;
    vp.timestamp = parse_field(f[0], "t", line_no);
    vp.position = {parse_field(f[1], "x", line_no), parse_field(f[2], "y", line_no),
                   parse_field(f[3], "z", line_no)};
    vp.yaw = parse_field(f[4], "yaw", line_no);
    vp.pitch = parse_field(f[5], "pitch", line_no);
    vp.roll = parse_field(f[6], "roll", line_no);
    normalize_angles(vp);
    trace.samples.push_back(vp);
  }
  validate_trace(trace);
  return trace;
}

void save_viewport_trace(const ViewportTrace& trace, const std::string& path) {
  std::string out = "t,x,y,z,yaw,pitch,roll\n";
  for (const Viewport& vp : trace.samples) {
    out += fmt(vp.timestamp);
    out += ',' + fmt(vp.position.x()) + ',' + fmt(vp.position.y()) + ',' +
           fmt(vp.position.z());
    out += ',' + fmt(vp.yaw) + ',' + fmt(vp.pitch) + ',' + fmt(vp.roll) + '\n';
  }
  io::write_file(path, out);
}

BandwidthTrace load_bandwidth_trace(const std::string& path, double scale) {
  const std::string data = io::read_file(path);
  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;
  BandwidthTrace trace;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line.rfind("t,", 0) != 0) throw ParseError(path + ": expected header t,mbps");
      header_seen = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 2)
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 2 fields, found " + std::to_string(f.size()));
    BandwidthSample b;
    b.t = parse_field(f[0], "t", line_no);
    b.mbps = parse_field(f[1], "mbps", line_no) * scale;
    if (b.mbps < 0.0)
      throw ValidationError(path + ": line " + std::to_string(line_no) +
                            ": negative throughput");
    if (!trace.samples.empty() && b.t <= trace.samples.back().t)
      throw ValidationError(path + ": line " + std::to_string(line_no) +
                            ": timestamps not strictly increasing");
    trace.samples.push_back(b);
  }
  return trace;
}

void save_bandwidth_trace(const BandwidthTrace& trace, const std::string& path) {
  std::string out = "t,mbps\n";
  for (const BandwidthSample& b : trace.samples)
    out += fmt(b.t) + ',' + fmt(b.mbps) + '\n';
  io::write_file(path, out);
}

Viewport interpolate(const ViewportTrace& trace, double t) {
  const auto& s = trace.samples;
  if (s.empty()) return {};
  if (t <= s.front().timestamp) return s.front();
  if (t >= s.back().timestamp) return s.back();
  const auto it = std::upper_bound(
      s.begin(), s.end(), t,
      [](double v, const Viewport& vp) { return v < vp.timestamp; });
  const Viewport& hi = *it;
  const Viewport& lo = *(it - 1);
  const double span = hi.timestamp - lo.timestamp;
  const double f = span > 0 ? (t - lo.timestamp) / span : 0.0;
  Viewport vp = lo;
  vp.timestamp = t;
  vp.position = lo.position + f * (hi.position - lo.position);
  vp.yaw = wrap_angle(lo.yaw + f * wrap_angle(hi.yaw - lo.yaw));
  vp.roll = wrap_angle(lo.roll + f * wrap_angle(hi.roll - lo.roll));
  vp.pitch = std::clamp(lo.pitch + f * (hi.pitch - lo.pitch), -90.0, 90.0);
  return vp;
}

double average_mbps(const BandwidthTrace& trace, double t0, double t1) {
  if (trace.samples.empty() || t1 <= t0) return 0.0;
  // Trapezoid integral of the end-clamped piecewise-linear curve: integrate
  // between consecutive knots of {t0, t1, sample times within}.
  std::vector<double> knots{t0};
  for (const BandwidthSample& b : trace.samples)
    if (b.t > t0 && b.t < t1) knots.push_back(b.t);
  knots.push_back(t1);
  double integral = 0.0;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double a = interp_mbps(trace, knots[i - 1]);
    const double b = interp_mbps(trace, knots[i]);
    integral += 0.5 * (a + b) * (knots[i] - knots[i - 1]);
  }
  return integral / (t1 - t0);
}

ViewportTrace generate_synthetic_trace(const std::string& kind, double duration,
                                       std::uint64_t seed, double sample_rate) {
  Rng rng(seed);
  // Inclusive of both endpoints so a duration-long replay never runs off
  // the end of the trace.
  const int n = std::max(2, int(std::llround(duration * sample_rate)) + 1);
  const double step = 1.0 / sample_rate;
  ViewportTrace trace;
  trace.samples.reserve(n);

  const double eye = 1.6 + rng.uniform(-0.1, 0.1);
  const double phase = rng.uniform(0.0, 2.0 * kPi);

  auto push = [&](double t, double x, double y, double z, double yaw, double pitch,
                  double roll) {
    Viewport vp;
    vp.timestamp = t;
    vp.position = {x, y, z};
    vp.yaw = yaw;
    vp.pitch = pitch;
    vp.roll = roll;
    normalize_angles(vp);
    trace.samples.push_back(vp);
  };

  if (kind == "circle" || kind == "ellipse") {
    const double rx = kind == "circle" ? 3.0 : 4.0;
    const double rz = kind == "circle" ? 3.0 : 2.2;
    const double laps = 1.0 + rng.uniform(0.0, 0.5);
    for (int k = 0; k < n; ++k) {
      const double t = k * step;
      const double ang = phase + 2.0 * kPi * laps * t / duration;
      const double x = rx * std::cos(ang);
      const double z = rz * std::sin(ang);
      // Face the direction of travel (tangent of the path, y-up yaw).
      const double dx = -rx * std::sin(ang);
      const double dz = rz * std::cos(ang);
      const double yaw = std::atan2(-dx, -dz) * 180.0 / kPi;
      push(t, x, eye, z, yaw, 2.0 * std::sin(ang * 2.0), 0.0);
    }
  } else if (kind == "spiral") {
    const double turns = 2.0 + rng.uniform(0.0, 1.0);
    for (int k = 0; k < n; ++k) {
      const double t = k * step;
      const double f = t / duration;
      const double r = 1.0 + 3.0 * f;
      const double ang = phase + 2.0 * kPi * turns * f;
      const double x = r * std::cos(ang);
      const double z = r * std::sin(ang);
      const double dx = 3.0 / duration * std::cos(ang) - r * std::sin(ang) * 2.0 * kPi * turns / duration;
      const double dz = 3.0 / duration * std::sin(ang) + r * std::cos(ang) * 2.0 * kPi * turns / duration;
      const double yaw = std::atan2(-dx, -dz) * 180.0 / kPi;
      push(t, x, eye + 0.2 * std::sin(2.0 * ang), z, yaw, -5.0 * f, 0.0);
    }
  } else if (kind == "spin") {
    const double x0 = rng.uniform(-0.5, 0.5), z0 = rng.uniform(-0.5, 0.5);
    const double rate = 30.0 + rng.uniform(0.0, 15.0);  // deg/s turn in place
    for (int k = 0; k < n; ++k) {
      const double t = k * step;
      push(t, x0 + 0.03 * std::sin(t), eye, z0 + 0.03 * std::cos(t),
           phase * 180.0 / kPi + rate * t, 4.0 * std::sin(0.7 * t), 0.0);
    }
  } else if (kind == "testset_sequence") {
    // Smooth seeded wandering: a few low-frequency sinusoids per feature.
    struct Wave {
      double amp, freq, phase;
    };
    auto waves = [&](double amp_lo, double amp_hi) {
      std::vector<Wave> w(3);
      for (auto& x : w)
        x = {rng.uniform(amp_lo, amp_hi), rng.uniform(0.05, 0.35),
             rng.uniform(0.0, 2.0 * kPi)};
      return w;
    };
    auto wave_sum = [](const std::vector<Wave>& w, double t) {
      double v = 0.0;
      for (const Wave& x : w) v += x.amp * std::sin(2.0 * kPi * x.freq * t + x.phase);
      return v;
    };
    const auto wx = waves(0.8, 1.8), wz = waves(0.8, 1.8), wy = waves(0.05, 0.15);
    const auto wyaw = waves(30.0, 80.0), wpitch = waves(5.0, 15.0), wroll = waves(1.0, 4.0);
    for (int k = 0; k < n; ++k) {
      const double t = k * step;
      push(t, wave_sum(wx, t), eye + wave_sum(wy, t), wave_sum(wz, t), wave_sum(wyaw, t), wave_sum(wpitch, t),
           wave_sum(wroll, t));
    }
  } else {
    throw ValidationError("unknown trace kind '" + kind +
                          "' (expected ellipse, circle, spiral, spin, testset_sequence)");
  }
  return trace;
}

}  // namespace l3gs
