#include "l3gs/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstring>
#include <thread>

#include "io_util.hpp"

namespace l3gs {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr char kMagic[4] = {'L', '3', 'G', 'G'};
constexpr std::uint16_t kFormatVersion = 1;

int axis_cell(double v, double lo, double hi, int n) {
  if (n <= 1 || hi <= lo) return 0;
  const double step = (hi - lo) / n;
  const int i = static_cast<int>(std::floor((v - lo) / step));
  return std::clamp(i, 0, n - 1);
}

int wrap_cell(double deg, int n) {
  const double step = 360.0 / n;
  const int i = static_cast<int>(std::floor((wrap_angle(deg) + 180.0) / step));
  return std::clamp(i, 0, n - 1);
}

}  // namespace

GridSpec default_grid_spec(const Scene& scene) {
  GridSpec spec;
  if (!scene.splats.empty()) {
    Eigen::Vector3d lo = scene.splats[0].position.cast<double>();
    Eigen::Vector3d hi = lo;
    for (const Splat& sp : scene.splats) {
      lo = lo.cwiseMin(sp.position.cast<double>());
      hi = hi.cwiseMax(sp.position.cast<double>());
    }
    spec.min_corner = lo;
    spec.max_corner = hi;
  }
  return spec;
}

UtilityGrid::UtilityGrid(GridSpec spec, std::vector<ObjectId> objects, int num_layers)
    : spec_(spec), objects_(std::move(objects)), num_layers_(num_layers) {
  std::sort(objects_.begin(), objects_.end());
  objects_.erase(std::unique(objects_.begin(), objects_.end()), objects_.end());
  values_.assign(spec_.num_positions() * spec_.num_orientations() * objects_.size() *
                     std::size_t(num_layers_),
                 0.0f);
}

int UtilityGrid::object_index(ObjectId j) const {
  const auto it = std::lower_bound(objects_.begin(), objects_.end(), j);
  if (it == objects_.end() || *it != j)
    throw ValidationError("grid has no object " + std::to_string(j));
  return int(it - objects_.begin());
}

Eigen::Vector3d UtilityGrid::position_sample(int pi) const {
  const int iz = pi % spec_.nz;
  const int iy = (pi / spec_.nz) % spec_.ny;
  const int ix = pi / (spec_.nz * spec_.ny);
  auto center = [](double lo, double hi, int n, int i) {
    return n <= 1 ? 0.5 * (lo + hi) : lo + (i + 0.5) * (hi - lo) / n;
  };
  return {center(spec_.min_corner.x(), spec_.max_corner.x(), spec_.nx, ix),
          center(spec_.min_corner.y(), spec_.max_corner.y(), spec_.ny, iy),
          center(spec_.min_corner.z(), spec_.max_corner.z(), spec_.nz, iz)};
}

Eigen::Vector3d UtilityGrid::orientation_sample(int oi) const {
  const int ri = oi % spec_.nroll;
  const int pi = (oi / spec_.nroll) % spec_.npitch;
  const int yi = oi / (spec_.nroll * spec_.npitch);
  return {-180.0 + (yi + 0.5) * 360.0 / spec_.nyaw,
          -90.0 + (pi + 0.5) * 180.0 / spec_.npitch,
          -180.0 + (ri + 0.5) * 360.0 / spec_.nroll};
}

Viewport UtilityGrid::sample_viewport(int pi, int oi) const {
  Viewport vp;
  vp.position = position_sample(pi);
  const Eigen::Vector3d o = orientation_sample(oi);
  vp.yaw = o.x();
  vp.pitch = o.y();
  vp.roll = o.z();
  vp.fov_y = spec_.fov_y;
  vp.aspect = spec_.aspect;
  vp.width = spec_.width;
  vp.height = spec_.height;
  return vp;
}

int UtilityGrid::nearest_position(const Eigen::Vector3d& p) const {
  const int ix = axis_cell(p.x(), spec_.min_corner.x(), spec_.max_corner.x(), spec_.nx);
  const int iy = axis_cell(p.y(), spec_.min_corner.y(), spec_.max_corner.y(), spec_.ny);
  const int iz = axis_cell(p.z(), spec_.min_corner.z(), spec_.max_corner.z(), spec_.nz);
  return (ix * spec_.ny + iy) * spec_.nz + iz;
}

int UtilityGrid::nearest_orientation(double yaw, double pitch, double roll) const {
  const int yi = wrap_cell(yaw, spec_.nyaw);
  const int pi = axis_cell(std::clamp(pitch, -90.0, 90.0), -90.0, 90.0, spec_.npitch);
  const int ri = wrap_cell(roll, spec_.nroll);
  return (yi * spec_.npitch + pi) * spec_.nroll + ri;
}

std::size_t UtilityGrid::value_index(int pi, int oi, int j_index, int l) const {
  assert(l >= 1 && l <= num_layers_);
  return ((std::size_t(pi) * spec_.num_orientations() + oi) * objects_.size() + j_index) *
             num_layers_ +
         (l - 1);
}

double UtilityGrid::value(int pi, int oi, ObjectId j, int l) const {
  return values_[value_index(pi, oi, object_index(j), l)];
}

double UtilityGrid::lookup(const Viewport& vp, ObjectId j, int l) const {
  const int pi = nearest_position(vp.position);
  const int oi = nearest_orientation(vp.yaw, vp.pitch, vp.roll);
  return values_[value_index(pi, oi, object_index(j), l)];
}

void UtilityGrid::lookup_layers(const Viewport& vp, std::vector<double>& out) const {
  const int pi = nearest_position(vp.position);
  const int oi = nearest_orientation(vp.yaw, vp.pitch, vp.roll);
  const std::size_t base =
      (std::size_t(pi) * spec_.num_orientations() + oi) * objects_.size() * num_layers_;
  out.resize(objects_.size() * std::size_t(num_layers_));
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = values_[base + k];
}

// Splits the lattice evaluation by position sample. Per position it bins
// splats by view direction; per yaw/pitch it visits only bins intersecting
// the view cone (plus each bin's largest splat radius as margin, so skipped
// splats provably cover no pixels), and the twelve rolls share that pass.
class GridBuilder {
 public:
  GridBuilder(const Scene& scene, const GridSpec& spec)
      : spec_(spec),
        eval_(scene,
              UtilityConfig{spec.closeness_mode, spec.near_plane, spec.clip_samples}) {
    const Camera cam = make_camera(sample_camera(), spec_.near_plane);
    fx_ = cam.fx;
    fy_ = cam.fy;
    theta_view_ = std::atan(std::hypot(0.5 * cam.width / cam.fx, 0.5 * cam.height / cam.fy));

    // Yaw/pitch frames and roll rotation tables.
    yp_frames_.resize(std::size_t(spec_.nyaw) * spec_.npitch);
    for (int yi = 0; yi < spec_.nyaw; ++yi) {
      for (int pi = 0; pi < spec_.npitch; ++pi) {
        Viewport vp;
        vp.yaw = -180.0 + (yi + 0.5) * 360.0 / spec_.nyaw;
        vp.pitch = -90.0 + (pi + 0.5) * 180.0 / spec_.npitch;
        vp.roll = 0.0;
        yp_frames_[std::size_t(yi) * spec_.npitch + pi] = rotation_world_from_camera(vp);
      }
    }
    roll_cos_.resize(spec_.nroll);
    roll_sin_.resize(spec_.nroll);
    for (int ri = 0; ri < spec_.nroll; ++ri) {
      const double r = (-180.0 + (ri + 0.5) * 360.0 / spec_.nroll) * kDegToRad;
      roll_cos_[ri] = std::cos(r);
      roll_sin_[ri] = std::sin(r);
    }

    bin_dirs_.resize(kBins);
    for (int bp = 0; bp < kBinsPsi; ++bp) {
      for (int ba = 0; ba < kBinsPhi; ++ba) {
        const double psi = (bp + 0.5) * kPi / kBinsPsi;
        const double phi = -kPi + (ba + 0.5) * 2.0 * kPi / kBinsPhi;
        bin_dirs_[bp * kBinsPhi + ba] =
            Eigen::Vector3d(std::sin(psi) * std::cos(phi), std::cos(psi),
                            std::sin(psi) * std::sin(phi));
      }
    }
  }

  UtilityGrid build(int num_threads) {
    UtilityGrid grid(spec_, eval_.objects(), eval_.num_layers());
    const int npos = int(spec_.num_positions());
    if (eval_.cache_.empty() || grid.objects().empty()) return grid;

    int hw = num_threads > 0 ? num_threads : int(std::thread::hardware_concurrency());
    hw = std::clamp(hw, 1, npos);
    std::atomic<int> next{0};
    std::atomic<int> done{0};
    auto worker = [&] {
      Workspace ws;
      while (true) {
        const int pi = next.fetch_add(1);
        if (pi >= npos) break;
        do_position(pi, grid, ws);
        const int d = done.fetch_add(1) + 1;
        if (d % 100 == 0 || d == npos)
          log(LogLevel::info, "grid: " + std::to_string(d) + "/" + std::to_string(npos) +
                                  " positions");
      }
    };
    if (hw == 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (int i = 0; i < hw; ++i) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
    return grid;
  }

 private:
  static constexpr int kBinsPhi = 24;
  static constexpr int kBinsPsi = 12;
  static constexpr int kBins = kBinsPhi * kBinsPsi;
  // Angular half-diagonal of one direction bin, padded a touch for safety.
  static constexpr double kBinRadius = (7.5 + 7.5 + 0.5) * kDegToRad;

  struct Workspace {
    std::vector<double> off_x, off_y, off_z, dist, cull_depth, sq, clos_op, opacity, smd;
    std::vector<std::uint32_t> slot;
    std::vector<int> bin_of;
    std::vector<int> bin_count, bin_start, bin_items;
    std::vector<double> bin_margin_cos, bin_margin_sin;  // cos/sin(beta_max + radius)
    std::vector<double> acc;                             // nroll * J * L
  };

  Viewport sample_camera() const {
    Viewport vp;
    vp.fov_y = spec_.fov_y;
    vp.aspect = spec_.aspect;
    vp.width = spec_.width;
    vp.height = spec_.height;
    return vp;
  }

  void do_position(int pi, UtilityGrid& grid, Workspace& ws) const;

  GridSpec spec_;
  SceneEvaluator eval_;
  double fx_ = 0, fy_ = 0, theta_view_ = 0;
  std::vector<Eigen::Matrix3d> yp_frames_;
  std::vector<double> roll_cos_, roll_sin_;
  std::vector<Eigen::Vector3d> bin_dirs_;
};

void GridBuilder::do_position(int pi, UtilityGrid& grid, Workspace& ws) const {
  const auto& cache = eval_.cache_;
  const std::size_t n = cache.size();
  const Eigen::Vector3d campos = grid.position_sample(pi);
  const double w = spec_.width, h = spec_.height;
  const double inv_frame = 1.0 / (w * h);
  const double inner_rad = 0.5 * std::min(w, h);
  const double fmax = std::max(fx_, fy_);
  const bool square_focal = fx_ == fy_;
  const bool camera_closeness = spec_.closeness_mode == ClosenessMode::camera_position;
  const double cos_tv = std::cos(theta_view_), sin_tv = std::sin(theta_view_);
  const std::size_t jl = grid.objects().size() * std::size_t(grid.num_layers());
  const int nroll = spec_.nroll;

  auto resize_all = [&](auto&... vecs) { (vecs.resize(n), ...); };
  resize_all(ws.off_x, ws.off_y, ws.off_z, ws.dist, ws.cull_depth, ws.sq, ws.clos_op,
             ws.opacity, ws.smd);
  ws.slot.resize(n);
  ws.bin_of.resize(n);
  ws.bin_count.assign(kBins, 0);
  ws.bin_start.assign(kBins + 1, 0);
  ws.bin_items.resize(n);
  ws.bin_margin_cos.assign(kBins, 0.0);
  ws.bin_margin_sin.assign(kBins, 0.0);
  ws.acc.assign(std::size_t(nroll) * jl, 0.0);

  std::vector<double> bin_sinb_max(kBins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& sc = cache[i];
    const Eigen::Vector3d off = sc.pos - campos;
    const double dist = std::max(off.norm(), 1e-12);
    ws.off_x[i] = off.x();
    ws.off_y[i] = off.y();
    ws.off_z[i] = off.z();
    ws.dist[i] = dist;
    const double sin_b = std::min(1.0, sc.sigma_max / dist);
    const double cos_b = std::sqrt(1.0 - sin_b * sin_b);
    ws.cull_depth[i] = dist * (cos_tv * cos_b - sin_tv * sin_b);
    ws.sq[i] = std::sqrt(std::max(0.0, off.dot(sc.adj_cov * off)));
    ws.clos_op[i] = sc.opacity / (1.0 + dist);
    ws.opacity[i] = sc.opacity;
    ws.smd[i] = sc.sigma_max * dist;
    ws.slot[i] = sc.slot;

    const Eigen::Vector3d dir = off / dist;
    const double psi = std::acos(std::clamp(dir.y(), -1.0, 1.0));
    const double phi = std::atan2(dir.z(), dir.x());
    const int bp = std::clamp(int(psi / kPi * kBinsPsi), 0, kBinsPsi - 1);
    const int ba = std::clamp(int((phi + kPi) / (2.0 * kPi) * kBinsPhi), 0, kBinsPhi - 1);
    const int bin = bp * kBinsPhi + ba;
    ws.bin_of[i] = bin;
    ws.bin_count[bin]++;
    bin_sinb_max[bin] = std::max(bin_sinb_max[bin], sin_b);
  }
  for (int b = 0; b < kBins; ++b) ws.bin_start[b + 1] = ws.bin_start[b] + ws.bin_count[b];
  {
    std::vector<int> cursor(ws.bin_start.begin(), ws.bin_start.end() - 1);
    for (std::size_t i = 0; i < n; ++i) ws.bin_items[cursor[ws.bin_of[i]]++] = int(i);
  }
  for (int b = 0; b < kBins; ++b) {
    const double margin = std::asin(std::min(1.0, bin_sinb_max[b])) + kBinRadius;
    if (theta_view_ + margin >= kPi) {
      ws.bin_margin_cos[b] = 2.0;  // sentinel: never skip this bin
    } else {
      ws.bin_margin_cos[b] = std::cos(margin);
      ws.bin_margin_sin[b] = std::sin(margin);
    }
  }

  std::vector<float>& values = grid.raw_values();
  for (int yi = 0; yi < spec_.nyaw; ++yi) {
    for (int pj = 0; pj < spec_.npitch; ++pj) {
      const Eigen::Matrix3d& R = yp_frames_[std::size_t(yi) * spec_.npitch + pj];
      const Eigen::Vector3d c0 = R.col(0), c1 = R.col(1), c2 = R.col(2);
      const Eigen::Vector3d fwd = -c2;
      std::fill(ws.acc.begin(), ws.acc.end(), 0.0);

      for (int b = 0; b < kBins; ++b) {
        if (ws.bin_count[b] == 0) continue;
        if (ws.bin_margin_cos[b] <= 1.0) {
          // Visit only bins whose padded cone intersects the view cone.
          const double cos_ang = fwd.dot(bin_dirs_[b]);
          const double cos_limit = cos_tv * ws.bin_margin_cos[b] - sin_tv * ws.bin_margin_sin[b];
          if (cos_ang < cos_limit) continue;
        }
        for (int it = ws.bin_start[b]; it < ws.bin_start[b + 1]; ++it) {
          const int i = ws.bin_items[it];
          const double ox = ws.off_x[i], oy = ws.off_y[i], oz = ws.off_z[i];
          const double depth = ox * fwd.x() + oy * fwd.y() + oz * fwd.z();
          if (depth <= spec_.near_plane || depth < ws.cull_depth[i]) continue;

          const double x = ox * c0.x() + oy * c0.y() + oz * c0.z();
          const double y = ox * c1.x() + oy * c1.y() + oz * c1.z();
          const double inv_d = 1.0 / depth;
          const double r_safe = fmax * ws.smd[i] * inv_d * inv_d;
          const double area = kPi * fx_ * fy_ * ws.sq[i] * inv_d * inv_d * inv_d;
          double value;
          if (camera_closeness) {
            value = ws.clos_op[i] * area * inv_frame;
          } else {
            const double d_ray = std::sqrt(
                std::max(0.0, ws.dist[i] * ws.dist[i] - depth * depth));
            value = ws.opacity[i] / (1.0 + d_ray) * area * inv_frame;
          }

          const double u_off = fx_ * x * inv_d;
          const double v_off = fy_ * y * inv_d;
          if (std::hypot(u_off, v_off) + r_safe <= inner_rad) {
            for (int r = 0; r < nroll; ++r) ws.acc[std::size_t(r) * jl + ws.slot[i]] += value;
            continue;
          }

          bool have_m = false;
          double m_a = 0, m_b = 0, m_c = 0;
          const auto& cov = cache[i].cov;
          for (int r = 0; r < nroll; ++r) {
            const double co = roll_cos_[r], so = roll_sin_[r];
            const double xr = co * x + so * y;
            const double yr = -so * x + co * y;
            const double cu = 0.5 * w + fx_ * xr * inv_d;
            const double cv = 0.5 * h - fy_ * yr * inv_d;
            if (cu - r_safe >= 0.0 && cu + r_safe <= w && cv - r_safe >= 0.0 &&
                cv + r_safe <= h) {
              ws.acc[std::size_t(r) * jl + ws.slot[i]] += value;
              continue;
            }
            if (cu + r_safe <= 0.0 || cu - r_safe >= w || cv + r_safe <= 0.0 ||
                cv - r_safe >= h)
              continue;

            double a, bq, c;
            if (square_focal) {
              if (!have_m) {
                const Eigen::Vector3d w1 = (c0 + (x * inv_d) * c2) * (fx_ * inv_d);
                const Eigen::Vector3d w2 = (c1 + (y * inv_d) * c2) * (fy_ * inv_d);
                m_a = w1.dot(cov * w1);
                m_b = w1.dot(cov * w2);
                m_c = w2.dot(cov * w2);
                have_m = true;
              }
              a = co * co * m_a + 2.0 * co * so * m_b + so * so * m_c;
              bq = co * so * (m_c - m_a) + (co * co - so * so) * m_b;
              c = so * so * m_a - 2.0 * co * so * m_b + co * co * m_c;
            } else {
              // Anisotropic focal lengths: rolling the camera does not
              // commute with projection, evaluate this roll in full.
              const Eigen::Vector3d cr0 = co * c0 + so * c1;
              const Eigen::Vector3d cr1 = -so * c0 + co * c1;
              const Eigen::Vector3d w1 = (cr0 + (xr * inv_d) * c2) * (fx_ * inv_d);
              const Eigen::Vector3d w2 = (cr1 + (yr * inv_d) * c2) * (fy_ * inv_d);
              a = w1.dot(cov * w1);
              bq = w1.dot(cov * w2);
              c = w2.dot(cov * w2);
            }
            const double area_r = detail::clipped_ellipse_area(a, -bq, c, cu, cv, w, h,
                                                               spec_.clip_samples);
            if (area_r <= 0.0) continue;
            double v_clip;
            if (camera_closeness) {
              v_clip = ws.clos_op[i] * area_r * inv_frame;
            } else {
              const double d_ray = std::sqrt(
                  std::max(0.0, ws.dist[i] * ws.dist[i] - depth * depth));
              v_clip = ws.opacity[i] / (1.0 + d_ray) * area_r * inv_frame;
            }
            ws.acc[std::size_t(r) * jl + ws.slot[i]] += v_clip;
          }
        }
      }

      for (int r = 0; r < nroll; ++r) {
        const int oi = (yi * spec_.npitch + pj) * nroll + r;
        const std::size_t base = (std::size_t(pi) * spec_.num_orientations() + oi) * jl;
        for (std::size_t k = 0; k < jl; ++k)
          values[base + k] = float(ws.acc[std::size_t(r) * jl + k]);
      }
    }
  }
}

UtilityGrid precompute_grid(const Scene& scene, const GridSpec& spec, int num_threads) {
  GridBuilder builder(scene, spec);
  return builder.build(num_threads);
}

void save_grid(const UtilityGrid& grid, const std::string& path) {
  const GridSpec& s = grid.spec();
  std::string buf;
  buf.reserve(256 + grid.raw_values().size() * 4);
  buf.append(kMagic, 4);
  io::put(buf, kFormatVersion);
  for (int k = 0; k < 3; ++k) io::put(buf, s.min_corner[k]);
  for (int k = 0; k < 3; ++k) io::put(buf, s.max_corner[k]);
  for (int v : {s.nx, s.ny, s.nz, s.nyaw, s.npitch, s.nroll})
    io::put(buf, std::uint16_t(v));
  io::put(buf, s.fov_y);
  io::put(buf, s.aspect);
  io::put(buf, std::int32_t(s.width));
  io::put(buf, std::int32_t(s.height));
  io::put(buf, std::uint8_t(s.closeness_mode));
  io::put(buf, s.near_plane);
  io::put(buf, std::int32_t(s.clip_samples));
  io::put(buf, std::uint16_t(grid.num_layers()));
  io::put(buf, std::uint32_t(grid.objects().size()));
  for (ObjectId j : grid.objects()) io::put(buf, j);
  buf.append(reinterpret_cast<const char*>(grid.raw_values().data()),
             grid.raw_values().size() * sizeof(float));
  io::write_file(path, buf);
}

UtilityGrid load_grid(const std::string& path) {
  const std::string data = io::read_file(path);
  io::Reader r(data.data(), data.size());
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": bad magic, not a utility grid");
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion)
    throw ParseError(path + ": unsupported grid version " + std::to_string(version));

  GridSpec s;
  for (int k = 0; k < 3; ++k) s.min_corner[k] = r.get<double>();
  for (int k = 0; k < 3; ++k) s.max_corner[k] = r.get<double>();
  s.nx = r.get<std::uint16_t>();
  s.ny = r.get<std::uint16_t>();
  s.nz = r.get<std::uint16_t>();
  s.nyaw = r.get<std::uint16_t>();
  s.npitch = r.get<std::uint16_t>();
  s.nroll = r.get<std::uint16_t>();
  s.fov_y = r.get<double>();
  s.aspect = r.get<double>();
  s.width = r.get<std::int32_t>();
  s.height = r.get<std::int32_t>();
  s.closeness_mode = static_cast<ClosenessMode>(r.get<std::uint8_t>());
  s.near_plane = r.get<double>();
  s.clip_samples = r.get<std::int32_t>();
  const int num_layers = r.get<std::uint16_t>();
  const std::uint32_t nobj = r.get<std::uint32_t>();
  std::vector<ObjectId> objects(nobj);
  for (auto& j : objects) j = r.get<std::uint32_t>();

  UtilityGrid grid(s, objects, num_layers);
  const std::size_t want = grid.raw_values().size() * sizeof(float);
  if (r.remaining() != want)
    throw ParseError(path + ": value block holds " + std::to_string(r.remaining()) +
                     " bytes, expected " + std::to_string(want));
  if (want) {
    std::memcpy(grid.raw_values().data(), data.data() + (data.size() - want), want);
    for (float v : grid.raw_values())
      if (!std::isfinite(v)) throw ValidationError(path + ": non-finite grid value");
  }
  return grid;
}

}  // namespace l3gs
