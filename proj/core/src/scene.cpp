#include "l3gs/scene.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>

#include "io_util.hpp"

static_assert(std::endian::native == std::endian::little,
              "scene files are little-endian; big-endian hosts are unsupported");

namespace l3gs {

using io::put;
using io::read_file;
using io::Reader;
using io::write_file;

namespace {

constexpr char kMagic[4] = {'L', '3', 'G', 'S'};
constexpr std::uint16_t kFormatVersion = 1;

std::size_t sh_count(std::uint8_t degree) {
  return 3u * (degree + 1u) * (degree + 1u);
}

// %.9g round-trips binary32 exactly and keeps CSV output stable across runs.
std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

double parse_double(std::string_view field, const char* what, std::size_t line_no) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " value '" +
                     std::string(field) + "'");
  return v;
}

std::uint64_t parse_uint(std::string_view field, const char* what, std::size_t line_no) {
  std::uint64_t v = 0;
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

Scene load_scene_binary(const std::string& data, const std::string& path) {
  Reader r(data.data(), data.size());
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": bad magic, not a scene file");
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion)
    throw ParseError(path + ": unsupported format version " + std::to_string(version));

  Scene s;
  s.num_layers = r.get<std::uint16_t>();
  s.sh_degree = r.get<std::uint8_t>();
  if (s.sh_degree > 3)
    throw ParseError(path + ": harmonics degree " + std::to_string(s.sh_degree) +
                     " out of range (0..3)");
  s.layer_targets.resize(s.num_layers);
  for (auto& d : s.layer_targets) d = r.get<std::uint32_t>();

  const std::uint32_t n = s.num_layers ? s.layer_targets.back() : 0;
  const std::size_t nsh = sh_count(s.sh_degree);
  s.splats.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Splat& sp = s.splats[i];
    for (int k = 0; k < 3; ++k) sp.position[k] = r.get<float>();
    for (int k = 0; k < 3; ++k) sp.scale[k] = r.get<float>();
    for (int k = 0; k < 4; ++k) sp.rotation[k] = r.get<float>();
    sp.opacity = r.get<float>();
    sp.sh.resize(nsh);
    for (auto& c : sp.sh) c = r.get<float>();
    sp.object_id = r.get<std::uint32_t>();
    sp.layer_id = r.get<std::uint16_t>();
    sp.splat_index = i;
  }
  if (!r.at_end()) throw ParseError(path + ": trailing bytes after last splat record");
  return s;
}

std::string save_scene_binary(const Scene& s) {
  std::string buf;
  buf.reserve(16 + s.splats.size() * (48 + sh_count(s.sh_degree) * 4));
  buf.append(kMagic, 4);
  put(buf, kFormatVersion);
  put(buf, s.num_layers);
  put(buf, s.sh_degree);
  for (std::uint32_t d : s.layer_targets) put(buf, d);
  for (const Splat& sp : s.splats) {
    for (int k = 0; k < 3; ++k) put(buf, sp.position[k]);
    for (int k = 0; k < 3; ++k) put(buf, sp.scale[k]);
    for (int k = 0; k < 4; ++k) put(buf, sp.rotation[k]);
    put(buf, sp.opacity);
    for (float c : sp.sh) put(buf, c);
    put(buf, sp.object_id);
    put(buf, sp.layer_id);
  }
  return buf;
}

Scene load_scene_csv(const std::string& data, const std::string& path) {
  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;

  bool declared = false;
  std::uint16_t declared_layers = 0;
  std::vector<std::uint32_t> declared_targets;

  // Optional "# layers=<L> targets=<d1,d2,...>" comment before the header.
  std::string header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string tok;
      while (meta >> tok) {
        if (tok.rfind("layers=", 0) == 0) {
          declared = true;
          declared_layers = static_cast<std::uint16_t>(
              parse_uint(std::string_view(tok).substr(7), "layers", line_no));
        } else if (tok.rfind("targets=", 0) == 0) {
          declared = true;
          for (auto f : split(std::string_view(tok).substr(8), ','))
            declared_targets.push_back(
                static_cast<std::uint32_t>(parse_uint(f, "target", line_no)));
        }
      }
      continue;
    }
    header = line;
    break;
  }
  if (header.empty()) throw ParseError(path + ": missing CSV header row");

  auto cols = split(header, ',');
  constexpr std::size_t kFixedCols = 14;  // idx..layer
  if (cols.size() < kFixedCols + 3 || cols[0] != "idx")
    throw ParseError(path + ": unrecognized CSV header '" + header + "'");
  const std::size_t nsh = cols.size() - kFixedCols;
  std::uint8_t degree = 0;
  for (; degree <= 3; ++degree)
    if (sh_count(degree) == nsh) break;
  if (degree > 3)
    throw ParseError(path + ": " + std::to_string(nsh) +
                     " harmonics columns do not match any degree in 0..3");

  Scene s;
  s.sh_degree = degree;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ',');
    if (fields.size() != cols.size())
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(cols.size()) + " fields, found " +
                       std::to_string(fields.size()));
    Splat sp;
    sp.splat_index = static_cast<std::uint32_t>(parse_uint(fields[0], "idx", line_no));
    for (int k = 0; k < 3; ++k)
      sp.position[k] = static_cast<float>(parse_double(fields[1 + k], "position", line_no));
    for (int k = 0; k < 3; ++k)
      sp.scale[k] = static_cast<float>(parse_double(fields[4 + k], "scale", line_no));
    for (int k = 0; k < 4; ++k)
      sp.rotation[k] = static_cast<float>(parse_double(fields[7 + k], "rotation", line_no));
    sp.opacity = static_cast<float>(parse_double(fields[11], "opacity", line_no));
    sp.object_id = static_cast<ObjectId>(parse_uint(fields[12], "obj", line_no));
    sp.layer_id = static_cast<std::uint16_t>(parse_uint(fields[13], "layer", line_no));
    sp.sh.resize(nsh);
    for (std::size_t k = 0; k < nsh; ++k)
      sp.sh[k] = static_cast<float>(parse_double(fields[kFixedCols + k], "sh", line_no));
    s.splats.push_back(std::move(sp));
  }

  std::sort(s.splats.begin(), s.splats.end(),
            [](const Splat& a, const Splat& b) { return a.splat_index < b.splat_index; });

  if (declared) {
    if (declared_targets.size() != declared_layers)
      throw ParseError(path + ": declared layers=" + std::to_string(declared_layers) +
                       " but " + std::to_string(declared_targets.size()) + " targets");
    s.num_layers = declared_layers;
    s.layer_targets = declared_targets;
  } else {
    std::uint16_t max_layer = 0;
    for (const Splat& sp : s.splats) max_layer = std::max(max_layer, sp.layer_id);
    s.num_layers = max_layer;
    s.layer_targets.assign(max_layer, 0);
    for (const Splat& sp : s.splats)
      for (std::uint16_t l = sp.layer_id; l <= max_layer; ++l) s.layer_targets[l - 1]++;
  }
  return s;
}

std::string save_scene_csv(const Scene& s) {
  std::string out = "# layers=" + std::to_string(s.num_layers) + " targets=";
  for (std::size_t l = 0; l < s.layer_targets.size(); ++l) {
    if (l) out += ',';
    out += std::to_string(s.layer_targets[l]);
  }
  out += '\n';
  out += "idx,x,y,z,sx,sy,sz,qw,qx,qy,qz,opacity,obj,layer";
  const std::size_t nsh = sh_count(s.sh_degree);
  for (std::size_t k = 0; k < nsh; ++k) {
    static const char rgb[3] = {'r', 'g', 'b'};
    out += ",sh" + std::to_string(k / 3) + rgb[k % 3];
  }
  out += '\n';
  for (const Splat& sp : s.splats) {
    out += std::to_string(sp.splat_index);
    for (int k = 0; k < 3; ++k) out += ',' + fmt_float(sp.position[k]);
    for (int k = 0; k < 3; ++k) out += ',' + fmt_float(sp.scale[k]);
    for (int k = 0; k < 4; ++k) out += ',' + fmt_float(sp.rotation[k]);
    out += ',' + fmt_float(sp.opacity);
    out += ',' + std::to_string(sp.object_id);
    out += ',' + std::to_string(sp.layer_id);
    for (float c : sp.sh) out += ',' + fmt_float(c);
    out += '\n';
  }
  return out;
}

}  // namespace

CostTable::CostTable(std::uint16_t num_layers, std::vector<ObjectId> objects)
    : num_layers_(num_layers), objects_(std::move(objects)) {
  std::sort(objects_.begin(), objects_.end());
  objects_.erase(std::unique(objects_.begin(), objects_.end()), objects_.end());
  for (ObjectId j : objects_) {
    Row& r = rows_[j];
    r.cum.assign(num_layers_ + 1u, 0);
    r.delta.assign(num_layers_ + 1u, 0);
    r.count.assign(num_layers_ + 1u, 0);
  }
}

const CostTable::Row& CostTable::row(ObjectId j) const {
  auto it = rows_.find(j);
  if (it == rows_.end())
    throw ValidationError("cost table has no object " + std::to_string(j));
  return it->second;
}

void CostTable::set_layer(ObjectId j, int layer, std::uint32_t splat_count,
                          std::uint64_t delta_bytes) {
  auto it = rows_.find(j);
  if (it == rows_.end())
    throw ValidationError("cost table has no object " + std::to_string(j));
  Row& r = it->second;
  r.count.at(layer) = splat_count;
  r.delta.at(layer) = delta_bytes;
  for (std::size_t l = 1; l < r.cum.size(); ++l) r.cum[l] = r.cum[l - 1] + r.delta[l];
}

void validate_scene(const Scene& s) {
  if (s.sh_degree > 3)
    throw ValidationError("harmonics degree " + std::to_string(s.sh_degree) +
                          " out of range (0..3)");
  if (s.layer_targets.size() != s.num_layers)
    throw ValidationError("scene declares " + std::to_string(s.num_layers) +
                          " layers but has " + std::to_string(s.layer_targets.size()) +
                          " targets");
  for (std::size_t l = 1; l < s.layer_targets.size(); ++l)
    if (s.layer_targets[l] < s.layer_targets[l - 1])
      throw ValidationError("layer " + std::to_string(l + 1) +
                            ": cumulative target decreases (" +
                            std::to_string(s.layer_targets[l]) + " < " +
                            std::to_string(s.layer_targets[l - 1]) + ")");

  const std::uint32_t expect_n = s.num_layers ? s.layer_targets.back() : 0;
  if (s.splats.size() != expect_n)
    throw ValidationError("scene holds " + std::to_string(s.splats.size()) +
                          " splats but the last target declares " + std::to_string(expect_n));

  const std::size_t nsh = sh_count(s.sh_degree);
  std::vector<std::uint64_t> layer_count(s.num_layers + 1u, 0);
  for (std::size_t i = 0; i < s.splats.size(); ++i) {
    const Splat& sp = s.splats[i];
    const std::string who = "splat " + std::to_string(i);
    if (sp.splat_index != i)
      throw ValidationError(who + ": splat_index " + std::to_string(sp.splat_index) +
                            " breaks dense 0-based ordering");
    if (sp.layer_id < 1 || sp.layer_id > s.num_layers)
      throw ValidationError(who + ": layer_id " + std::to_string(sp.layer_id) +
                            " outside 1.." + std::to_string(s.num_layers));
    const double qn = sp.rotation.cast<double>().norm();
    if (std::abs(qn - 1.0) > 1e-3)
      throw ValidationError(who + ": rotation quaternion norm " + std::to_string(qn) +
                            " is not unit");
    if (!(sp.opacity >= 0.0f && sp.opacity <= 1.0f))
      throw ValidationError(who + ": opacity " + std::to_string(sp.opacity) +
                            " outside [0,1]");
    for (int k = 0; k < 3; ++k) {
      if (!std::isfinite(sp.position[k]))
        throw ValidationError(who + ": non-finite position");
      if (!(sp.scale[k] > 0.0f) || !std::isfinite(sp.scale[k]))
        throw ValidationError(who + ": scale must be positive and finite");
    }
    if (sp.sh.size() != nsh)
      throw ValidationError(who + ": " + std::to_string(sp.sh.size()) +
                            " harmonics coefficients, expected " + std::to_string(nsh));
    layer_count[sp.layer_id]++;
  }

  std::uint64_t cum = 0;
  for (std::uint16_t l = 1; l <= s.num_layers; ++l) {
    cum += layer_count[l];
    if (cum != s.layer_targets[l - 1])
      throw ValidationError("layer " + std::to_string(l) + ": declared cumulative target " +
                            std::to_string(s.layer_targets[l - 1]) + " but layers 1.." +
                            std::to_string(l) + " hold " + std::to_string(cum) + " splats");
  }
}

Scene load_scene(const std::string& path) {
  const std::string data = read_file(path);
  Scene s;
  if (data.size() >= 4 && std::memcmp(data.data(), kMagic, 4) == 0)
    s = load_scene_binary(data, path);
  else
    s = load_scene_csv(data, path);
  validate_scene(s);
  return s;
}

void save_scene(const Scene& scene, const std::string& path) {
  validate_scene(scene);
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  write_file(path, csv ? save_scene_csv(scene) : save_scene_binary(scene));
}

CostTable build_cost_table(const Scene& scene) {
  std::set<ObjectId> ids;
  for (const Splat& sp : scene.splats) ids.insert(sp.object_id);

  CostTable table(scene.num_layers, std::vector<ObjectId>(ids.begin(), ids.end()));
  std::map<ObjectId, std::vector<std::uint32_t>> counts;
  for (ObjectId j : ids) counts[j].assign(scene.num_layers + 1u, 0);
  for (const Splat& sp : scene.splats) counts[sp.object_id][sp.layer_id]++;

  for (ObjectId j : ids) {
    for (int l = 1; l <= scene.num_layers; ++l) {
      const std::uint32_t c = counts[j][l];
      const std::uint64_t bytes =
          c ? std::uint64_t(c) * scene.cost.bytes_full + scene.cost.header_bytes_per_bundle
            : 0;
      table.set_layer(j, l, c, bytes);
    }
  }
  return table;
}

Scene make_synthetic_scene(const SyntheticSceneParams& p) {
  Scene s;
  s.num_layers = static_cast<std::uint16_t>(p.layer_targets.size());
  s.sh_degree = p.sh_degree;
  s.layer_targets = p.layer_targets;

  Rng rng(p.seed);
  std::vector<Eigen::Vector3d> centers;
  for (std::uint32_t j = 0; j < p.num_objects; ++j)
    centers.emplace_back(rng.uniform(-0.6 * p.extent, 0.6 * p.extent),
                         rng.uniform(-0.6 * p.extent, 0.6 * p.extent),
                         rng.uniform(-0.6 * p.extent, 0.6 * p.extent));

  const std::uint32_t n = s.num_layers ? s.layer_targets.back() : 0;
  const std::size_t nsh = sh_count(p.sh_degree);
  s.splats.resize(n);
  std::uint16_t layer = 1;
  for (std::uint32_t i = 0; i < n; ++i) {
    while (layer < s.num_layers && i >= s.layer_targets[layer - 1]) ++layer;
    Splat& sp = s.splats[i];
    sp.splat_index = i;
    sp.layer_id = layer;
    sp.object_id = p.num_objects ? static_cast<ObjectId>(rng.next_below(p.num_objects)) : 0;
    const Eigen::Vector3d c = p.num_objects ? centers[sp.object_id] : Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k)
      sp.position[k] = static_cast<float>(c[k] + rng.uniform(-0.35 * p.extent, 0.35 * p.extent));
    for (int k = 0; k < 3; ++k)
      sp.scale[k] = static_cast<float>(rng.uniform(p.min_scale, p.max_scale));
    Eigen::Vector4d q;
    do {
      for (int k = 0; k < 4; ++k) q[k] = rng.uniform(-1.0, 1.0);
    } while (q.norm() < 1e-3);
    q.normalize();
    sp.rotation = q.cast<float>();
    sp.opacity = static_cast<float>(rng.uniform(0.2, 1.0));
    sp.sh.resize(nsh);
    for (std::size_t k = 0; k < nsh; ++k)
      sp.sh[k] = static_cast<float>(k < 3 ? rng.uniform(0.0, 1.0) : rng.uniform(-0.1, 0.1));
  }
  return s;
}

}  // namespace l3gs
