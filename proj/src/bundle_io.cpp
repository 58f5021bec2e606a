#include "usinr/bundle_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "usinr/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace usinr {

namespace {

std::string frame_name(int index, const char* kind) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "frames/%06d_%s.raw", index, kind);
  return buf;
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + ": bad field '" + key + "': " + e.what());
  }
}

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw DataError(where + ": expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void write_json(const std::string& path, const ordered_json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << j.dump(2) << '\n';
  if (!os) throw DataError("failed writing " + path);
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_raster(const std::string& path, const Raster<std::uint8_t>& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  os.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (!os) throw DataError("failed writing " + path);
}

Raster<std::uint8_t> read_raster(const std::string& path, int width, int height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  Raster<std::uint8_t> r(width, height);
  is.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (is.gcount() != static_cast<std::streamsize>(r.data.size()) || is.peek() != EOF)
    throw DataError(path + ": expected " + std::to_string(r.data.size()) + " bytes");
  return r;
}

void write_bundle(const std::string& dir, const SweepBundle& bundle) {
  bundle.validate();
  make_dirs(fs::path(dir) / "frames");
  const auto& g = bundle.probe;
  ordered_json m;
  m["format"] = "usinr-sweep-bundle";
  m["version"] = kBundleVersion;
  m["probe"] = {{"theta_rad", g.theta},
                {"r_mm", g.r},
                {"d_mm", g.d},
                {"width_px", g.image_width_px},
                {"height_px", g.image_height_px}};
  m["mode"] = to_string(bundle.mode);
  m["breathing"] = {{"amplitude_mm", bundle.breathing.amplitude_mm},
                    {"period_s", bundle.breathing.period_s},
                    {"phase_rad", bundle.breathing.phase_rad}};
  m["hit_frame_cap"] = bundle.hit_frame_cap;
  m["frame_count"] = bundle.frames.size();
  ordered_json frames = ordered_json::array();
  for (const auto& f : bundle.frames) {
    ordered_json e;
    e["index"] = f.index;
    e["timestamp_s"] = f.timestamp_s;
    e["pose"] = ordered_json::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) e["pose"].push_back(f.pose(r, c));
    e["intensity_file"] = frame_name(f.index, "intensity");
    e["label_file"] = frame_name(f.index, "label");
    e["width"] = f.intensity.width;
    e["height"] = f.intensity.height;
    e["pixel_spacing_mm"] = {g.lateral_spacing_mm(), g.axial_spacing_mm()};
    frames.push_back(std::move(e));
    write_raster((fs::path(dir) / frame_name(f.index, "intensity")).string(), f.intensity);
    write_raster((fs::path(dir) / frame_name(f.index, "label")).string(), f.label);
  }
  m["frames"] = std::move(frames);
  write_json((fs::path(dir) / "manifest.json").string(), m);
}

SweepBundle read_bundle(const std::string& dir) {
  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  const json m = read_json(mpath);
  const int version = field<int>(m, "version", mpath);
  if (version != kBundleVersion)
    throw DataError(mpath + ": unsupported bundle version " + std::to_string(version));
  SweepBundle b;
  const json& p = m.at("probe");
  b.probe.theta = field<double>(p, "theta_rad", mpath);
  b.probe.r = field<double>(p, "r_mm", mpath);
  b.probe.d = field<double>(p, "d_mm", mpath);
  b.probe.image_width_px = field<int>(p, "width_px", mpath);
  b.probe.image_height_px = field<int>(p, "height_px", mpath);
  b.mode = acquisition_mode_from_string(field<std::string>(m, "mode", mpath));
  if (m.contains("breathing")) {
    const json& br = m.at("breathing");
    b.breathing.amplitude_mm = field<double>(br, "amplitude_mm", mpath);
    b.breathing.period_s = field<double>(br, "period_s", mpath);
    b.breathing.phase_rad = field<double>(br, "phase_rad", mpath);
  }
  b.hit_frame_cap = m.value("hit_frame_cap", false);
  const auto& frames = m.at("frames");
  const size_t count = field<size_t>(m, "frame_count", mpath);
  if (!frames.is_array() || frames.size() != count)
    throw DataError(mpath + ": frame_count does not match the frame list");
  for (const auto& e : frames) {
    TrackedFrame f;
    f.index = field<int>(e, "index", mpath);
    f.timestamp_s = field<double>(e, "timestamp_s", mpath);
    const auto pose = field<std::vector<double>>(e, "pose", mpath);
    if (pose.size() != 16) throw DataError(mpath + ": pose needs 16 values");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) f.pose(r, c) = pose[4 * r + c];
    const int w = field<int>(e, "width", mpath), h = field<int>(e, "height", mpath);
    f.intensity = read_raster((fs::path(dir) / field<std::string>(e, "intensity_file", mpath)).string(), w, h);
    f.label = read_raster((fs::path(dir) / field<std::string>(e, "label_file", mpath)).string(), w, h);
    b.frames.push_back(std::move(f));
  }
  b.validate();
  return b;
}

ordered_json phantom_to_json(const PhantomSpec& p) {
  ordered_json j;
  j["centerline"] = ordered_json::array();
  for (const auto& c : p.centerline) j["centerline"].push_back(vec_json(c));
  j["base_radius_mm"] = p.base_radius_mm;
  if (p.bulge) {
    j["bulge"] = {{"peak_radius_mm", p.bulge->peak_radius_mm},
                  {"center_arclength_mm", p.bulge->center_arclength_mm},
                  {"sigma_mm", p.bulge->sigma_mm}};
  } else {
    j["bulge"] = nullptr;
  }
  j["background_intensity"] = p.background_intensity;
  j["vessel_intensity"] = p.vessel_intensity;
  j["speckle_sigma"] = p.speckle_sigma;
  j["extent_min"] = vec_json(p.extent_min);
  j["extent_max"] = vec_json(p.extent_max);
  return j;
}

PhantomSpec phantom_from_json(const json& j) {
  const std::string where = "phantom";
  PhantomSpec p;
  for (const auto& c : j.at("centerline")) p.centerline.push_back(vec_from(c, where));
  p.base_radius_mm = field<double>(j, "base_radius_mm", where);
  if (j.contains("bulge") && !j.at("bulge").is_null()) {
    const auto& b = j.at("bulge");
    p.bulge = GaussianBulge{field<double>(b, "peak_radius_mm", where),
                            field<double>(b, "center_arclength_mm", where),
                            field<double>(b, "sigma_mm", where)};
  }
  p.background_intensity = field<double>(j, "background_intensity", where);
  p.vessel_intensity = field<double>(j, "vessel_intensity", where);
  p.speckle_sigma = field<double>(j, "speckle_sigma", where);
  p.extent_min = vec_from(j.at("extent_min"), where);
  p.extent_max = vec_from(j.at("extent_max"), where);
  p.validate();
  return p;
}

void write_ground_truth(const std::string& dir, const PhantomSpec& phantom,
                        const std::vector<FrameTruth>& truth) {
  make_dirs(dir);
  ordered_json j;
  j["version"] = kBundleVersion;
  j["phantom"] = phantom_to_json(phantom);
  j["frames"] = ordered_json::array();
  for (size_t i = 0; i < truth.size(); ++i)
    j["frames"].push_back({{"index", i},
                           {"displacement_mm", truth[i].displacement_mm},
                           {"corrupted", truth[i].corrupted},
                           {"corruption_mode", to_string(truth[i].mode)}});
  write_json((fs::path(dir) / "ground_truth.json").string(), j);
}

GroundTruth read_ground_truth(const std::string& dir) {
  const std::string path = (fs::path(dir) / "ground_truth.json").string();
  const json j = read_json(path);
  GroundTruth gt;
  gt.phantom = phantom_from_json(j.at("phantom"));
  for (const auto& e : j.at("frames")) {
    FrameTruth t;
    t.displacement_mm = field<double>(e, "displacement_mm", path);
    t.corrupted = field<bool>(e, "corrupted", path);
    t.mode = corruption_mode_from_string(field<std::string>(e, "corruption_mode", path));
    gt.frames.push_back(t);
  }
  return gt;
}

void write_label_set(const std::string& dir, const std::vector<LabelRaster>& labels) {
  make_dirs(dir);
  ordered_json j;
  j["count"] = labels.size();
  j["width"] = labels.empty() ? 0 : labels.front().width;
  j["height"] = labels.empty() ? 0 : labels.front().height;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].same_shape(labels.front())) throw DataError("label set: rasters differ in shape");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu_label.raw", i);
    write_raster((fs::path(dir) / buf).string(), labels[i]);
  }
  write_json((fs::path(dir) / "labels.json").string(), j);
}

std::vector<LabelRaster> read_label_set(const std::string& dir) {
  const std::string path = (fs::path(dir) / "labels.json").string();
  const json j = read_json(path);
  const size_t n = field<size_t>(j, "count", path);
  const int w = field<int>(j, "width", path), h = field<int>(j, "height", path);
  std::vector<LabelRaster> out;
  for (size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu_label.raw", i);
    out.push_back(read_raster((fs::path(dir) / buf).string(), w, h));
  }
  return out;
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void add(const char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(p[i]);
      h *= 1099511628211ULL;
    }
  }
  void add_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    char buf[1 << 16];
    while (is) {
      is.read(buf, sizeof buf);
      add(buf, static_cast<size_t>(is.gcount()));
    }
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

}  // namespace

std::string file_hash(const std::string& path) {
  Fnv f;
  f.add_file(path);
  return f.hex();
}

std::string tree_hash(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(files.begin(), files.end());
  Fnv f;
  for (const auto& rel : files) {
    f.add(rel.data(), rel.size() + 1);
    f.add_file((fs::path(dir) / rel).string());
  }
  return f.hex();
}

}  // namespace usinr
