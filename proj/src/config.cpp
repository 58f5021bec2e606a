#include "usinr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "usinr/error.hpp"

namespace usinr {

PhantomSpec PhantomConfig::build() const {
  PhantomSpec p;
  if (shape == "straight") {
    p = PhantomSpec::straight_tube(start, length_mm, radius_mm);
  } else if (shape == "curved") {
    p = PhantomSpec::curved_tube(start, length_mm, radius_mm, curve_amplitude_mm, curve_wavelength_mm);
  } else {
    throw ConfigError("phantom.shape must be straight or curved, got '" + shape + "'");
  }
  if (bulge) p.bulge = bulge_params;
  p.background_intensity = background_intensity;
  p.vessel_intensity = vessel_intensity;
  p.speckle_sigma = speckle_sigma;
  return p;
}

PipelineConfig::PipelineConfig() {
  // Desk-scale reference run: narrower network and subsampled voxels.
  inr.hidden_width = 64;
  train.epochs = 200;
  train.max_voxels_per_slice = 1024;
  train.learning_rate = 1e-4;
  corruption.fraction_corrupted = 0.2;
}

void PipelineConfig::validate() const {
  try {
    phantom.build().validate();
    probe.validate();
    breathing.validate();
    corruption.validate();
    nav.validate();
    inr.validate();
    train.validate();
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  if (filter.window < 1) throw ConfigError("filter.window must be >= 1");
  if (!(filter.rel_tolerance >= 0.0)) throw ConfigError("filter.tolerance must be non-negative");
  if (frame_stride < 1) throw ConfigError("train.frame_stride must be >= 1");
  if (gated_frame_stride < 1) throw ConfigError("train.gated_frame_stride must be >= 1");
  if (!(roi_margin_mm >= 0.0)) throw ConfigError("recon.roi_margin_mm must be non-negative");
  if (!(surface.resolution_mm > 0.0 && surface.sampling_resolution_mm > 0.0))
    throw ConfigError("recon resolutions must be positive");
  if (surface.fps_count < 1) throw ConfigError("recon.fps_count must be >= 1");
  if (surface.normal_k < 3) throw ConfigError("recon.normal_k must be >= 3");
  if (!(baseline.max_gap_mm > 0.0)) throw ConfigError("baseline.max_gap_mm must be positive");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest round-tripping form.
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

ConfigKey num(const std::string& name, double& ref) {
  return {name, [&ref](const std::string& s) { ref = parse_double(s); }, [&ref] { return fmt(ref); }};
}

template <class Int>
ConfigKey integer(const std::string& name, Int& ref) {
  return {name, [&ref](const std::string& s) { ref = static_cast<Int>(parse_int(s)); },
          [&ref] { return std::to_string(ref); }};
}

ConfigKey u64(const std::string& name, std::uint64_t& ref) {
  return {name, [&ref](const std::string& s) { ref = parse_u64(s); }, [&ref] { return std::to_string(ref); }};
}

ConfigKey flag(const std::string& name, bool& ref) {
  return {name, [&ref](const std::string& s) { ref = parse_bool(s); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

ConfigKey text(const std::string& name, std::string& ref) {
  return {name, [&ref](const std::string& s) { ref = s; }, [&ref] { return ref; }};
}

std::string modes_to_string(const std::vector<CorruptionMode>& modes) {
  std::string out;
  for (auto m : modes) out += (out.empty() ? "" : ",") + to_string(m);
  return out;
}

}  // namespace

std::vector<ConfigKey> config_keys(PipelineConfig& c) {
  std::vector<ConfigKey> k;
  auto& ph = c.phantom;
  k.push_back(text("phantom.shape", ph.shape));
  k.push_back(num("phantom.start_x_mm", ph.start.x()));
  k.push_back(num("phantom.start_y_mm", ph.start.y()));
  k.push_back(num("phantom.start_z_mm", ph.start.z()));
  k.push_back(num("phantom.length_mm", ph.length_mm));
  k.push_back(num("phantom.radius_mm", ph.radius_mm));
  k.push_back(flag("phantom.bulge", ph.bulge));
  k.push_back(num("phantom.bulge_peak_radius_mm", ph.bulge_params.peak_radius_mm));
  k.push_back(num("phantom.bulge_center_mm", ph.bulge_params.center_arclength_mm));
  k.push_back(num("phantom.bulge_sigma_mm", ph.bulge_params.sigma_mm));
  k.push_back(num("phantom.curve_amplitude_mm", ph.curve_amplitude_mm));
  k.push_back(num("phantom.curve_wavelength_mm", ph.curve_wavelength_mm));
  k.push_back(num("phantom.background_intensity", ph.background_intensity));
  k.push_back(num("phantom.vessel_intensity", ph.vessel_intensity));
  k.push_back(num("phantom.speckle_sigma", ph.speckle_sigma));

  k.push_back(num("probe.theta_rad", c.probe.theta));
  k.push_back(num("probe.r_mm", c.probe.r));
  k.push_back(num("probe.d_mm", c.probe.d));
  k.push_back(integer("probe.width_px", c.probe.image_width_px));
  k.push_back(integer("probe.height_px", c.probe.image_height_px));

  k.push_back(num("breathing.amplitude_mm", c.breathing.amplitude_mm));
  k.push_back(num("breathing.period_s", c.breathing.period_s));
  k.push_back(num("breathing.phase_rad", c.breathing.phase_rad));

  k.push_back(num("corruption.fraction", c.corruption.fraction_corrupted));
  k.push_back({"corruption.modes",
               [&c](const std::string& s) {
                 std::vector<CorruptionMode> modes;
                 std::stringstream ss(s);
                 std::string item;
                 while (std::getline(ss, item, ',')) {
                   item = trim(item);
                   if (item.empty()) continue;
                   try {
                     modes.push_back(corruption_mode_from_string(item));
                   } catch (const DataError& e) {
                     throw ConfigError(e.what());
                   }
                 }
                 c.corruption.modes = modes;
               },
               [&c] { return modes_to_string(c.corruption.modes); }});
  k.push_back(num("corruption.dilation_factor", c.corruption.dilation_factor));
  k.push_back(num("corruption.blob_scale_min", c.corruption.blob_scale_min));
  k.push_back(num("corruption.blob_scale_max", c.corruption.blob_scale_max));
  k.push_back(u64("corruption.seed", c.corruption.rng_seed));

  k.push_back(num("nav.gain", c.nav.gain));
  k.push_back(num("nav.step_cap_mm", c.nav.step_cap_mm));
  k.push_back(num("nav.longitudinal_step_mm", c.nav.longitudinal_step_mm));
  k.push_back(num("nav.frame_interval_s", c.nav.frame_interval_s));
  k.push_back(integer("nav.max_frames", c.nav.max_frames));
  k.push_back(num("nav.hold_threshold_fraction", c.nav.hold_threshold_fraction));
  k.push_back(num("nav.start_x_mm", c.nav.start_x_mm));
  k.push_back(num("nav.start_y_mm", c.nav.start_y_mm));

  k.push_back({"acquisition.mode",
               [&c](const std::string& s) {
                 try {
                   c.mode = acquisition_mode_from_string(s);
                 } catch (const DataError& e) {
                   throw ConfigError(e.what());
                 }
               },
               [&c] { return to_string(c.mode); }});

  k.push_back(flag("filter.enabled", c.filter.enabled));
  k.push_back(integer("filter.window", c.filter.window));
  k.push_back(num("filter.tolerance", c.filter.rel_tolerance));

  k.push_back(num("gating.band_mm", c.gating.band_mm));
  k.push_back(num("gating.min_prominence_mm", c.gating.min_prominence_mm));
  k.push_back(integer("gating.min_separation_frames", c.gating.min_separation_frames));
  k.push_back(num("gating.flat_tolerance_mm", c.gating.flat_tolerance_mm));

  k.push_back(integer("inr.pe_frequencies", c.inr.pe_frequencies));
  k.push_back(flag("inr.positional_encoding", c.inr.use_positional_encoding));
  k.push_back(integer("inr.hidden_layers", c.inr.hidden_layers));
  k.push_back(integer("inr.hidden_width", c.inr.hidden_width));
  k.push_back(num("inr.omega0", c.inr.omega0));

  k.push_back(integer("train.epochs", c.train.epochs));
  k.push_back(num("train.learning_rate", c.train.learning_rate));
  k.push_back(num("train.beta1", c.train.beta1));
  k.push_back(num("train.beta2", c.train.beta2));
  k.push_back(num("train.eps", c.train.eps));
  k.push_back(integer("train.max_voxels_per_slice", c.train.max_voxels_per_slice));
  k.push_back(num("train.divergence_factor", c.train.divergence_factor));
  k.push_back(integer("train.frame_stride", c.frame_stride));
  k.push_back(integer("train.gated_frame_stride", c.gated_frame_stride));

  k.push_back(num("recon.resolution_mm", c.surface.resolution_mm));
  k.push_back(num("recon.sampling_resolution_mm", c.surface.sampling_resolution_mm));
  k.push_back(num("recon.probability_threshold", c.surface.probability_threshold));
  k.push_back(num("recon.slab_thickness_mm", c.surface.slab_thickness_mm));
  k.push_back(integer("recon.fps_count", c.surface.fps_count));
  k.push_back(integer("recon.normal_k", c.surface.normal_k));
  k.push_back(num("recon.cg_tolerance", c.surface.poisson.cg_tolerance));
  k.push_back(integer("recon.max_iters", c.surface.poisson.max_iters));
  k.push_back(integer("recon.padding_cells", c.surface.poisson.padding_cells));
  k.push_back(num("recon.roi_margin_mm", c.roi_margin_mm));

  k.push_back(num("baseline.max_gap_mm", c.baseline.max_gap_mm));
  k.push_back(num("baseline.threshold", c.baseline.threshold));

  k.push_back(u64("seed", c.seed));
  k.push_back(text("output.dir", c.out_dir));
  return k;
}

namespace {

void set_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (auto& k : config_keys(cfg))
    if (k.name == key) {
      k.set(value);
      return;
    }
  throw ConfigError("unknown key '" + key + "'");
}

}  // namespace

void apply_config_text(PipelineConfig& cfg, const std::string& content, const std::string& source) {
  std::istringstream is(content);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (!section.empty()) key = section + "." + key;
    try {
      set_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  PipelineConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  try {
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  } catch (const ConfigError& e) {
    throw ConfigError("override '" + assignment + "': " + e.what());
  }
}

std::string dump_config(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  auto keys = config_keys(copy);
  std::sort(keys.begin(), keys.end(), [](const ConfigKey& a, const ConfigKey& b) { return a.name < b.name; });
  std::string out;
  for (const auto& k : keys) out += k.name + " = " + k.get() + "\n";
  return out;
}

nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  auto keys = config_keys(copy);
  std::sort(keys.begin(), keys.end(), [](const ConfigKey& a, const ConfigKey& b) { return a.name < b.name; });
  nlohmann::ordered_json j;
  for (const auto& k : keys) j[k.name] = k.get();
  return j;
}

}  // namespace usinr
