#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usinr/gating.hpp"
#include "usinr/inr.hpp"
#include "usinr/phantom.hpp"
#include "usinr/recon.hpp"
#include "usinr/reconstruction.hpp"
#include "usinr/slicefilter.hpp"

namespace usinr {

struct PhantomConfig {
  std::string shape = "straight";  // straight | curved
  Vec3 start{0.0, 0.0, -35.0};
  double length_mm = 150.0;
  double radius_mm = 10.0;
  bool bulge = false;
  GaussianBulge bulge_params;
  double curve_amplitude_mm = 10.0;
  double curve_wavelength_mm = 150.0;
  double background_intensity = 0.55;
  double vessel_intensity = 0.12;
  double speckle_sigma = 0.08;

  PhantomSpec build() const;
};

struct PipelineConfig {
  PhantomConfig phantom;
  ProbeGeometry probe;
  BreathingModel breathing;
  CorruptionSpec corruption;
  NavParams nav;
  AcquisitionMode mode = AcquisitionMode::breath_hold;
  FilterParams filter;
  GatingParams gating;
  InrArchitecture inr;
  TrainConfig train;
  int frame_stride = 3;        // breath-hold: train on every n-th frame
  int gated_frame_stride = 1;  // free breathing: stride over the gated frames
  double roi_margin_mm = 5.0;
  SurfaceParams surface;
  BaselineParams baseline;
  std::uint64_t seed = 42;
  std::string out_dir = "usinr_out";

  PipelineConfig();
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// One settable key of the flat `section.key = value` configuration.
struct ConfigKey {
  std::string name;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::vector<ConfigKey> config_keys(PipelineConfig& cfg);

/// Applies `key = value` lines. Blank lines and `#` comments are ignored;
/// `[section]` headers prefix the following keys. Unknown keys and malformed
/// values raise ConfigError with `source:line`.
void apply_config_text(PipelineConfig& cfg, const std::string& text, const std::string& source);
PipelineConfig load_config(const std::string& path);
/// A single `key=value` override (e.g. from --set).
void apply_override(PipelineConfig& cfg, const std::string& assignment);

/// Every key with its current value, one `key = value` per line, sorted.
std::string dump_config(const PipelineConfig& cfg);
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

}  // namespace usinr
