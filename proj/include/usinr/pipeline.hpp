#pragma once

#include <string>
#include <vector>

#include "usinr/config.hpp"
#include "usinr/metrics.hpp"

namespace usinr {

/// Layout of a run directory. Every stage reads and writes only these files.
struct RunLayout {
  std::string root;
  std::string bundle;           // sweep bundle directory
  std::string filter_dir;       // verdicts.csv, filter.json, labels/
  std::string gating_json;
  std::string train_dir;        // model.bin, loss.csv, training.json
  std::string mesh_dir;         // inr_points.ply, inr_mesh.ply, surface.json
  std::string baseline_dir;     // baseline_mesh.ply, baseline.json
  std::string report_csv;
  std::string report_txt;
  std::string run_manifest;

  explicit RunLayout(const std::string& root_dir, const std::string& bundle_dir = "");
};

// Stage commands. Each writes its artifacts under the run layout and returns a
// one-line human-readable summary.
std::string cmd_simulate(const PipelineConfig& cfg, const std::string& bundle_dir);
std::string cmd_filter(const PipelineConfig& cfg, const RunLayout& run);
std::string cmd_gate(const PipelineConfig& cfg, const RunLayout& run);
std::string cmd_train(const PipelineConfig& cfg, const RunLayout& run);
std::string cmd_mesh(const PipelineConfig& cfg, const RunLayout& run);
std::string cmd_baseline(const PipelineConfig& cfg, const RunLayout& run);
std::string cmd_metrics(const PipelineConfig& cfg, const RunLayout& run);

/// simulate (when the bundle is missing) -> filter -> gate -> train -> mesh ->
/// baseline -> metrics, then the run manifest. Rethrows stage errors with the
/// stage name and completed artifacts prepended to the message.
std::vector<MeshReportRow> cmd_pipeline(const PipelineConfig& cfg, const RunLayout& run,
                                        bool quiet = false);

}  // namespace usinr
