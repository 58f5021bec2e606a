#include "usinr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "usinr/bundle_io.hpp"
#include "usinr/error.hpp"
#include "usinr/mesh_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace usinr {

RunLayout::RunLayout(const std::string& root_dir, const std::string& bundle_dir) : root(root_dir) {
  const fs::path r(root_dir);
  bundle = bundle_dir.empty() ? (r / "bundle").string() : bundle_dir;
  filter_dir = (r / "filter").string();
  gating_json = (r / "gating.json").string();
  train_dir = (r / "train").string();
  mesh_dir = (r / "mesh").string();
  baseline_dir = (r / "baseline").string();
  report_csv = (r / "report.csv").string();
  report_txt = (r / "report.txt").string();
  run_manifest = (r / "run_manifest.json").string();
}

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void make_dirs(const std::string& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p + ": " + ec.message());
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

std::vector<int> all_frames(const SweepBundle& b) {
  std::vector<int> v(b.frames.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
  return v;
}

struct FilterArtifacts {
  std::vector<LabelRaster> labels;
  std::vector<char> accepted;
};

FilterArtifacts read_filter(const RunLayout& run, size_t frame_count) {
  FilterArtifacts fa;
  fa.labels = read_label_set(join(run.filter_dir, "labels"));
  const json j = read_json(join(run.filter_dir, "filter.json"));
  fa.accepted.assign(frame_count, 0);
  for (int i : j.at("accepted").get<std::vector<int>>()) {
    if (i < 0 || i >= static_cast<int>(frame_count)) throw DataError("filter.json: frame index out of range");
    fa.accepted[i] = 1;
  }
  if (fa.labels.size() != frame_count) throw DataError("filter output does not match the bundle's frame count");
  return fa;
}

std::vector<int> read_gated(const RunLayout& run) {
  return read_json(run.gating_json).at("selected").get<std::vector<int>>();
}

Box read_roi(const RunLayout& run) {
  const json j = read_json(join(run.train_dir, "training.json"));
  return {vec_from(j.at("roi").at("lo")), vec_from(j.at("roi").at("hi"))};
}

ordered_json grid_json(const GridSpec& g) {
  return {{"origin_mm", vec_json(g.origin)}, {"spacing_mm", g.spacing}, {"dims", g.dims}};
}

}  // namespace

std::string cmd_simulate(const PipelineConfig& cfg, const std::string& bundle_dir) {
  cfg.validate();
  const PhantomSpec phantom = cfg.phantom.build();
  const SweepBundle b =
      simulate_sweep(phantom, cfg.probe, cfg.nav, cfg.breathing, cfg.corruption, cfg.mode, cfg.seed);
  write_bundle(bundle_dir, b);
  write_ground_truth(bundle_dir, phantom, b.truth);

  double ap_lo = 1e300, ap_hi = -1e300, x_lo = 1e300, x_hi = -1e300;
  const auto ap = extract_ap_signal(b);
  for (double a : ap) {
    ap_lo = std::min(ap_lo, a);
    ap_hi = std::max(ap_hi, a);
  }
  const Mat4 cal_inv = calibration_matrix(b.probe).inverse();
  for (const auto& f : b.frames) {
    const double x = (f.pose * cal_inv)(0, 3);
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
  }
  std::ostringstream os;
  os << "simulate: " << b.frames.size() << " frames (" << to_string(b.mode) << "), AP peak-to-peak "
     << fixed(ap_hi - ap_lo) << " mm, probe x in [" << fixed(x_lo) << ", " << fixed(x_hi) << "] mm, last t "
     << fixed(b.frames.back().timestamp_s, 1) << " s" << (b.hit_frame_cap ? ", WARNING: frame cap reached" : "");
  return os.str();
}

std::string cmd_filter(const PipelineConfig& cfg, const RunLayout& run) {
  const SweepBundle b = read_bundle(run.bundle);
  const FilteredSweep fsw = filter_sweep(b, cfg.filter);
  make_dirs(run.filter_dir);
  write_label_set(join(run.filter_dir, "labels"), fsw.labels);
  std::ofstream csv(join(run.filter_dir, "verdicts.csv"));
  if (!csv) throw DataError("cannot write " + join(run.filter_dir, "verdicts.csv"));
  csv << "index,accepted,equivalent_radius_mm,running_estimate_mm\n";
  csv.precision(10);
  ordered_json j;
  j["enabled"] = cfg.filter.enabled;
  j["window"] = cfg.filter.window;
  j["tolerance"] = cfg.filter.rel_tolerance;
  j["accepted"] = ordered_json::array();
  j["rejected"] = ordered_json::array();
  for (const auto& v : fsw.verdicts) {
    csv << v.index << ',' << (v.accepted ? 1 : 0) << ',' << v.equivalent_radius_mm << ','
        << v.running_estimate_mm << '\n';
    (v.accepted ? j["accepted"] : j["rejected"]).push_back(v.index);
  }
  write_json(join(run.filter_dir, "filter.json"), j);
  return "filter: " + std::to_string(j["accepted"].size()) + " accepted, " +
         std::to_string(j["rejected"].size()) + " rejected";
}

std::string cmd_gate(const PipelineConfig& cfg, const RunLayout& run) {
  const SweepBundle b = read_bundle(run.bundle);
  ordered_json j;
  j["mode"] = to_string(b.mode);
  GatingResult g;
  if (b.mode == AcquisitionMode::free_breathing) {
    g = gate_sweep(b, cfg.gating);
    j["applied"] = true;
  } else {
    g.ap_signal = extract_ap_signal(b);
    g.selected_indices = all_frames(b);
    j["applied"] = false;
  }
  j["flat"] = g.flat;
  j["ap_signal_mm"] = g.ap_signal;
  j["minima"] = g.minima_indices;
  j["selected"] = g.selected_indices;
  make_dirs(run.root);
  write_json(run.gating_json, j);
  return "gate: " + std::to_string(g.selected_indices.size()) + " of " + std::to_string(b.frames.size()) +
         " frames selected" + (j["applied"].get<bool>() ? ", " + std::to_string(g.minima_indices.size()) +
                                                              " exhale minima"
                                                        : " (breath-hold, gating not applied)");
}

std::string cmd_train(const PipelineConfig& cfg, const RunLayout& run) {
  cfg.validate();
  const SweepBundle b = read_bundle(run.bundle);
  const FilterArtifacts fa = read_filter(run, b.frames.size());
  const std::vector<int> gated = read_gated(run);

  std::vector<int> accepted;
  for (int f : gated)
    if (f >= 0 && f < static_cast<int>(b.frames.size()) && fa.accepted[f]) accepted.push_back(f);
  if (accepted.empty()) throw DataError("train: no gated frame passed the slice filter");
  const int stride = b.mode == AcquisitionMode::free_breathing ? cfg.gated_frame_stride : cfg.frame_stride;
  const std::vector<int> training = select_training_frames(gated, accepted, stride);

  const Box roi = label_roi(b, fa.labels, accepted, cfg.roi_margin_mm);
  const Box ext = frame_extent(b, training);
  const Normalizer nz(ext.lo, ext.hi);
  const auto slices = training_slices(b, fa.labels, fa.accepted, training, nz);

  InrModel model(cfg.inr, nz, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const TrainResult tr = train(std::move(model), slices, tc);

  make_dirs(run.train_dir);
  tr.model.save(join(run.train_dir, "model.bin"));
  write_loss_csv(join(run.train_dir, "loss.csv"), tr.epoch_loss);
  ordered_json j;
  j["training_frames"] = training;
  ordered_json valid = ordered_json::array();
  for (int f : training) valid.push_back(fa.accepted[f] != 0);
  j["semantic_valid"] = valid;
  j["gated_frames"] = gated;
  j["accepted_gated_frames"] = accepted;
  j["frame_stride"] = stride;
  j["roi"] = {{"lo", vec_json(roi.lo)}, {"hi", vec_json(roi.hi)}};
  j["normalizer_affine"] = nz.to_affine();
  j["epochs"] = tr.epoch_loss.size();
  j["final_loss"] = tr.epoch_loss.back();
  write_json(join(run.train_dir, "training.json"), j);
  return "train: " + std::to_string(training.size()) + " slices, " + std::to_string(tr.epoch_loss.size()) +
         " epochs, loss " + fixed(tr.epoch_loss.front(), 5) + " -> " + fixed(tr.epoch_loss.back(), 5);
}

std::string cmd_mesh(const PipelineConfig& cfg, const RunLayout& run) {
  const InrModel model = InrModel::load(join(run.train_dir, "model.bin"));
  const Box roi = read_roi(run);
  const InrSurface s = inr_surface(model, roi, cfg.surface);
  make_dirs(run.mesh_dir);
  write_point_ply(join(run.mesh_dir, "inr_points.ply"), s.boundary);
  write_ply(join(run.mesh_dir, "inr_mesh.ply"), s.mesh);
  ordered_json j;
  j["resolution_mm"] = cfg.surface.resolution_mm;
  j["sampling_resolution_mm"] = cfg.surface.sampling_resolution_mm;
  j["cloud_points"] = s.cloud.size();
  j["boundary_points"] = s.boundary.size();
  j["poisson"] = {{"grid", grid_json(s.poisson.field.grid)},
                  {"iterations", s.poisson.iterations},
                  {"relative_residual", s.poisson.relative_residual},
                  {"iso_value", s.poisson.iso_value}};
  j["vertices"] = s.mesh.vertices.size();
  j["triangles"] = s.mesh.triangles.size();
  j["closed"] = s.mesh.is_closed();
  write_json(join(run.mesh_dir, "surface.json"), j);
  return "mesh: " + std::to_string(s.cloud.size()) + " aorta points, " + std::to_string(s.boundary.size()) +
         " boundary samples, Poisson " + std::to_string(s.poisson.iterations) + " iterations, " +
         std::to_string(s.mesh.vertices.size()) + " vertices";
}

std::string cmd_baseline(const PipelineConfig& cfg, const RunLayout& run) {
  const SweepBundle b = read_bundle(run.bundle);
  const std::vector<int> gated = read_gated(run);
  const Box roi = read_roi(run);
  const GridSpec grid = GridSpec::covering(roi.lo, roi.hi, cfg.surface.resolution_mm);
  std::vector<LabelRaster> raw;
  raw.reserve(b.frames.size());
  for (const auto& f : b.frames) raw.push_back(f.label);
  const BaselineResult r = baseline_from_frames(b, raw, gated, grid, cfg.baseline);
  make_dirs(run.baseline_dir);
  write_ply(join(run.baseline_dir, "baseline_mesh.ply"), r.mesh);
  ordered_json j;
  j["resolution_mm"] = cfg.surface.resolution_mm;
  j["grid"] = grid_json(grid);
  j["frames"] = gated.size();
  j["max_gap_mm"] = cfg.baseline.max_gap_mm;
  j["threshold"] = cfg.baseline.threshold;
  j["vertices"] = r.mesh.vertices.size();
  j["closed"] = r.mesh.is_closed();
  write_json(join(run.baseline_dir, "baseline.json"), j);
  return "baseline: " + std::to_string(gated.size()) + " frames compounded, " +
         std::to_string(r.mesh.vertices.size()) + " vertices";
}

std::string cmd_metrics(const PipelineConfig& cfg, const RunLayout& run) {
  (void)cfg;
  const json sj = read_json(join(run.mesh_dir, "surface.json"));
  const json bj = read_json(join(run.baseline_dir, "baseline.json"));
  const double res = sj.at("resolution_mm").get<double>();
  if (res != bj.at("resolution_mm").get<double>())
    throw DataError("metrics: the INR and baseline meshes were extracted at different grid resolutions");
  const GroundTruth gt = read_ground_truth(run.bundle);
  const Box roi = read_roi(run);
  const GridSpec grid = GridSpec::covering(roi.lo, roi.hi, res);
  std::vector<MeshReportRow> rows;
  rows.push_back(evaluate_mesh("inr", read_ply(join(run.mesh_dir, "inr_mesh.ply")), grid, gt.phantom));
  rows.push_back(evaluate_mesh("baseline", read_ply(join(run.baseline_dir, "baseline_mesh.ply")), grid, gt.phantom));
  write_report_csv(run.report_csv, rows);
  std::ofstream txt(run.report_txt);
  if (!txt) throw DataError("cannot write " + run.report_txt);
  txt << format_report_text(rows);
  return "metrics: roughness ratio inr/baseline " +
         fixed(rows[0].laplacian_average / rows[1].laplacian_average, 3) + ", inr dice " +
         fixed(rows[0].dice, 3) + ", inr radial mean " + fixed(rows[0].radial_mean_mm, 3) + " mm";
}

namespace {

[[noreturn]] void rethrow_with_stage(const std::string& stage, const std::vector<std::string>& done) {
  std::string ctx = "stage '" + stage + "' failed";
  if (!done.empty()) {
    ctx += " (completed artifacts:";
    for (const auto& a : done) ctx += " " + a;
    ctx += ")";
  }
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(ctx + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError(ctx + ": " + e.what());
  }
}

}  // namespace

std::vector<MeshReportRow> cmd_pipeline(const PipelineConfig& cfg, const RunLayout& run, bool quiet) {
  cfg.validate();
  make_dirs(run.root);
  std::vector<std::string> done;
  auto stage = [&](const std::string& name, const std::function<std::string()>& fn,
                   const std::vector<std::string>& artifacts) {
    try {
      const std::string summary = fn();
      if (!quiet) std::cerr << summary << '\n';
    } catch (...) {
      rethrow_with_stage(name, done);
    }
    done.insert(done.end(), artifacts.begin(), artifacts.end());
  };

  const bool simulated = !fs::exists(join(run.bundle, "manifest.json"));
  if (simulated) stage("simulate", [&] { return cmd_simulate(cfg, run.bundle); }, {run.bundle});
  stage("filter", [&] { return cmd_filter(cfg, run); }, {run.filter_dir});
  stage("gate", [&] { return cmd_gate(cfg, run); }, {run.gating_json});
  stage("train", [&] { return cmd_train(cfg, run); }, {run.train_dir});
  stage("mesh", [&] { return cmd_mesh(cfg, run); }, {run.mesh_dir});
  stage("baseline", [&] { return cmd_baseline(cfg, run); }, {run.baseline_dir});
  stage("metrics", [&] { return cmd_metrics(cfg, run); }, {run.report_csv, run.report_txt});

  ordered_json m;
  m["format"] = "usinr-run-manifest";
  m["version"] = 1;
  m["bundle_simulated"] = simulated;
  m["seeds"] = {{"seed", cfg.seed}, {"corruption_seed", cfg.corruption.rng_seed}};
  m["config"] = config_to_json(cfg);
  m["inputs"] = {{"bundle", run.bundle}, {"bundle_hash", tree_hash(run.bundle)}};
  ordered_json outputs;
  for (const auto& rel : {"filter/filter.json", "gating.json", "train/model.bin", "train/loss.csv",
                          "train/training.json", "mesh/inr_points.ply", "mesh/inr_mesh.ply",
                          "mesh/surface.json", "baseline/baseline_mesh.ply", "baseline/baseline.json",
                          "report.csv", "report.txt"})
    outputs[rel] = file_hash(join(run.root, rel));
  m["output_hashes"] = outputs;
  write_json(run.run_manifest, m);
  return read_report_csv(run.report_csv);
}

}  // namespace usinr
