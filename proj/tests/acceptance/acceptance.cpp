// Acceptance suite: one line per criterion, exit status 1 if any fails.
//
//   acceptance [--work DIR] [--only 3,4,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/fixtures.hpp"
#include "../unit/gradcheck.hpp"
#include "../unit/oracles.hpp"
#include "usinr/bundle_io.hpp"
#include "usinr/config.hpp"
#include "usinr/gating.hpp"
#include "usinr/geometry.hpp"
#include "usinr/inr.hpp"
#include "usinr/mesh_io.hpp"
#include "usinr/metrics.hpp"
#include "usinr/pipeline.hpp"
#include "usinr/recon.hpp"
#include "usinr/slicefilter.hpp"

namespace fs = std::filesystem;
using namespace usinr;

namespace {

constexpr double kRoughnessRatioMax = 0.8;
constexpr double kGatingGoodFraction = 0.9;
constexpr double kGatingDisplacementFraction = 0.1;
constexpr double kFilterRecallMin = 0.9;
constexpr double kFilterFalseRejectMax = 0.1;
constexpr double kGradEps = 1e-5;
constexpr double kGradRelMax = 1e-4;
constexpr int kGradProbesMin = 200;
constexpr double kGradSecondsMax = 60.0;
constexpr double kHullTolerance = 1e-9;
constexpr double kSphereRadialMax = 1.5;
constexpr double kCgResidualMax = 1e-8;
constexpr double kRadialMeanMax = 1.0;
constexpr double kDiceMin = 0.9;
constexpr double kCalibrationTolerance = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::string work_dir = "acceptance_work";

// Reference runs are shared between criteria and computed on first use.
std::map<std::string, std::vector<MeshReportRow>> runs;

PipelineConfig reference_config(AcquisitionMode mode) {
  PipelineConfig cfg;
  cfg.mode = mode;
  return cfg;
}

const std::vector<MeshReportRow>& run_pipeline(const std::string& name, AcquisitionMode mode) {
  auto it = runs.find(name);
  if (it != runs.end()) return it->second;
  const std::string root = (fs::path(work_dir) / name).string();
  fs::remove_all(root);
  PipelineConfig cfg = reference_config(mode);
  cfg.out_dir = root;
  const auto t0 = std::chrono::steady_clock::now();
  auto rows = cmd_pipeline(cfg, RunLayout(root), true);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("  (run %s: %.0f s)\n", name.c_str(), s);
  std::fflush(stdout);
  return runs.emplace(name, std::move(rows)).first->second;
}

const MeshReportRow& row(const std::vector<MeshReportRow>& rows, const std::string& name) {
  for (const auto& r : rows)
    if (r.mesh == name) return r;
  throw std::runtime_error("report has no row " + name);
}

Outcome roughness_ratio(const std::string& run, AcquisitionMode mode) {
  const auto& rows = run_pipeline(run, mode);
  const double inr = row(rows, "inr").laplacian_average;
  const double base = row(rows, "baseline").laplacian_average;
  const double ratio = inr / base;
  return {ratio <= kRoughnessRatioMax, "inr " + num(inr) + " / baseline " + num(base) + " = " + num(ratio) +
                                           " (need <= " + num(kRoughnessRatioMax) + ")"};
}

Outcome c1() { return roughness_ratio("breath_hold", AcquisitionMode::breath_hold); }
Outcome c2() { return roughness_ratio("free_breathing", AcquisitionMode::free_breathing); }

SweepBundle simulate(const PipelineConfig& cfg) {
  return simulate_sweep(cfg.phantom.build(), cfg.probe, cfg.nav, cfg.breathing, cfg.corruption, cfg.mode,
                        cfg.seed);
}

Outcome c3() {
  PipelineConfig cfg = reference_config(AcquisitionMode::free_breathing);
  const double amp = cfg.breathing.amplitude_mm;
  const SweepBundle sw = simulate(cfg);
  const GatingResult g = gate_sweep(sw, cfg.gating);
  int good = 0;
  for (int i : g.selected_indices) good += sw.truth[i].displacement_mm < kGatingDisplacementFraction * amp;
  const size_t n = g.selected_indices.size();
  const double frac = n ? double(good) / n : 0.0;

  cfg.breathing.amplitude_mm = 0.0;
  const SweepBundle still = simulate(cfg);
  const GatingResult gs = gate_sweep(still, cfg.gating);
  const bool all = gs.selected_indices.size() == still.frames.size();
  return {n > 0 && frac >= kGatingGoodFraction && all,
          std::to_string(good) + "/" + std::to_string(n) + " selected frames below " +
              num(kGatingDisplacementFraction * amp) + " mm (" + num(frac) + ", need >= " +
              num(kGatingGoodFraction) + "); amplitude 0 selects " + std::to_string(gs.selected_indices.size()) +
              "/" + std::to_string(still.frames.size())};
}

Outcome c4() {
  const PipelineConfig cfg = reference_config(AcquisitionMode::breath_hold);
  const SweepBundle sw = simulate(cfg);
  FilterParams fp = cfg.filter;
  fp.enabled = true;
  const FilteredSweep fs_ = filter_sweep(sw, fp);
  int corrupted = 0, caught = 0, clean = 0, false_rejects = 0;
  for (size_t i = 0; i < sw.frames.size(); ++i) {
    const bool rejected = !fs_.verdicts[i].accepted;
    if (sw.truth[i].corrupted) {
      ++corrupted;
      caught += rejected;
    } else {
      ++clean;
      false_rejects += rejected;
    }
  }
  const double recall = corrupted ? double(caught) / corrupted : 0.0;
  const double frr = clean ? double(false_rejects) / clean : 1.0;
  return {corrupted > 0 && recall >= kFilterRecallMin && frr <= kFilterFalseRejectMax,
          "recall " + std::to_string(caught) + "/" + std::to_string(corrupted) + " = " + num(recall) +
              " (need >= " + num(kFilterRecallMin) + "), false rejects " + std::to_string(false_rejects) + "/" +
              std::to_string(clean) + " = " + num(frr) + " (need <= " + num(kFilterFalseRejectMax) + ")"};
}

Outcome c5() {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig cfg;
  const InrModel m(cfg.inr, Normalizer(), 5);
  const auto batch = gradcheck::random_batch(32, cfg.inr.classes, 11);
  const int tensors = static_cast<int>(m.parameters().size());
  const int per_tensor = (kGradProbesMin + tensors - 1) / tensors + 3;
  const auto probes = gradcheck::probe(m, batch, per_tensor, kGradEps, 13);
  std::set<std::pair<size_t, bool>> covered;
  for (const auto& p : probes) covered.insert({p.tensor, p.bias});
  const double worst = gradcheck::max_rel_error(probes);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool every_layer = covered.size() == 2 * m.parameters().size();
  return {probes.size() >= size_t(kGradProbesMin) && every_layer && worst < kGradRelMax && s < kGradSecondsMax,
          std::to_string(probes.size()) + " probes over " + std::to_string(tensors) +
              " layers (sine, heads; weights and biases), max rel error " + num(worst, 3) + " (need < " +
              num(kGradRelMax) + "), " + num(s, 3) + " s"};
}

Outcome c6() {
  std::mt19937_64 rng(2024);
  int lcc_ok = 0;
  for (int t = 0; t < 100; ++t) {
    std::bernoulli_distribution b(0.2 + 0.4 * (t % 5) / 4.0);
    LabelRaster img(32, 32, 0);
    for (auto& x : img.data) x = b(rng);
    lcc_ok += largest_connected_component(img) == oracle::largest_component(img);
  }
  int fps_ok = 0, fps_total = 0;
  std::uniform_real_distribution<double> u(-50, 50);
  for (int t = 0; t < 20; ++t) {
    std::vector<Vec3> pts(50);
    for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    for (size_t n = 1; n <= 3; ++n) {
      ++fps_total;
      fps_ok += furthest_point_sampling(pts, n, 0) == oracle::fps(pts, n, 0);
    }
  }
  int hull_ok = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<Eigen::Vector2d> pts(100);
    for (auto& p : pts) p = Eigen::Vector2d(u(rng), u(rng));
    const auto got = convex_hull_2d(pts);
    const auto want = oracle::hull_vertices(pts);
    bool match = got.size() == want.size();
    for (int g : got) {
      bool found = false;
      for (int w : want) found |= (pts[g] - pts[w]).norm() <= kHullTolerance;
      match &= found;
    }
    hull_ok += match;
  }
  return {lcc_ok == 100 && fps_ok == fps_total && hull_ok == 100,
          "largest component " + std::to_string(lcc_ok) + "/100, furthest point " + std::to_string(fps_ok) + "/" +
              std::to_string(fps_total) + ", convex hull " + std::to_string(hull_ok) + "/100"};
}

Outcome c7() {
  const double r = 20.0;
  const auto pts = fixtures::fibonacci_sphere(2000, r);
  std::vector<Vec3> nrm;
  for (const auto& p : pts) nrm.push_back(p.normalized());
  PoissonParams pp;
  pp.grid_resolution_mm = 1.0;
  pp.cg_tolerance = kCgResidualMax;
  const auto res = poisson_reconstruct(pts, nrm, pp);
  const auto mesh = marching_cubes(res.field, res.iso_value);
  double worst = 0.0;
  for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - r));
  const bool closed = mesh.is_closed();
  return {!mesh.vertices.empty() && worst < kSphereRadialMax && res.relative_residual <= kCgResidualMax && closed,
          "max radial error " + num(worst) + " mm (need < " + num(kSphereRadialMax) + "), residual " +
              num(res.relative_residual, 3) + " (need <= " + num(kCgResidualMax) + "), " +
              (closed ? "closed" : "NOT closed") + ", " + std::to_string(mesh.vertices.size()) + " vertices"};
}

Outcome c8() {
  const auto& inr = row(run_pipeline("breath_hold", AcquisitionMode::breath_hold), "inr");
  return {inr.radial_mean_mm < kRadialMeanMax && inr.dice >= kDiceMin,
          "radial mean " + num(inr.radial_mean_mm) + " mm (need < " + num(kRadialMeanMax) + "), Dice " +
              num(inr.dice) + " (need >= " + num(kDiceMin) + ")"};
}

Outcome c9() {
  const PipelineConfig cfg;
  const InrModel m(cfg.inr, Normalizer(), 3);
  auto b = gradcheck::random_batch(256, cfg.inr.classes, 17, 0.5);
  ParameterSet g1, g2;
  const double l1 = loss_and_gradient(m, b, g1);
  int flipped = 0;
  for (size_t i = 0; i < b.size(); ++i)
    if (!b.semantic_valid[i]) {
      b.labels[i] = (b.labels[i] + 1) % cfg.inr.classes;
      ++flipped;
    }
  const double l2 = loss_and_gradient(m, b, g2);
  bool same = std::memcmp(&l1, &l2, sizeof(double)) == 0 && g1.size() == g2.size();
  for (size_t t = 0; same && t < g1.size(); ++t) {
    same &= g1[t].weight.size() == g2[t].weight.size() && g1[t].bias.size() == g2[t].bias.size();
    same &= std::memcmp(g1[t].weight.data(), g2[t].weight.data(), sizeof(double) * g1[t].weight.size()) == 0;
    same &= std::memcmp(g1[t].bias.data(), g2[t].bias.data(), sizeof(double) * g1[t].bias.size()) == 0;
  }
  return {same && flipped > 0, std::to_string(flipped) + " invalid labels flipped; loss and gradients " +
                                   (same ? "bitwise identical" : "DIFFER")};
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Outcome c10() {
  run_pipeline("breath_hold", AcquisitionMode::breath_hold);
  run_pipeline("breath_hold_repeat", AcquisitionMode::breath_hold);
  const RunLayout a((fs::path(work_dir) / "breath_hold").string());
  const RunLayout b((fs::path(work_dir) / "breath_hold_repeat").string());
  const std::vector<std::pair<std::string, std::string>> files{
      {a.mesh_dir + "/inr_mesh.ply", b.mesh_dir + "/inr_mesh.ply"},
      {a.baseline_dir + "/baseline_mesh.ply", b.baseline_dir + "/baseline_mesh.ply"},
      {a.report_csv, b.report_csv},
      {a.report_txt, b.report_txt},
      {a.train_dir + "/model.bin", b.train_dir + "/model.bin"},
  };
  int same = 0;
  std::string diff;
  for (const auto& [x, y] : files) {
    const std::string sx = slurp(x), sy = slurp(y);
    if (!sx.empty() && sx == sy)
      ++same;
    else
      diff += " " + fs::path(x).filename().string();
  }
  return {same == int(files.size()), std::to_string(same) + "/" + std::to_string(files.size()) +
                                         " artifacts byte-identical (meshes, reports, model)" +
                                         (diff.empty() ? "" : "; differ:" + diff)};
}

Outcome c11() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> th(0.05, 3.0), rr(5.0, 80.0), dd(20.0, 200.0);
  std::uniform_int_distribution<int> px(2, 600);
  double worst = 0.0;
  int with_d100 = 0;
  for (int t = 0; t < 100; ++t) {
    ProbeGeometry g;
    if (t > 0) {
      g.theta = th(rng);
      g.r = rr(rng);
      g.d = t % 4 == 0 ? 100.0 : dd(rng);
      g.image_width_px = px(rng);
      g.image_height_px = px(rng);
    }
    with_d100 += g.d == 100.0;
    const Mat4 c = calibration_matrix(g);
    const int W = g.image_width_px, H = g.image_height_px;
    const double w = 2.0 * (g.d + g.r) * std::sin(g.theta / 2.0);
    worst = std::max(worst, std::abs(g.width_mm() - w));
    // image edges span w
    worst = std::max(worst, std::abs((image_to_world(c, W, H) - image_to_world(c, 0, H)).norm() - w));
    // centre column on the probe axis, mirrored columns mirror in x
    worst = std::max(worst, std::abs(image_to_world(c, W / 2.0, 0.0).x()));
    for (int u = 0; u <= W; u += std::max(1, W / 7)) {
      const Vec3 a = image_to_world(c, u, H / 2.0), b = image_to_world(c, W - u, H / 2.0);
      worst = std::max({worst, std::abs(a.x() + b.x()), std::abs(a.y() - b.y()), std::abs(a.z() - b.z())});
    }
    // depth spans d along the axis
    worst = std::max(worst, std::abs((image_to_world(c, 0, H) - image_to_world(c, 0, 0)).norm() - g.d));
  }
  return {worst <= kCalibrationTolerance && with_d100 > 0,
          "100 probes (" + std::to_string(with_d100) + " with d = 100 mm), worst deviation " + num(worst, 3) +
              " mm (need <= " + num(kCalibrationTolerance) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work_dir = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--work DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(work_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"roughness ratio, breath-hold", c1},
      {"roughness ratio, free breathing", c2},
      {"exhale gating precision", c3},
      {"slice filter detection", c4},
      {"gradient check", c5},
      {"oracle equivalence", c6},
      {"poisson sphere fidelity", c7},
      {"end-to-end accuracy, breath-hold", c8},
      {"masked-loss invariance", c9},
      {"reproducibility", c10},
      {"calibration properties", c11},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
