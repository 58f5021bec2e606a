#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "usinr/config.hpp"
#include "usinr/error.hpp"
#include "usinr/metrics.hpp"
#include "usinr/pipeline.hpp"

using namespace usinr;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string bundle;
  std::string mode;
  std::vector<std::string> sets;
  long long seed = -1;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "configuration file (key = value)");
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--out", c.out, "run directory");
  sub->add_option("--mode", c.mode, "acquisition mode")->check(CLI::IsMember({"breath_hold", "free_breathing"}));
  sub->add_option("--bundle", c.bundle, "sweep bundle directory (default <out>/bundle)");
  sub->add_option("--set", c.sets, "override a configuration key, e.g. --set train.epochs=50");
  sub->add_flag("-q,--quiet", c.quiet, "print only the final summary");
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (!c.mode.empty()) apply_override(cfg, "acquisition.mode=" + c.mode);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  if (!c.out.empty()) cfg.out_dir = c.out;
  for (const auto& s : c.sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"usinr: robotic ultrasound sweep simulation and INR aorta reconstruction"};
  app.require_subcommand(1);
  Common c;
  const std::vector<std::pair<std::string, std::string>> names = {
      {"simulate", "simulate a phantom sweep and write a bundle"},
      {"filter", "largest component + equivalent-radius slice filter"},
      {"gate", "exhale gating (free breathing only)"},
      {"train", "fit the implicit network to the filtered slices"},
      {"mesh", "predict the volume and extract the Poisson surface"},
      {"baseline", "compound the raw labels and extract the baseline mesh"},
      {"metrics", "roughness, Dice and radial error report"},
      {"pipeline", "run every stage end to end"},
      {"config", "print the resolved configuration"}};
  std::vector<CLI::App*> subs;
  for (const auto& [n, d] : names) {
    subs.push_back(app.add_subcommand(n, d));
    add_common(subs.back(), c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const PipelineConfig cfg = resolve(c);
    const RunLayout run(cfg.out_dir, c.bundle);
    const std::string cmd = app.get_subcommands().front()->get_name();
    std::string summary;
    if (cmd == "config") summary = dump_config(cfg);
    else if (cmd == "simulate") summary = cmd_simulate(cfg, run.bundle);
    else if (cmd == "filter") summary = cmd_filter(cfg, run);
    else if (cmd == "gate") summary = cmd_gate(cfg, run);
    else if (cmd == "train") summary = cmd_train(cfg, run);
    else if (cmd == "mesh") summary = cmd_mesh(cfg, run);
    else if (cmd == "baseline") summary = cmd_baseline(cfg, run);
    else if (cmd == "metrics") summary = cmd_metrics(cfg, run);
    else if (cmd == "pipeline") summary = format_report_text(cmd_pipeline(cfg, run, c.quiet));
    std::cout << summary << (summary.empty() || summary.back() == '\n' ? "" : "\n");
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "usinr: configuration error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "usinr: data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "usinr: numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "usinr: " << e.what() << '\n';
    return 2;
  }
}
