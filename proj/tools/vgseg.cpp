#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "vgseg/gradsuite.hpp"
#include "vgseg/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kStage = 3, kCheck = 4 };

int run_gradcheck() {
  int failed = 0;
  for (const auto& c : vgseg::run_gradient_suite(3)) {
    std::cout << std::left << std::setw(22) << c.name << " seed=" << c.seed << " eps=" << c.eps
              << " checked=" << std::setw(5) << c.checked << " retried=" << c.retried << " max_rel=" << std::scientific << std::setprecision(2)
              << c.max_rel_error << std::defaultfloat << (c.passed() ? "  ok" : "  FAIL at " + c.worst) << "\n";
    failed += !c.passed();
  }
  std::cout << (failed ? std::to_string(failed) + " gradient checks failed" : "all gradient checks passed") << "\n";
  return failed ? kCheck : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vessel segmentation with graph-fused cascaded U-Nets on synthetic phantoms", "vgseg"};
  app.set_version_flag("--version", vgseg::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> volumes;
  std::string predictions;
  app.add_option("--config", config_path, "JSON run config (defaults when omitted)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out, "output root (default $VG_OUT, else ./vgseg_out)");
  app.add_option("--volumes", volumes, "glob over volume ids, e.g. 'vol_00*'");

  auto* phantom = app.add_subcommand("phantom", "generate the synthetic dataset");
  auto* preseg = app.add_subcommand("preseg", "train UNET-0 and write A0/Y0 per volume");
  auto* graph = app.add_subcommand("graph", "build one vessel graph per volume");
  auto* train = app.add_subcommand("train", "train the cascade");
  auto* eval = app.add_subcommand("eval", "score the test split");
  eval->add_option("--predictions", predictions, "directory of <id>.u8 masks to score instead of the model")
      ->check(CLI::ExistingDirectory);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  auto* slices = app.add_subcommand("export-slices", "write axial PGM slices of volume/GT/prediction");
  auto* stats = app.add_subcommand("stats", "graph statistics per volume");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (gradcheck->parsed()) return run_gradcheck();

    vgseg::StageOptions o;
    o.cfg = config_path.empty() ? vgseg::RunConfig{} : vgseg::load_config(config_path);
    if (seed) o.cfg.seed = *seed;
    if (out.empty()) {
      const char* env = std::getenv("VG_OUT");
      out = env && *env ? env : "vgseg_out";
    }
    o.out = out;
    o.volumes = volumes;
    if (!predictions.empty()) o.predictions = predictions;
    o.log = &std::cerr;

    if (phantom->parsed()) vgseg::stage_phantom(o);
    if (preseg->parsed()) vgseg::stage_preseg(o);
    if (graph->parsed()) vgseg::stage_graph(o);
    if (train->parsed()) vgseg::stage_train(o);
    if (eval->parsed()) vgseg::stage_eval(o);
    if (slices->parsed()) vgseg::stage_export_slices(o);
    if (stats->parsed()) vgseg::stage_stats(o, std::cout);
    return kOk;
  } catch (const vgseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const vgseg::StageError& e) {
    std::cerr << "stage error: " << e.what() << "\n";
    return kStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
