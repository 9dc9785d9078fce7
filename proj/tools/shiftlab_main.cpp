// shiftlab: synthetic dataset-shift laboratory for daily clinical risk models.
// Pipeline: simulate -> featurize -> train -> score -> evaluate -> gap ->
// swap -> drift -> report; every stage reads/writes one out dir.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shiftlab/errors.hpp"
#include "shiftlab/run.hpp"
#include "shiftlab/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"dataset-shift laboratory for daily inpatient risk models"};
  app.set_version_flag("--version", std::string(shiftlab::kToolVersion));
  app.require_subcommand(1);

  shiftlab::run::CliOptions opts;
  std::string out_dir;
  std::uint64_t seed = 0;

  std::vector<std::string> commands;
  for (const auto& name : shiftlab::run::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", opts.config_path, "run configuration (JSON)")
        ->required();
    sub->add_option("-o,--out", out_dir, "output directory (default: config out_dir, then $SHIFTLAB_OUT, then ./out)");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--set", opts.overrides,
                    "override a config value, dotted key=value (repeatable)");
  }
  app.get_subcommand("simulate")->description("generate ground truth and raw pipeline extracts");
  app.get_subcommand("featurize")->description("apply inclusion rules, fit the codec, encode matrices");
  app.get_subcommand("train")->description("fit the multitask risk model on the training matrix");
  app.get_subcommand("score")->description("score all evaluation sets; prospective scores append daily");
  app.get_subcommand("evaluate")->description("discrimination/calibration/alert metrics with bootstrap CIs");
  app.get_subcommand("gap")->description("decompose the retrospective-prospective gap");
  app.get_subcommand("swap")->description("feature discrepancy, swap attribution, score concordance");
  app.get_subcommand("drift")->description("column-level temporal drift tests between eras");
  app.get_subcommand("report")->description("bundle all stage reports into one JSON");

  CLI11_PARSE(app, argc, argv);

  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--out")) opts.out_dir = out_dir;
  if (sub->count("--seed")) opts.seed = seed;

  try {
    const auto cfg = shiftlab::run::load_config(opts);
    shiftlab::run::execute(sub->get_name(), cfg, shiftlab::run::resolve_out_dir(cfg, opts));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "shiftlab %s: %s\n", sub->get_name().c_str(), e.what());
    return shiftlab::run::exit_code_for(e);
  }
  return 0;
}
