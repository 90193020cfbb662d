#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "indrnn/config.hpp"
#include "indrnn/parallel.hpp"
#include "indrnn/runner.hpp"
#include "indrnn/text.hpp"

int main(int argc, char** argv) {
  CLI::App app{"indrnn: training and analysis of elementwise-recurrent networks"};
  app.set_version_flag("--version", indrnn::build_id());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string resume;
  std::int64_t seed = -1;

  const struct {
    const char* name;
    const char* blurb;
  } tasks[] = {
      {"adding", "train on the two-marker sequence addition task"},
      {"pixels", "train a pixel-sequence digit classifier from IDX files"},
      {"charlm", "train a byte-level language model"},
      {"gradcheck", "compare analytic gradients against finite differences"},
      {"gradflow", "record how much gradient reaches each input step"},
      {"bench", "time the recurrence kernels across state widths"},
      {"equiv", "convert linear dense recurrences to elementwise form"},
  };
  for (const auto& task : tasks) {
    auto* sub = app.add_subcommand(task.name, task.blurb);
    sub->add_option("--config", config_path, "key=value run configuration file")
        ->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--resume", resume, "checkpoint to continue from");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (const char* env = std::getenv("INDRNN_THREADS")) {
      indrnn::set_max_threads(
          static_cast<int>(indrnn::parse_int(env, "INDRNN_THREADS")));
    }
    indrnn::RunConfig cfg = indrnn::load_config(config_path);
    cfg.task = app.get_subcommands().front()->get_name();
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    return indrnn::run_task(cfg, resume);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
