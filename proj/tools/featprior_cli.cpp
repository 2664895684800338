// Command-line front end; talks to the library only through the C API.
#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "featprior/featprior.h"

namespace {

void print_line(const char* line, void*) { std::printf("%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-prior distillation experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string model;

  app.add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory");
  app.add_option("--seed-override", seed, "Replace plan.seed");

  const char* commands[][2] = {
      {"train-teacher", "Train the teacher and write teacher.fpnn"},
      {"extract-features", "Write the teacher's feature cache"},
      {"distill", "Train a student with the configured mode"},
      {"evaluate", "Score a saved model on the test split"},
      {"compare", "Run every method over all seeds and tabulate"},
  };
  for (auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help)->fallthrough();
    if (std::string(name) == "compare") sub->add_option("--jobs", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);
    if (std::string(name) == "evaluate") sub->add_option("--model", model, "Model to score");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  fp_command_options opts{};
  const std::string command = chosen->get_name();
  opts.command = command.c_str();
  opts.config_path = config.c_str();
  opts.out_dir = out.c_str();
  opts.model_path = model.empty() ? nullptr : model.c_str();
  if (app.count("--seed-override") > 0) {
    opts.has_seed_override = 1;
    opts.seed_override = seed;
  }
  opts.jobs = jobs;
  opts.log = print_line;

  const fp_status status = fp_run_command(&opts);
  if (status != FP_OK) std::fprintf(stderr, "error: %s\n", fp_last_error());
  return fp_exit_code(status);
}
