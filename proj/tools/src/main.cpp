#include <csignal>
#include <iostream>

#include "CLI11.hpp"

#include "app.hpp"
#include "biasengine/errors.hpp"

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);

  CLI::App app{"Bias auditing and mitigation engine for text-to-image pipelines"};
  app.require_subcommand(1);

  biasaudit::CliOptions opts;
  auto add_common = [&opts](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "Run configuration JSON file");
    cmd->add_option("--out", opts.out_dir, "Output directory for artifacts");
    cmd->add_option("--seed", opts.seed, "Deterministic seed");
    cmd->add_option("--jobs", opts.jobs, "Parallel provider calls across prompts");
    cmd->add_flag("--force", opts.force, "Overwrite a non-empty output directory");
  };

  CLI::App* evaluate = app.add_subcommand("evaluate", "Per-axis CAS distributions and MAD");
  add_common(evaluate);

  CLI::App* connect = app.add_subcommand("connect", "Intersectionality matrix per prompt");
  add_common(connect);

  CLI::App* graph = app.add_subcommand("graph", "Chi-square pruned bias interaction graph");
  add_common(graph);
  graph->add_option("--p-threshold", opts.p_threshold, "Prompt-level significance threshold");
  graph->add_flag("--global", opts.global, "Aggregate over the whole prompt corpus");
  graph->add_option("--format", opts.format, "Restrict artifacts to dot, json, or csv")
      ->check(CLI::IsMember({"dot", "json", "csv"}));

  CLI::App* mitigate = app.add_subcommand("mitigate", "Priority-weighted mitigation loop");
  add_common(mitigate);
  mitigate->add_option("--epsilon", opts.epsilon, "Bias score threshold");

  CLI::App* sensitivity =
      app.add_subcommand("sensitivity", "Metric drift under extractor error / image count");
  add_common(sensitivity);

  CLI::App* demo = app.add_subcommand("demo", "End-to-end run on the bundled scenario");
  add_common(demo);

  CLI11_PARSE(app, argc, argv);
  opts.command = app.get_subcommands().front()->get_name();

  try {
    return biasaudit::run_command(opts);
  } catch (const biasengine::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return biasaudit::kExitConfigError;
  } catch (const biasengine::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return biasaudit::kExitProviderError;
  } catch (const biasengine::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return biasaudit::kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
