#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dicap/config.hpp"
#include "dicap/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "dicap: estimate and maximize directed-information rates of discrete "
      "channels from samples"};
  app.require_subcommand(1);

  struct {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    int workers = 0;
    int m_max = 0;
    int y_card = 0;
  } opt;

  const std::vector<std::pair<std::string, std::string>> verbs{
      {"estimate", "Train the DI estimator on a channel under a fixed input law"},
      {"optimize", "Jointly train the estimator and the input PMF generator"},
      {"qgraph", "Extract a Q-graph from the trained policy and bound capacity"},
      {"shape", "Learn probabilistic constellation shaping on the peak-power AWGN channel"},
      {"oracle", "Print the closed-form capacity of the configured channel"},
      {"lemma2", "Tabulate the Q-graph count against its super-exponential bound"}};

  for (const auto& [name, desc] : verbs) {
    CLI::App* sub = app.add_subcommand(name, desc);
    CLI::Option* c = sub->add_option("--config", opt.config,
                                     "Experiment config file");
    if (name != "lemma2") c->required()->check(CLI::ExistingFile);
    else c->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override [run] seed");
    sub->add_option("--workers", opt.workers, "Override [run] workers")
        ->check(CLI::Range(1, 4096));
    sub->add_option("--out", opt.out, "Override the output directory");
    if (name == "lemma2") {
      sub->add_option("--m-max", opt.m_max, "Largest node count to tabulate")
          ->check(CLI::Range(1, 500));
      sub->add_option("--y-card", opt.y_card, "Output alphabet size")
          ->check(CLI::Range(2, 100));
    }
  }

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();

  try {
    dicap::ExperimentConfig cfg;
    if (!opt.config.empty()) cfg = dicap::parse_config_file(opt.config);
    const std::string verb = sub->get_name();
    if (cfg.run.command.empty()) cfg.run.command = verb;
    else if (cfg.run.command != verb)
      throw std::invalid_argument("config: run.command: file pins '" +
                                  cfg.run.command + "' but the CLI invoked '" +
                                  verb + "'");
    if (sub->count("--seed")) cfg.run.seed = opt.seed;
    if (sub->count("--workers")) cfg.run.workers = opt.workers;
    if (sub->count("--out")) cfg.run.out = opt.out;
    if (verb == "lemma2") {
      if (sub->count("--m-max")) cfg.lemma2.m_max = opt.m_max;
      if (sub->count("--y-card")) cfg.lemma2.y_card = opt.y_card;
    }
    return dicap::run_and_record(cfg);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}
