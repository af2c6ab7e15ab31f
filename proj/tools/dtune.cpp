// dtune: dataset generation, training runs, theory checks and evaluation.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dtune/cli.hpp"

namespace {

struct Options {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string preset;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seeds, "run seed (repeatable)")->take_all();
  sub->add_option("--out", o.out, "output directory (default: $DTUNE_OUT, then runs/)");
  sub->add_option("--preset", o.preset, "bandit-fig2 | pointmass | custom");
  sub->add_option("--override", o.overrides, "dotted key=value (repeatable)");
}

std::vector<nlohmann::json> configs_from(const Options& o) {
  dtune::cli::Request req;
  if (!o.config.empty()) {
    std::ifstream is(o.config);
    if (!is) throw std::runtime_error("cannot read " + o.config);
    req.user = nlohmann::json::parse(is);
  }
  req.seeds = o.seeds;
  req.out = o.out;
  req.preset = o.preset;
  req.overrides = o.overrides;
  return dtune::cli::resolve(req);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online finetuning of decision transformers with TD3 gradients"};
  app.require_subcommand(1);

  Options opts;
  auto* gen = app.add_subcommand("gen-data", "write offline datasets, one per seed");
  auto* run = app.add_subcommand("run", "pretrain and finetune; metrics CSVs and summary");
  auto* theory = app.add_subcommand("theory", "numerical checks of the RTG bounds");
  auto* eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
  for (auto* s : {gen, run, theory, eval}) add_common(s, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto configs = configs_from(opts);
    if (gen->parsed()) return dtune::cli::cmd_gen_data(configs, std::cout);
    if (run->parsed()) return dtune::cli::cmd_run(configs, std::cout);
    if (theory->parsed()) return dtune::cli::cmd_theory(configs, std::cout);
    return dtune::cli::cmd_eval(configs, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "dtune: " << e.what() << '\n';
    return 2;
  }
}
