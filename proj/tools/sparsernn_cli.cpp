// Command-line front end: train, eval, prune, report, verify-kl, gradcheck, synth.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsernn/commands.hpp"

using namespace sparsernn;

namespace {

// Flags win over --set, which wins over the config file.
RunConfig build_config(const std::string& config_path, const std::vector<std::string>& sets,
                       const std::map<std::string, std::string>& flags) {
  std::vector<std::map<std::string, std::string>> layers;
  if (!config_path.empty()) {
    try {
      layers.push_back(parse_config_text(read_text_file(config_path)));
    } catch (const DataError& e) {
      throw ConfigError(std::string("cannot read config: ") + e.what());
    }
  }
  std::map<std::string, std::string> overrides;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  layers.push_back(overrides);
  layers.push_back(flags);
  return resolve_config(layers);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse variational dropout for LSTMs: train, prune and report compression"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model from a flat key=value config");
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
  train->add_option("--config", config_path, "Config file (key = value per line)");
  train->add_option("--set", sets, "Override a config key (key=value), repeatable");
  std::map<std::string, std::string> flag_storage;
  for (const auto& key : config_keys())
    flag_options[key] = train->add_option("--" + key, flag_storage[key], "Config key " + key)
                            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a data split");
  std::string checkpoint, split = "valid";
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "train, valid or test");

  auto* prune = app.add_subcommand("prune", "Mask weights with SNR below tau and report compression");
  std::optional<double> tau;
  std::string output;
  prune->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  prune->add_option("--tau", tau, "SNR threshold (default: the run's tau)");
  prune->add_option("--output,-o", output, "Masked checkpoint (default: overwrite the input)");

  auto* report = app.add_subcommand("report", "Print compression tables for a checkpoint");
  bool sentiment = false;
  report->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  report->add_flag("--sentiment", sentiment, "Also write the kept-embedding vs sentiment CSV (binary classification)");

  auto* verify = app.add_subcommand("verify-kl", "Compare the KL approximation with a Monte-Carlo oracle");
  int grid = 25;
  double samples = 1e6, tolerance = 0.02;
  std::uint64_t seed = 7;
  verify->add_option("--grid", grid, "Log-spaced alpha points in [1e-3, 1e3]");
  verify->add_option("--samples", samples, "Monte-Carlo samples per alpha");
  verify->add_option("--tolerance", tolerance, "Maximum allowed error");
  verify->add_option("--seed", seed, "Oracle seed");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer and the full ELBO");
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--seed", gc_seed, "Seed for the random test points");

  auto* synth = app.add_subcommand("synth", "Write the synthetic vocabulary-recovery classification task");
  SynthOptions so;
  std::string synth_dir = "synth";
  synth->add_option("--out", synth_dir, "Output directory");
  synth->add_option("--objects", so.train_objects, "Training texts");
  synth->add_option("--test-objects", so.test_objects, "Test texts");
  synth->add_option("--vocab", so.vocab_size, "Vocabulary words");
  synth->add_option("--signal", so.signal_words, "Signal words (even)");
  synth->add_option("--seq-len", so.seq_len, "Tokens per text");
  synth->add_option("--seed", so.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error config: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train) {
      for (const auto& [key, opt] : flag_options)
        if (opt->count()) flag_values[key] = flag_storage[key];
      return cmd_train(build_config(config_path, sets, flag_values), std::cout);
    }
    if (*eval) return cmd_eval(checkpoint, split, std::cout);
    if (*prune) return cmd_prune(checkpoint, tau, output.empty() ? checkpoint : output, std::cout);
    if (*report) return cmd_report(checkpoint, sentiment, std::cout);
    if (*verify) return cmd_verify_kl(grid, static_cast<std::int64_t>(samples), seed, tolerance, std::cout);
    if (*gradcheck) return cmd_gradcheck(gc_seed, std::cout);
    if (*synth) return cmd_synth(so, synth_dir, std::cout);
  } catch (const std::exception& e) {
    std::cerr << error_line(e) << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
