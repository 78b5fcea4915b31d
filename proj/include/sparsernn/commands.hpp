#ifndef SPARSERNN_COMMANDS_HPP
#define SPARSERNN_COMMANDS_HPP

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sparsernn/run_config.hpp"

namespace sparsernn {

// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // a verification command ran but its check did not pass
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitCheckpoint = 5,
};

// Maps an exception to an exit code and a one-line "error <kind>: <reason>" message.
int exit_code_for(const std::exception& e);
std::string error_line(const std::exception& e);

// Tokenised, batched data for one run configuration.
struct PreparedData {
  Vocabulary vocab;
  std::vector<Batch> train, valid, test;
  std::vector<LabeledSequence> train_sequences;  // classification only
  Index dataset_size = 0;                         // objects in the training split
  Index outputs = 0;
};

// Builds the vocabulary from the training split unless one is given.
PreparedData prepare_data(const RunConfig& cfg, const Vocabulary* vocab = nullptr);
ModelConfig model_config(const RunConfig& cfg, const PreparedData& data);

int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const std::filesystem::path& checkpoint, const std::string& split, std::ostream& out);
int cmd_prune(const std::filesystem::path& checkpoint, std::optional<double> tau, const std::filesystem::path& output,
              std::ostream& out);
int cmd_report(const std::filesystem::path& checkpoint, bool sentiment, std::ostream& out);
int cmd_verify_kl(int grid, std::int64_t samples, std::uint64_t seed, double tolerance, std::ostream& out);
int cmd_gradcheck(std::uint64_t seed, std::ostream& out);

struct SynthOptions {
  Index train_objects = 2000;
  Index test_objects = 500;
  Index vocab_size = 200;
  Index signal_words = 10;
  Index seq_len = 20;
  std::uint64_t seed = 1;
};
int cmd_synth(const SynthOptions& opts, const std::filesystem::path& out_dir, std::ostream& out);

}  // namespace sparsernn

#endif  // SPARSERNN_COMMANDS_HPP
