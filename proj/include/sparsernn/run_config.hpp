#ifndef SPARSERNN_RUN_CONFIG_HPP
#define SPARSERNN_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsernn/model.hpp"

namespace sparsernn {

// Everything a command needs to run, as a flat set of keys. Defaults depend on
// the task and follow the paper's experimental setup.
struct RunConfig {
  Task task = Task::char_lm;
  Mode mode = Mode::sparsevd;
  std::string precision = "float";  // float | double
  std::uint64_t seed = 1;

  Index hidden = 1000;
  Index embedding_dim = 0;
  Index max_vocab = 0;  // 0 = keep every token (specials included in the limit otherwise)
  bool lrt_head = false;
  double log_sigma_init = -3.0;

  int epochs = 250;
  Index batch_size = 64;
  Index seq_len = 100;  // char LM window, word LM unroll, classification truncation (0 = none)
  double learning_rate = 0.002;
  std::optional<double> grad_clip = 1.0;
  double kl_scale = 1.0;
  int early_stop_patience = 0;
  double tau = 0.05;

  // LM corpora: valid/test come from valid_path/test_path, or else from the
  // tail of train_path in these fractions.
  double valid_fraction = 0.1;
  double test_fraction = 0.0;

  std::string train_path, valid_path, test_path;
  std::string embeddings_path;
  std::string checkpoint = "model.ckpt";
  std::string report_dir = "reports";
};

RunConfig default_config(Task task);

// Every accepted key, in canonical order.
const std::vector<std::string>& config_keys();

// Applies one key. Throws ConfigError for unknown keys or malformed values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Parses "key = value" lines ('#' starts a comment) into a key→value map.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Task defaults, then `values` (task key first). Later layers win.
RunConfig resolve_config(const std::vector<std::map<std::string, std::string>>& layers);

// The canonical flat text form, used as the checkpoint's config echo. Parsing
// it back yields the same configuration.
std::string config_text(const RunConfig& cfg);

// Dimension/range checks; with check_paths, referenced input files must exist.
void validate_config(const RunConfig& cfg, bool check_paths);

// Report directory after the SPARSERNN_REPORT_DIR override.
std::filesystem::path report_dir(const RunConfig& cfg);
inline constexpr const char* kReportDirEnv = "SPARSERNN_REPORT_DIR";

}  // namespace sparsernn

#endif  // SPARSERNN_RUN_CONFIG_HPP
