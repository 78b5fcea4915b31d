#include "sparsernn/run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace sparsernn {

std::string to_string(Task t) {
  switch (t) {
    case Task::char_lm: return "char_lm";
    case Task::word_lm: return "word_lm";
    case Task::classify: return "classify";
  }
  return "?";
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::sparsevd: return "sparsevd";
    case Mode::sparsevd_voc: return "sparsevd_voc";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "char_lm") return Task::char_lm;
  if (s == "word_lm") return Task::word_lm;
  if (s == "classify") return Task::classify;
  throw ConfigError("unknown task '" + s + "' (expected char_lm, word_lm or classify)");
}

Mode parse_mode(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "sparsevd") return Mode::sparsevd;
  if (s == "sparsevd_voc") return Mode::sparsevd_voc;
  throw ConfigError("unknown mode '" + s + "' (expected baseline, sparsevd or sparsevd_voc)");
}

RunConfig default_config(Task task) {
  RunConfig c;
  c.task = task;
  switch (task) {
    case Task::char_lm:
      c.hidden = 1000;
      c.epochs = 250;
      c.batch_size = 64;
      c.seq_len = 100;
      c.learning_rate = 0.002;
      c.grad_clip = 1.0;
      c.lrt_head = true;
      break;
    case Task::word_lm:
      c.hidden = 256;
      c.epochs = 150;
      c.batch_size = 32;
      c.seq_len = 35;
      c.learning_rate = 0.002;
      c.grad_clip = 10.0;
      c.lrt_head = true;
      break;
    case Task::classify:
      c.hidden = 128;
      c.embedding_dim = 300;
      c.epochs = 800;
      c.batch_size = 128;
      c.seq_len = 0;
      c.learning_rate = 0.0005;
      c.grad_clip.reset();
      c.max_vocab = 20000;
      break;
  }
  return c;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "task",          "mode",           "precision",   "seed",           "hidden",         "embedding_dim",
      "max_vocab",     "lrt_head",       "log_sigma_init", "epochs",      "batch_size",     "seq_len",
      "learning_rate", "grad_clip",      "kl_scale",    "early_stop_patience", "tau",       "valid_fraction",
      "test_fraction", "train_path",     "valid_path",  "test_path",      "embeddings_path", "checkpoint",
      "report_dir"};
  return keys;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  const double v = parse_number<double>(key, value);
  if (!std::isfinite(v)) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad value for " + key + ": '" + value + "' (expected true or false)");
}

std::string real_text(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "task") c.task = parse_task(v);
  else if (key == "mode") c.mode = parse_mode(v);
  else if (key == "precision") {
    if (v != "float" && v != "double") throw ConfigError("bad value for precision: '" + v + "' (expected float or double)");
    c.precision = v;
  } else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "hidden") c.hidden = parse_number<Index>(key, v);
  else if (key == "embedding_dim") c.embedding_dim = parse_number<Index>(key, v);
  else if (key == "max_vocab") c.max_vocab = parse_number<Index>(key, v);
  else if (key == "lrt_head") c.lrt_head = parse_bool(key, v);
  else if (key == "log_sigma_init") c.log_sigma_init = parse_real(key, v);
  else if (key == "epochs") c.epochs = parse_number<int>(key, v);
  else if (key == "batch_size") c.batch_size = parse_number<Index>(key, v);
  else if (key == "seq_len") c.seq_len = parse_number<Index>(key, v);
  else if (key == "learning_rate") c.learning_rate = parse_real(key, v);
  else if (key == "grad_clip") {
    if (v == "none") c.grad_clip.reset();
    else c.grad_clip = parse_real(key, v);
  } else if (key == "kl_scale") c.kl_scale = parse_real(key, v);
  else if (key == "early_stop_patience") c.early_stop_patience = parse_number<int>(key, v);
  else if (key == "tau") c.tau = parse_real(key, v);
  else if (key == "valid_fraction") c.valid_fraction = parse_real(key, v);
  else if (key == "test_fraction") c.test_fraction = parse_real(key, v);
  else if (key == "train_path") c.train_path = v;
  else if (key == "valid_path") c.valid_path = v;
  else if (key == "test_path") c.test_path = v;
  else if (key == "embeddings_path") c.embeddings_path = v;
  else if (key == "checkpoint") c.checkpoint = v;
  else if (key == "report_dir") c.report_dir = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string get_config_value(const RunConfig& c, const std::string& key) {
  if (key == "task") return to_string(c.task);
  if (key == "mode") return to_string(c.mode);
  if (key == "precision") return c.precision;
  if (key == "seed") return std::to_string(c.seed);
  if (key == "hidden") return std::to_string(c.hidden);
  if (key == "embedding_dim") return std::to_string(c.embedding_dim);
  if (key == "max_vocab") return std::to_string(c.max_vocab);
  if (key == "lrt_head") return c.lrt_head ? "true" : "false";
  if (key == "log_sigma_init") return real_text(c.log_sigma_init);
  if (key == "epochs") return std::to_string(c.epochs);
  if (key == "batch_size") return std::to_string(c.batch_size);
  if (key == "seq_len") return std::to_string(c.seq_len);
  if (key == "learning_rate") return real_text(c.learning_rate);
  if (key == "grad_clip") return c.grad_clip ? real_text(*c.grad_clip) : "none";
  if (key == "kl_scale") return real_text(c.kl_scale);
  if (key == "early_stop_patience") return std::to_string(c.early_stop_patience);
  if (key == "tau") return real_text(c.tau);
  if (key == "valid_fraction") return real_text(c.valid_fraction);
  if (key == "test_fraction") return real_text(c.test_fraction);
  if (key == "train_path") return c.train_path;
  if (key == "valid_path") return c.valid_path;
  if (key == "test_path") return c.test_path;
  if (key == "embeddings_path") return c.embeddings_path;
  if (key == "checkpoint") return c.checkpoint;
  if (key == "report_dir") return c.report_dir;
  throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig resolve_config(const std::vector<std::map<std::string, std::string>>& layers) {
  Task task = Task::char_lm;
  for (const auto& layer : layers)
    if (auto it = layer.find("task"); it != layer.end()) task = parse_task(it->second);
  RunConfig c = default_config(task);
  for (const auto& layer : layers)
    for (const auto& [k, v] : layer) set_config_value(c, k, v);
  return c;
}

std::string config_text(const RunConfig& c) {
  std::string out;
  for (const auto& key : config_keys()) out += key + " = " + get_config_value(c, key) + "\n";
  return out;
}

void validate_config(const RunConfig& c, bool check_paths) {
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw ConfigError(std::string(key) + " must be positive");
  };
  positive("hidden", static_cast<double>(c.hidden));
  positive("batch_size", static_cast<double>(c.batch_size));
  positive("learning_rate", c.learning_rate);
  positive("tau", c.tau);
  if (c.embedding_dim < 0) throw ConfigError("embedding_dim must be non-negative");
  if (c.max_vocab < 0) throw ConfigError("max_vocab must be non-negative");
  if (c.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (c.kl_scale < 0) throw ConfigError("kl_scale must be non-negative");
  if (c.early_stop_patience < 0) throw ConfigError("early_stop_patience must be non-negative");
  if (c.grad_clip && !(*c.grad_clip > 0)) throw ConfigError("grad_clip must be positive or none");
  if (c.task != Task::classify && c.seq_len <= 0) throw ConfigError("seq_len must be positive for language models");
  if (c.seq_len < 0) throw ConfigError("seq_len must be non-negative");
  if (c.valid_fraction < 0 || c.test_fraction < 0 || c.valid_fraction + c.test_fraction >= 1)
    throw ConfigError("valid_fraction and test_fraction must be non-negative and sum below 1");
  if (!check_paths) return;
  if (c.train_path.empty()) throw ConfigError("train_path is required");
  for (const auto* p : {&c.train_path, &c.valid_path, &c.test_path, &c.embeddings_path})
    if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("path does not exist: " + *p);
  if (!c.embeddings_path.empty() && c.embedding_dim == 0)
    throw ConfigError("embeddings_path needs a model with an embedding layer (embedding_dim > 0)");
}

std::filesystem::path report_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv(kReportDirEnv); env && *env) return env;
  return cfg.report_dir;
}

}  // namespace sparsernn
