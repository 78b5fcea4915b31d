#include "sparsernn/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include "sparsernn/checkpoint.hpp"
#include "sparsernn/compression.hpp"
#include "sparsernn/diagnostics.hpp"
#include "sparsernn/training.hpp"

namespace sparsernn {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const IndexError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const CheckpointError*>(&e)) return kExitCheckpoint;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  return kExitCheckFailed;
}

std::string error_line(const std::exception& e) {
  const char* kind = "internal";
  switch (exit_code_for(e)) {
    case kExitConfig: kind = "config"; break;
    case kExitData: kind = "data"; break;
    case kExitNumeric: kind = "numeric"; break;
    case kExitCheckpoint: kind = "checkpoint"; break;
    default: break;
  }
  std::string what = e.what();
  std::replace(what.begin(), what.end(), '\n', ' ');
  return std::string("error ") + kind + ": " + what;
}

namespace {

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Index total_objects(const std::vector<Batch>& batches) {
  Index n = 0;
  for (const auto& b : batches) n += b.batch;
  return n;
}

struct Split {
  std::vector<std::string> train, valid, test;
};

Split split_tokens(const RunConfig& cfg, Unit unit) {
  Split s;
  s.train = tokenize(read_text_file(cfg.train_path), unit);
  if (!cfg.valid_path.empty()) s.valid = tokenize(read_text_file(cfg.valid_path), unit);
  if (!cfg.test_path.empty()) s.test = tokenize(read_text_file(cfg.test_path), unit);
  const auto n = s.train.size();
  const auto n_test = cfg.test_path.empty() ? static_cast<std::size_t>(static_cast<double>(n) * cfg.test_fraction) : 0;
  const auto n_valid = cfg.valid_path.empty() ? static_cast<std::size_t>(static_cast<double>(n) * cfg.valid_fraction) : 0;
  if (n_test + n_valid >= n) throw DataError("corpus " + cfg.train_path + " too small to split");
  const auto train_end = n - n_test - n_valid;
  if (n_valid) s.valid.assign(s.train.begin() + static_cast<std::ptrdiff_t>(train_end),
                              s.train.begin() + static_cast<std::ptrdiff_t>(train_end + n_valid));
  if (n_test) s.test.assign(s.train.end() - static_cast<std::ptrdiff_t>(n_test), s.train.end());
  s.train.resize(train_end);
  return s;
}

std::vector<LabeledSequence> truncate(std::vector<LabeledSequence> seqs, Index max_len) {
  if (max_len > 0)
    for (auto& s : seqs)
      if (static_cast<Index>(s.tokens.size()) > max_len) s.tokens.resize(static_cast<std::size_t>(max_len));
  return seqs;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, const Vocabulary* vocab) {
  PreparedData d;
  const Index max_size = cfg.max_vocab > 0 ? cfg.max_vocab : std::numeric_limits<Index>::max();
  if (cfg.task != Task::classify) {
    const Unit unit = cfg.task == Task::char_lm ? Unit::character : Unit::word;
    const Split s = split_tokens(cfg, unit);
    d.vocab = vocab ? *vocab : Vocabulary::build(s.train, unit, max_size);
    auto batches = [&](const std::vector<std::string>& tokens) {
      if (tokens.empty()) return std::vector<Batch>{};
      const auto ids = d.vocab.encode(tokens);
      return cfg.task == Task::char_lm ? char_lm_batches(ids, cfg.seq_len, cfg.batch_size)
                                       : word_lm_batches(ids, cfg.seq_len, cfg.batch_size);
    };
    d.train = batches(s.train);
    d.valid = batches(s.valid);
    d.test = batches(s.test);
    d.outputs = d.vocab.size();
  } else {
    const auto train_rows = load_classification_tsv(cfg.train_path);
    if (train_rows.empty()) throw DataError("no training texts in " + cfg.train_path);
    d.vocab = vocab ? *vocab : Vocabulary::build(classification_tokens(train_rows), Unit::word, max_size);
    Index max_label = 1;
    for (const auto& r : train_rows) max_label = std::max(max_label, r.label);
    d.outputs = max_label + 1;

    auto sequences = d.train_sequences = truncate(encode_classification(train_rows, d.vocab), cfg.seq_len);
    // One fixed shuffle so batches mix labels; batch order is reshuffled every epoch.
    RngStream order = RngStream(cfg.seed).derive("data-order");
    for (std::size_t i = sequences.size(); i > 1; --i) std::swap(sequences[i - 1], sequences[order.below(i)]);
    d.train = classification_batches(sequences, cfg.batch_size);
    auto load = [&](const std::string& path) {
      if (path.empty()) return std::vector<Batch>{};
      const auto rows = load_classification_tsv(path);
      for (const auto& r : rows)
        if (r.label >= d.outputs)
          throw DataError(path + ": label " + std::to_string(r.label) + " not seen in the training data");
      return classification_batches(truncate(encode_classification(rows, d.vocab), cfg.seq_len), cfg.batch_size);
    };
    d.valid = load(cfg.valid_path);
    d.test = load(cfg.test_path);
  }
  d.dataset_size = total_objects(d.train);
  if (d.dataset_size == 0) throw DataError("training split is empty");
  return d;
}

ModelConfig model_config(const RunConfig& cfg, const PreparedData& data) {
  ModelConfig m;
  m.task = cfg.task;
  m.mode = cfg.mode;
  m.vocab_size = data.vocab.size();
  m.embedding_dim = cfg.embedding_dim;
  m.hidden = cfg.hidden;
  m.outputs = data.outputs;
  m.lrt_head = cfg.lrt_head;
  m.log_sigma_init = cfg.log_sigma_init;
  return m;
}

namespace {

template <class F>
int with_precision(std::uint32_t scalar_bytes, F&& f) {
  if (scalar_bytes == 8) return f(double{});
  return f(float{});
}

std::uint32_t precision_bytes(const std::string& precision) { return precision == "double" ? 8 : 4; }

template <class Scalar>
void save_run(const Model<Scalar>& model, const std::optional<PruneMask<Scalar>>& mask, const Vocabulary& vocab,
              const RunConfig& cfg, const std::map<std::string, std::string>& meta, const fs::path& path) {
  Checkpoint<Scalar> ck{model, mask, vocab, config_text(cfg), meta};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(ck, path);
}

fs::path prepare_report_dir(const RunConfig& cfg) {
  const fs::path dir = report_dir(cfg);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

template <class Scalar>
int train_impl(const RunConfig& cfg, std::ostream& out) {
  const PreparedData data = prepare_data(cfg);
  Model<Scalar> model = Model<Scalar>::create(model_config(cfg, data), cfg.seed);
  if (!cfg.embeddings_path.empty()) {
    auto& table = model.embedding->weights.theta;
    const auto loaded = load_embeddings(cfg.embeddings_path, data.vocab, table.template cast<double>());
    table = loaded.table.template cast<Scalar>();
    out << "embeddings coverage=" << real(loaded.coverage) << "\n";
  }
  const fs::path dir = prepare_report_dir(cfg);
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw DataError("cannot write " + (dir / "train_log.jsonl").string());

  TrainConfig tc;
  tc.dataset_size = data.dataset_size;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.grad_clip = cfg.grad_clip;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.kl_scale = cfg.kl_scale;
  tc.early_stop_patience = cfg.early_stop_patience;
  tc.tau = cfg.tau;
  tc.stateful = cfg.task == Task::word_lm;
  tc.shuffle = !tc.stateful;

  const bool has_valid = !data.valid.empty();
  auto on_record = [&](const EpochRecord& rec) {
    const auto line = rec.to_json();
    log << line << '\n';
    log.flush();
    out << line << '\n';
    // The last record of an epoch: keep a last-good checkpoint on disk.
    if (rec.split == (has_valid ? "valid" : "train")) save_run(model, {}, data.vocab, cfg, {}, cfg.checkpoint);
  };
  const auto result = train(model, data.train, has_valid ? &data.valid : nullptr, tc, on_record);

  std::map<std::string, std::string> meta;
  meta["epochs_run"] = std::to_string(result.epochs_run);
  meta["metric"] = metric_name(cfg.task);
  const auto mask = validation_mask(model, cfg.tau);
  for (const auto& [split, batches] : {std::pair{"valid", &data.valid}, std::pair{"test", &data.test}}) {
    if (batches->empty()) continue;
    const auto ev = evaluate(model, *batches, mask ? &*mask : nullptr, tc.stateful);
    meta[std::string(split) + "_metric"] = real(ev.metric);
    out << split << ' ' << metric_name(cfg.task) << '=' << real(ev.metric) << '\n';
  }
  save_run(model, {}, data.vocab, cfg, meta, cfg.checkpoint);
  out << "checkpoint " << cfg.checkpoint << '\n';
  return kExitOk;
}

std::uint32_t stored_precision(const fs::path& checkpoint) { return peek_checkpoint(checkpoint).scalar_bytes; }

template <class Scalar>
RunConfig stored_config(const Checkpoint<Scalar>& ck) {
  return resolve_config({parse_config_text(ck.config_echo)});
}

const std::vector<Batch>& pick_split(const PreparedData& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "valid") return d.valid;
  if (split == "test") return d.test;
  throw ConfigError("unknown split '" + split + "' (expected train, valid or test)");
}

template <class Scalar>
int eval_impl(const fs::path& path, const std::string& split, std::ostream& out) {
  const auto ck = load_checkpoint<Scalar>(path);
  const RunConfig cfg = stored_config(ck);
  const PreparedData data = prepare_data(cfg, &ck.vocab);
  const auto& batches = pick_split(data, split);
  if (batches.empty()) throw DataError("split '" + split + "' has no data");
  const auto ev = evaluate(ck.model, batches, ck.mask ? &*ck.mask : nullptr, cfg.task == Task::word_lm);
  out << "split=" << split << " nll=" << real(ev.mean_nll) << ' ' << metric_name(cfg.task) << '=' << real(ev.metric)
      << '\n';
  return kExitOk;
}

template <class Scalar>
CompressionReport report_for(const Checkpoint<Scalar>& ck, const RunConfig& cfg) {
  const double tau = ck.meta.count("tau") ? std::stod(ck.meta.at("tau")) : cfg.tau;
  auto report = compression_report(ck.model, ck.mask ? &*ck.mask : nullptr, &ck.vocab, tau);
  report.metric_name = metric_name(cfg.task);
  if (auto it = ck.meta.find("metric_before"); it != ck.meta.end()) report.metric_before = std::stod(it->second);
  if (auto it = ck.meta.find("metric_after"); it != ck.meta.end()) report.metric_after = std::stod(it->second);
  return report;
}

template <class Scalar>
int prune_impl(const fs::path& path, std::optional<double> tau_override, const fs::path& output, std::ostream& out) {
  auto ck = load_checkpoint<Scalar>(path);
  const RunConfig cfg = stored_config(ck);
  const double tau = tau_override.value_or(cfg.tau);
  if (!(tau > 0)) throw ConfigError("tau must be positive");
  const auto mask = prune_by_snr(ck.model, tau);

  // Metrics before/after pruning need the data; a checkpoint moved away from
  // its corpus is still prunable.
  try {
    const PreparedData data = prepare_data(cfg, &ck.vocab);
    const auto& batches = !data.valid.empty() ? data.valid : !data.test.empty() ? data.test : data.train;
    const bool stateful = cfg.task == Task::word_lm;
    ck.meta["metric_before"] = real(evaluate(ck.model, batches, nullptr, stateful).metric);
    ck.meta["metric_after"] = real(evaluate(ck.model, batches, &mask, stateful).metric);
  } catch (const DataError& e) {
    out << "note: metrics skipped (" << e.what() << ")\n";
  }
  ck.mask = mask;
  ck.meta["tau"] = real(tau);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  save_checkpoint(ck, output);

  const auto report = report_for(ck, cfg);
  const fs::path dir = prepare_report_dir(cfg);
  write_text(dir / "compression.csv", report_csv(report));
  write_text(dir / "compression.txt", report_table(report));
  out << report_table(report);
  out << "checkpoint " << output.string() << '\n';
  return kExitOk;
}

template <class Scalar>
int report_impl(const fs::path& path, bool sentiment, std::ostream& out) {
  const auto ck = load_checkpoint<Scalar>(path);
  const RunConfig cfg = stored_config(ck);
  const auto report = report_for(ck, cfg);
  const fs::path dir = prepare_report_dir(cfg);
  write_text(dir / "compression.csv", report_csv(report));
  write_text(dir / "compression.txt", report_table(report));
  std::string vocab_list;
  for (const auto& w : report.remaining_vocabulary) vocab_list += w + '\n';
  write_text(dir / "remaining_vocabulary.txt", vocab_list);
  out << report_table(report);
  if (sentiment) {
    if (cfg.task != Task::classify) throw UsageError("sentiment report: unsupported task " + to_string(cfg.task));
    const PreparedData data = prepare_data(cfg, &ck.vocab);
    const auto rows = sentiment_report(ck.model, ck.mask ? &*ck.mask : nullptr, ck.vocab, data.train_sequences);
    write_text(dir / "sentiment.csv", sentiment_csv(rows));
    out << "sentiment rows=" << rows.size() << " file=" << (dir / "sentiment.csv").string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  validate_config(cfg, true);
  return with_precision(precision_bytes(cfg.precision), [&](auto s) { return train_impl<decltype(s)>(cfg, out); });
}

int cmd_eval(const fs::path& checkpoint, const std::string& split, std::ostream& out) {
  return with_precision(stored_precision(checkpoint),
                        [&](auto s) { return eval_impl<decltype(s)>(checkpoint, split, out); });
}

int cmd_prune(const fs::path& checkpoint, std::optional<double> tau, const fs::path& output, std::ostream& out) {
  return with_precision(stored_precision(checkpoint),
                        [&](auto s) { return prune_impl<decltype(s)>(checkpoint, tau, output, out); });
}

int cmd_report(const fs::path& checkpoint, bool sentiment, std::ostream& out) {
  return with_precision(stored_precision(checkpoint),
                        [&](auto s) { return report_impl<decltype(s)>(checkpoint, sentiment, out); });
}

int cmd_verify_kl(int grid, std::int64_t samples, std::uint64_t seed, double tolerance, std::ostream& out) {
  if (grid < 2) throw ConfigError("grid needs at least 2 points");
  if (samples < 1) throw ConfigError("samples must be positive");
  const auto rows = verify_kl_grid(grid, 1e-3, 1e3, samples, seed);
  double worst = 0;
  char line[160];
  out << "alpha,k_diff,oracle_diff,error\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.6g,%.6f,%.6f,%.6f\n", r.alpha, r.k_diff, r.oracle_diff, r.error);
    out << line;
    worst = std::max(worst, r.error);
  }
  out << "max_error=" << real(worst) << " tolerance=" << real(tolerance) << ' ' << (worst <= tolerance ? "PASS" : "FAIL")
      << '\n';
  return worst <= tolerance ? kExitOk : kExitCheckFailed;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  bool all = true;
  for (const auto& c : gradcheck_suite(seed)) {
    double worst = 0;
    for (double e : c.report.max_rel_error) worst = std::max(worst, e);
    const bool ok = c.report.passed;
    all = all && ok;
    out << (ok ? "PASS " : "FAIL ") << c.name << " max_rel_error=" << real(worst);
    if (!c.report.message.empty()) out << " (" << c.report.message << ')';
    out << '\n';
  }
  out << (all ? "gradcheck PASS" : "gradcheck FAIL") << '\n';
  return all ? kExitOk : kExitCheckFailed;
}

int cmd_synth(const SynthOptions& o, const fs::path& out_dir, std::ostream& out) {
  if (o.train_objects <= 0 || o.test_objects < 0) throw ConfigError("object counts must be positive");
  const auto data = synth_classification(o.train_objects + o.test_objects, o.vocab_size, o.signal_words, o.seq_len, o.seed);
  fs::create_directories(out_dir);
  const auto split = data.texts.begin() + static_cast<std::ptrdiff_t>(o.train_objects);
  const std::vector<LabeledText> train(data.texts.begin(), split), test(split, data.texts.end());
  write_classification_tsv(out_dir / "train.tsv", train);
  if (!test.empty()) write_classification_tsv(out_dir / "test.tsv", test);
  std::string signal;
  for (std::size_t i = 0; i < data.signal_words.size(); ++i)
    signal += data.signal_words[i] + '\t' + std::to_string(data.signal_class[i]) + '\n';
  write_text(out_dir / "signal_words.tsv", signal);
  out << "wrote " << train.size() << " train and " << test.size() << " test texts to " << out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace sparsernn
