// streamdf: end-to-end pipeline driver for the streaming disfluency tagger.
//
// Subcommands: gen-data (synthetic corpus + splits), train (best-dev
// checkpoint + per-epoch log), eval (prediction logs + metric reports),
// stream (token-by-token replay of one utterance), report (recompute metrics
// from stored logs, or join several metric files into one comparison table).
//
// Every artifact-producing command writes a `<name>.manifest.json` next to
// its outputs recording the resolved configuration, paths, seeds, and
// timestamps. All artifacts are deterministic; only manifests carry wall
// time.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamdf/checkpoint.hpp"
#include "streamdf/corpus.hpp"
#include "streamdf/decoder.hpp"
#include "streamdf/encoder.hpp"
#include "streamdf/metrics.hpp"
#include "streamdf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace streamdf;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string iso8601_utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

// Run record written alongside every artifact-producing command's outputs.
class Manifest {
 public:
  explicit Manifest(std::string command) : started_(iso8601_utc_now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = kToolVersion;
  }

  ordered_json& config() { return doc_["config"]; }
  ordered_json& seeds() { return doc_["seeds"]; }
  ordered_json& extra() { return doc_["result"]; }
  void add_input(const std::string& name, const fs::path& path) {
    doc_["inputs"][name] = path.string();
  }
  void add_output(const std::string& name, const fs::path& path) {
    doc_["outputs"][name] = path.string();
  }

  void write(const fs::path& path) {
    doc_["started"] = started_;
    doc_["finished"] = iso8601_utc_now();
    write_text_file(path, doc_.dump(2) + "\n");
  }

 private:
  ordered_json doc_;
  std::string started_;
};

// The flat key=value dump is the canonical resolved-config form; mirror it
// into the manifest as one JSON object (values kept as strings verbatim).
ordered_json setup_as_json(const TrainSetup& setup) {
  ordered_json j;
  std::istringstream lines(train_setup_to_string(setup));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    j[key] = value;
  }
  return j;
}

std::string sanitize_tag(std::string name) {
  for (char& c : name)
    if (c == ':' || c == '.') c = '_';
  return name;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string out_dir;
  int n = 2500;
  GeneratorConfig gen;
  std::vector<double> split{0.8, 0.1, 0.1};
  uint64_t split_seed = 0;
  bool split_seed_set = false;
};

void run_gen_data(const GenDataArgs& args) {
  GeneratorConfig config = args.gen;
  config.validate();
  if (args.split.size() != 3)
    throw std::invalid_argument("--split needs exactly three ratios, e.g. 0.8,0.1,0.1");
  const uint64_t split_seed = args.split_seed_set ? args.split_seed : config.seed;

  std::vector<Utterance> corpus = generate_corpus(config, args.n);
  CorpusSplit split =
      split_corpus(corpus, {args.split[0], args.split[1], args.split[2]}, split_seed);

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  Manifest manifest("gen-data");
  write_corpus_file(split.train, (out / "train.tsv").string());
  write_corpus_file(split.dev, (out / "dev.tsv").string());
  write_corpus_file(split.test, (out / "test.tsv").string());
  manifest.add_output("train", out / "train.tsv");
  manifest.add_output("dev", out / "dev.tsv");
  manifest.add_output("test", out / "test.tsv");

  ordered_json& cj = manifest.config();
  cj["n_utterances"] = args.n;
  cj["base_vocab_size"] = config.base_vocab_size;
  cj["min_length"] = config.min_length;
  cj["max_length"] = config.max_length;
  cj["disfluency_rate"] = config.disfluency_rate;
  cj["repetition_fraction"] = config.repetition_fraction;
  cj["substitution_fraction"] = config.substitution_fraction;
  cj["deletion_fraction"] = config.deletion_fraction;
  cj["interregnum_probability"] = config.interregnum_probability;
  cj["edit_rate"] = config.edit_rate;
  cj["filler_lexicon"] = config.filler_lexicon;
  cj["split"] = args.split;
  manifest.seeds()["generator"] = config.seed;
  manifest.seeds()["split"] = split_seed;
  manifest.extra()["train_utterances"] = split.train.size();
  manifest.extra()["dev_utterances"] = split.dev.size();
  manifest.extra()["test_utterances"] = split.test.size();
  manifest.write(out / "gen-data.manifest.json");

  std::cout << "wrote " << split.train.size() << "/" << split.dev.size() << "/"
            << split.test.size() << " utterances to " << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string train_path;
  std::string dev_path;
  std::string out_dir;
  std::string preset = "desk";
  std::string config_file;

  // Optional overrides; applied only when the flag was passed.
  double gamma = 0, lambda = 0, learning_rate = 0, dropout = 0, wait_threshold = 0;
  int epochs = 0, batch_size = 0, max_prefix_len = 0;
  int d_model = 0, n_layers = 0, n_heads = 0, d_ff = 0, max_len = 0;
  uint64_t shuffle_seed = 0, init_seed = 0;
  std::string mask_mode, optimizer;
};

TrainSetup resolve_setup(const TrainArgs& args, const CLI::App& cmd) {
  const std::optional<TrainSetup> preset = preset_by_name(args.preset);
  if (!preset) throw std::invalid_argument("--preset: unknown preset '" + args.preset + "'");
  TrainSetup setup = *preset;
  if (!args.config_file.empty()) setup = parse_train_setup_file(args.config_file, setup);

  const auto passed = [&cmd](const std::string& flag) { return cmd.count(flag) > 0; };
  if (passed("--gamma")) setup.train.loss.gamma = args.gamma;
  if (passed("--lambda")) setup.train.loss.lambda = args.lambda;
  if (passed("--wait-threshold")) setup.train.loss.wait_threshold = args.wait_threshold;
  if (passed("--mask-mode")) {
    const auto mode = mask_mode_from_string(args.mask_mode);
    if (!mode) throw std::invalid_argument("--mask-mode: unknown mode '" + args.mask_mode + "'");
    setup.train.loss.mask_mode = *mode;
  }
  if (passed("--learning-rate")) setup.train.learning_rate = args.learning_rate;
  if (passed("--epochs")) setup.train.epochs = args.epochs;
  if (passed("--batch-size")) setup.train.batch_size = args.batch_size;
  if (passed("--max-prefix-len")) setup.train.max_prefix_len = args.max_prefix_len;
  if (passed("--shuffle-seed")) setup.train.shuffle_seed = args.shuffle_seed;
  if (passed("--optimizer")) {
    const auto opt = optimizer_from_string(args.optimizer);
    if (!opt) throw std::invalid_argument("--optimizer: unknown optimizer '" + args.optimizer + "'");
    setup.train.optimizer = *opt;
  }
  if (passed("--d-model")) setup.encoder.d_model = args.d_model;
  if (passed("--n-layers")) setup.encoder.n_layers = args.n_layers;
  if (passed("--n-heads")) setup.encoder.n_heads = args.n_heads;
  if (passed("--d-ff")) setup.encoder.d_ff = args.d_ff;
  if (passed("--max-len")) setup.encoder.max_len = args.max_len;
  if (passed("--dropout")) setup.encoder.dropout_rate = args.dropout;
  if (passed("--init-seed")) setup.encoder.seed = args.init_seed;
  return setup;
}

void run_train(const TrainArgs& args, const CLI::App& cmd) {
  TrainSetup setup = resolve_setup(args, cmd);
  std::vector<Utterance> train_set = parse_corpus_file(args.train_path);
  std::vector<Utterance> dev_set = parse_corpus_file(args.dev_path);

  const fs::path out(args.out_dir);
  fs::create_directories(out);

  TrainResult result = train(train_set, dev_set, setup.encoder, setup.train);

  EncoderConfig final_config = setup.encoder;
  final_config.vocab_size = result.vocab.size();
  const fs::path ckpt_path = out / "model.ckpt";
  result.report.checkpoint_path = ckpt_path.string();
  save_checkpoint(ckpt_path.string(), final_config, result.params, result.vocab.words());
  write_text_file(out / "train_log.csv", result.report.to_csv());
  write_text_file(out / "config.cfg", train_setup_to_string(setup));

  Manifest manifest("train");
  manifest.add_input("train", args.train_path);
  manifest.add_input("dev", args.dev_path);
  manifest.add_output("checkpoint", ckpt_path);
  manifest.add_output("train_log", out / "train_log.csv");
  manifest.add_output("config", out / "config.cfg");
  manifest.config() = setup_as_json(setup);
  manifest.config()["preset"] = args.preset;
  if (!args.config_file.empty()) manifest.add_input("config_file", args.config_file);
  manifest.seeds()["shuffle"] = setup.train.shuffle_seed;
  manifest.seeds()["init"] = setup.encoder.seed;
  ordered_json& rj = manifest.extra();
  rj["epochs_run"] = result.report.epochs.size();
  rj["best_epoch"] = result.report.best_epoch;
  rj["best_dev_f1"] =
      result.report.best_dev_f1.defined ? ordered_json(result.report.best_dev_f1.value)
                                        : ordered_json(nullptr);
  rj["truncated_train"] = result.report.truncated_train;
  rj["truncated_dev"] = result.report.truncated_dev;
  rj["vocab_size"] = result.vocab.size();
  manifest.write(out / "train.manifest.json");

  std::cout << "best epoch " << result.report.best_epoch << " (dev streaming F1 ";
  if (result.report.best_dev_f1.defined)
    std::cout << result.report.best_dev_f1.value;
  else
    std::cout << "undefined";
  std::cout << "); checkpoint at " << ckpt_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string corpus_path;
  std::string out_dir;
  std::string decoder = "dynamic";
  std::string tag;
};

void run_eval(const EvalArgs& args) {
  const DecoderSpec spec = parse_decoder_spec(args.decoder);
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  Vocabulary vocab = Vocabulary::from_words(ckpt.vocab_words);
  Encoder encoder(ckpt.config, std::move(ckpt.params));
  std::vector<Utterance> corpus = parse_corpus_file(args.corpus_path);
  if (corpus.empty()) throw std::runtime_error(args.corpus_path + ": corpus is empty");

  std::vector<PredictionLog> logs = decode_corpus(encoder, vocab, corpus, spec);
  MetricReport report = compute_report(logs, corpus);
  RoleBreakdown awt_roles = awt_by_role(logs, corpus);
  RoleBreakdown mis_roles = misclassification_by_role(logs, corpus);

  const std::string tag = args.tag.empty() ? sanitize_tag(decoder_spec_name(spec)) : args.tag;
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  const fs::path logs_path = out / (tag + ".logs.txt");
  write_log_file(logs, logs_path.string());
  write_text_file(out / (tag + ".metrics.csv"), report_to_csv(report));
  write_text_file(out / (tag + ".metrics.json"), report_to_json(report));
  write_text_file(out / (tag + ".roles.csv"), role_breakdown_to_csv(awt_roles, mis_roles));
  write_text_file(out / (tag + ".roles.json"), role_breakdown_to_json(awt_roles, mis_roles));

  Manifest manifest("eval");
  manifest.add_input("checkpoint", args.checkpoint);
  manifest.add_input("corpus", args.corpus_path);
  manifest.add_output("logs", logs_path);
  manifest.add_output("metrics_csv", out / (tag + ".metrics.csv"));
  manifest.add_output("metrics_json", out / (tag + ".metrics.json"));
  manifest.add_output("roles_csv", out / (tag + ".roles.csv"));
  manifest.add_output("roles_json", out / (tag + ".roles.json"));
  manifest.config()["decoder"] = decoder_spec_name(spec);
  manifest.config()["tag"] = tag;
  manifest.extra()["n_utterances"] = report.n_utterances;
  manifest.extra()["n_tokens"] = report.n_tokens;
  manifest.extra()["awt"] = report.awt;
  manifest.extra()["edit_overhead"] = report.edit_overhead;
  manifest.extra()["streaming_f1"] = report.streaming_f1.defined
                                         ? ordered_json(report.streaming_f1.value)
                                         : ordered_json(nullptr);
  manifest.write(out / (tag + ".manifest.json"));

  std::cout << "decoded " << report.n_utterances << " utterances with " << decoder_spec_name(spec)
            << "; reports under " << out.string() << " (tag " << tag << ")\n";
}

// ---------------------------------------------------------------------------
// stream

struct StreamArgs {
  std::string checkpoint;
  std::string text;
  std::string input_file;
  std::string decoder = "dynamic";
};

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

void run_stream(const StreamArgs& args) {
  std::string text = args.text;
  if (!args.input_file.empty()) {
    std::ifstream in(args.input_file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + args.input_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  std::vector<std::string> tokens = whitespace_tokens(text);
  if (tokens.empty())
    throw CLI::ValidationError("stream", "no input tokens; pass --text or a non-empty --input file");

  const DecoderSpec spec = parse_decoder_spec(args.decoder);
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  Vocabulary vocab = Vocabulary::from_words(ckpt.vocab_words);
  Encoder encoder(ckpt.config, std::move(ckpt.params));

  Utterance utt;
  utt.id = "stream";
  utt.tokens = tokens;
  utt.roles.assign(tokens.size(), TokenRole::Fluent);
  utt.labels.assign(tokens.size(), 0);
  PredictionLog log = decode_utterance(encoder, vocab, utt, spec);

  for (size_t i = 0; i < log.rows.size(); ++i) {
    std::span<const std::string> seen(utt.tokens.data(), i + 1);
    std::cout << render_output(log.rows[i], seen) << "\n";
  }
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string logs_path;
  std::string corpus_path;
  std::string format = "csv";
  std::string out_path;
  std::vector<std::string> metric_files;
};

void run_report(const ReportArgs& args) {
  if (args.logs_path.empty() == args.metric_files.empty())
    throw CLI::ValidationError("report", "pass exactly one of --logs or --metrics");

  std::string content;
  if (!args.logs_path.empty()) {
    std::vector<PredictionLog> logs = parse_log_file(args.logs_path);
    MetricReport report;
    if (!args.corpus_path.empty()) {
      std::vector<Utterance> corpus = parse_corpus_file(args.corpus_path);
      report = compute_report(logs, corpus);
    } else {
      report = compute_report(logs);
    }
    if (args.format == "csv")
      content = report_to_csv(report);
    else if (args.format == "json")
      content = report_to_json(report);
    else
      throw CLI::ValidationError("report", "--format must be csv or json");
  } else {
    // Join mode: one comparison table from single-row metric CSVs.
    std::string header;
    std::ostringstream table;
    for (const std::string& file : args.metric_files) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw std::runtime_error("cannot open " + file);
      std::string head, row, extra;
      if (!std::getline(in, head) || !std::getline(in, row))
        throw std::runtime_error(file + ": expected a header and one data row");
      if (std::getline(in, extra) && !extra.empty())
        throw std::runtime_error(file + ": expected exactly one data row");
      if (header.empty()) {
        header = head;
        table << "source," << header << "\n";
      } else if (head != header) {
        throw std::runtime_error(file + ": header differs from " + args.metric_files.front());
      }
      table << fs::path(file).stem().string() << "," << row << "\n";
    }
    content = table.str();
  }

  if (args.out_path.empty()) {
    std::cout << content;
  } else {
    write_text_file(args.out_path, content);
    std::cout << "wrote " << args.out_path << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming disfluency tagger pipeline"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus and splits");
  gen->add_option("--out", gen_args.out_dir, "output directory")->required();
  gen->add_option("--n", gen_args.n, "total utterances before splitting")
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_args.gen.seed, "generator seed");
  gen->add_option("--base-vocab-size", gen_args.gen.base_vocab_size)->check(CLI::PositiveNumber);
  gen->add_option("--min-length", gen_args.gen.min_length)->check(CLI::PositiveNumber);
  gen->add_option("--max-length", gen_args.gen.max_length)->check(CLI::PositiveNumber);
  gen->add_option("--disfluency-rate", gen_args.gen.disfluency_rate)
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--repetition-fraction", gen_args.gen.repetition_fraction)
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--substitution-fraction", gen_args.gen.substitution_fraction)
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--deletion-fraction", gen_args.gen.deletion_fraction)
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--interregnum-probability", gen_args.gen.interregnum_probability)
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--edit-rate", gen_args.gen.edit_rate)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--split", gen_args.split, "train,dev,test ratios")->delimiter(',');
  gen->add_option("--split-seed", gen_args.split_seed, "shuffle seed for the split")
      ->each([&gen_args](const std::string&) { gen_args.split_seed_set = true; });

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "train a model and keep the best-dev checkpoint");
  tr->add_option("--train", train_args.train_path, "training corpus TSV")->required();
  tr->add_option("--dev", train_args.dev_path, "development corpus TSV")->required();
  tr->add_option("--out", train_args.out_dir, "output directory")->required();
  tr->add_option("--preset", train_args.preset, "configuration preset (desk, paper)")
      ->check(CLI::IsMember({"desk", "paper"}));
  tr->add_option("--config", train_args.config_file, "key=value config file overriding the preset");
  tr->add_option("--gamma", train_args.gamma, "prefix-loss weight");
  tr->add_option("--lambda", train_args.lambda, "latency-cost weight");
  tr->add_option("--wait-threshold", train_args.wait_threshold, "decision threshold");
  tr->add_option("--mask-mode", train_args.mask_mode, "soft, hard, or all_ones");
  tr->add_option("--learning-rate", train_args.learning_rate);
  tr->add_option("--epochs", train_args.epochs)->check(CLI::PositiveNumber);
  tr->add_option("--batch-size", train_args.batch_size)->check(CLI::PositiveNumber);
  tr->add_option("--max-prefix-len", train_args.max_prefix_len)->check(CLI::PositiveNumber);
  tr->add_option("--shuffle-seed", train_args.shuffle_seed);
  tr->add_option("--optimizer", train_args.optimizer, "adam or sgd");
  tr->add_option("--d-model", train_args.d_model)->check(CLI::PositiveNumber);
  tr->add_option("--n-layers", train_args.n_layers)->check(CLI::PositiveNumber);
  tr->add_option("--n-heads", train_args.n_heads)->check(CLI::PositiveNumber);
  tr->add_option("--d-ff", train_args.d_ff)->check(CLI::PositiveNumber);
  tr->add_option("--max-len", train_args.max_len)->check(CLI::PositiveNumber);
  tr->add_option("--dropout", train_args.dropout)->check(CLI::Range(0.0, 1.0));
  tr->add_option("--init-seed", train_args.init_seed);

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "decode a corpus and write metric reports");
  ev->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  ev->add_option("--corpus", eval_args.corpus_path, "corpus TSV to evaluate")->required();
  ev->add_option("--out", eval_args.out_dir, "output directory")->required();
  ev->add_option("--decoder", eval_args.decoder, "dynamic, dynamic:<t>, or la:<n>");
  ev->add_option("--tag", eval_args.tag, "output filename prefix (default: decoder name)");

  StreamArgs stream_args;
  CLI::App* st = app.add_subcommand("stream", "replay one utterance token by token");
  st->add_option("--checkpoint", stream_args.checkpoint, "model checkpoint")->required();
  st->add_option("--text", stream_args.text, "utterance as one whitespace-separated string");
  st->add_option("--input", stream_args.input_file, "file with the utterance tokens");
  st->add_option("--decoder", stream_args.decoder, "dynamic, dynamic:<t>, or la:<n>");

  ReportArgs report_args;
  CLI::App* rp = app.add_subcommand("report", "recompute metrics from logs or join metric files");
  rp->add_option("--logs", report_args.logs_path, "stored prediction-log file");
  rp->add_option("--corpus", report_args.corpus_path, "corpus TSV with role annotations (for FTD)");
  rp->add_option("--format", report_args.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  rp->add_option("--out", report_args.out_path, "output file (default: stdout)");
  rp->add_option("--metrics", report_args.metric_files, "metric CSVs to join into one table");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) run_gen_data(gen_args);
    if (tr->parsed()) run_train(train_args, *tr);
    if (ev->parsed()) run_eval(eval_args);
    if (st->parsed()) run_stream(stream_args);
    if (rp->parsed()) run_report(report_args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "streamdf: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
