#include "streamdf/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "streamdf/decoder.hpp"
#include "streamdf/util.hpp"

namespace streamdf {

namespace {

// One training/evaluation example: ids and labels, possibly truncated.
struct Example {
  std::vector<int> ids;
  std::vector<int> labels;
  bool truncated = false;
};

Example make_example(const Utterance& utt, const Vocabulary& vocab, int cap) {
  Example ex;
  ex.ids = encode_tokens(vocab, utt);
  ex.labels = utt.labels;
  if (static_cast<int>(ex.ids.size()) > cap) {
    ex.ids.resize(static_cast<size_t>(cap));
    ex.labels.resize(static_cast<size_t>(cap));
    ex.truncated = true;
  }
  return ex;
}

int effective_cap(const EncoderConfig& config, int max_prefix_len) {
  int encoder_cap = config.max_len - (config.use_start_marker ? 1 : 0);
  return std::min(max_prefix_len, encoder_cap);
}

// Utterance copies cut to the cap, so the decoder and metrics see the same
// sequences the trainer saw.
std::vector<Utterance> truncate_corpus(std::span<const Utterance> corpus, int cap,
                                       long* truncated_count) {
  std::vector<Utterance> out;
  out.reserve(corpus.size());
  for (const Utterance& utt : corpus) {
    Utterance copy = utt;
    if (static_cast<int>(copy.tokens.size()) > cap) {
      copy.tokens.resize(static_cast<size_t>(cap));
      copy.roles.resize(static_cast<size_t>(cap));
      copy.labels.resize(static_cast<size_t>(cap));
      if (truncated_count) ++*truncated_count;
    }
    out.push_back(std::move(copy));
  }
  return out;
}

// Elementwise optimizer steps over the fixed named-tensor order. The
// gradient buffer holds a batch sum; `scale` folds in the 1/batch mean.
void sgd_step(Parameters& params, const Parameters& grads, double lr, double scale) {
  auto p = params.named_tensors();
  auto g = grads.named_tensors();
  for (size_t t = 0; t < p.size(); ++t) {
    double* pd = p[t].second->data.data();
    const double* gd = g[t].second->data.data();
    const size_t n = p[t].second->data.size();
    for (size_t i = 0; i < n; ++i) pd[i] -= lr * (gd[i] * scale);
  }
}

void adam_step(Parameters& params, const Parameters& grads, Parameters& m, Parameters& v,
               const TrainConfig& config, long step, double scale) {
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
  auto p = params.named_tensors();
  auto g = grads.named_tensors();
  auto mt = m.named_tensors();
  auto vt = v.named_tensors();
  for (size_t t = 0; t < p.size(); ++t) {
    double* pd = p[t].second->data.data();
    const double* gd = g[t].second->data.data();
    double* md = mt[t].second->data.data();
    double* vd = vt[t].second->data.data();
    const size_t n = p[t].second->data.size();
    for (size_t i = 0; i < n; ++i) {
      const double grad = gd[i] * scale;
      md[i] = b1 * md[i] + (1.0 - b1) * grad;
      vd[i] = b2 * vd[i] + (1.0 - b2) * grad * grad;
      const double m_hat = md[i] / correction1;
      const double v_hat = vd[i] / correction2;
      pd[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
  }
}

bool parse_bool(const std::string& value, bool& out) {
  if (value == "true" || value == "1") { out = true; return true; }
  if (value == "false" || value == "0") { out = false; return true; }
  return false;
}

bool parse_int_value(const std::string& value, int& out) {
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  return ec == std::errc{} && ptr == value.data() + value.size();
}

bool parse_u64_value(const std::string& value, uint64_t& out) {
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  return ec == std::errc{} && ptr == value.data() + value.size();
}

bool parse_double_value(const std::string& value, double& out) {
  try {
    size_t used = 0;
    out = std::stod(value, &used);
    return used == value.size();
  } catch (...) {
    return false;
  }
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string optimizer_name(Optimizer optimizer) {
  return optimizer == Optimizer::Adam ? "adam" : "sgd";
}

std::optional<Optimizer> optimizer_from_string(std::string_view name) {
  if (name == "adam") return Optimizer::Adam;
  if (name == "sgd") return Optimizer::Sgd;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_prefix_len < 1) throw std::invalid_argument("max_prefix_len must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("adam_epsilon must be > 0");
  loss.validate();
}

std::string TrainReport::to_csv() const {
  std::ostringstream out;
  out << "epoch,full,prefix,latency,total,dev_streaming_f1\n";
  for (size_t e = 0; e < epochs.size(); ++e) {
    const EpochStats& s = epochs[e];
    out << (e + 1) << ',' << format_double(s.train_mean.full) << ','
        << format_double(s.train_mean.prefix) << ',' << format_double(s.train_mean.latency) << ','
        << format_double(s.train_mean.total) << ','
        << (s.dev_streaming_f1.defined ? format_double(s.dev_streaming_f1.value) : "NA") << '\n';
  }
  return out.str();
}

std::vector<std::vector<int>> enumerate_prefixes(std::span<const int> token_ids) {
  std::vector<std::vector<int>> prefixes;
  prefixes.reserve(token_ids.size());
  for (size_t len = 1; len <= token_ids.size(); ++len)
    prefixes.emplace_back(token_ids.begin(), token_ids.begin() + static_cast<ptrdiff_t>(len));
  return prefixes;
}

LossBreakdown evaluate_loss(const Encoder& encoder, std::span<const Utterance> corpus,
                            const Vocabulary& vocab, const LossConfig& loss_config,
                            int max_prefix_len) {
  if (corpus.empty()) throw std::invalid_argument("evaluate_loss: empty corpus");
  const int cap = effective_cap(encoder.config(), max_prefix_len);
  LossBreakdown sum;
  for (const Utterance& utt : corpus) {
    Example ex = make_example(utt, vocab, cap);
    sum += example_loss(encoder, ex.ids, ex.labels, loss_config);
  }
  return sum.scaled(1.0 / static_cast<double>(corpus.size()));
}

Flagged evaluate_streaming_f1(const Encoder& encoder, std::span<const Utterance> corpus,
                              const Vocabulary& vocab, double threshold, int max_prefix_len) {
  if (corpus.empty()) throw std::invalid_argument("evaluate_streaming_f1: empty corpus");
  const int cap = effective_cap(encoder.config(), max_prefix_len);
  std::vector<Utterance> capped = truncate_corpus(corpus, cap, nullptr);
  std::vector<PredictionLog> logs =
      decode_corpus(encoder, vocab, capped, DynamicDecoder{threshold});
  PrfResult prf = streaming_prf(logs);
  return prf.f1;
}

TrainResult train(std::span<const Utterance> train_corpus, std::span<const Utterance> dev_corpus,
                  EncoderConfig encoder_config, const TrainConfig& train_config) {
  if (train_corpus.empty() || dev_corpus.empty())
    throw std::invalid_argument("train: corpora must be non-empty");
  train_config.validate();

  Vocabulary vocab = Vocabulary::build(
      std::vector<Utterance>(train_corpus.begin(), train_corpus.end()));
  if (encoder_config.vocab_size == 0) {
    encoder_config.vocab_size = vocab.size();
  } else if (encoder_config.vocab_size != vocab.size()) {
    throw std::invalid_argument("train: configured vocab_size " +
                                std::to_string(encoder_config.vocab_size) +
                                " does not match the corpus vocabulary (" +
                                std::to_string(vocab.size()) + " words)");
  }
  encoder_config.validate();

  Encoder encoder(encoder_config);
  const int cap = effective_cap(encoder_config, train_config.max_prefix_len);
  const bool train_mode = encoder_config.dropout_rate > 0.0;

  TrainReport report;
  std::vector<Example> examples;
  examples.reserve(train_corpus.size());
  for (const Utterance& utt : train_corpus) {
    examples.push_back(make_example(utt, vocab, cap));
    if (examples.back().truncated) ++report.truncated_train;
  }
  std::vector<Utterance> dev_capped = truncate_corpus(dev_corpus, cap, &report.truncated_dev);

  Parameters grads = Parameters::zeros(encoder_config);
  Parameters adam_m = Parameters::zeros(encoder_config);
  Parameters adam_v = Parameters::zeros(encoder_config);
  Parameters best_params = encoder.params();
  // Undefined F1 keys as -1; starting below that guarantees epoch 1 replaces
  // the untrained snapshot even when dev F1 never becomes defined.
  double best_f1_key = -std::numeric_limits<double>::infinity();
  long adam_steps = 0;
  uint64_t example_counter = 0;

  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(train_config.shuffle_seed, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    LossBreakdown epoch_sum;
    size_t cursor = 0;
    int batch_index = 0;
    while (cursor < order.size()) {
      const size_t batch_end =
          std::min(order.size(), cursor + static_cast<size_t>(train_config.batch_size));
      const auto batch_n = static_cast<double>(batch_end - cursor);
      grads.zero_all();
      for (size_t b = cursor; b < batch_end; ++b) {
        const Example& ex = examples[order[b]];
        uint64_t dropout_seed = mix_seed(train_config.shuffle_seed, ++example_counter);
        try {
          epoch_sum += example_gradient(encoder, ex.ids, ex.labels, train_config.loss, grads,
                                        train_mode, dropout_seed);
        } catch (const std::exception& e) {
          throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index) + ": " + e.what());
        }
      }
      if (!grads.all_finite())
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index) +
                                 ": non-finite gradient");
      if (train_config.optimizer == Optimizer::Adam) {
        adam_step(encoder.params(), grads, adam_m, adam_v, train_config, ++adam_steps,
                  1.0 / batch_n);
      } else {
        sgd_step(encoder.params(), grads, train_config.learning_rate, 1.0 / batch_n);
      }
      if (!encoder.params().all_finite())
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index) +
                                 ": non-finite parameter after update");
      cursor = batch_end;
      ++batch_index;
    }

    EpochStats stats;
    stats.train_mean = epoch_sum.scaled(1.0 / static_cast<double>(examples.size()));
    stats.dev_mean =
        evaluate_loss(encoder, dev_corpus, vocab, train_config.loss, train_config.max_prefix_len);
    std::vector<PredictionLog> dev_logs =
        decode_corpus(encoder, vocab, dev_capped, DynamicDecoder{train_config.loss.wait_threshold});
    stats.dev_streaming_f1 = streaming_prf(dev_logs).f1;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                        .count();
    report.epochs.push_back(stats);

    const double f1_key = stats.dev_streaming_f1.defined ? stats.dev_streaming_f1.value : -1.0;
    if (f1_key > best_f1_key) {  // strictly greater: earliest best epoch wins ties
      best_f1_key = f1_key;
      best_params = encoder.params();
      report.best_epoch = epoch;
      report.best_dev_f1 = stats.dev_streaming_f1;
    }
  }

  return TrainResult{std::move(best_params), std::move(vocab), std::move(report)};
}

TrainSetup desk_preset() {
  TrainSetup setup;
  setup.encoder.vocab_size = 0;  // derived from the training corpus
  setup.encoder.max_len = 64;
  setup.encoder.d_model = 32;
  setup.encoder.n_layers = 2;
  setup.encoder.n_heads = 2;
  setup.encoder.d_ff = 64;
  setup.encoder.dropout_rate = 0.0;
  setup.encoder.seed = 1;
  setup.encoder.use_start_marker = false;
  setup.train.learning_rate = 1e-3;
  setup.train.epochs = 8;
  setup.train.batch_size = 8;
  setup.train.optimizer = Optimizer::Adam;
  setup.train.loss.gamma = 1.9;
  setup.train.loss.lambda = 1e-3;  // from the lambda grid against dev streaming F1
  setup.train.loss.wait_threshold = 0.5;
  setup.train.loss.mask_mode = MaskMode::SoftRelaxation;
  setup.train.shuffle_seed = 1;
  setup.train.max_prefix_len = 60;
  return setup;
}

TrainSetup paper_preset() {
  TrainSetup setup = desk_preset();
  setup.train.learning_rate = 1.2e-4;
  setup.train.epochs = 12;
  setup.train.batch_size = 8;
  setup.train.loss.gamma = 1.9;
  setup.train.loss.lambda = 1.5e-7;
  return setup;
}

std::optional<TrainSetup> preset_by_name(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  return std::nullopt;
}

TrainSetup parse_train_setup(std::istream& in, const std::string& source_name,
                             const TrainSetup& base) {
  TrainSetup setup = base;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(source_name + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    size_t eq = text.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (value.empty()) fail("empty value for key '" + key + "'");

    bool ok = true;
    if (key == "vocab_size") ok = parse_int_value(value, setup.encoder.vocab_size);
    else if (key == "max_len") ok = parse_int_value(value, setup.encoder.max_len);
    else if (key == "d_model") ok = parse_int_value(value, setup.encoder.d_model);
    else if (key == "n_layers") ok = parse_int_value(value, setup.encoder.n_layers);
    else if (key == "n_heads") ok = parse_int_value(value, setup.encoder.n_heads);
    else if (key == "d_ff") ok = parse_int_value(value, setup.encoder.d_ff);
    else if (key == "dropout_rate") ok = parse_double_value(value, setup.encoder.dropout_rate);
    else if (key == "seed") ok = parse_u64_value(value, setup.encoder.seed);
    else if (key == "use_start_marker") ok = parse_bool(value, setup.encoder.use_start_marker);
    else if (key == "gamma") ok = parse_double_value(value, setup.train.loss.gamma);
    else if (key == "lambda") ok = parse_double_value(value, setup.train.loss.lambda);
    else if (key == "wait_threshold")
      ok = parse_double_value(value, setup.train.loss.wait_threshold);
    else if (key == "mask_mode") {
      auto mode = mask_mode_from_string(value);
      if (!mode) fail("unknown mask_mode '" + value + "'");
      setup.train.loss.mask_mode = *mode;
    } else if (key == "learning_rate")
      ok = parse_double_value(value, setup.train.learning_rate);
    else if (key == "epochs") ok = parse_int_value(value, setup.train.epochs);
    else if (key == "batch_size") ok = parse_int_value(value, setup.train.batch_size);
    else if (key == "optimizer") {
      auto opt = optimizer_from_string(value);
      if (!opt) fail("unknown optimizer '" + value + "' (expected adam or sgd)");
      setup.train.optimizer = *opt;
    } else if (key == "adam_beta1") ok = parse_double_value(value, setup.train.adam_beta1);
    else if (key == "adam_beta2") ok = parse_double_value(value, setup.train.adam_beta2);
    else if (key == "adam_epsilon") ok = parse_double_value(value, setup.train.adam_epsilon);
    else if (key == "shuffle_seed") ok = parse_u64_value(value, setup.train.shuffle_seed);
    else if (key == "max_prefix_len") ok = parse_int_value(value, setup.train.max_prefix_len);
    else fail("unknown key '" + key + "'");
    if (!ok) fail("bad value '" + value + "' for key '" + key + "'");
  }
  return setup;
}

TrainSetup parse_train_setup_file(const std::string& path, const TrainSetup& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_train_setup(in, path, base);
}

std::string train_setup_to_string(const TrainSetup& setup) {
  std::ostringstream out;
  out << "# encoder\n";
  out << "vocab_size = " << setup.encoder.vocab_size << '\n';
  out << "max_len = " << setup.encoder.max_len << '\n';
  out << "d_model = " << setup.encoder.d_model << '\n';
  out << "n_layers = " << setup.encoder.n_layers << '\n';
  out << "n_heads = " << setup.encoder.n_heads << '\n';
  out << "d_ff = " << setup.encoder.d_ff << '\n';
  out << "dropout_rate = " << format_double(setup.encoder.dropout_rate) << '\n';
  out << "seed = " << setup.encoder.seed << '\n';
  out << "use_start_marker = " << (setup.encoder.use_start_marker ? "true" : "false") << '\n';
  out << "# loss\n";
  out << "gamma = " << format_double(setup.train.loss.gamma) << '\n';
  out << "lambda = " << format_double(setup.train.loss.lambda) << '\n';
  out << "wait_threshold = " << format_double(setup.train.loss.wait_threshold) << '\n';
  out << "mask_mode = " << mask_mode_name(setup.train.loss.mask_mode) << '\n';
  out << "# trainer\n";
  out << "learning_rate = " << format_double(setup.train.learning_rate) << '\n';
  out << "epochs = " << setup.train.epochs << '\n';
  out << "batch_size = " << setup.train.batch_size << '\n';
  out << "optimizer = " << optimizer_name(setup.train.optimizer) << '\n';
  out << "adam_beta1 = " << format_double(setup.train.adam_beta1) << '\n';
  out << "adam_beta2 = " << format_double(setup.train.adam_beta2) << '\n';
  out << "adam_epsilon = " << format_double(setup.train.adam_epsilon) << '\n';
  out << "shuffle_seed = " << setup.train.shuffle_seed << '\n';
  out << "max_prefix_len = " << setup.train.max_prefix_len << '\n';
  return out.str();
}

double grid_search_lambda(std::span<const Utterance> train_corpus,
                          std::span<const Utterance> dev_corpus, const TrainSetup& setup,
                          std::span<const double> lambda_grid) {
  if (lambda_grid.empty()) throw std::invalid_argument("grid_search_lambda: empty grid");
  double best_lambda = lambda_grid.front();
  double best_key = -2.0;
  for (double lambda : lambda_grid) {
    TrainSetup candidate = setup;
    candidate.train.loss.lambda = lambda;
    TrainResult result = train(train_corpus, dev_corpus, candidate.encoder, candidate.train);
    const double key = result.report.best_dev_f1.defined ? result.report.best_dev_f1.value : -1.0;
    if (key > best_key) {
      best_key = key;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace streamdf
