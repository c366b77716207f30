#include "streamdf/decoder.hpp"

#include <doctest.h>

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "streamdf/metrics.hpp"
#include "streamdf/objective.hpp"
#include "streamdf/util.hpp"

using namespace streamdf;

namespace {

EncoderConfig small_config(int vocab_size = 12, int max_len = 16) {
  EncoderConfig config;
  config.vocab_size = vocab_size;
  config.max_len = max_len;
  config.d_model = 8;
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_ff = 16;
  config.seed = 99;
  return config;
}

// Pins the wait head to a constant probability regardless of input: zero
// weights, biases +/-b so sigma(b1 - b0) saturates.
void pin_wait_head(Parameters& params, bool always_wait) {
  for (double& w : params.head_wait_w.data) w = 0.0;
  params.head_wait_b.data = always_wait ? std::vector<double>{-50.0, 50.0}
                                        : std::vector<double>{50.0, -50.0};
}

std::vector<int> random_ids(Rng& rng, int n, int vocab_size) {
  std::vector<int> ids;
  for (int t = 0; t < n; ++t)
    ids.push_back(2 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(vocab_size - 2)));
  return ids;
}

std::vector<int> random_gold(Rng& rng, int n) {
  std::vector<int> gold;
  for (int t = 0; t < n; ++t) gold.push_back(static_cast<int>(rng.next_u64() % 2));
  return gold;
}

}  // namespace

TEST_CASE("validate_log catches malformed logs") {
  PredictionLog log;
  log.utterance_id = "u";
  log.gold = {0, 1};
  log.rows = {{Decision::Fluent}, {Decision::Fluent, Decision::Disfluent}};
  CHECK_NOTHROW(validate_log(log));

  SUBCASE("empty") {
    PredictionLog empty;
    CHECK_THROWS_AS(validate_log(empty), std::invalid_argument);
  }
  SUBCASE("row count mismatch") {
    log.rows.pop_back();
    CHECK_THROWS_AS(validate_log(log), std::invalid_argument);
  }
  SUBCASE("non-triangular row") {
    log.rows[0].push_back(Decision::Fluent);
    CHECK_THROWS_AS(validate_log(log), std::invalid_argument);
  }
  SUBCASE("abstaining final row") {
    log.rows[1][1] = Decision::Abstain;
    CHECK_THROWS_AS(validate_log(log), std::invalid_argument);
  }
  SUBCASE("non-binary gold") {
    log.gold[0] = 2;
    CHECK_THROWS_AS(validate_log(log), std::invalid_argument);
  }
}

TEST_CASE("dynamic decoder rows are prefix-shaped and deterministic") {
  Encoder encoder(small_config());
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 10);
    std::vector<int> ids = random_ids(rng, n, 12);
    std::vector<int> gold = random_gold(rng, n);
    PredictionLog log = stream_decode(encoder, ids, gold, "t" + std::to_string(trial));
    CHECK_NOTHROW(validate_log(log));
    // Within each row: a defined block, then only Abstain.
    for (const auto& row : log.rows) {
      bool seen_abstain = false;
      for (Decision d : row) {
        if (d == Decision::Abstain) seen_abstain = true;
        else CHECK_FALSE(seen_abstain);
      }
    }
    CHECK(stream_decode(encoder, ids, gold, log.utterance_id) == log);

    // Restart-incremental contract: row i must match a fresh forward pass of
    // the i+1-token prefix, decision by decision.
    for (int i = 1; i <= n; ++i) {
      PrefixOutputs out = encoder.forward(std::span<const int>(ids).first(static_cast<size_t>(i)));
      Mask mask = compute_mask(wait_probabilities(out.wait_logits), 0.5);
      int cutoff = (i == n || !mask.first_wait_index) ? i : *mask.first_wait_index;
      for (int j = 0; j < i; ++j) {
        Decision expected =
            j >= cutoff ? Decision::Abstain
            : (out.disfluency_logits.at(j, 1) > out.disfluency_logits.at(j, 0)
                   ? Decision::Disfluent
                   : Decision::Fluent);
        CHECK(log.rows[static_cast<size_t>(i - 1)][static_cast<size_t>(j)] == expected);
      }
    }
  }
}

TEST_CASE("constant-zero wait head equals fixed LA=0, entry for entry") {
  EncoderConfig config = small_config();
  Encoder encoder(config);
  pin_wait_head(encoder.params(), /*always_wait=*/false);

  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 12);
    std::vector<int> ids = random_ids(rng, n, config.vocab_size);
    std::vector<int> gold = random_gold(rng, n);
    PredictionLog dynamic = stream_decode(encoder, ids, gold, "u");
    PredictionLog la0 = fixed_lookahead_decode(encoder, ids, gold, "u", 0);
    CHECK(dynamic == la0);
    for (const auto& row : dynamic.rows)
      for (Decision d : row) CHECK(d != Decision::Abstain);
  }
}

TEST_CASE("always-wait head abstains everywhere until the forced final row") {
  EncoderConfig config = small_config();
  Encoder encoder(config);
  pin_wait_head(encoder.params(), /*always_wait=*/true);

  std::vector<int> ids{3, 4, 5, 6};
  std::vector<int> gold{0, 1, 0, 0};
  PredictionLog log = stream_decode(encoder, ids, gold, "u");
  for (size_t r = 0; r + 1 < log.rows.size(); ++r)
    for (Decision d : log.rows[r]) CHECK(d == Decision::Abstain);
  for (Decision d : log.rows.back()) CHECK(d != Decision::Abstain);
  // Streaming counts collapse onto the final row's counts.
  PrfResult s = streaming_prf({&log, 1});
  PrfResult f = final_prf({&log, 1});
  CHECK(s.counts == f.counts);
  // Every token waited until the end: AWT = mean of (n-1, n-2, ..., 0).
  CHECK(average_waiting_time({&log, 1}) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("fixed lookahead abstention pattern and wait accounting") {
  EncoderConfig config = small_config();
  Encoder encoder(config);

  SUBCASE("LA=1 on |x|=3: waits (1, 1, 0)") {
    std::vector<int> ids{3, 4, 5};
    std::vector<int> gold{0, 0, 1};
    PredictionLog log = fixed_lookahead_decode(encoder, ids, gold, "u", 1);
    CHECK(log.rows[0] == std::vector<Decision>{Decision::Abstain});
    CHECK(log.rows[1][0] != Decision::Abstain);
    CHECK(log.rows[1][1] == Decision::Abstain);
    for (Decision d : log.rows[2]) CHECK(d != Decision::Abstain);
    CHECK(average_waiting_time({&log, 1}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("LA=0 never abstains and has zero AWT") {
    std::vector<int> ids{3, 4, 5, 6, 7};
    std::vector<int> gold{0, 0, 0, 1, 1};
    PredictionLog log = fixed_lookahead_decode(encoder, ids, gold, "u", 0);
    for (const auto& row : log.rows)
      for (Decision d : row) CHECK(d != Decision::Abstain);
    CHECK(average_waiting_time({&log, 1}) == 0.0);
    CHECK(edit_overhead({&log, 1}) >= 0.0);
  }
  SUBCASE("negative LA is rejected") {
    std::vector<int> ids{3};
    std::vector<int> gold{0};
    CHECK_THROWS_AS(fixed_lookahead_decode(encoder, ids, gold, "u", -1),
                    std::invalid_argument);
  }
}

TEST_CASE("fixed LA=2 approaches AWT = 2 on a long utterance") {
  EncoderConfig config = small_config(12, 201);
  Encoder encoder(config);
  Rng rng(3);
  const int n = 200;
  std::vector<int> ids = random_ids(rng, n, config.vocab_size);
  std::vector<int> gold = random_gold(rng, n);
  PredictionLog log = fixed_lookahead_decode(encoder, ids, gold, "long", 2);
  double awt = average_waiting_time({&log, 1});
  CHECK(awt == doctest::Approx(2.0).epsilon(0.015));  // (198*2 + 1 + 0) / 200
  CHECK(awt < 2.0);
}

TEST_CASE("AWT of fixed-LA decoding is nondecreasing in LA") {
  GeneratorConfig gen;
  gen.seed = 5;
  std::vector<Utterance> corpus = generate_corpus(gen, 12);
  Vocabulary vocab = Vocabulary::build(corpus);
  EncoderConfig config = small_config(vocab.size(), 64);
  Encoder encoder(config);
  double previous = -1.0;
  for (int la = 0; la <= 3; ++la) {
    auto logs = decode_corpus(encoder, vocab, corpus, FixedLookaheadDecoder{la});
    double awt = average_waiting_time(logs);
    CHECK(awt >= previous);
    previous = awt;
  }
}

TEST_CASE("EO of a fixed-LA constant-argmax model is zero at any LA") {
  // An untrained encoder is deterministic per prefix but its decisions can
  // change between prefixes; a constant model cannot. Pin the disfluency head
  // to always say Fluent via its bias.
  EncoderConfig config = small_config();
  Encoder encoder(config);
  for (double& w : encoder.params().head_disfluency_w.data) w = 0.0;
  encoder.params().head_disfluency_b.data = {50.0, -50.0};
  Rng rng(17);
  for (int la = 0; la <= 2; ++la) {
    std::vector<int> ids = random_ids(rng, 9, config.vocab_size);
    std::vector<int> gold = random_gold(rng, 9);
    PredictionLog log = fixed_lookahead_decode(encoder, ids, gold, "u", la);
    CHECK(edit_overhead({&log, 1}) == 0.0);
    CHECK(count_reabstentions(log) == 0);
  }
}

TEST_CASE("render_output spec examples") {
  std::vector<std::string> tokens{"I", "think", "the"};
  SUBCASE("trailing abstention renders a single wait marker") {
    std::vector<Decision> row{Decision::Fluent, Decision::Fluent, Decision::Abstain};
    CHECK(render_output(row, tokens) == "I think ⟨WAIT⟩");
  }
  SUBCASE("suppressed disfluencies render as markers") {
    std::vector<std::string> t2{"the", "real", "the", "principal"};
    std::vector<Decision> row{Decision::Disfluent, Decision::Disfluent, Decision::Fluent,
                              Decision::Fluent};
    CHECK(render_output(row, t2) == "⟨DIS⟩ ⟨DIS⟩ the principal");
  }
  SUBCASE("all fluent renders the prefix verbatim") {
    std::vector<Decision> row{Decision::Fluent, Decision::Fluent, Decision::Fluent};
    CHECK(render_output(row, tokens) == "I think the");
  }
  SUBCASE("all abstain renders only the wait marker") {
    std::vector<Decision> row{Decision::Abstain};
    CHECK(render_output(row, tokens) == "⟨WAIT⟩");
  }
  SUBCASE("more decisions than tokens is an error") {
    std::vector<Decision> row(4, Decision::Fluent);
    CHECK_THROWS_AS(render_output(row, tokens), std::invalid_argument);
  }
}

TEST_CASE("decoder spec parsing") {
  CHECK(std::get<DynamicDecoder>(parse_decoder_spec("dynamic")).threshold == 0.5);
  CHECK(std::get<DynamicDecoder>(parse_decoder_spec("dynamic:0.7")).threshold == 0.7);
  CHECK(std::get<FixedLookaheadDecoder>(parse_decoder_spec("la:2")).la == 2);
  CHECK(std::get<FixedLookaheadDecoder>(parse_decoder_spec("la:0")).la == 0);
  CHECK(decoder_spec_name(parse_decoder_spec("dynamic")) == "dynamic");
  CHECK(decoder_spec_name(parse_decoder_spec("la:3")) == "la:3");
  for (const char* bad : {"", "foo", "la:", "la:-1", "la:2x", "la:1.5", "dynamic:",
                          "dynamic:0", "dynamic:1", "dynamic:1.5", "dynamic:x", "LA:1"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_decoder_spec(bad), std::invalid_argument);
  }
}

TEST_CASE("prediction-log serialization round-trips bit-exactly") {
  GeneratorConfig gen;
  gen.seed = 21;
  std::vector<Utterance> corpus = generate_corpus(gen, 25);
  Vocabulary vocab = Vocabulary::build(corpus);
  EncoderConfig config = small_config(vocab.size(), 64);
  Encoder encoder(config);

  std::vector<PredictionLog> logs = decode_corpus(encoder, vocab, corpus, DynamicDecoder{});
  std::string text = logs_to_string(logs);
  std::istringstream in(text);
  std::vector<PredictionLog> parsed = parse_logs(in, "mem");
  REQUIRE(parsed.size() == logs.size());
  CHECK(parsed == logs);
  CHECK(logs_to_string(parsed) == text);

  const std::string path = "roundtrip_logs.tsv";
  write_log_file(logs, path);
  CHECK(parse_log_file(path) == logs);
  std::remove(path.c_str());
}

TEST_CASE("prediction-log parse errors carry line numbers") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_logs(in, "src");
  };
  auto check_error = [&](const std::string& text, const std::string& fragment) {
    try {
      parse(text);
      FAIL_CHECK("expected parse failure for: " << text);
    } catch (const std::runtime_error& e) {
      CAPTURE(text);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  check_error("u0 3\n", "src:1");                       // no tab in header
  check_error("u0\tzero\n", "bad utterance length");    // non-numeric length
  check_error("u0\t2\nF\nFFF\n01\n", "src:3");          // wrong row length
  check_error("u0\t1\nQ\n0\n", "unknown decision");     // bad symbol
  check_error("u0\t1\nF\n2\n", "gold symbols");         // bad gold digit
  check_error("u0\t1\nF\n00\n", "gold line length");    // gold too long
  check_error("u0\t2\nF\nF.\n01\n", "abstains");        // final row abstains
  check_error("u0\t2\nF\n", "unexpected end of file");  // truncated record

  // Blank lines between records are optional; CRLF is tolerated.
  auto logs = parse("u0\t1\r\nF\r\n0\r\nu1\t1\nD\n1\n");
  REQUIRE(logs.size() == 2);
  CHECK(logs[0].utterance_id == "u0");
  CHECK(logs[1].rows[0][0] == Decision::Disfluent);
}

TEST_CASE("decode_utterance maps unseen words through <unk>") {
  Utterance train;
  train.id = "train";
  train.tokens = {"alpha", "beta"};
  train.roles = {TokenRole::Fluent, TokenRole::Fluent};
  train.labels = {0, 0};
  Vocabulary vocab = Vocabulary::build({{train}});
  EncoderConfig config = small_config(vocab.size(), 8);
  Encoder encoder(config);

  Utterance test;
  test.id = "test";
  test.tokens = {"alpha", "never-seen"};
  test.roles = {TokenRole::Fluent, TokenRole::Reparandum};
  test.labels = derive_binary_labels(test.roles);

  PredictionLog log = decode_utterance(encoder, vocab, test, DynamicDecoder{});
  CHECK(log.utterance_id == "test");
  CHECK(log.length() == 2);
  CHECK(log.gold == std::vector<int>{0, 1});

  // The unknown word must have been encoded as <unk>, not rejected.
  std::vector<int> ids = encode_tokens(vocab, test);
  CHECK(ids[1] == Vocabulary::kUnkId);
  CHECK(stream_decode(encoder, ids, test.labels, "test") == log);
}
