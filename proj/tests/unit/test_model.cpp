#include <doctest.h>

#include <cmath>
#include <fstream>

#include "../test_util.hpp"
#include "xfer/io.hpp"
#include "xfer/model_io.hpp"

using namespace xfer;
using namespace xfer::testing;

TEST_CASE("parameter shapes follow the configuration") {
  ModelConfig c = tiny_config(5, 2);
  c.src_vocab_size = 9;
  c.tgt_vocab_size = 7;
  const auto p = allocate_params<float>(c);
  CHECK(p.source_embeddings.rows() == 9);
  CHECK(p.source_embeddings.cols() == 5);
  CHECK(p.source_rnn[0].input.rows() == 20);
  CHECK(p.target_rnn[0].input.cols() == 10);  // embedding and feed-input
  CHECK(p.target_attention.combine.cols() == 10);
  CHECK(p.target_attention.position_out.rows() == 1);
  CHECK(p.target_output_embeddings.cols() == 7);
  CHECK(p.target_output_bias.rows() == 7);
}

TEST_CASE("batch loss equals the sum of single-sentence losses") {
  const auto m = tiny_model<double>(1, 4, 7, 6, 2);
  const auto pairs = random_pairs(2, 5, 11, 10, 6);
  double separate = 0;
  for (const auto& p : pairs) separate += batch_nll(m, ParallelCorpus{p});
  CHECK(batch_nll(m, pairs) == doctest::Approx(separate).epsilon(1e-10));
}

TEST_CASE("tape-free decoding agrees with the teacher-forced loss") {
  const auto m = tiny_model<double>(3, 4, 7, 6, 2);
  for (const auto& p : random_pairs(4, 6, 11, 10, 5)) {
    const double lp = m.sentence_logprob(p.source, p.target);
    CHECK(lp == doctest::Approx(-batch_nll(m, ParallelCorpus{p})).epsilon(1e-10));
    // Step by step with an independent normaliser.
    const auto enc = m.encode(p.source);
    auto st = m.initial_state(enc);
    int prev = Vocabulary::kBos;
    double sum = 0;
    std::vector<int> tgt = p.target;
    tgt.push_back(Vocabulary::kEos);
    for (int y : tgt) {
      const auto out = m.decode_step(prev, st, enc);
      double z = 0;
      for (Eigen::Index i = 0; i < out.logits.rows(); ++i) z += std::exp(out.logits(i, 0));
      sum += out.logits(y, 0) - std::log(z);
      double w = 0;
      for (double a : out.attention) w += a;
      CHECK(w <= 1.0 + 1e-12);
      CHECK(out.attention.size() == p.source.size());
      st = out.state;
      prev = y;
    }
    CHECK(sum == doctest::Approx(lp).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto m = tiny_model<double>(seed, 3, 6, 5, 2);
    const auto batch = random_pairs(seed, 3, 10, 9, 4);
    CHECK(gradient_check(m, batch, seed).max_rel_error < 1e-4);
    CHECK(gradient_check(m, batch, seed, 4, 1e-5, 0.4).max_rel_error < 1e-4);
  }
}

TEST_CASE("eval mode ignores dropout settings") {
  auto m = tiny_model<double>(5);
  const auto pairs = random_pairs(6, 2, 9, 8, 4);
  const double a = m.sentence_logprob(pairs[0].source, pairs[0].target);
  m.config().dropout_p = 0.9;
  CHECK(m.sentence_logprob(pairs[0].source, pairs[0].target) == a);
}

TEST_CASE("float and double models agree") {
  const auto d = tiny_model<double>(7);
  const auto f = d.cast<float>();
  const auto pairs = random_pairs(8, 3, 9, 8, 4);
  CHECK(batch_nll(f, pairs) == doctest::Approx(batch_nll(d, pairs)).epsilon(1e-4));
}

TEST_CASE("model files round-trip bit for bit") {
  const auto dir = scratch_dir("model_io");
  const auto m = tiny_model<float>(9, 4, 6, 5, 3);
  save_model(m, dir / "m.xfm");
  const auto back = load_model(dir / "m.xfm");
  CHECK(back.config() == m.config());
  CHECK(back.source_vocab() == m.source_vocab());
  CHECK(back.target_vocab() == m.target_vocab());
  CHECK(bitwise_equal(back.params(), m.params()));
  save_model(back, dir / "n.xfm");
  CHECK(read_file(dir / "m.xfm") == read_file(dir / "n.xfm"));
}

TEST_CASE("model file corruption is detected") {
  const auto m = tiny_model<float>(10);
  const std::string bytes = serialize_model_file(to_model_file(m));

  std::string bad_magic = bytes;
  bad_magic[0] = 'Y';
  CHECK_THROWS_AS(parse_model_file(bad_magic), ModelFormatError);

  std::string bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_AS(parse_model_file(bad_version), VersionMismatchError);

  CHECK_THROWS_AS(parse_model_file(bytes.substr(0, bytes.size() - 7)), TruncatedFileError);

  std::string flipped = bytes;
  flipped[bytes.size() - 12] ^= 0x40;
  CHECK_THROWS_AS(parse_model_file(flipped), ChecksumError);

  auto file = to_model_file(m);
  file.blocks.erase(file.blocks.begin() + 2);
  const std::string missing = serialize_model_file(file);
  try {
    seq2seq_from_file(parse_model_file(missing));
    FAIL("expected MissingBlockError");
  } catch (const MissingBlockError& e) {
    CHECK(e.block_name == "target_rnn");
  }
}

TEST_CASE("invalid configurations are rejected") {
  ModelConfig c = tiny_config();
  c.src_vocab_size = 5;
  c.tgt_vocab_size = 5;
  c.hidden_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.hidden_size = 4;
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("initial weights follow init_range") {
  Rng rng(11);
  ModelConfig c;
  c.hidden_size = 16;
  c.src_vocab_size = 100;
  c.tgt_vocab_size = 100;
  c.init_range = 0.08;
  const auto p = init_params<float>(c, rng);
  double sum = 0, lo = 1, hi = -1;
  std::size_t n = 0;
  for (const auto* t : p.all_tensors())
    for (Eigen::Index i = 0; i < t->size(); ++i) {
      const double v = t->data()[i];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++n;
    }
  CHECK(n >= 10000);
  CHECK(lo >= -0.08);
  CHECK(hi <= 0.08);
  CHECK(std::abs(sum / n) <= 0.005);
}

TEST_CASE("the encoder reads the source reversed") {
  const auto m = tiny_model<double>(12, 3, 5, 4);
  const std::vector<int> src = {4, 5, 6};
  const auto enc = m.encode(src);
  const auto& p = m.params();
  std::array<Matrix<double>, 2> h, c;
  for (int l = 0; l < 2; ++l) h[l] = c[l] = Matrix<double>::Zero(3, 1);
  std::vector<Matrix<double>> top(3);
  for (int k = 2; k >= 0; --k) {  // c, b, a
    const Matrix<double> x = p.source_embeddings.row(src[k]).transpose();
    auto s0 = lstm_cell(x, h[0], c[0], p.source_rnn[0]);
    auto s1 = lstm_cell(s0.h, h[1], c[1], p.source_rnn[1]);
    h = {s0.h, s1.h};
    c = {s0.c, s1.c};
    top[k] = s1.h;
  }
  for (int k = 0; k < 3; ++k)
    for (int r = 0; r < 3; ++r) CHECK(enc.states(r, k) == doctest::Approx(top[k](r, 0)));
  for (int l = 0; l < 2; ++l) CHECK(enc.h[l].isApprox(h[l]));
}
