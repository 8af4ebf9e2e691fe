// xferlab: train, transfer, decode, rescore and evaluate translation models.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xfer/bleu.hpp"
#include "xfer/config.hpp"
#include "xfer/corpus.hpp"
#include "xfer/decoder.hpp"
#include "xfer/error.hpp"
#include "xfer/io.hpp"
#include "xfer/lm.hpp"
#include "xfer/model_io.hpp"
#include "xfer/rescorer.hpp"
#include "xfer/synth.hpp"
#include "xfer/trainer.hpp"
#include "xfer/transfer.hpp"

namespace fs = std::filesystem;
using namespace xfer;

namespace {

// Keys accepted in a train / lm-train config file. Flags win over the file.
constexpr std::initializer_list<const char*> kTrainKeys = {
    "hidden_size", "attention_window", "init_range",   "dropout_p", "minibatch_size",
    "lr",          "decay",            "clip_threshold", "epochs",  "l2",
    "seed",        "src_vocab_max",    "tgt_vocab_max"};

struct TrainArgs {
  std::string config;
  std::vector<std::string> train, dev;
  std::string out, curve;
  std::optional<std::uint64_t> seed;
  std::string init_from;
  std::string freeze;
  std::string assignment = "random";
  std::optional<double> l2;
  std::vector<std::string> overrides;
  bool quiet = false;
};

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Config c = path.empty() ? Config{} : Config::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

TrainConfig train_config(const Config& c, std::optional<std::uint64_t> seed,
                         std::optional<double> l2) {
  TrainConfig t;
  t.minibatch_size = c.get_int("minibatch_size", t.minibatch_size);
  t.lr = c.get_real("lr", t.lr);
  t.decay = c.get_real("decay", t.decay);
  t.clip_threshold = c.get_real("clip_threshold", t.clip_threshold);
  t.epochs = c.get_int("epochs", t.epochs);
  t.dropout_p = c.get_real("dropout_p", t.dropout_p);
  t.l2 = l2 ? *l2 : c.get_real("l2", t.l2);
  t.seed = seed ? *seed : static_cast<std::uint64_t>(c.get_int("seed", 1));
  t.validate();
  return t;
}

ModelConfig model_config(const Config& c) {
  ModelConfig m;
  m.hidden_size = c.get_int("hidden_size", m.hidden_size);
  m.attention_window = c.get_int("attention_window", m.attention_window);
  m.init_range = c.get_real("init_range", m.init_range);
  m.dropout_p = c.get_real("dropout_p", m.dropout_p);
  return m;
}

// "dict:a.tt,b.tt" composes the tables left to right (child -> ... -> parent).
AssignmentMap make_assignment(const std::string& choice, const Vocabulary& child,
                              const Vocabulary& parent, std::uint64_t seed) {
  if (choice == "random") return random_assignment(child.size(), parent.size(), seed);
  if (choice.rfind("dict:", 0) == 0) {
    std::vector<std::string> files;
    std::stringstream ss(choice.substr(5));
    for (std::string f; std::getline(ss, f, ',');)
      if (!f.empty()) files.push_back(f);
    if (files.empty()) throw UsageError("--assignment dict: needs at least one t-table file");
    TTable composed = TTable::load(files.front());
    for (std::size_t i = 1; i < files.size(); ++i)
      composed = compose_ttables(composed, TTable::load(files[i]));
    return dictionary_assignment(composed, child, parent, seed);
  }
  throw UsageError("--assignment must be 'random' or 'dict:<ttable files>', got '" + choice + "'");
}

void require_pair(const std::vector<std::string>& files, const char* flag) {
  if (files.size() != 2) throw UsageError(std::string(flag) + " expects SOURCE TARGET");
}

int run_train(const TrainArgs& a) {
  require_pair(a.train, "--train");
  require_pair(a.dev, "--dev");
  const Config cfg = load_config(a.config, a.overrides);
  cfg.check_known(kTrainKeys);
  auto tc = train_config(cfg, a.seed, a.l2);
  if (!a.quiet) tc.log = &std::cerr;
  const FreezeMask mask = FreezeMask::parse(a.freeze);

  const Bitext train_text = read_bitext(a.train[0], a.train[1]);
  const Bitext dev_text = read_bitext(a.dev[0], a.dev[1]);
  const auto src_max = static_cast<std::size_t>(cfg.get_int("src_vocab_max", 0));
  const auto tgt_max = static_cast<std::size_t>(cfg.get_int("tgt_vocab_max", 0));
  Vocabulary src_vocab = Vocabulary::build(train_text.source, src_max);

  Seq2Seq<float> model;
  std::optional<ParameterBlocks<float>> anchor;
  if (a.init_from.empty()) {
    Rng rng(tc.seed);
    auto mc = model_config(cfg);
    model = Seq2Seq<float>::create(mc, src_vocab, Vocabulary::build(train_text.target, tgt_max),
                                   rng);
  } else {
    const ModelFile parent_file = read_model_file(a.init_from);
    const std::string parent_name = fs::path(a.init_from).filename().string();
    if (parent_file.header_value("kind") == "lm") {
      // LM parent: decoder LSTM and target embeddings come from the LM, the
      // rest is fresh.
      const auto lm = lm_from_file(parent_file);
      Rng rng(tc.seed);
      auto mc = model_config(cfg);
      mc.hidden_size = lm.config().hidden_size;
      mc.parent = parent_name;
      model = lm_as_parent(lm, Seq2Seq<float>::create(mc, src_vocab, lm.vocab(), rng));
    } else {
      const auto parent = seq2seq_from_file(parent_file);
      // The child keeps the parent's target vocabulary so that frozen target
      // embeddings stay meaningful.
      AssignmentMap map;
      if (a.assignment == "identity") {
        src_vocab = parent.source_vocab();
        map = identity_assignment(src_vocab.size());
      } else {
        map = make_assignment(a.assignment, src_vocab, parent.source_vocab(), tc.seed);
      }
      TransferOptions o;
      o.parent = parent_name;
      o.seed = tc.seed;
      model = transfer_init(parent, src_vocab, parent.target_vocab(), map, o);
      if (tc.l2 > 0) anchor = model.params();
    }
    if (cfg.has("dropout_p")) model.config().dropout_p = tc.dropout_p;
  }
  if (tc.l2 > 0 && !anchor)
    throw UsageError("--l2 needs a bilingual parent given with --init-from");

  const auto train_set = encode_bitext(train_text, model.source_vocab(), model.target_vocab());
  const auto dev_set = encode_bitext(dev_text, model.source_vocab(), model.target_vocab());
  auto result = train(std::move(model), train_set, dev_set, tc, mask, anchor ? &*anchor : nullptr);
  save_model(result.model, a.out);
  result.curve.write_csv(a.curve.empty() ? a.out + ".curve.csv" : a.curve);
  return 0;
}

struct DecodeArgs {
  std::string models, input, output, unk_dict, mode = "prob";
  int beam = 5, max_len = 50, nbest = 0;
  std::uint64_t seed = 1;
};

int run_decode(const DecodeArgs& a) {
  if (a.beam < 1) throw UsageError("--beam must be >= 1");
  if (a.max_len < 1) throw UsageError("--max-len must be >= 1");
  if (a.nbest < 0) throw UsageError("--nbest must be >= 0");
  std::vector<Seq2Seq<float>> models;
  std::stringstream ss(a.models);
  for (std::string f; std::getline(ss, f, ',');)
    if (!f.empty()) models.push_back(load_model(f));
  if (models.empty()) throw UsageError("--model needs at least one file");
  std::vector<const Seq2Seq<float>*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  if (a.mode != "prob" && a.mode != "log")
    throw UsageError("--ensemble-mode must be 'prob' or 'log'");
  const Ensemble<float> ensemble(ptrs, a.mode == "prob" ? EnsembleMode::Probability
                                                        : EnsembleMode::LogSpace);
  std::optional<TTable> dict;
  if (!a.unk_dict.empty()) dict = TTable::load(a.unk_dict);

  const auto input = read_corpus(a.input);
  std::ostringstream out;
  NBestList nbest;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const auto source = ensemble.source_vocab().encode(input[i]);
    const auto hyps =
        beam_search(ensemble, source, BeamOptions{std::max(a.beam, a.nbest), a.max_len});
    if (a.nbest == 0) {
      if (!hyps.empty())
        out << join(unk_replace(hyps.front(), ensemble.target_vocab(), input[i],
                                dict ? &*dict : nullptr));
      out << '\n';
      continue;
    }
    NBestSentence sent;
    sent.id = static_cast<int>(i);
    for (std::size_t k = 0; k < hyps.size() && k < std::size_t(a.nbest); ++k) {
      NBestEntry e;
      e.tokens = unk_replace(hyps[k], ensemble.target_vocab(), input[i], dict ? &*dict : nullptr);
      e.features["nmt"] = hyps[k].score();
      e.total = hyps[k].score();
      e.origin_rank = static_cast<int>(k) + 1;
      sent.entries.push_back(std::move(e));
    }
    nbest.sentences.push_back(std::move(sent));
  }
  const std::string text = a.nbest == 0 ? out.str() : nbest.to_string();
  if (a.output.empty())
    std::cout << text;
  else
    write_file_atomic(a.output, text);
  return 0;
}

struct RescoreArgs {
  std::string nbest, weights, source, model, feature = "nmt", lm, lm_feature = "lm", output,
                                       nbest_out;
  std::uint64_t seed = 1;
};

NBestList augmented_nbest(const RescoreArgs& a) {
  NBestList nbest = NBestList::load(a.nbest);
  if (!a.model.empty()) {
    if (a.source.empty()) throw UsageError("--model needs --source");
    const auto source = read_corpus(a.source);
    add_feature(nbest, source, load_model(a.model), a.feature);
  }
  if (!a.lm.empty()) add_feature(nbest, load_lm(a.lm), a.lm_feature);
  if (!a.nbest_out.empty()) nbest.save(a.nbest_out);
  return nbest;
}

int run_rescore(const RescoreArgs& a) {
  const NBestList nbest = augmented_nbest(a);
  const Weights w = load_weights(a.weights);
  std::ostringstream out;
  for (const auto* e : rerank(nbest, w)) out << join(e->tokens) << '\n';
  if (a.output.empty())
    std::cout << out.str();
  else
    write_file_atomic(a.output, out.str());
  return 0;
}

struct TuneArgs {
  RescoreArgs rescore;
  std::string reference;
  std::vector<std::string> features;
  double step = 0.1;
};

int run_tune(const TuneArgs& a) {
  const NBestList nbest = augmented_nbest(a.rescore);
  const auto refs = read_corpus(a.reference);
  std::vector<std::string> names = {kExternalFeature};
  for (const auto& f : a.features)
    if (f != kExternalFeature) names.push_back(f);
  const auto result = tune_weights(nbest, refs, names, simplex_grid(names.size(), a.step));
  save_weights(a.rescore.weights, result.weights);
  std::printf("BLEU=%.4f\n", result.bleu);
  return 0;
}

std::string bleu_string(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  while (s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

int run_eval(const std::string& hyp, const std::string& ref) {
  const auto stats = corpus_stats(read_corpus(hyp), read_corpus(ref));
  std::printf("BLEU = %.2f, %.1f/%.1f/%.1f/%.1f (BP=%.3f, hyp_len=%ld, ref_len=%ld)\n",
              stats.score(), 100 * stats.precision(1), 100 * stats.precision(2),
              100 * stats.precision(3), 100 * stats.precision(4), stats.brevity_penalty(),
              stats.hyp_len, stats.ref_len);
  std::printf("BLEU=%s\n", bleu_string(stats.score()).c_str());
  return 0;
}

struct LmArgs {
  std::string config, train, dev, out, curve;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool quiet = false;
};

int run_lm_train(const LmArgs& a) {
  const Config cfg = load_config(a.config, a.overrides);
  cfg.check_known(kTrainKeys);
  auto tc = train_config(cfg, a.seed, std::nullopt);
  if (tc.l2 > 0) throw UsageError("l2 is not available for language models");
  if (!a.quiet) tc.log = &std::cerr;
  const auto train_text = read_corpus(a.train);
  const auto dev_text = read_corpus(a.dev);
  LmConfig lc;
  lc.hidden_size = cfg.get_int("hidden_size", lc.hidden_size);
  lc.init_range = cfg.get_real("init_range", lc.init_range);
  lc.dropout_p = tc.dropout_p;
  const auto vocab = Vocabulary::build(train_text, cfg.get_int("tgt_vocab_max", 0));
  Rng rng(tc.seed);
  auto lm = LanguageModel<float>::create(lc, vocab, rng);
  auto result = lm_train(std::move(lm), lm_corpus(encode_corpus(train_text, vocab)),
                         lm_corpus(encode_corpus(dev_text, vocab)), tc);
  save_lm(result.model, a.out);
  result.curve.write_csv(a.curve.empty() ? a.out + ".curve.csv" : a.curve);
  return 0;
}

std::string bijection_text(const Bijection& b) {
  std::string s;
  for (const auto& [from, to] : b) s += from + '\t' + to + '\n';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xferlab: transfer learning for low-resource neural translation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "xferlab 1.0");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a translation model, optionally from a parent");
  train_cmd->add_option("--config", ta.config, "key=value config file");
  train_cmd->add_option("--set", ta.overrides, "override a config key (key=value), repeatable");
  train_cmd->add_option("--train", ta.train, "training SOURCE TARGET files")->required()->expected(2);
  train_cmd->add_option("--dev", ta.dev, "development SOURCE TARGET files")->required()->expected(2);
  train_cmd->add_option("--out", ta.out, "output model file")->required();
  train_cmd->add_option("--curve", ta.curve, "learning-curve CSV (default <out>.curve.csv)");
  train_cmd->add_option("--seed", ta.seed, "random seed (overrides config)");
  train_cmd->add_option("--init-from", ta.init_from, "parent translation model or language model");
  train_cmd->add_option("--freeze", ta.freeze, "comma-separated blocks to freeze, or 'all'");
  train_cmd->add_option("--assignment", ta.assignment,
                        "source embedding assignment: random, identity or dict:<ttables>");
  train_cmd->add_option("--l2", ta.l2, "pull trainable blocks toward the parent");
  train_cmd->add_flag("--quiet", ta.quiet, "no per-epoch log");

  DecodeArgs da;
  auto* decode_cmd = app.add_subcommand("decode", "beam search with one model or an ensemble");
  decode_cmd->add_option("--model", da.models, "model file(s), comma-separated")->required();
  decode_cmd->add_option("--input", da.input, "source sentences")->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("--output", da.output, "output file (default stdout)");
  decode_cmd->add_option("--beam", da.beam, "beam width");
  decode_cmd->add_option("--max-len", da.max_len, "maximum output length, </s> included");
  decode_cmd->add_option("--unk-dict", da.unk_dict, "t-table for <unk> replacement");
  decode_cmd->add_option("--nbest", da.nbest, "write k-best lists instead of 1-best");
  decode_cmd->add_option("--ensemble-mode", da.mode, "prob or log");
  decode_cmd->add_option("--seed", da.seed, "unused; decoding is deterministic");

  RescoreArgs ra;
  const auto rescore_options = [](CLI::App* cmd, RescoreArgs& r) {
    cmd->add_option("--nbest", r.nbest, "n-best list")->required()->check(CLI::ExistingFile);
    cmd->add_option("--source", r.source, "source sentences, line n for sentence id n");
    cmd->add_option("--model", r.model, "translation model to add as a feature");
    cmd->add_option("--feature", r.feature, "name of the translation-model feature");
    cmd->add_option("--lm", r.lm, "language model to add as a feature");
    cmd->add_option("--lm-feature", r.lm_feature, "name of the language-model feature");
    cmd->add_option("--nbest-out", r.nbest_out, "write the n-best list with added features");
    cmd->add_option("--seed", r.seed, "unused; rescoring is deterministic");
  };
  auto* rescore_cmd = app.add_subcommand("rescore", "rerank an n-best list with feature weights");
  rescore_options(rescore_cmd, ra);
  rescore_cmd->add_option("--weights", ra.weights, "weights file")->required()->check(CLI::ExistingFile);
  rescore_cmd->add_option("--output", ra.output, "1-best output (default stdout)");

  TuneArgs tu;
  auto* tune_cmd = app.add_subcommand("tune", "grid-search rescoring weights for BLEU");
  rescore_options(tune_cmd, tu.rescore);
  tune_cmd->add_option("--reference", tu.reference, "reference translations")->required();
  tune_cmd->add_option("--features", tu.features, "features to weight besides 'external'")
      ->delimiter(',');
  tune_cmd->add_option("--step", tu.step, "grid step on the weight simplex");
  tune_cmd->add_option("--weights-out", tu.rescore.weights, "output weights file")->required();

  std::string hyp, ref;
  std::uint64_t eval_seed = 1;
  auto* eval_cmd = app.add_subcommand("eval", "case-insensitive corpus BLEU");
  eval_cmd->add_option("--hyp", hyp, "hypothesis file")->required();
  eval_cmd->add_option("--ref", ref, "reference file")->required();
  eval_cmd->add_option("--seed", eval_seed, "unused; scoring is deterministic");

  LmArgs la;
  auto* lm_cmd = app.add_subcommand("lm-train", "train an LSTM language model");
  lm_cmd->add_option("--config", la.config, "key=value config file");
  lm_cmd->add_option("--set", la.overrides, "override a config key (key=value), repeatable");
  lm_cmd->add_option("--train", la.train, "training text")->required();
  lm_cmd->add_option("--dev", la.dev, "development text")->required();
  lm_cmd->add_option("--out", la.out, "output model file")->required();
  lm_cmd->add_option("--curve", la.curve, "learning-curve CSV (default <out>.curve.csv)");
  lm_cmd->add_option("--seed", la.seed, "random seed (overrides config)");
  lm_cmd->add_flag("--quiet", la.quiet, "no per-epoch log");

  auto* synth_cmd = app.add_subcommand("synth", "synthetic corpora");
  synth_cmd->require_subcommand(1);
  std::uint64_t synth_seed = 1;
  std::string s_input, s_out, s_out_src, s_out_tgt, s_mapping, s_dict;
  auto* copy_cmd = synth_cmd->add_subcommand("copy", "bitext that copies each sentence");
  auto* perm_cmd = synth_cmd->add_subcommand("perm", "bitext from shuffled to original word order");
  auto* permute_cmd = synth_cmd->add_subcommand("permute", "relabel every word type by a bijection");
  auto* toy_cmd = synth_cmd->add_subcommand("toy", "sample a toy language pair");
  for (auto* c : {copy_cmd, perm_cmd}) {
    c->add_option("--input", s_input, "monolingual text")->required();
    c->add_option("--out-src", s_out_src, "source output")->required();
    c->add_option("--out-tgt", s_out_tgt, "target output")->required();
  }
  for (auto* c : {copy_cmd, perm_cmd, permute_cmd, toy_cmd})
    c->add_option("--seed", synth_seed, "random seed");
  permute_cmd->add_option("--input", s_input, "text to relabel")->required();
  permute_cmd->add_option("--out", s_out, "relabelled text")->required();
  permute_cmd->add_option("--mapping", s_mapping, "write the bijection, one 'from<TAB>to' per line");
  ToyGrammar g;
  int pairs = 1000;
  toy_cmd->add_option("--pairs", pairs, "number of sentence pairs");
  toy_cmd->add_option("--src-vocab", g.src_vocab, "source types");
  toy_cmd->add_option("--tgt-vocab", g.tgt_vocab, "target types");
  toy_cmd->add_option("--min-len", g.min_len, "shortest sentence");
  toy_cmd->add_option("--max-len", g.max_len, "longest sentence");
  toy_cmd->add_option("--branching", g.branching, "successors per target word");
  toy_cmd->add_option("--swap-block", g.swap_block, "reverse source runs of this length");
  toy_cmd->add_option("--grammar-seed", g.grammar_seed, "seed of the target grammar");
  toy_cmd->add_option("--lexicon-seed", g.lexicon_seed, "seed of the dictionary");
  toy_cmd->add_option("--source-prefix", g.source_prefix, "source word prefix");
  toy_cmd->add_option("--target-prefix", g.target_prefix, "target word prefix");
  toy_cmd->add_option("--out-src", s_out_src, "source output")->required();
  toy_cmd->add_option("--out-tgt", s_out_tgt, "target output")->required();
  toy_cmd->add_option("--dict", s_dict, "write the source -> target t-table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
  }

  try {
    if (*train_cmd) return run_train(ta);
    if (*decode_cmd) return run_decode(da);
    if (*rescore_cmd) return run_rescore(ra);
    if (*tune_cmd) return run_tune(tu);
    if (*eval_cmd) return run_eval(hyp, ref);
    if (*lm_cmd) return run_lm_train(la);
    if (*copy_cmd || *perm_cmd) {
      const auto mono = read_corpus(s_input);
      write_bitext(s_out_src, s_out_tgt,
                   *copy_cmd ? make_copy_corpus(mono) : make_perm_corpus(mono, synth_seed));
      return 0;
    }
    if (*permute_cmd) {
      const auto p = permute_vocabulary(read_corpus(s_input), synth_seed);
      write_corpus(s_out, p.corpus);
      if (!s_mapping.empty()) write_file_atomic(s_mapping, bijection_text(p.mapping));
      return 0;
    }
    if (*toy_cmd) {
      if (pairs < 0) throw UsageError("--pairs must be >= 0");
      const ToyLanguage lang(g);
      write_bitext(s_out_src, s_out_tgt, lang.generate(synth_seed, pairs));
      if (!s_dict.empty()) {
        std::map<std::string, std::vector<std::string>> readings;
        for (const auto& [t, s] : lang.dictionary()) readings[s].push_back(t);
        TTable tt;
        for (const auto& [s, ts] : readings)
          for (const auto& t : ts) tt.set(s, t, 1.0 / ts.size());
        tt.save(s_dict);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "xferlab: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "xferlab: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Data);
  } catch (const std::exception& e) {
    std::cerr << "xferlab: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Data);
  }
  return 0;
}
