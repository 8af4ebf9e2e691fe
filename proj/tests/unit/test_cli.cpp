#include <doctest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "../test_util.hpp"
#include "xfer/io.hpp"
#include "xfer/model_io.hpp"

using namespace xfer;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = xfer::testing::scratch_dir("cli");

// Runs xferlab in the scratch directory; returns its exit code.
int run(const std::string& args, const std::string& stdout_file = "/dev/null") {
  const std::string cmd = "cd '" + kDir.string() + "' && '" XFERLAB_PATH "' " + args + " > " +
                          stdout_file + " 2> last.err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& name) { return read_file(kDir / name); }

void make_data() {
  static bool done = false;
  if (done) return;
  done = true;
  const std::string toy = "synth toy --src-vocab 12 --tgt-vocab 12 --max-len 6 ";
  REQUIRE(run(toy + "--pairs 200 --seed 1 --out-src tr.s --out-tgt tr.e --dict s2e.tt") == 0);
  REQUIRE(run(toy + "--pairs 30 --seed 2 --out-src dv.s --out-tgt dv.e") == 0);
  write_file_atomic(kDir / "cfg", "hidden_size = 8\nattention_window = 2\nepochs = 2\n"
                                  "minibatch_size = 16\n");
  REQUIRE(run("train --config cfg --train tr.s tr.e --dev dv.s dv.e --out p.xfm --quiet "
              "--seed 3") == 0);
}

}  // namespace

TEST_CASE("eval prints a machine-readable BLEU line") {
  write_file_atomic(kDir / "h.txt", "a b c d\ne f g h\n");
  REQUIRE(run("eval --hyp h.txt --ref h.txt", "eval.out") == 0);
  CHECK(slurp("eval.out").find("BLEU=100.0\n") != std::string::npos);
  write_file_atomic(kDir / "r.txt", "a b c d\n");
  CHECK(run("eval --hyp h.txt --ref r.txt") == 2);
}

TEST_CASE("synth output is byte-identical for a fixed seed") {
  write_file_atomic(kDir / "mono.txt", "the cat sat\non the mat\nthe end\n");
  REQUIRE(run("synth permute --input mono.txt --out p1.txt --seed 5") == 0);
  REQUIRE(run("synth permute --input mono.txt --out p2.txt --seed 5") == 0);
  CHECK(slurp("p1.txt") == slurp("p2.txt"));
  REQUIRE(run("synth perm --input mono.txt --out-src a.s --out-tgt a.t --seed 5") == 0);
  CHECK(slurp("a.t") == slurp("mono.txt"));
}

TEST_CASE("usage and data errors map to exit codes") {
  make_data();
  CHECK(run("train --config cfg --train tr.s tr.e --dev dv.s dv.e --out x.xfm --freeze bogus") ==
        1);
  CHECK(slurp("last.err").find("target_output_embeddings") != std::string::npos);
  CHECK(run("train --config cfg --train nope.s nope.e --dev dv.s dv.e --out x.xfm") == 2);
  CHECK(run("frobnicate") == 1);
  write_file_atomic(kDir / "bad.cfg", "hidden_sise = 8\n");
  CHECK(run("train --config bad.cfg --train tr.s tr.e --dev dv.s dv.e --out x.xfm") == 1);
  CHECK(run("decode --model tr.s --input dv.s") == 2);
}

TEST_CASE("a fresh model has no provenance, a transferred one names its parent") {
  make_data();
  CHECK(read_model_file(kDir / "p.xfm").header.count("parent") == 0);
  REQUIRE(run("train --config cfg --train tr.s tr.e --dev dv.s dv.e --out c.xfm --quiet "
              "--init-from p.xfm --assignment dict:s2e.tt") == 0);
  CHECK(read_model_file(kDir / "c.xfm").header_value("parent") == "p.xfm");
  CHECK(fs::exists(kDir / "c.xfm.curve.csv"));
}

TEST_CASE("identity vocabulary with everything frozen reproduces the parent") {
  make_data();
  REQUIRE(run("train --config cfg --train tr.s tr.e --dev dv.s dv.e --out same.xfm --quiet "
              "--init-from p.xfm --assignment identity --freeze all") == 0);
  const auto parent = read_model_file(kDir / "p.xfm");
  const auto child = read_model_file(kDir / "same.xfm");
  REQUIRE(parent.blocks.size() == child.blocks.size());
  for (std::size_t b = 0; b < parent.blocks.size(); ++b) {
    CHECK(parent.blocks[b].name == child.blocks[b].name);
    REQUIRE(parent.blocks[b].tensors.size() == child.blocks[b].tensors.size());
    for (std::size_t t = 0; t < parent.blocks[b].tensors.size(); ++t)
      CHECK(bitwise_equal(parent.blocks[b].tensors[t], child.blocks[b].tensors[t]));
  }
  CHECK(parent.vocabularies == child.vocabularies);
}

TEST_CASE("decode, n-best rescoring with the external corner, and tuning") {
  make_data();
  REQUIRE(run("decode --model p.xfm,p.xfm --input dv.s --beam 2 --max-len 8", "one.txt") == 0);
  CHECK(read_lines(kDir / "one.txt").size() == 30);
  REQUIRE(run("decode --model p.xfm --input dv.s --beam 3 --nbest 3 --max-len 8", "nb.txt") == 0);
  write_file_atomic(kDir / "w.txt", "external=1\nnmt=0\n");
  REQUIRE(run("rescore --nbest nb.txt --weights w.txt", "re.txt") == 0);
  // External 1-best: first entry of each sentence, since decode lists them best first.
  std::string first;
  int last_id = -1;
  for (const auto& line : read_lines(kDir / "nb.txt")) {
    const int id = std::stoi(line);
    if (id == last_id) continue;
    last_id = id;
    const auto a = line.find("|||") + 4;
    first += line.substr(a, line.find(" |||", a) - a) + "\n";
  }
  CHECK(slurp("re.txt") == first);
  REQUIRE(run("tune --nbest nb.txt --reference dv.e --features nmt --weights-out tw.txt "
              "--source dv.s --model p.xfm --feature nmt2") == 0);
  CHECK(slurp("tw.txt").find("external=") != std::string::npos);
}

TEST_CASE("language models train and serve as parents") {
  make_data();
  REQUIRE(run("lm-train --config cfg --train tr.e --dev dv.e --out lm.xfm --quiet") == 0);
  REQUIRE(run("train --config cfg --train tr.s tr.e --dev dv.s dv.e --out l.xfm --quiet "
              "--init-from lm.xfm --freeze target_input_embeddings,target_output_embeddings") ==
          0);
  CHECK(read_model_file(kDir / "l.xfm").header_value("parent") == "lm.xfm");
}
