#include <doctest.h>

#include "../test_util.hpp"
#include "xfer/config.hpp"
#include "xfer/corpus.hpp"
#include "xfer/error.hpp"
#include "xfer/io.hpp"
#include "xfer/vocab.hpp"

using namespace xfer;

TEST_CASE("config files: comments, typed access and overrides") {
  auto c = Config::parse("# model settings\nhidden_size = 1000\nlr=0.5\n\nuse_x = true\n");
  CHECK(c.get_int("hidden_size", 0) == 1000);
  CHECK(c.get_real("lr", 0) == 0.5);
  CHECK(c.get_bool("use_x", false));
  CHECK(c.get_int("missing", 7) == 7);
  c.set("lr", "0.1");
  CHECK(c.get_real("lr", 0) == 0.1);
  CHECK_NOTHROW(c.check_known({"hidden_size", "lr", "use_x"}));
  CHECK_THROWS_WITH_AS(c.check_known({"lr"}), doctest::Contains("hidden_size"), UsageError);
  CHECK_THROWS_AS(Config::parse("novalue\n"), UsageError);
  CHECK_THROWS_AS(Config::parse("x = abc\n").get_int("x", 0), UsageError);
}

TEST_CASE("vocabularies reserve the first four ids") {
  const auto v = Vocabulary::build({{"b", "a", "b"}, {"c"}});
  CHECK(v.size() == 7);
  CHECK(v.type(Vocabulary::kPad) == "<pad>");
  CHECK(v.type(Vocabulary::kEos) == "</s>");
  CHECK(v.id("b") == 4);  // most frequent first
  CHECK(v.id("a") == 5);  // ties broken lexicographically
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  CHECK(Vocabulary::build({{"b", "a", "b"}, {"c"}}, 1).size() == 5);
  const auto dir = xfer::testing::scratch_dir("vocab");
  v.save(dir / "v.txt");
  CHECK(Vocabulary::load(dir / "v.txt") == v);
}

TEST_CASE("parallel corpora must align") {
  const auto dir = xfer::testing::scratch_dir("corpus");
  write_file_atomic(dir / "a.src", "x y\nz\n");
  write_file_atomic(dir / "a.tgt", "p\n");
  CHECK_THROWS_AS(read_bitext(dir / "a.src", dir / "a.tgt"), DataError);
  write_file_atomic(dir / "a.tgt", "p q\nr\n");
  const auto b = read_bitext(dir / "a.src", dir / "a.tgt");
  CHECK(b.source[0] == std::vector<std::string>{"x", "y"});
  Bitext empty_line{{{"x"}, {}}, {{"p"}, {"q"}}};
  const auto v = Vocabulary::build(empty_line.target);
  CHECK_THROWS_WITH_AS(encode_bitext(empty_line, v, v), doctest::Contains("2"), DataError);
  CHECK_THROWS_AS(read_corpus(dir / "missing"), DataError);
}

TEST_CASE("atomic writes leave no temporary files behind") {
  const auto dir = xfer::testing::scratch_dir("atomic");
  write_file_atomic(dir / "f", "one");
  write_file_atomic(dir / "f", "two");
  CHECK(read_file(dir / "f") == "two");
  CHECK(std::distance(std::filesystem::directory_iterator(dir), {}) == 1);
}
