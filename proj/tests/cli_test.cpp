// End-to-end checks of the prosdd binary. The test runner exports PROSDD_BIN
// with the path to the freshly built executable.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* p = std::getenv("PROSDD_BIN");
  REQUIRE(p != nullptr);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

// 3 speakers x 9 utterances, tiny model, one epoch per stage: fast but real.
std::string small_overrides() {
  return " --set corpus.speakers=3 --set corpus.utts_per_speaker=9"
         " --set corpus.stage1_bona=2"
         " --set corpus.stage2_train_bona=1 --set corpus.stage2_train_spoof=1"
         " --set corpus.stage2_dev_bona=1 --set corpus.stage2_dev_spoof=1"
         " --set corpus.eval_seen_bona=1 --set corpus.eval_seen_spoof=1"
         " --set corpus.shift_bona=0 --set corpus.shift_spoof=1"
         " --set model.hidden_dim=16 --set model.n_layers=1 --set model.n_heads=2"
         " --set model.ffn_dim=32"
         " --set optimizer.epochs_stage1=1 --set optimizer.epochs_stage2=1"
         " --set optimizer.batch_size=4";
}

struct RunResult {
  int code;
  std::string out;  // stdout + stderr
};

RunResult run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "prosdd_cli_out.txt";
  const std::string cmd = bin() + " " + args + " >" + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(log);
  return r;
}

// One shared workspace built incrementally across the ordered cases below.
const fs::path& work() {
  static fs::path w = [] {
    fs::path p = fs::temp_directory_path() / "prosdd_cli_work";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return w;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("").code == 1);
  CHECK(run("no-such-command").code == 1);
  CHECK(run("train --stage 3 --corpus x --targets y --out z").code == 1);
  CHECK(run("gen-corpus").code == 1);  // missing required --out
  CHECK(run("--help").code == 0);
}

TEST_CASE("gen-corpus is byte-deterministic and validates speaker count") {
  const fs::path c1 = work() / "c1", c2 = work() / "c2";
  CHECK(run("gen-corpus --out " + c1.string() + " --seed 5" + small_overrides()).code == 0);
  CHECK(run("gen-corpus --out " + c2.string() + " --seed 5" + small_overrides()).code == 0);
  REQUIRE(fs::exists(c1 / "manifest.tsv"));
  CHECK(same_bytes(c1 / "manifest.tsv", c2 / "manifest.tsv"));
  int audio_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(c1)) {
    if (e.path().extension() == ".f32") {
      ++audio_files;
      CHECK(same_bytes(e.path(), c2 / fs::relative(e.path(), c1)));
    }
  }
  CHECK(audio_files == 27);

  const auto bad = run("gen-corpus --out " + (work() / "cbad").string() + " --speakers 1");
  CHECK(bad.code == 2);

  // bad --set key is a data error, not a crash
  CHECK(run("gen-corpus --out " + (work() / "cbad2").string() +
            " --set optimizer.bogus=1").code == 2);
  CHECK(run("gen-corpus --out " + (work() / "cbad3").string() + " --set nodelimiter").code == 2);
}

TEST_CASE("extract-targets is byte-deterministic") {
  const fs::path c1 = work() / "c1";
  const fs::path t1 = work() / "t1", t2 = work() / "t2";
  CHECK(run("extract-targets --corpus " + c1.string() + " --out " + t1.string() +
            small_overrides()).code == 0);
  CHECK(run("extract-targets --corpus " + c1.string() + " --out " + t2.string() +
            small_overrides()).code == 0);
  int caches = 0;
  for (const auto& e : fs::recursive_directory_iterator(t1)) {
    if (e.path().extension() == ".psdt") {
      ++caches;
      CHECK(same_bytes(e.path(), t2 / fs::relative(e.path(), t1)));
    }
  }
  CHECK(caches == 27);

  CHECK(run("extract-targets --corpus " + (work() / "nowhere").string() + " --out " +
            (work() / "t3").string()).code == 2);
}

TEST_CASE("two-stage training, ablation modes, and checkpoint wiring") {
  const std::string c = (work() / "c1").string(), t = (work() / "t1").string();
  const fs::path s1 = work() / "s1";
  const auto r1 = run("train --stage 1 --corpus " + c + " --targets " + t + " --out " +
                      s1.string() + " --seed 3" + small_overrides());
  CHECK(r1.code == 0);
  REQUIRE(fs::exists(s1 / "stage1_selected.psdm"));
  CHECK(fs::exists(s1 / "stage1_loss.tsv"));

  // full mode requires a Stage I checkpoint
  const auto no_init = run("train --stage 2 --mode full --corpus " + c + " --targets " + t +
                           " --out " + (work() / "s2x").string() + small_overrides());
  CHECK(no_init.code == 2);
  CHECK(no_init.out.find("--init") != std::string::npos);

  const fs::path s2 = work() / "s2";
  CHECK(run("train --stage 2 --mode full --corpus " + c + " --targets " + t + " --init " +
            (s1 / "stage1_selected.psdm").string() + " --out " + s2.string() + " --seed 4" +
            small_overrides()).code == 0);
  REQUIRE(fs::exists(s2 / "stage2_selected.psdm"));

  // --init is ignored (with a warning) outside full mode
  const auto warned = run("train --stage 2 --mode no_stage1 --corpus " + c + " --targets " + t +
                          " --init " + (s1 / "stage1_selected.psdm").string() + " --out " +
                          (work() / "s2b").string() + " --seed 4" + small_overrides());
  CHECK(warned.code == 0);
  CHECK(warned.out.find("warning") != std::string::npos);

  // no_mp logs a zero l_ssl column
  const fs::path s2c = work() / "s2c";
  CHECK(run("train --stage 2 --mode no_mp --corpus " + c + " --targets " + t + " --out " +
            s2c.string() + " --seed 4" + small_overrides()).code == 0);
  std::ifstream log(s2c / "stage2_loss.tsv");
  std::string epoch, step, l_ssl, l_cls, l_total;
  int rows = 0;
  while (log >> epoch >> step >> l_ssl >> l_cls >> l_total) {
    CHECK(l_ssl == "0");
    ++rows;
  }
  CHECK(rows > 0);

  CHECK(run("train --stage 2 --mode bogus --corpus " + c + " --targets " + t + " --out " +
            (work() / "s2d").string() + small_overrides()).code == 1);
}

TEST_CASE("eval scores deterministically with the documented header") {
  const std::string c = (work() / "c1").string();
  const fs::path ckpt = work() / "s2" / "stage2_selected.psdm";
  const fs::path sc1 = work() / "scores1.tsv", sc2 = work() / "scores2.tsv";
  const auto r = run("eval --checkpoint " + ckpt.string() + " --corpus " + c +
                     " --split eval_seen --out " + sc1.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("EER") != std::string::npos);
  CHECK(run("eval --checkpoint " + ckpt.string() + " --corpus " + c +
            " --split eval_seen --out " + sc2.string()).code == 0);
  CHECK(same_bytes(sc1, sc2));
  CHECK(slurp(sc1).rfind("# prosdd-scores v1 polarity=bonafide-high\n", 0) == 0);

  CHECK(run("eval --checkpoint " + (work() / "missing.psdm").string() + " --corpus " + c).code ==
        2);
  CHECK(run("eval --checkpoint " + ckpt.string() + " --corpus " + c + " --split bogus").code == 2);
}

TEST_CASE("gradcheck passes end to end") {
  const auto r = run("gradcheck");
  CHECK(r.code == 0);
  CHECK(r.out.find("gradcheck passed") != std::string::npos);
}

TEST_CASE("cleanup") { fs::remove_all(work()); }

}  // TEST_SUITE
