#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(VAD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempTree {
  fs::path root;
  TempTree() : root(fs::temp_directory_path() / "vad_cli_test") {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  std::string p(const char* leaf) const { return (root / leaf).string(); }
};

}  // namespace

TEST_CASE("the pipeline runs end to end through the executable") {
  TempTree tmp;
  const std::string small =
      "--grid 12 --frames 6 --raw-channels 10 ";
  const std::string tiny_model =
      "--channels 8 --attn-dim 8 --layers 1 --depth 1 --roi 2 ";

  CHECK(run("gen-data --out " + tmp.p("data") + " --units 10 --seed 4 " + small) == 0);
  CHECK(fs::exists(tmp.root / "data" / "dataset.json"));

  CHECK(run("train --data " + tmp.p("data") + " --out " + tmp.p("ckpt") + " --log " +
            tmp.p("loss.csv") + " --steps 12 --lr 0.02 --warmup 4 " + tiny_model) == 0);
  CHECK(fs::exists(tmp.root / "ckpt" / "config.json"));
  CHECK(fs::exists(tmp.root / "ckpt" / "params.bin"));
  {
    std::ifstream log(tmp.root / "loss.csv");
    std::string header;
    REQUIRE(std::getline(log, header));
    CHECK(header == "step,lr,loss");
  }

  CHECK(run("eval --data " + tmp.p("data") + " --model " + tmp.p("ckpt") + " --report " +
            tmp.p("report.json")) == 0);
  CHECK(fs::exists(tmp.root / "report.json"));

  CHECK(run("eval --data " + tmp.p("data") + " --model " + tmp.p("ckpt") +
            " --jitter --conf-threshold 0.5") == 0);

  CHECK(run("dump-attention --data " + tmp.p("data") + " --model " + tmp.p("ckpt") +
            " --index 0 --out " + tmp.p("attn.csv")) == 0);
  CHECK(fs::exists(tmp.root / "attn.csv"));
}

TEST_CASE("cross-clip data supports bank training and two-pass eval") {
  TempTree tmp;
  CHECK(run("gen-data --out " + tmp.p("data") +
            " --units 5 --seed 6 --grid 12 --frames 6 --raw-channels 10 "
            "--cross-clip --tokens 5 --clips-per-video 3") == 0);
  CHECK(run("train --data " + tmp.p("data") + " --out " + tmp.p("ckpt") +
            " --steps 10 --bank-training "
            "--channels 8 --attn-dim 8 --layers 1 --depth 1 --roi 2") == 0);
  CHECK(fs::exists(tmp.root / "ckpt" / "bank"));
  CHECK(run("eval --data " + tmp.p("data") + " --model " + tmp.p("ckpt") +
            " --two-pass-bank") == 0);
}

TEST_CASE("failures surface as a nonzero exit status") {
  TempTree tmp;
  CHECK(run("no-such-command") != 0);
  CHECK(run("gen-data") != 0);  // missing required --out
  CHECK(run("eval --data " + tmp.p("nowhere") + " --model " + tmp.p("nothing")) == 1);
  CHECK(run("gen-data --out " + tmp.p("bad") + " --units 5 --grid 3") == 1);  // unplaceable
}
