#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "gksa_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

// Runs the CLI in the work directory and returns its exit status.
int run(const std::string& args) {
  const std::string cmd = "cd '" + work_dir().string() + "' && '" GKSA_CLI_PATH "' " + args +
                          " > out.txt 2> err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& name) {
  std::ifstream is(work_dir() / name, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const std::string kSmall =
    "--set model.n_layers=1 --set model.d_model=16 --set model.d_k=8 --set model.d_ff=32 "
    "--set task.train_utterances=40 --set train.steps=4 --set eval.eval_utterances=10 "
    "--set eval.long_utterances=2 --set eval.lengths=1,2";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train") == 2);
  CHECK(run("train -o x.ckpt --set model.bogus=1") == 2);
  CHECK(run("train -o x.ckpt --set train.steps") == 2);
  CHECK(run("train -o x.ckpt --config missing.ini") == 2);
  CHECK(run("eval --checkpoint missing.ckpt") == 2);
  CHECK(run("sweep --dir . --variants Standard") == 2);
  CHECK(slurp("err.txt").find("Standard_seed1.ckpt") != std::string::npos);
  CHECK(run("--help") == 0);
}

TEST_CASE("divergence exits with 3") {
  CHECK(run("train -o d.ckpt " + kSmall + " --set train.lr=1e200 --set train.warmup_steps=0 --log-every 0") == 3);
  CHECK(slurp("err.txt").find("non-finite") != std::string::npos);
}

TEST_CASE("train, eval and heatmap round trip") {
  {
    std::ofstream ini(work_dir() / "small.ini");
    ini << "[model]\nvariant = GaussianFrameIndex\n[train]\nseed = 3\n";
  }
  REQUIRE(run("train -c small.ini -o a.ckpt --curve a.csv " + kSmall) == 0);
  REQUIRE(run("train -c small.ini -o b.ckpt " + kSmall) == 0);
  CHECK(slurp("a.ckpt") == slurp("b.ckpt"));
  const std::string curve = slurp("a.csv");
  CHECK(curve.rfind("# config_hash=", 0) == 0);
  CHECK(curve.find("\n3,") != std::string::npos);

  REQUIRE(run("eval --checkpoint a.ckpt -o r1.csv") == 0);
  REQUIRE(run("eval --checkpoint b.ckpt -o r2.csv") == 0);
  const std::string report = slurp("r1.csv");
  CHECK(report == slurp("r2.csv"));
  CHECK(report.find("GaussianFrameIndex,1,10,") != std::string::npos);
  CHECK(report.find("GaussianFrameIndex,2,2,") != std::string::npos);
  // Changing the model of a trained checkpoint is refused.
  CHECK(run("eval --checkpoint a.ckpt --set model.d_model=32") == 2);

  REQUIRE(run("heatmap --checkpoint a.ckpt -k 2 --csv h.csv --pgm h.pgm") == 0);
  CHECK(slurp("h.pgm").rfind("P5\n", 0) == 0);
  CHECK(!slurp("h.csv").empty());
  CHECK(run("heatmap --checkpoint a.ckpt --layer 5") == 2);
}

TEST_CASE("gen-data, sweep and memcheck") {
  REQUIRE(run("gen-data -o train.bin " + kSmall) == 0);
  REQUIRE(run("gen-data -o train2.bin " + kSmall) == 0);
  CHECK(slurp("train.bin") == slurp("train2.bin"));
  CHECK(slurp("train.bin").rfind("GKSADATA", 0) == 0);
  CHECK(run("gen-data -o e.bin --split nope") == 2);
  REQUIRE(run("train -d train.bin -o from_file.ckpt " + kSmall) == 0);

  fs::create_directories(work_dir() / "sweep");
  REQUIRE(run("sweep --dir sweep --variants Standard,Gaussian --seeds 1,2 --train-missing -o s.csv " + kSmall) == 0);
  const std::string sweep = slurp("s.csv");
  std::size_t lines = 0;
  for (char c : sweep) lines += c == '\n';
  CHECK(lines == 2 + 4);

  REQUIRE(run("memcheck --lengths 64,128 --variants Standard,RelativePE") == 0);
  const std::string mem = slurp("out.txt");
  CHECK(mem.find("variant,length,analytic,measured,maps,ratio_to_standard") != std::string::npos);
  CHECK(mem.find("RelativePE,128,") != std::string::npos);
  CHECK(run("memcheck --variants Nope") == 2);
}
