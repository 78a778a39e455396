#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

const fs::path kDir = fs::temp_directory_path() / "fedproj_test_cli";

struct Outcome {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli(const std::string& args) {
  fs::create_directories(kDir);
  const auto out = kDir / "stdout.txt";
  const auto err = kDir / "stderr.txt";
  const std::string cmd = std::string(FEDPROJ_CLI) + " " + args + " >" + out.string() + " 2>" +
                          err.string();
  const int raw = std::system(cmd.c_str());
  Outcome o;
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

fs::path config(const std::string& name, const std::string& text) {
  fs::create_directories(kDir);
  const auto p = kDir / name;
  std::ofstream(p) << text;
  return p;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli("").status == 2);
  CHECK(cli("frobnicate").status == 2);
  CHECK(cli("--help").status == 0);
}

TEST_CASE("run writes CSV and exits 0; zero rounds give the header only") {
  const auto csv = kDir / "r0.csv";
  const auto p = config("r0.json", R"({
    "rounds": 0, "total_bases": 2,
    "model": {"kind": "linear-regression", "input_dim": 4},
    "output": {"records_csv": ")" + csv.string() + R"("}
  })");
  const auto o = cli("run " + p.string());
  CHECK(o.status == 0);
  CHECK(slurp(csv) ==
        "round,loss,metric,cumulative_upload,cumulative_grad_evals,local_seconds,"
        "aggregate_seconds,cumulative_download\n");
  CHECK(contains(o.out, "\"method\": \"ferret\""));
}

TEST_CASE("config parse errors exit 2 with line and column") {
  const auto p = config("bad.json", "{\n  \"rounds\": 1,\n  \"rounds2\": 1\n}");
  const auto o = cli("run " + p.string());
  CHECK(o.status == 2);
  CHECK(contains(o.err, p.string() + ":3:3: unknown key 'rounds2'"));

  const auto q = config("broken.json", "{\n  \"rounds\": \n}");
  const auto b = cli("run " + q.string());
  CHECK(b.status == 2);
  CHECK(contains(b.err, q.string() + ":3:1: parse error"));

  CHECK(cli("run " + (kDir / "absent.json").string()).status == 2);
}

TEST_CASE("divergence exits 3") {
  const auto p = config("diverge.json", R"({
    "num_clients": 1, "rounds": 1, "total_bases": 2,
    "local": {"iters": 200, "lr": 1000000.0},
    "model": {"kind": "linear-regression", "input_dim": 4},
    "data": {"examples": 20}
  })");
  const auto o = cli("run " + p.string());
  CHECK(o.status == 3);
  CHECK(contains(o.err, "round 0: client 0"));
}

TEST_CASE("verify exit codes") {
  const auto ok = cli("verify rho-rate --seed 7");
  CHECK(ok.status == 0);
  CHECK(contains(ok.out, "[PASS] rho-rate (seed=7"));
  CHECK(cli("verify unbiased --trials 5 --tolerance 1e-9").status == 1);
  CHECK(cli("verify nope").status == 2);
  CHECK(cli("verify unbiased --tolerance -1").status == 2);
  CHECK(cli("verify unbiased --dims 8 --budgets 16").status == 2);
}

TEST_CASE("repro exit codes and output") {
  CHECK(cli("repro fig99").status == 2);
  const auto path = kDir / "alloc.csv";
  CHECK(cli("repro fig4-analogue -o " + path.string()).status == 0);
  CHECK(slurp(path).rfind("round,loss_uniform,loss_norm_sqrt,metric_uniform,metric_norm_sqrt\n", 0) == 0);
}

TEST_CASE("protocol-dump prints constants") {
  const auto o = cli("protocol-dump");
  CHECK(o.status == 0);
  CHECK(contains(o.out, "golden = 0x9e3779b97f4a7c15"));
}
