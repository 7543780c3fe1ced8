// End-to-end tests of the command-line binary, driven through real
// subprocess invocations so exit codes, stdout contracts, and file formats
// are exercised exactly as a user sees them.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/stat.h>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"

#include "cmma/data.hpp"
#include "cmma/tensor.hpp"
#include "cmma/train.hpp"

using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the binary with the given arguments, capturing exit code and both
// streams through temp files.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  std::string out_path = "cli_scratch/stdout_" + std::to_string(counter) + ".txt";
  std::string err_path = "cli_scratch/stderr_" + std::to_string(counter) + ".txt";
  ++counter;
  std::string cmd =
      std::string(CMMA_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
  int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

json first_json(const RunResult& r) { return json::parse(lines_of(r.out).front()); }
json last_json(const RunResult& r) { return json::parse(lines_of(r.out).back()); }

void ensure_scratch() {
  static bool done = false;
  if (!done) {
    mkdir("cli_scratch", 0755);
    done = true;
  }
}

// Dataset and tiny checkpoint shared across cases; built once through the
// CLI itself.
const std::string& shared_dataset() {
  static std::string path;
  if (path.empty()) {
    ensure_scratch();
    path = "cli_scratch/d.bin";
    RunResult r = run_cli("gen-data --n 60 --seed 7 --noise 0.05 --out " + path);
    REQUIRE(r.code == 0);
  }
  return path;
}

const std::string& shared_checkpoint() {
  static std::string path;
  if (path.empty()) {
    path = "cli_scratch/m.json";
    RunResult r = run_cli("train --data " + shared_dataset() +
                          " --model cmma --latent-dim 2 --f-hidden 8 --h-hidden 16"
                          " --g-hidden 16 --lambda-y 1 --epochs 2 --batch 16 --seed 1 --out " +
                          path);
    REQUIRE(r.code == 0);
  }
  return path;
}

// Minimal independent PGM reader: accepts exactly the P5 binary form with
// whitespace-separated header fields and a single separator byte before the
// payload. Deliberately not the library's loader.
struct ParsedPgm {
  std::size_t width = 0, height = 0, maxval = 0;
  std::vector<unsigned char> pixels;
};

ParsedPgm parse_pgm_independently(const std::string& path) {
  std::string bytes = slurp(path);
  REQUIRE(bytes.size() >= 2);
  REQUIRE(bytes[0] == 'P');
  REQUIRE(bytes[1] == '5');
  std::size_t pos = 2;
  auto next_int = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
      any = true;
    }
    REQUIRE(any);
    return v;
  };
  ParsedPgm p;
  p.width = next_int();
  p.height = next_int();
  p.maxval = next_int();
  REQUIRE(pos < bytes.size());
  REQUIRE(std::isspace(static_cast<unsigned char>(bytes[pos])));
  ++pos;
  REQUIRE(bytes.size() - pos == p.width * p.height);
  p.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return p;
}

}  // namespace

TEST_CASE("gen-data writes a dataset that parses back identically") {
  ensure_scratch();
  RunResult r = run_cli("gen-data --n 60 --seed 7 --noise 0.05 --out cli_scratch/rt.bin");
  CHECK(r.code == 0);

  cmma::MultimodalDataset loaded = cmma::load_dataset("cli_scratch/rt.bin");
  cmma::GlyphConfig cfg;
  cfg.seed = 7;
  cfg.noise_sigma = 0.05;
  cmma::MultimodalDataset direct = cmma::generate_dataset(60, cfg);
  CHECK(loaded.n() == 60);
  CHECK(loaded.X.shape() == direct.X.shape());
  CHECK(std::memcmp(loaded.X.data(), direct.X.data(), sizeof(double) * loaded.X.numel()) == 0);
  CHECK(std::memcmp(loaded.Y.data(), direct.Y.data(), sizeof(double) * loaded.Y.numel()) == 0);
  CHECK(loaded.train_idx == direct.train_idx);
  CHECK(loaded.val_idx == direct.val_idx);
  CHECK(loaded.test_idx == direct.test_idx);

  // Same flags, second file: byte-identical.
  RunResult r2 = run_cli("gen-data --n 60 --seed 7 --noise 0.05 --out cli_scratch/rt2.bin");
  CHECK(r2.code == 0);
  CHECK(slurp("cli_scratch/rt.bin") == slurp("cli_scratch/rt2.bin"));
}

TEST_CASE("every run prints its resolved configuration before the result") {
  RunResult r = run_cli("gen-data --n 12 --seed 3 --out cli_scratch/cfg.bin");
  CHECK(r.code == 0);
  json cfg = first_json(r);
  CHECK(cfg["command"] == "gen-data");
  CHECK(cfg["n"] == 12);
  CHECK(cfg["seed"] == 3);
  CHECK(cfg["noise"] == 0.05);
  json result = last_json(r);
  CHECK(result["n"] == 12);
}

TEST_CASE("train is deterministic: identical flags give byte-identical checkpoints") {
  std::string flags = "train --data " + shared_dataset() +
                      " --model cmma --latent-dim 2 --f-hidden 6 --h-hidden 10 --g-hidden 10"
                      " --epochs 2 --batch 16 --lr 0.01 --seed 5 --out ";
  RunResult a = run_cli(flags + "cli_scratch/det_a.json");
  RunResult b = run_cli(flags + "cli_scratch/det_b.json");
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  std::string bytes_a = slurp("cli_scratch/det_a.json");
  CHECK(!bytes_a.empty());
  CHECK(bytes_a == slurp("cli_scratch/det_b.json"));
}

TEST_CASE("generate emits a valid square PGM accepted by an independent parser") {
  RunResult r = run_cli("generate --ckpt " + shared_checkpoint() +
                        " --attrs 1,0,1,1,0,0,0,0 --out cli_scratch/g.pgm");
  CHECK(r.code == 0);
  ParsedPgm p = parse_pgm_independently("cli_scratch/g.pgm");
  CHECK(p.width == 16);
  CHECK(p.height == 16);
  CHECK(p.maxval == 255);

  // Deterministic: same invocation, same bytes.
  RunResult r2 = run_cli("generate --ckpt " + shared_checkpoint() +
                         " --attrs 1,0,1,1,0,0,0,0 --out cli_scratch/g2.pgm");
  CHECK(r2.code == 0);
  CHECK(slurp("cli_scratch/g.pgm") == slurp("cli_scratch/g2.pgm"));
}

TEST_CASE("modify with unchanged attributes reproduces plain reconstruction") {
  run_cli("generate --ckpt " + shared_checkpoint() +
          " --attrs 0,1,0,1,1,0,0,0 --out cli_scratch/src.pgm");
  RunResult r = run_cli("modify --ckpt " + shared_checkpoint() +
                        " --in cli_scratch/src.pgm --attrs-old 0,1,0,1,1,0,0,0"
                        " --attrs-new 0,1,0,1,1,0,0,0 --out cli_scratch/same.pgm");
  CHECK(r.code == 0);

  cmma::LoadedModel model = cmma::instantiate(cmma::load_checkpoint(shared_checkpoint()));
  std::size_t side = 0;
  cmma::Tensor x = cmma::load_pgm("cli_scratch/src.pgm", side);
  cmma::Tensor y({8});
  y[1] = y[3] = y[4] = 1.0;
  cmma::Tensor recon = model.cmma->reconstruct(x, y);
  cmma::save_pgm(recon, side, "cli_scratch/recon.pgm");
  CHECK(slurp("cli_scratch/same.pgm") == slurp("cli_scratch/recon.pgm"));

  // A real flip changes the image.
  RunResult rf = run_cli("modify --ckpt " + shared_checkpoint() +
                         " --in cli_scratch/src.pgm --attrs-old 0,1,0,1,1,0,0,0"
                         " --attrs-new 0,1,0,1,0,0,0,0 --out cli_scratch/flip.pgm");
  CHECK(rf.code == 0);
  CHECK(slurp("cli_scratch/flip.pgm") != slurp("cli_scratch/same.pgm"));
}

TEST_CASE("infer-attrs reports raw scores and thresholded bits") {
  run_cli("generate --ckpt " + shared_checkpoint() +
          " --attrs 1,1,0,0,1,0,0,0 --out cli_scratch/ia.pgm");
  RunResult r = run_cli("infer-attrs --ckpt " + shared_checkpoint() + " --in cli_scratch/ia.pgm");
  CHECK(r.code == 0);
  json result = last_json(r);
  CHECK(result["raw"].size() == 8);
  CHECK(result["bits"].size() == 8);
  for (const auto& b : result["bits"]) CHECK((b == 0.0 || b == 1.0));
}

TEST_CASE("eval-bound, eval-parzen, and latent-map run and report on the test split") {
  RunResult eb = run_cli("eval-bound --ckpt " + shared_checkpoint() + " --data " +
                         shared_dataset() + " --split test");
  CHECK(eb.code == 0);
  json bound = last_json(eb);
  CHECK(bound["count"] == 6);
  CHECK(bound["bound"].get<double>() < 0.0);

  RunResult ep = run_cli("eval-parzen --ckpt " + shared_checkpoint() + " --data " +
                         shared_dataset() + " --samples 20 --seed 3 --out cli_scratch/pz.json");
  CHECK(ep.code == 0);
  json parzen = last_json(ep);
  CHECK(parzen["sigma"].get<double>() > 0.0);
  CHECK(json::parse(slurp("cli_scratch/pz.json"))["sigma"] == parzen["sigma"]);

  RunResult lm = run_cli("latent-map --ckpt " + shared_checkpoint() + " --data " +
                         shared_dataset() + " --split test --out cli_scratch/lm.csv");
  CHECK(lm.code == 0);
  CHECK(last_json(lm)["rows"] == 6);
  std::vector<std::string> rows = lines_of(slurp("cli_scratch/lm.csv"));
  CHECK(rows.size() == 7);
  CHECK(rows.front().rfind("id,", 0) == 0);
}

TEST_CASE("eval-oracle compares bound and quadrature, refusing latent dim above two") {
  RunResult ok = run_cli("eval-oracle --ckpt " + shared_checkpoint() + " --data " +
                         shared_dataset() + " --split test --nodes 64 --limit 2");
  CHECK(ok.code == 0);
  json result = last_json(ok);
  CHECK(result["count"] == 2);
  CHECK(result["max_violation"].get<double>() <= 1e-3);

  RunResult tr3 = run_cli("train --data " + shared_dataset() +
                          " --latent-dim 3 --f-hidden 6 --h-hidden 8 --g-hidden 8"
                          " --epochs 1 --batch 16 --seed 1 --out cli_scratch/j3.json");
  REQUIRE(tr3.code == 0);
  RunResult bad = run_cli("eval-oracle --ckpt cli_scratch/j3.json --data " + shared_dataset());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("restricted to J") != std::string::npos);
}

TEST_CASE("gradcheck passes on a tiny model and reports per-block errors") {
  RunResult r = run_cli(
      "gradcheck --model cmma --x-dim 9 --y-dim 3 --latent-dim 2 --f-hidden 5"
      " --h-hidden 6 --g-hidden 6 --h2-hidden \"\" --lambda-y 1 --trials 1 --seed 4");
  CHECK(r.code == 0);
  json result = last_json(r);
  CHECK(result["passed"] == true);
  CHECK(result["max_rel_error"].get<double>() <= 1e-4);
  CHECK(result["blocks"].size() == 4);
}

TEST_CASE("usage errors exit with code 1 and name the problem") {
  RunResult unknown = run_cli("train --data d.bin --bogus-flag 1 --out x.json");
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("--bogus-flag") != std::string::npos);

  RunResult missing = run_cli("train --data " + shared_dataset());
  CHECK(missing.code == 1);
  CHECK(missing.err.find("--out") != std::string::npos);

  RunResult badmode = run_cli("train --data d.bin --recon-mode fancy --out x.json");
  CHECK(badmode.code == 1);
  CHECK(badmode.err.find("--recon-mode") != std::string::npos);

  RunResult badbits = run_cli("generate --ckpt " + shared_checkpoint() +
                              " --attrs 1,0,2,0,0,0,0,0 --out x.pgm");
  CHECK(badbits.code == 1);
  CHECK(badbits.err.find("--attrs") != std::string::npos);

  RunResult nosub = run_cli("");
  CHECK(nosub.code == 1);

  RunResult help = run_cli("--help");
  CHECK(help.code == 0);
}

TEST_CASE("runtime failures exit with code 2") {
  RunResult noread = run_cli("eval-bound --ckpt cli_scratch/absent.json --data " +
                             shared_dataset());
  CHECK(noread.code == 2);
  CHECK(!noread.err.empty());

  RunResult shortbits = run_cli("generate --ckpt " + shared_checkpoint() +
                                " --attrs 1,0 --out cli_scratch/short.pgm");
  CHECK(shortbits.code == 2);
  CHECK(shortbits.err.find("8") != std::string::npos);
}
