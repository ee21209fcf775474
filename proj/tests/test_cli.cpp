#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "polyth/checkpoint.hpp"
#include "polyth/image.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

#ifndef POLYTHNET_PATH
#error "POLYTHNET_PATH must point at the polythnet binary"
#endif

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(POLYTHNET_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* kTinyModel = "--set input_size=16,16 --set stem_channels=4 --set block_channels=6 --set head_widths=12,8";

struct Fixture {
  fs::path root, data, out;
  Fixture() {
    root = oracle::fresh_temp_dir("cli");
    data = root / "data";
    out = root / "run";
    oracle::write_synthetic_dataset(data, {4, 2, 2}, 16, 9);
  }
  std::string train_args(const fs::path& dir) const {
    return "train --data " + data.string() + " --out " + dir.string() +
           " --restarts 1 --max-epochs 2 --steps-per-epoch 2 --batch-size 4 --seed 5 " + kTinyModel;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::vector<double> parse_probs(const std::string& out) {
  std::vector<double> p;
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.size() > 3 && line[0] == 'p' && std::isdigit(static_cast<unsigned char>(line[1])))
      p.push_back(std::stod(line.substr(3)));
  }
  return p;
}

int parse_label(const std::string& out) {
  const auto at = out.find("label ");
  REQUIRE(at != std::string::npos);
  return out[at + 6] - '0';
}

}  // namespace

TEST_CASE("train writes checkpoint and logs deterministically") {
  const Fixture& f = fixture();
  const Run a = run(f.train_args(f.out));
  CHECK_MESSAGE(a.code == 0, a.out);
  for (const char* name : {"model.plnt", "metrics.csv", "summary.csv", "metrics_run0.csv", "config.txt"})
    CHECK(fs::exists(f.out / name));
  const fs::path again = f.root / "run_again";
  CHECK(run(f.train_args(again)).code == 0);
  for (const char* name : {"model.plnt", "metrics.csv", "summary.csv"}) CHECK(slurp(f.out / name) == slurp(again / name));
}

TEST_CASE("train input errors exit 2") {
  const Fixture& f = fixture();
  const fs::path broken = f.root / "broken";
  oracle::write_synthetic_dataset(broken, {1, 1, 1}, 16, 1);
  fs::remove_all(broken / "val");
  Run r = run("train --data " + broken.string() + " --out " + (f.root / "x").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("val") != std::string::npos);

  r = run(f.train_args(f.root / "y") + " --set no_such_key=3");
  CHECK(r.code == 2);
  CHECK(r.out.find("no_such_key") != std::string::npos);

  r = run(f.train_args(f.root / "y") + " --lambda -1");
  CHECK(r.code == 2);

  {
    std::ofstream cfg(f.root / "bad.cfg");
    cfg << "batch_size=4\nthis line has no equals\n";
  }
  r = run(f.train_args(f.root / "y") + " --config " + (f.root / "bad.cfg").string());
  CHECK(r.code == 2);
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("config file values are overridden by flags") {
  const Fixture& f = fixture();
  {
    std::ofstream cfg(f.root / "ok.cfg");
    cfg << "# tiny\nmax_epochs=7\nlambda=3\n";
  }
  const fs::path dir = f.root / "cfg_run";
  const Run r = run(f.train_args(dir) + " --lambda 1.5 --config " + (f.root / "ok.cfg").string());
  REQUIRE(r.code == 0);
  const std::string cfg = slurp(dir / "config.txt");
  CHECK(cfg.find("lambda=1.5\n") != std::string::npos);
  CHECK(cfg.find("max_epochs=2\n") != std::string::npos);

  const Run warn = run(f.train_args(f.root / "warn_run") + " --lambda 12");
  CHECK(warn.code == 0);
  CHECK(warn.out.find("warning") != std::string::npos);
}

TEST_CASE("eval") {
  const Fixture& f = fixture();
  if (!fs::exists(f.out / "model.plnt")) REQUIRE(run(f.train_args(f.out)).code == 0);
  const std::string ck = (f.out / "model.plnt").string();
  const Run a = run("eval --data " + f.data.string() + " --checkpoint " + ck + " --split val");
  CHECK_MESSAGE(a.code == 0, a.out);
  CHECK(a.out.find("macro_f1") != std::string::npos);
  CHECK(fs::exists(f.out / "eval_val.txt"));
  const std::string first = slurp(f.out / "eval_val.txt");
  CHECK(run("eval --data " + f.data.string() + " --checkpoint " + ck + " --split val").code == 0);
  CHECK(slurp(f.out / "eval_val.txt") == first);

  CHECK(run("eval --data " + f.data.string() + " --checkpoint " + ck + " --split dev").code == 2);

  std::string bytes = slurp(f.out / "model.plnt");
  bytes[bytes.size() - 2] ^= 0x10;
  {
    std::ofstream bad(f.root / "bad.plnt", std::ios::binary);
    bad << bytes;
  }
  const Run c = run("eval --data " + f.data.string() + " --checkpoint " + (f.root / "bad.plnt").string());
  CHECK(c.code == 3);
  CHECK(c.out.find("checksum") != std::string::npos);
  CHECK(run("eval --data " + f.data.string() + " --checkpoint " + (f.root / "none.plnt").string()).code == 3);
}

TEST_CASE("classify") {
  const Fixture& f = fixture();
  if (!fs::exists(f.out / "model.plnt")) REQUIRE(run(f.train_args(f.out)).code == 0);
  const std::string ck = (f.out / "model.plnt").string();
  const fs::path img = f.data / "test" / "2_polythene" / "img_000.ppm";

  const Run plain = run("classify --checkpoint " + ck + " --image " + img.string());
  REQUIRE(plain.code == 0);
  const std::vector<double> p = parse_probs(plain.out);
  REQUIRE(p.size() == 3);
  CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) < 1e-6);
  const int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  CHECK(parse_label(plain.out) == arg);

  const Run zero = run("classify --checkpoint " + ck + " --image " + img.string() + " --threshold 0");
  REQUIRE(zero.code == 0);
  CHECK(parse_label(zero.out) == 2);

  // larger images are resized first
  polyth::write_ppm(polyth::RawImage(40, 30, 128), f.root / "big.ppm");
  CHECK(run("classify --checkpoint " + ck + " --image " + (f.root / "big.ppm").string()).code == 0);

  {
    std::ofstream bad(f.root / "junk.ppm");
    bad << "P5 1 1 255\n\x01";
  }
  CHECK(run("classify --checkpoint " + ck + " --image " + (f.root / "junk.ppm").string()).code == 2);
  CHECK(run("classify --checkpoint " + ck + " --image " + img.string() + " --threshold 2").code == 2);
}

TEST_CASE("augment") {
  const Fixture& f = fixture();
  const fs::path img = f.data / "train" / "0_nonplastic" / "img_000.ppm";
  const fs::path a = f.root / "aug_a", b = f.root / "aug_b";
  REQUIRE(run("augment --image " + img.string() + " --out " + a.string() + " --count 3 --seed 4").code == 0);
  REQUIRE(run("augment --image " + img.string() + " --out " + b.string() + " --count 3 --seed 4").code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    (void)e;
    ++files;
  }
  CHECK(files == 3);
  const polyth::RawImage src = polyth::read_ppm(img);
  for (const char* name : {"aug_0000.ppm", "aug_0001.ppm", "aug_0002.ppm"}) {
    CHECK(slurp(a / name) == slurp(b / name));
    const polyth::RawImage out = polyth::read_ppm(a / name);
    CHECK(out.width == src.width);
    CHECK(out.height == src.height);
  }
  // the output path exists as a regular file, so the directory cannot be made
  {
    std::ofstream blocker(f.root / "blocker");
    blocker << "x";
  }
  CHECK(run("augment --image " + img.string() + " --out " + (f.root / "blocker").string() + " --count 1").code == 4);
  CHECK(run("augment --image " + (f.root / "missing.ppm").string() + " --out " + a.string()).code == 2);
}

TEST_CASE("verify") {
  const Run ok = run("verify");
  CHECK_MESSAGE(ok.code == 0, ok.out);
  CHECK(ok.out.find("grad:conv2d") != std::string::npos);
  CHECK(ok.out.find("adam:reference_100_steps") != std::string::npos);
  const Run bad = run("verify --perturb separable_block");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAILED: grad:separable_block") != std::string::npos);
}
