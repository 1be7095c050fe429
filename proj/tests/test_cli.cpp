#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smt/checkpoint.hpp"
#include "smt/config.hpp"
#include "test_util.hpp"

#ifndef SMT_CLI_PATH
#error "SMT_CLI_PATH must point at the smt executable"
#endif
#ifndef SMT_CONFIG_DIR
#error "SMT_CONFIG_DIR must point at the shipped configs"
#endif

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI with `args`, capturing stdout and stderr together.
Run smt_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(SMT_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testutil::slurp(log)};
}

std::string desk() { return std::string(SMT_CONFIG_DIR) + "/desk.cfg"; }

// Shared 5-day clear dataset plus a quick model trained on it.
struct Fixture {
  std::string dir;
  Fixture() {
    dir = testutil::temp_dir("cli");
    const auto r = smt_cli("synth --out " + dir + "/clear --days 5 --regime clear --set synth_image_height=16 "
                           "--set synth_image_width=32",
                           dir + "/synth.log");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto t = smt_cli("train --config " + desk() + " --manifest " + dir + "/clear/manifest.csv --out " + dir +
                               "/run --epochs 3",
                           dir + "/train.log");
    REQUIRE_MESSAGE(t.code == 0, t.out);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

}  // namespace

TEST_CASE("help and usage errors") {
  const std::string dir = testutil::temp_dir("cli_usage");
  auto r = smt_cli("--help", dir + "/a.log");
  CHECK(r.code == 0);
  CHECK(r.out.find("train") != std::string::npos);
  for (const char* sub : {"synth", "train", "eval", "baseline", "predict", "attn"}) {
    r = smt_cli(std::string(sub) + " --help", dir + "/b.log");
    CHECK(r.code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
  r = smt_cli("train --manifest " + dir + "/nope.csv --out " + dir + "/run", dir + "/c.log");
  CHECK(r.code == 2);
  CHECK(r.out.find("manifest") != std::string::npos);
  r = smt_cli("", dir + "/d.log");
  CHECK(r.code == 2);
  r = smt_cli("frobnicate", dir + "/e.log");
  CHECK(r.code == 2);
}

TEST_CASE("runtime errors exit 1 with a one-line cause") {
  const std::string dir = testutil::temp_dir("cli_runtime");
  {
    std::ofstream bad(dir + "/bad.csv");
    bad << "timestamp,image_path,ghi\n2023-06-01T10:05:00Z,a.ppm,1\n";
    std::ofstream site(dir + "/site.cfg");
    site << "latitude = 40\nlongitude = -105\n";
  }
  const auto r = smt_cli("train --config " + desk() + " --manifest " + dir + "/bad.csv --out " + dir + "/run",
                         dir + "/a.log");
  CHECK(r.code == 1);
  CHECK(r.out.find("error:") != std::string::npos);
  CHECK(r.out.find("line 2") != std::string::npos);

  const auto s = smt_cli("synth --out " + dir + "/s --set regime=stormy", dir + "/b.log");
  CHECK(s.code == 1);
}

TEST_CASE("train smoke run writes its artifacts") {
  auto& f = fixture();
  CHECK(std::filesystem::exists(f.dir + "/run/model.ckpt"));
  CHECK(first_line(testutil::slurp(f.dir + "/run/loss_history.csv")) == "epoch,lr,train_loss,val_loss");
  // The echoed config is itself a valid config.
  const auto kv = smt::KeyValues::load(f.dir + "/run/effective.cfg");
  CHECK(kv.get_int("embed_dim") == 32);
  CHECK(kv.get_int("epochs") == 3);
  const auto again = smt_cli("train --config " + f.dir + "/run/effective.cfg --manifest " + f.dir +
                                 "/clear/manifest.csv --out " + f.dir + "/run2",
                             f.dir + "/again.log");
  CHECK(again.code == 0);
  // Same settings, same seed: identical weights and history.
  const auto a = smt::load_checkpoint(f.dir + "/run/model.ckpt");
  const auto b = smt::load_checkpoint(f.dir + "/run2/model.ckpt");
  CHECK(a.model_config == b.model_config);
  CHECK(a.train_config == b.train_config);
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].value.values == b.params[i].value.values);
  CHECK(testutil::slurp(f.dir + "/run2/loss_history.csv") == testutil::slurp(f.dir + "/run/loss_history.csv"));
}

TEST_CASE("ts_only checkpoint round-trips its config") {
  auto& f = fixture();
  const auto r = smt_cli("train --config " + desk() + " --manifest " + f.dir + "/clear/manifest.csv --out " + f.dir +
                             "/ts --epochs 2 --pillars ts_only",
                         f.dir + "/ts.log");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const auto ckpt = smt::load_checkpoint(f.dir + "/ts/model.ckpt");
  CHECK(ckpt.model_config.pillars == smt::Pillars::ts_only);
  smt::KeyValues kv;
  ckpt.model_config.write(kv);
  CHECK(smt::SmtConfig::read(smt::KeyValues::parse(kv.to_text())) == ckpt.model_config);
  CHECK(smt::KeyValues::load(f.dir + "/ts/effective.cfg").get_string("pillars") == "ts_only");
}

TEST_CASE("eval and baseline reports") {
  auto& f = fixture();
  const auto e = smt_cli("eval --ckpt " + f.dir + "/run/model.ckpt --manifest " + f.dir + "/clear/manifest.csv --out " +
                             f.dir + "/eval",
                         f.dir + "/eval.log");
  REQUIRE_MESSAGE(e.code == 0, e.out);
  CHECK(first_line(testutil::slurp(f.dir + "/eval/report.csv")) == "horizon_min,n,rmse,rse,corr");
  CHECK(first_line(testutil::slurp(f.dir + "/eval/daily.csv")) == "date,n,rmse");
  CHECK(first_line(testutil::slurp(f.dir + "/eval/forecasts.csv")) == "timestamp,observed,predicted");
  CHECK(e.out.find("sanity") != std::string::npos);

  const auto mismatch = smt_cli("eval --ckpt " + f.dir + "/run/model.ckpt --manifest " + f.dir +
                                    "/clear/manifest.csv --out " + f.dir + "/eval2 --horizon-min 60",
                                f.dir + "/eval2.log");
  CHECK(mismatch.code == 1);

  const auto b = smt_cli("baseline --manifest " + f.dir + "/clear/manifest.csv --out " + f.dir + "/base --config " +
                             desk(),
                         f.dir + "/base.log");
  REQUIRE_MESSAGE(b.code == 0, b.out);
  std::istringstream rep(testutil::slurp(f.dir + "/base/report.csv"));
  std::string header, row;
  std::getline(rep, header);
  std::getline(rep, row);
  CHECK(header == "horizon_min,n,rmse,rse,corr");
  std::vector<std::string> cols;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  REQUIRE(cols.size() >= 3);
  CHECK(std::stod(cols[0]) == 120);
  CHECK(std::stod(cols[2]) < 1e-6);
}

TEST_CASE("baseline on advecting clouds has error") {
  const std::string dir = testutil::temp_dir("cli_adv");
  REQUIRE(smt_cli("synth --out " + dir + "/adv --days 5 --set synth_image_height=8 --set synth_image_width=16",
                  dir + "/s.log")
              .code == 0);
  const auto b = smt_cli("baseline --manifest " + dir + "/adv/manifest.csv --out " + dir + "/base --split all",
                         dir + "/b.log");
  REQUIRE_MESSAGE(b.code == 0, b.out);
  std::istringstream rep(testutil::slurp(dir + "/base/report.csv"));
  std::string row;
  std::getline(rep, row);
  std::getline(rep, row);
  std::stringstream ss(row);
  std::vector<std::string> cols;
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  REQUIRE(cols.size() >= 3);
  CHECK(std::stod(cols[2]) > 1.0);
}

TEST_CASE("predict checks the window length") {
  auto& f = fixture();
  const auto rows = testutil::slurp(f.dir + "/clear/manifest.csv");
  std::istringstream in(rows);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  // Day 2 onward, 143 slots back from a midday row: make a 12-slot window.
  {
    std::ofstream w(f.dir + "/short.csv");
    w << "timestamp,ghi\n";
    for (std::size_t i = 0; i < 12; ++i) {
      const auto& l = lines[200 + i];
      w << l.substr(0, l.find(',')) << ',' << l.substr(l.rfind(',') + 1) << '\n';
    }
  }
  const std::string image = f.dir + "/clear/" + lines[211].substr(lines[211].find(',') + 1,
                                                                  lines[211].rfind(',') - lines[211].find(',') - 1);
  const auto r = smt_cli("predict --ckpt " + f.dir + "/run/model.ckpt --image " + image + " --window " + f.dir +
                             "/short.csv",
                         f.dir + "/pred.log");
  CHECK(r.code == 1);
  CHECK(r.out.find("144") != std::string::npos);
}

TEST_CASE("attention maps from the command line") {
  auto& f = fixture();
  // Pick a sample time from the training fixture's forecasts.
  const auto e = smt_cli("eval --ckpt " + f.dir + "/run/model.ckpt --manifest " + f.dir + "/clear/manifest.csv --out " +
                             f.dir + "/attn_eval --split all",
                         f.dir + "/attn_eval.log");
  REQUIRE(e.code == 0);
  std::istringstream fc(testutil::slurp(f.dir + "/attn_eval/forecasts.csv"));
  std::string line;
  std::getline(fc, line);
  std::getline(fc, line);
  const std::string when = line.substr(0, line.find(','));

  const auto r = smt_cli("attn --ckpt " + f.dir + "/run/model.ckpt --manifest " + f.dir + "/clear/manifest.csv --time " +
                             when + " --out " + f.dir + "/attn",
                         f.dir + "/attn.log");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  for (const char* name : {"last_layer", "rollout"}) {
    const std::string base = f.dir + "/attn/" + name;
    CHECK(std::filesystem::exists(base + ".pgm"));
    std::istringstream csv(testutil::slurp(base + ".csv"));
    std::getline(csv, line);
    CHECK(line == "token_index,kind,weight");
    double total = 0;
    std::size_t n = 0;
    while (std::getline(csv, line)) total += std::stod(line.substr(line.rfind(',') + 1)), ++n;
    // desk config: 32 one-pixel columns -> N = 32, F = 1, M = 1
    CHECK(n == 32 + 1);
    CHECK(std::abs(total - 1) < 1e-6);
  }
  CHECK(std::filesystem::exists(f.dir + "/attn/modality.csv"));

  const auto missing = smt_cli("attn --ckpt " + f.dir + "/run/model.ckpt --manifest " + f.dir +
                                   "/clear/manifest.csv --time 2020-01-01T12:00:00Z --out " + f.dir + "/attn2",
                               f.dir + "/attn2.log");
  CHECK(missing.code == 1);
  CHECK(missing.out.find("nearest") != std::string::npos);
}

TEST_CASE("synth is byte-identical for the same seed") {
  const std::string dir = testutil::temp_dir("cli_synth");
  for (const char* name : {"a", "b"}) {
    REQUIRE(smt_cli("synth --out " + dir + "/" + name + " --days 1 --seed 9 --set synth_image_height=8 "
                    "--set synth_image_width=16",
                    dir + "/" + name + ".log")
                .code == 0);
  }
  namespace fs = std::filesystem;
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir + "/a")) {
    if (!e.is_regular_file()) continue;
    CHECK(testutil::slurp(e.path().string()) ==
          testutil::slurp((fs::path(dir + "/b") / fs::relative(e.path(), dir + "/a")).string()));
    ++n;
  }
  CHECK(n > 10);
}
