#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "pinsight/bfi_codec.hpp"
#include "pinsight/store/dataset.hpp"
#include "pinsight/store/experiment.hpp"

namespace fs = std::filesystem;
using namespace pinsight;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

struct Sandbox {
  fs::path root;
  Sandbox() {
    char tmpl[] = "/tmp/pinsight-cli-XXXXXX";
    root = ::mkdtemp(tmpl);
  }
  ~Sandbox() { fs::remove_all(root); }

  Run run(const std::string& args) const {
    const auto out = root / ".stdout", err = root / ".stderr";
    const std::string cmd = "PINSIGHT_OUT='" + root.string() + "' '" PINSIGHT_CLI "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }
};

std::string tree_digest(const fs::path& dir) {
  std::string all;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) all += fs::relative(f, dir).string() + " " + store::sha256_file(f.string()) + "\n";
  return all;
}

}  // namespace

TEST_CASE("splits prints the seen-domain counts") {
  Sandbox box;
  const auto r = box.run("splits --id RP");
  CHECK(r.code == 0);
  CHECK(r.out.find("720") != std::string::npos);
  const auto j = nlohmann::json::parse(box.run("splits --json").out);
  REQUIRE(j.size() == 4);
  CHECK(j[0]["seen"] == 720);
  CHECK(j[1]["seen"] == 675);
  CHECK(j[2]["seen"] == 600);
  CHECK(j[3]["seen"] == 512);
}

TEST_CASE("usage and configuration errors exit with 2") {
  Sandbox box;
  for (const char* args : {"", "bogus", "simulate --pins", "simulate --out x --rooms 99",
                           "simulate --out x --codebook 8/8", "simulate --out x --snr-db loud",
                           "evaluate --data x --out y --method svm"}) {
    CAPTURE(args);
    const auto r = box.run(args);
    CHECK(r.code == 2);
    CHECK(r.err.find("\"error\"") != std::string::npos);
  }
}

TEST_CASE("simulate is reproducible and the pipeline runs end to end") {
  Sandbox box;
  const std::string sim = "simulate --rooms 2 --positions 1 --pins 3 --seed 4 --snr-db 25 --out ";
  REQUIRE(box.run(sim + "a").code == 0);
  REQUIRE(box.run("--threads 1 " + sim + "b").code == 0);
  CHECK(tree_digest(box.root / "a") == tree_digest(box.root / "b"));

  REQUIRE(box.run("features --data a").code == 0);
  REQUIRE(box.run("train --data a --method windtalker --out wt.ckpt").code == 0);
  const auto attack = box.run("attack --data a --method windtalker --model wt.ckpt --top 5 --out ranks.json");
  INFO(attack.err);
  REQUIRE(attack.code == 0);
  std::ifstream in(box.root / "ranks.json");
  const auto ranks = nlohmann::json::parse(in);
  CHECK(ranks.size() == 6);
  CHECK(ranks[0]["candidates"].size() == 5);

  const auto ev = box.run("evaluate --data a --method windtalker --split in_domain --out rep");
  REQUIRE(ev.code == 0);
  CHECK(fs::exists(box.root / "rep" / "report.json"));
  CHECK(fs::exists(box.root / "rep" / "confusion_in_domain.csv"));

  const auto ver = box.run("verify --data a");
  CHECK(ver.code == 0);
  CHECK(ver.out.find("PASS dataset") != std::string::npos);

  // Every successful command is logged, including the read-only verify.
  const auto log = store::read_experiments(box.root.string());
  CHECK(log.size() == 7);
  CHECK(log[0].command == "simulate");
  CHECK_FALSE(log[0].outputs.empty());
}

TEST_CASE("a config file supplies flags the command line leaves out") {
  Sandbox box;
  std::ofstream(box.root / "sim.conf") << "# small run\nrooms = 1\npositions = 1\npins = 2\nseed = 9\nout = fromconf\n"
                                       << "snr_db = 30\nunused_key = 1\n";
  const auto r = box.run("simulate --config '" + (box.root / "sim.conf").string() + "' --pins 1");
  REQUIRE(r.code == 0);
  const auto m = store::read_manifest((box.root / "fromconf").string());
  CHECK(m.traces.size() == 1);
  const auto log = store::read_experiments(box.root.string());
  REQUIRE(log.size() == 1);
  CHECK(log[0].settings["ignored_config_keys"] == nlohmann::json::array({"unused-key"}));
}

TEST_CASE("ingest appends a captured trace") {
  Sandbox box;
  REQUIRE(box.run("simulate --rooms 1 --positions 1 --pins 1 --seed 2 --out ds").code == 0);
  const auto first = store::load_trace((box.root / "ds").string(), store::read_manifest((box.root / "ds").string()).traces[0].id);

  std::ofstream jsonl(box.root / "capture.jsonl");
  for (const auto& r : first.reports) jsonl << codec::to_sidecar_line(r) << "\n";
  jsonl.close();
  nlohmann::json labels = {{"id", "capture-1"}, {"digits", first.digits}, {"keystrokes", first.keystrokes},
                           {"domain", first.domain.str()}, {"sample_rate", first.sample_rate}};
  std::ofstream(box.root / "labels.json") << labels.dump();

  const auto r = box.run("ingest --input '" + (box.root / "capture.jsonl").string() + "' --labels '" +
                         (box.root / "labels.json").string() + "' --data ds");
  REQUIRE(r.code == 0);
  const auto m = store::read_manifest((box.root / "ds").string());
  CHECK(m.traces.size() == 2);
  CHECK(store::load_trace((box.root / "ds").string(), "capture-1").reports == first.reports);
  CHECK(box.run("verify --data ds").code == 0);

  std::ofstream(box.root / "bad.jsonl") << "{\"t\": 1}\n";
  CHECK(box.run("ingest --input '" + (box.root / "bad.jsonl").string() + "' --labels '" +
                (box.root / "labels.json").string() + "' --data ds")
            .code == 3);
}

TEST_CASE("corrupt data exits with 3 and a failed verify with 4") {
  Sandbox box;
  REQUIRE(box.run("simulate --rooms 1 --positions 1 --pins 1 --out ds").code == 0);
  const auto id = store::read_manifest((box.root / "ds").string()).traces[0].id;
  std::ofstream(box.root / "ds" / (id + ".bfi"), std::ios::binary) << "junk";
  const auto f = box.run("features --data ds");
  CHECK(f.code == 3);
  CHECK(f.err.find("truncation") != std::string::npos);
  const auto v = box.run("verify --data ds");
  CHECK(v.code == 4);
  CHECK(v.out.find("FAIL dataset") != std::string::npos);
  CHECK(box.run("attack --data missing --method wink").code == 3);
}
