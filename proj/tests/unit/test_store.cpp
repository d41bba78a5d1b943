#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pinsight/error.hpp"
#include "pinsight/eval/dataset.hpp"
#include "pinsight/store/dataset.hpp"
#include "pinsight/store/experiment.hpp"
#include "pinsight/store/format.hpp"

using namespace pinsight;
using namespace pinsight::store;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    char tmpl[] = "/tmp/pinsight-store-XXXXXX";
    path = ::mkdtemp(tmpl);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

const std::vector<PinTrace>& two_traces() {
  static const std::vector<PinTrace> traces = [] {
    eval::SimSpec spec;
    spec.grid.rooms = {0, 1};
    spec.grid.positions = {0};
    spec.grid.channels = {44};
    spec.grid.reflectors = {0};
    spec.pins_per_domain = 1;
    spec.seed = 2;
    spec.snr_db = 25.0;
    return eval::simulate(spec);
  }();
  return traces;
}

ErrorKind kind_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InvalidConfig;
}

}  // namespace

TEST_CASE("header layout and matrix payload size") {
  FileHeader h;
  h.magic = kMagicMatrix;
  h.frames = 100;
  h.n_sub = 234;
  h.n_tx = 4;
  h.n_stream = 2;
  h.rate_millihz = 18000;
  CHECK(matrix_payload_bytes(h) == 100u * 234 * 4 * 2 * 2 * 4);
  const auto bytes = encode_header(h);
  CHECK(bytes[0] == 'P');
  CHECK(bytes[1] == 'S');
  CHECK(bytes[2] == 'M');
  CHECK(bytes[3] == 'X');
  CHECK(bytes[8] == 100);
  CHECK(bytes[12] == 234);
  CHECK(decode_header(bytes, kMagicMatrix) == h);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK(kind_of([&] { decode_header(bad, kMagicMatrix); }) == ErrorKind::CorruptHeader);
  bad = bytes;
  bad[4] = 2;
  CHECK(kind_of([&] { decode_header(bad, kMagicMatrix); }) == ErrorKind::CorruptHeader);
  bad = bytes;
  bad[28] = 1;
  CHECK(kind_of([&] { decode_header(bad, kMagicMatrix); }) == ErrorKind::CorruptHeader);
  CHECK(kind_of([&] { decode_header(std::span(bytes).first(20), kMagicMatrix); }) == ErrorKind::Truncation);
}

TEST_CASE("matrix, feature and payload files round trip") {
  const auto& t = two_traces()[0];
  const auto mat = encode_matrices(t.matrices, t.sample_rate);
  CHECK(mat.size() == kHeaderBytes + t.matrices.size() * 234 * 4 * 2 * 2 * 4);
  double rate = 0;
  const auto back = decode_matrices(mat, &rate);
  CHECK(rate == t.sample_rate);
  REQUIRE(back.size() == t.matrices.size());
  double worst = 0;
  for (std::size_t i = 0; i < back.size(); ++i)
    for (std::size_t k = 0; k < back[i].values.size(); ++k)
      worst = std::max(worst, std::abs(back[i].values[k] - t.matrices[i].values[k]));
  CHECK(worst < 1e-6);
  CHECK(encode_matrices(back, rate) == mat);

  CHECK(kind_of([&] { decode_matrices(std::span(mat).first(mat.size() - 1)); }) == ErrorKind::Truncation);
  auto longer = mat;
  longer.push_back(0);
  CHECK(kind_of([&] { decode_matrices(longer); }) == ErrorKind::CorruptHeader);

  const auto bfi = encode_reports(t.reports, t.sample_rate);
  CHECK(decode_reports(bfi) == t.reports);
  CHECK(kind_of([&] { decode_reports(std::span(bfi).first(bfi.size() - 3)); }) == ErrorKind::Truncation);
  CHECK(kind_of([&] { decode_features(bfi); }) == ErrorKind::CorruptHeader);

  Eigen::MatrixXd f(3, 134);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 134; ++c) f(r, c) = 0.25 * r - 0.5 * c;
  CHECK(decode_features(encode_features(f, 18.0)) == f);
}

TEST_CASE("sidecar round trip and id rules") {
  const auto& t = two_traces()[1];
  PinTrace back;
  apply_sidecar(trace_sidecar(t), back);
  CHECK(back.id == t.id);
  CHECK(back.digits == t.digits);
  CHECK(back.keystrokes == t.keystrokes);
  CHECK(back.domain == t.domain);
  CHECK(back.scene_seed == t.scene_seed);
  CHECK(back.plan_seed == t.plan_seed);
  CHECK(back.hand_positions == t.hand_positions);
  CHECK_NOTHROW(check_trace_id("r00-p0-c44-a0-0003"));
  CHECK_THROWS_AS(check_trace_id("../escape"), Error);
  CHECK_THROWS_AS(check_trace_id(""), Error);
}

TEST_CASE("dataset store and load") {
  TempDir tmp;
  const auto dir = tmp.sub("ds");
  const auto& traces = two_traces();
  const auto m = write_dataset(dir, traces, {{"kind", "test"}});
  CHECK(m.traces.size() == 2);
  CHECK(m.digest == m.compute_digest());
  CHECK(read_manifest(dir).to_json() == m.to_json());
  CHECK(verify_dataset(dir).empty());

  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = traces[i];
    const auto& b = loaded[i];
    CHECK(a.id == b.id);
    CHECK(a.reports == b.reports);
    CHECK(a.digits == b.digits);
    CHECK(a.keystrokes == b.keystrokes);
    CHECK(a.domain == b.domain);
    CHECK(a.sample_rate == b.sample_rate);
    CHECK(a.length() == b.length());
  }

  // Storing what was loaded reproduces the same bytes.
  const auto again = write_dataset(tmp.sub("ds2"), loaded, {{"kind", "test"}});
  CHECK(again.digest == m.digest);
}

TEST_CASE("manifest digest tracks trace bytes") {
  TempDir tmp;
  const auto dir = tmp.sub("ds");
  const auto m = write_dataset(dir, two_traces(), nullptr);
  const auto first = m.traces[0].id;

  auto mat = read_file(dir + "/" + first + ".mat");
  mat[kHeaderBytes + 5] ^= 0x01;
  write_file(dir + "/" + first + ".mat", mat);
  const auto problems = verify_dataset(dir);
  REQUIRE_FALSE(problems.empty());
  CHECK(problems[0].find("checksum mismatch") != std::string::npos);

  // Rewriting from the tampered trace changes the digest; restoring it brings the digest back.
  const auto tampered = write_dataset(tmp.sub("t"), std::vector<PinTrace>{load_trace(dir, first)}, nullptr);
  const auto clean = write_dataset(tmp.sub("c"), std::span(two_traces()).first(1), nullptr);
  CHECK(tampered.digest != clean.digest);
  mat[kHeaderBytes + 5] ^= 0x01;
  write_file(dir + "/" + first + ".mat", mat);
  CHECK(verify_dataset(dir).empty());

  auto head = read_file(dir + "/" + first + ".bfi");
  head[0] = 'Z';
  write_file(dir + "/" + first + ".bfi", head);
  CHECK(kind_of([&] { load_trace(dir, first); }) == ErrorKind::CorruptHeader);
}

TEST_CASE("features layer") {
  TempDir tmp;
  const auto dir = tmp.sub("ds");
  write_dataset(dir, two_traces(), nullptr);
  CHECK(kind_of([&] { load_features(dir); }) == ErrorKind::InsufficientCoverage);
  const auto loaded = load_dataset(dir);
  const auto tfs = features::featurize_batch(loaded);
  const auto m = write_features(dir, tfs, {{"policy", "random"}});
  CHECK(m.traces[0].files.size() == 5);
  CHECK(verify_dataset(dir).empty());
  const auto back = load_features(dir);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == tfs[i].id);
    CHECK(back[i].keystrokes == tfs[i].keystrokes);
    CHECK(back[i].series.ref_index == tfs[i].series.ref_index);
    CHECK((back[i].series.frames - tfs[i].series.frames).cwiseAbs().maxCoeff() <=
          1e-6 * (1.0 + tfs[i].series.frames.cwiseAbs().maxCoeff()));
  }
  write_features(dir, std::span(tfs).first(1), {{"policy", "first"}});
  CHECK(load_features(dir).size() == 1);
  CHECK(verify_dataset(dir).empty());
}

TEST_CASE("writers exclude each other") {
  TempDir tmp;
  const auto dir = tmp.sub("locked");
  DirLock held(dir);
  CHECK(kind_of([&] { DirLock second(dir); }) == ErrorKind::Io);

  // flock is per open file, so a child process sees the lock as well.
  const pid_t pid = ::fork();
  if (pid == 0) {
    try {
      DirLock child(dir);
      std::_Exit(0);
    } catch (const Error&) {
      std::_Exit(7);
    }
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  CHECK(WEXITSTATUS(status) == 7);
}

TEST_CASE("refuses to overwrite a directory that is not a dataset") {
  TempDir tmp;
  const auto dir = tmp.sub("other");
  fs::create_directories(dir);
  std::ofstream(dir + "/notes.txt") << "keep me";
  CHECK(kind_of([&] { write_dataset(dir, two_traces(), nullptr); }) == ErrorKind::Io);
  CHECK(fs::exists(dir + "/notes.txt"));
}

TEST_CASE("flat config") {
  const auto c = parse_flat_config("# comment\nseed = 7\nsnr_db=20  # trailing\n\nmethod = wink\n");
  CHECK(c.size() == 3);
  CHECK(c.at("seed") == "7");
  CHECK(c.at("snr-db") == "20");
  CHECK(c.at("method") == "wink");
  CHECK_THROWS_AS(parse_flat_config("seed 7\n"), Error);
  CHECK_THROWS_AS(parse_flat_config("seed=1\nseed=2\n"), Error);
}

TEST_CASE("experiment log and output root") {
  TempDir tmp;
  ::setenv("PINSIGHT_OUT", tmp.path.c_str(), 1);
  CHECK(output_root() == tmp.path.string());
  CHECK(resolve_output("ds") == (tmp.path / "ds").string());
  CHECK(resolve_output("/abs/x") == "/abs/x");
  fs::create_directories(tmp.path / "out");
  std::ofstream(tmp.path / "out" / "a.txt") << "alpha";
  const auto digests = digest_outputs({(tmp.path / "out").string()});
  CHECK(digests.at("out/a.txt") == sha256_hex(std::string("alpha")));
  ::unsetenv("PINSIGHT_OUT");

  ExperimentManifest e;
  e.command = "simulate";
  e.args = {"simulate", "--seed", "7"};
  e.settings = {{"seed", 7}};
  e.outputs = digests;
  append_experiment(tmp.path.string(), e);
  append_experiment(tmp.path.string(), e);
  const auto log = read_experiments(tmp.path.string());
  REQUIRE(log.size() == 2);
  CHECK(log[1].to_json() == e.to_json());
  CHECK(sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
