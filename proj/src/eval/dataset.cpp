#include "pinsight/eval/dataset.hpp"

#include <cmath>
#include <random>

#include "pinsight/error.hpp"

namespace pinsight::eval {

using nlohmann::json;

void SimSpec::validate() const {
  grid.validate();
  if (pins_per_domain < 1) throw Error(ErrorKind::InvalidConfig, "pins_per_domain must be positive");
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw Error(ErrorKind::InvalidConfig, "snr_db must be finite or +inf");
  codebook.validate();
}

json SimSpec::to_json() const {
  json j;
  j["rooms"] = grid.rooms;
  j["positions"] = grid.positions;
  j["channels"] = grid.channels;
  j["reflectors"] = grid.reflectors;
  j["pins_per_domain"] = pins_per_domain;
  j["seed"] = seed;
  j["snr_db"] = std::isinf(snr_db) ? json(nullptr) : json(snr_db);  // null: noiseless
  j["codebook"] = {codebook.bits_phi, codebook.bits_psi};
  return j;
}

SimSpec SimSpec::from_json(const json& j) {
  SimSpec s;
  try {
    s.grid.rooms = j.at("rooms").get<std::vector<int>>();
    s.grid.positions = j.at("positions").get<std::vector<int>>();
    s.grid.channels = j.at("channels").get<std::vector<int>>();
    s.grid.reflectors = j.at("reflectors").get<std::vector<int>>();
    s.pins_per_domain = j.at("pins_per_domain").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.snr_db = j.at("snr_db").is_null() ? std::numeric_limits<double>::infinity() : j.at("snr_db").get<double>();
    s.codebook.bits_phi = j.at("codebook").at(0).get<int>();
    s.codebook.bits_psi = j.at("codebook").at(1).get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("simulation spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<std::array<int, 6>> balanced_pins(int n, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x5049ULL));
  std::vector<int> deck;
  std::vector<std::array<int, 6>> pins(static_cast<std::size_t>(n));
  for (auto& pin : pins)
    for (int& d : pin) {
      if (deck.empty()) {
        for (int v = 0; v < 10; ++v) deck.push_back(v);
        for (int i = 9; i > 0; --i) {
          std::uniform_int_distribution<int> pick(0, i);
          std::swap(deck[i], deck[pick(rng)]);
        }
      }
      d = deck.back();
      deck.pop_back();
    }
  return pins;
}

std::vector<sim::RenderJob> make_jobs(const SimSpec& spec) {
  spec.validate();
  const auto pins = balanced_pins(spec.pins_per_domain, spec.seed);
  std::vector<sim::RenderJob> jobs;
  for (const auto& key : spec.grid.domains()) {
    sim::Scene scene = sim::Scene::from_domain(key, spec.seed);
    scene.snr_db = spec.snr_db;
    for (int i = 0; i < spec.pins_per_domain; ++i) {
      sim::RenderJob job;
      job.scene = scene;
      job.domain = key;
      job.plan.pin = pins[static_cast<std::size_t>(i)];
      job.plan.rng_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
      job.options.codebook = spec.codebook;
      job.options.noise_seed = mix_seed(spec.seed ^ 0x6e6f697365ULL, static_cast<std::uint64_t>(jobs.size()));
      jobs.push_back(job);
    }
  }
  return jobs;
}

std::vector<PinTrace> simulate(const SimSpec& spec, bool parallel) {
  const auto jobs = make_jobs(spec);
  return sim::render_batch(jobs, sim::HandModel::default_hand(), parallel);
}

}  // namespace pinsight::eval
