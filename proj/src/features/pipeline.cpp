#include <exception>

#include "pinsight/features.hpp"

namespace pinsight::features {

namespace {

std::uint64_t id_hash(const std::string& id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : id) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace

TraceFeatures featurize(const PinTrace& input, const FeaturizeOptions& options) {
  const std::uint64_t seed = mix_seed(options.seed, id_hash(input.id));
  const PinTrace trace =
      options.resample ? prep::resample_uniform(input, options.per_digit_duration) : input;
  const int ref = prep::select_reference(trace, options.policy, seed);
  const auto v = prep::normalize(trace.matrices, ref, options.normalize);

  TraceFeatures out;
  out.series = extract(trace.reports, trace.matrices, v, ref, options.extract);
  out.id = trace.id;
  out.domain = trace.domain;
  out.digits = trace.digits;
  out.sample_rate = trace.sample_rate;
  out.keystrokes = options.timing_sigma > 0
                       ? prep::perturb_timing(trace, options.timing_sigma, seed).keystrokes
                       : trace.keystrokes;
  return out;
}

std::vector<TraceFeatures> featurize_batch(std::span<const PinTrace> traces,
                                           const FeaturizeOptions& options, bool parallel) {
  std::vector<TraceFeatures> out(traces.size());
  const long n = static_cast<long>(traces.size());
  if (!parallel) {
    for (long i = 0; i < n; ++i) out[i] = featurize(traces[i], options);
    return out;
  }
  std::vector<std::exception_ptr> errors(traces.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      out[i] = featurize(traces[i], options);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace pinsight::features
