#pragma once

#include <vector>

#include "lnet/ingestion.hpp"
#include "lnet/synth.hpp"

namespace testing_support {

inline std::vector<lnet::Sample> synth_samples(int side, int n, std::uint64_t seed, int first = 0) {
  lnet::SynthConfig config = lnet::SynthConfig::defaults(side);
  config.seed = seed;
  std::vector<lnet::Sample> out;
  for (auto& s : lnet::synth_generate(config, n, first)) {
    out.push_back({s.image_id, std::move(s.image), std::move(s.masks), s.grade});
  }
  return out;
}

}  // namespace testing_support
