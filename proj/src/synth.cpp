// Copyright 2026 The evadmm Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "evadmm/io.hpp"

namespace evadmm {
namespace {

/// Portable uniform draws: the standard distributions are implementation
/// defined, so the raw 64-bit engine output is mapped by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  int integer(int lo, int hi) {  // inclusive range
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }

 private:
  std::mt19937_64 engine_;
};

double round_to(double v, double quantum) { return std::round(v / quantum) * quantum; }

}  // namespace

Scenario synth_scenario(int n_evs, int steps, int steps_per_hour, std::uint64_t seed,
                        AggregatorObjective objective) {
  if (n_evs < 1) throw std::invalid_argument("synth_scenario: n_evs must be >= 1");
  if (steps < 1 || steps_per_hour < 1) {
    throw std::invalid_argument("synth_scenario: steps and steps_per_hour must be >= 1");
  }
  Rng rng(seed);
  Scenario s;
  s.grid.steps = steps;
  s.grid.steps_per_hour = steps_per_hour;
  const auto defaults = default_scenario_params();

  // Residential-style base load with morning and evening peaks, scaled so
  // that the fleet can move a meaningful share of it.
  const double scale = 8.0 * n_evs;
  s.demand.resize(steps);
  for (int t = 0; t < steps; ++t) {
    const double h = std::fmod(s.grid.hour_of(t), 24.0);
    const double morning = std::exp(-0.5 * std::pow((h - 8.0) / 1.5, 2));
    const double evening = std::exp(-0.5 * std::pow((h - 19.0) / 2.0, 2));
    const double noise = 0.04 * (rng.uniform() - 0.5);
    s.demand[t] = round_to(scale * (0.45 + 0.35 * morning + 0.55 * evening + noise), 1e-3);
  }

  const int min_window = std::min(8, steps);
  const int max_window = std::max(min_window, std::min(steps, 12 * steps_per_hour));
  for (int i = 0; i < n_evs; ++i) {
    const int len = rng.integer(min_window, max_window);
    const int arrival = rng.integer(0, steps - len);
    const int departure = arrival + len;
    const EvDefaults& d = defaults.ev;
    const double reachable = std::min(len * d.p_ch_max * d.eta_ch / steps_per_hour,
                                      d.energy_max - d.initial_energy);
    const double added = round_to((0.2 + 0.6 * rng.uniform()) * reachable, 1e-3);
    s.evs.push_back(make_ev(d, s.grid, i, arrival, departure, added));
  }
  s.tariff = default_tariff(s.grid);
  s.aggregator = make_aggregator(defaults.aggregator, s.grid, objective);
  return s;
}

}  // namespace evadmm
