#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cdm/errors.hpp"

namespace cdm {

/// sigma(t) = sigma_max * sin(((t + s) / (1 + s)) * pi / 2), t in [0, 1].
struct SineSchedule {
  double sigma_max = 1.0;
  double s = 0.008;
};

inline double sigma_of_t(const SineSchedule& sched, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("schedule time outside [0, 1]: " + std::to_string(t));
  return sched.sigma_max * std::sin((t + sched.s) / (1.0 + sched.s) * (std::numbers::pi / 2.0));
}

/// Noise levels in sampling order: sigmas.front() is the largest level,
/// sigmas.back() the floor.
struct SigmaLadder {
  std::vector<double> sigmas;

  std::size_t levels() const { return sigmas.empty() ? 0 : sigmas.size() - 1; }
};

/// T + 1 levels at uniformly spaced t from 1 down to 0.
inline SigmaLadder discretize(const SineSchedule& sched, int T) {
  if (T < 1) throw ConfigError("schedule needs at least one level (T >= 1)");
  SigmaLadder ladder;
  ladder.sigmas.reserve(static_cast<std::size_t>(T) + 1);
  for (int i = T; i >= 0; --i)
    ladder.sigmas.push_back(i == T ? sigma_of_t(sched, 1.0)
                                   : sigma_of_t(sched, static_cast<double>(i) / T));
  return ladder;
}

inline bool strictly_decreasing(const SigmaLadder& ladder) {
  for (std::size_t i = 1; i < ladder.sigmas.size(); ++i)
    if (!(ladder.sigmas[i] < ladder.sigmas[i - 1])) return false;
  return !ladder.sigmas.empty() && ladder.sigmas.back() >= 0.0;
}

/// Relative Euler step from sigma_curr down to sigma_next.
inline double euler_eta(double sigma_curr, double sigma_next) {
  if (!(sigma_curr > 0.0) || !(sigma_next >= 0.0) || !(sigma_curr > sigma_next))
    throw DomainError("euler step requires sigma_curr > sigma_next >= 0");
  return (sigma_curr - sigma_next) / sigma_curr;
}

/// Noise level implied by k constant fixed-point steps of size eta.
inline double geometric_sigma(double sigma_start, double eta, int k) {
  if (!(eta > 0.0 && eta < 1.0) || k < 0) throw DomainError("geometric decay needs 0 < eta < 1, k >= 0");
  return sigma_start * std::pow(1.0 - eta, k);
}

}  // namespace cdm
