#pragma once

#include <optional>
#include <random>
#include <string>

#include "cdm/data.hpp"
#include "cdm/errors.hpp"
#include "cdm/netcore.hpp"
#include "cdm/schedule.hpp"

namespace cdm {

enum class Variant { time_dependent, time_independent };

inline std::string variant_tag(Variant v) {
  return v == Variant::time_dependent ? "cdm-t" : "cdm-0";
}

inline Variant parse_variant(const std::string& tag) {
  if (tag == "cdm-t") return Variant::time_dependent;
  if (tag == "cdm-0") return Variant::time_independent;
  throw ConfigError("unknown variant '" + tag + "' (expected cdm-t or cdm-0)");
}

/// Conditional denoiser. Operates in standardized space; the standardizer
/// maps to and from physical units.
struct CdmModel {
  NetworkParams params;
  Variant variant = Variant::time_independent;
  Architecture arch;
  Standardizer standardizer;
  SineSchedule schedule;  // training noise schedule; samplers reuse it

  int dim_x() const { return arch.dim_x; }
  int dim_y() const { return arch.dim_y; }
};

inline Architecture cdm_architecture(int dim_x, int dim_y, Variant v, double width_scale = 1.0) {
  Architecture a;
  a.dim_x = dim_x;
  a.dim_y = dim_y;
  a.time_dependent = v == Variant::time_dependent;
  return width_scale == 1.0 ? a : a.scaled(width_scale);
}

inline CdmModel make_cdm(const Architecture& arch, Variant v, const Standardizer& st, Rng& rng) {
  Architecture a = arch;
  a.time_dependent = v == Variant::time_dependent;
  a.y_stream = true;
  a.reconstruct_x = true;
  return {init_network(a, rng), v, a, st, SineSchedule{}};
}

/// Noise injection: y + sigma * eps, eps ~ N(0, I).
inline Vector corrupt(const Vector& y, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw DomainError("corruption sigma must be nonnegative");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = y[i] + sigma * normal(rng);
  return out;
}

struct Denoised {
  Vector y_hat;
  Vector x_hat;
};

/// Standardized-space denoiser call. `sigma` must be given exactly when the
/// model is time dependent.
inline Denoised denoise(const CdmModel& m, const Vector& y_noisy, const Vector& x,
                        std::optional<double> sigma) {
  if ((m.variant == Variant::time_dependent) != sigma.has_value())
    throw VariantMismatch(m.variant == Variant::time_dependent
                              ? "cdm-t denoiser requires a noise level"
                              : "cdm-0 denoiser does not accept a noise level");
  if (y_noisy.size() != m.dim_y()) throw ShapeError("encoder_y.0", "state width");
  if (x.size() != m.dim_x()) throw ShapeError("encoder_x.0", "condition width");
  const Vector z = forward(m.params, y_noisy, x, sigma);
  return {z.head(m.dim_y()), z.tail(m.dim_x())};
}

/// Regressor baseline: condition stream only, predicts y.
struct RegressorModel {
  NetworkParams params;
  Architecture arch;
  Standardizer standardizer;
  double physics_weight = 0.0;

  int dim_x() const { return arch.dim_x; }
  int dim_y() const { return arch.dim_y; }
};

inline Architecture regressor_architecture(int dim_x, int dim_y, double width_scale = 1.0) {
  Architecture a;
  a.dim_x = dim_x;
  a.dim_y = dim_y;
  a.y_stream = false;
  a.time_dependent = false;
  a.reconstruct_x = false;
  return width_scale == 1.0 ? a : a.scaled(width_scale);
}

inline RegressorModel make_regressor(const Architecture& arch, const Standardizer& st, Rng& rng) {
  Architecture a = arch;
  a.y_stream = false;
  a.time_dependent = false;
  a.reconstruct_x = false;
  return {init_network(a, rng), a, st, 0.0};
}

/// Standardized-space prediction for a batch of standardized conditions.
inline Matrix predict(const RegressorModel& m, const Matrix& x_std) {
  Batch b;
  b.x = x_std;
  return forward_batch(m.params, b);
}

/// Width factor for the regressor that brings its parameter count closest to
/// `target` (searched over a fine grid of factors).
inline double matched_regressor_scale(int dim_x, int dim_y, std::size_t target) {
  double best = 1.0;
  double best_gap = 1e300;
  for (int i = 20; i <= 800; ++i) {
    const double f = i / 100.0;
    Rng rng(0);
    const auto n = parameter_count(init_network(regressor_architecture(dim_x, dim_y, f), rng));
    const double gap = std::abs(static_cast<double>(n) - static_cast<double>(target));
    if (gap < best_gap) {
      best_gap = gap;
      best = f;
    }
  }
  return best;
}

}  // namespace cdm
