#pragma once

// Constraint residuals G(x, y), least-squares projection onto the constraint
// set, and the synthetic steady-state reaction network used as a benchmark.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "cdm/data.hpp"
#include "cdm/errors.hpp"
#include "cdm/netcore.hpp"
#include "cdm/rng.hpp"

namespace cdm {

/// a . y = b0 + bx . x
struct AffineConstraint {
  std::string name;
  Vector a;
  double b0 = 0.0;
  Vector bx;
};

struct NonlinearConstraint {
  std::string name;
  std::function<double(const Vector& x, const Vector& y)> value;
  std::function<Vector(const Vector& x, const Vector& y)> grad_y;
};

class ConstraintSet {
 public:
  ConstraintSet() = default;

  ConstraintSet(int dim_x, int dim_y, std::vector<AffineConstraint> affine,
                std::vector<NonlinearConstraint> nonlinear = {})
      : dim_x_(dim_x), dim_y_(dim_y), affine_(std::move(affine)), nonlinear_(std::move(nonlinear)) {
    const auto m = static_cast<Eigen::Index>(affine_.size());
    a_.resize(m, dim_y);
    b0_.resize(m);
    bx_.resize(m, dim_x);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& c = affine_[static_cast<std::size_t>(j)];
      if (c.a.size() != dim_y || c.bx.size() != dim_x)
        throw ConfigError("constraint '" + c.name + "' has wrong coefficient count");
      a_.row(j) = c.a.transpose();
      b0_[j] = c.b0;
      bx_.row(j) = c.bx.transpose();
    }
    if (m > 0) {
      Eigen::FullPivLU<Matrix> lu(a_);
      if (lu.rank() < m) throw ConfigError("affine constraint rows are linearly dependent");
      gram_ = Eigen::LLT<Matrix>(a_ * a_.transpose());
    }
    scale_ = Vector::Ones(m + static_cast<Eigen::Index>(nonlinear_.size()));
  }

  int dim_x() const { return dim_x_; }
  int dim_y() const { return dim_y_; }
  std::size_t affine_count() const { return affine_.size(); }
  std::size_t size() const { return affine_.size() + nonlinear_.size(); }
  const Matrix& a() const { return a_; }
  const std::vector<AffineConstraint>& affine() const { return affine_; }
  const std::vector<NonlinearConstraint>& nonlinear() const { return nonlinear_; }
  const Vector& scale() const { return scale_; }

  Vector b(const Vector& x) const { return b0_ + bx_ * x; }

  void set_scale(const Vector& s) {
    if (s.size() != scale_.size()) throw ConfigError("constraint scale count mismatch");
    for (double v : s)
      if (!(v > 0.0)) throw ConfigError("constraint scales must be positive");
    scale_ = s;
  }

  /// Sets each scale to the spread its residual would have if the
  /// contributing features varied independently over the given states:
  /// sqrt(sum_k g_k^2 Var(y_k)) with g the residual gradient in y.
  void fit_scale(const Matrix& x, const Matrix& y) {
    const Vector mean = y.colwise().mean().transpose();
    const Vector var = (y.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
    Vector s(scale_.size());
    for (std::size_t j = 0; j < affine_.size(); ++j)
      s[static_cast<Eigen::Index>(j)] = std::sqrt(affine_[j].a.array().square().matrix().dot(var));
    for (std::size_t j = 0; j < nonlinear_.size(); ++j) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const Vector g = nonlinear_[j].grad_y(x.row(i).transpose(), y.row(i).transpose());
        acc += g.array().square().matrix().dot(var);
      }
      s[static_cast<Eigen::Index>(affine_.size() + j)] = std::sqrt(acc / std::max<Eigen::Index>(1, y.rows()));
    }
    for (auto& v : s)
      if (!(v > 0.0) || !std::isfinite(v)) v = 1.0;
    scale_ = s;
  }

  /// Unscaled residuals: affine rows first, then nonlinear ones.
  Vector raw_residuals(const Vector& x, const Vector& y) const {
    Vector r(static_cast<Eigen::Index>(size()));
    if (!affine_.empty()) r.head(a_.rows()) = a_ * y - b(x);
    for (std::size_t j = 0; j < nonlinear_.size(); ++j)
      r[static_cast<Eigen::Index>(affine_.size() + j)] = nonlinear_[j].value(x, y);
    return r;
  }

  /// Jacobian of the unscaled residuals with respect to y.
  Matrix jacobian(const Vector& x, const Vector& y) const {
    Matrix j(static_cast<Eigen::Index>(size()), dim_y_);
    if (!affine_.empty()) j.topRows(a_.rows()) = a_;
    for (std::size_t k = 0; k < nonlinear_.size(); ++k)
      j.row(static_cast<Eigen::Index>(affine_.size() + k)) = nonlinear_[k].grad_y(x, y).transpose();
    return j;
  }

  /// Euclidean projection onto {y : A y = b(x)}, then Gauss-Newton refinement
  /// on the joint system when nonlinear residuals exist.
  Vector project(const Vector& x, const Vector& y_hat, double tol = 1e-10, int max_iter = 50) const {
    Vector y = y_hat;
    if (!affine_.empty()) y -= a_.transpose() * gram_.solve(a_ * y - b(x));
    if (nonlinear_.empty()) return y;
    for (int it = 0; it < max_iter; ++it) {
      const Vector r = raw_residuals(x, y);
      if (r.lpNorm<Eigen::Infinity>() < tol) break;
      const Matrix j = jacobian(x, y);
      const Matrix jjt = j * j.transpose();
      y -= j.transpose() * jjt.ldlt().solve(r);
    }
    return y;
  }

 private:
  int dim_x_ = 0;
  int dim_y_ = 0;
  std::vector<AffineConstraint> affine_;
  std::vector<NonlinearConstraint> nonlinear_;
  Matrix a_, bx_;
  Vector b0_;
  Eigen::LLT<Matrix> gram_;
  Vector scale_;
};

/// Normalized residuals G(x, y) = raw / scale.
inline Vector residuals(const ConstraintSet& cs, const Vector& x, const Vector& y) {
  return cs.raw_residuals(x, y).cwiseQuotient(cs.scale());
}

inline Vector project(const ConstraintSet& cs, const Vector& x, const Vector& y_hat) {
  return cs.project(x, y_hat);
}

// ---------------------------------------------------------------------------
// Constraint definition files
//
// One constraint per line, `name: <linear expr> = <linear expr>`, where terms
// are numbers, `y_k`, `x_k` or `c*y_k` / `c*x_k` joined by + and -. Terms in
// y form the row of A; everything else is moved into b(x). `#` starts a comment.

namespace detail {

struct LinearExpr {
  std::map<int, double> y, x;
  double constant = 0.0;
};

inline LinearExpr parse_linear(const std::string& text, const std::string& where) {
  LinearExpr e;
  std::size_t i = 0;
  auto skip = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  bool first = true;
  while (true) {
    skip();
    if (i >= text.size()) break;
    double sign = 1.0;
    if (text[i] == '+' || text[i] == '-') {
      sign = text[i] == '-' ? -1.0 : 1.0;
      ++i;
      skip();
    } else if (!first) {
      throw DataError(where + ": expected + or - before term");
    }
    first = false;
    double coef = 1.0;
    bool have_coef = false;
    if (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) {
      std::size_t j = i;
      while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.' ||
                                 text[j] == 'e' || text[j] == 'E' ||
                                 ((text[j] == '-' || text[j] == '+') && j > i &&
                                  (text[j - 1] == 'e' || text[j - 1] == 'E'))))
        ++j;
      coef = parse_double(std::string_view(text).substr(i, j - i));
      have_coef = true;
      i = j;
      skip();
      if (i < text.size() && text[i] == '*') {
        ++i;
        skip();
      } else {
        e.constant += sign * coef;
        continue;
      }
    }
    if (i + 1 < text.size() && (text[i] == 'x' || text[i] == 'y') && text[i + 1] == '_') {
      const char var = text[i];
      std::size_t j = i + 2;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j == i + 2) throw DataError(where + ": missing variable index");
      const int idx = std::stoi(text.substr(i + 2, j - i - 2));
      if (idx < 1) throw DataError(where + ": variable indices start at 1");
      (var == 'y' ? e.y : e.x)[idx - 1] += sign * coef;
      i = j;
    } else {
      throw DataError(where + ": cannot parse term near '" + text.substr(i) + "'" +
                      (have_coef ? " (after coefficient)" : ""));
    }
  }
  if (first) throw DataError(where + ": empty side");
  return e;
}

}  // namespace detail

inline std::vector<AffineConstraint> parse_constraints(std::istream& in, int dim_x, int dim_y,
                                                       const std::string& source = "constraints") {
  std::vector<AffineConstraint> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto colon = line.find(':');
    const auto eq = line.find('=');
    if (colon == std::string::npos || eq == std::string::npos || eq < colon)
      throw DataError(where + ": expected 'name: lhs = rhs'");
    std::string name = line.substr(0, colon);
    name.erase(0, name.find_first_not_of(" \t"));
    name.erase(name.find_last_not_of(" \t") + 1);
    const auto lhs = detail::parse_linear(line.substr(colon + 1, eq - colon - 1), where);
    const auto rhs = detail::parse_linear(line.substr(eq + 1), where);

    AffineConstraint c;
    c.name = name;
    c.a = Vector::Zero(dim_y);
    c.bx = Vector::Zero(dim_x);
    for (auto [k, v] : lhs.y) {
      if (k >= dim_y) throw DataError(where + ": y index out of range");
      c.a[k] += v;
    }
    for (auto [k, v] : rhs.y) {
      if (k >= dim_y) throw DataError(where + ": y index out of range");
      c.a[k] -= v;
    }
    for (auto [k, v] : rhs.x) {
      if (k >= dim_x) throw DataError(where + ": x index out of range");
      c.bx[k] += v;
    }
    for (auto [k, v] : lhs.x) {
      if (k >= dim_x) throw DataError(where + ": x index out of range");
      c.bx[k] -= v;
    }
    c.b0 = rhs.constant - lhs.constant;
    if (c.a.isZero(0.0)) throw DataError(where + ": constraint has no y terms");
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<AffineConstraint> read_constraints_file(const std::string& path, int dim_x,
                                                           int dim_y) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open constraint file " + path);
  return parse_constraints(in, dim_x, dim_y, path);
}

inline std::string format_constraint(const AffineConstraint& c) {
  std::ostringstream os;
  os << c.name << ":";
  bool first = true;
  auto term = [&](double v, const std::string& var) {
    if (v == 0.0) return;
    os << (v < 0 ? (first ? " -" : " - ") : (first ? " " : " + "));
    const double mag = std::abs(v);
    if (var.empty() || mag != 1.0) os << format_double(mag) << (var.empty() ? "" : "*");
    os << var;
    first = false;
  };
  for (Eigen::Index k = 0; k < c.a.size(); ++k) term(c.a[k], "y_" + std::to_string(k + 1));
  os << " =";
  first = true;
  for (Eigen::Index k = 0; k < c.bx.size(); ++k) term(c.bx[k], "x_" + std::to_string(k + 1));
  if (c.b0 != 0.0 || first) {
    if (first)
      os << " " << format_double(c.b0);
    else
      term(c.b0, "");
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Mass-action reaction networks

struct ReactionNetwork {
  std::vector<std::string> species;
  std::vector<std::string> reactions;
  Matrix stoichiometry;  // species x reactions, net change
  Matrix orders;         // reactions x species, reactant multiplicities
  std::function<Vector(const Vector& x)> rate_constants_of_x;
  // Linear invariants (rows) and their x-determined totals.
  Matrix conservation;
  std::function<Vector(const Vector& x)> conserved_totals_of_x;
  // A positive state carrying the totals for x; the march starts here.
  std::function<Vector(const Vector& x)> initial_state_of_x;

  int dim() const { return static_cast<int>(species.size()); }

  Vector rates(const Vector& y, const Vector& k) const {
    Vector r(orders.rows());
    for (Eigen::Index j = 0; j < orders.rows(); ++j) {
      double v = k[j];
      for (Eigen::Index i = 0; i < orders.cols(); ++i)
        for (int p = 0; p < static_cast<int>(orders(j, i)); ++p) v *= y[i];
      r[j] = v;
    }
    return r;
  }

  /// dy/dt = S r(y; k)
  Vector rhs(const Vector& y, const Vector& k) const { return stoichiometry * rates(y, k); }

  Matrix rhs_jacobian(const Vector& y, const Vector& k) const {
    Matrix dr(orders.rows(), orders.cols());
    for (Eigen::Index j = 0; j < orders.rows(); ++j)
      for (Eigen::Index i = 0; i < orders.cols(); ++i) {
        const int oi = static_cast<int>(orders(j, i));
        if (oi == 0) {
          dr(j, i) = 0.0;
          continue;
        }
        double v = k[j] * oi * std::pow(y[i], oi - 1);
        for (Eigen::Index l = 0; l < orders.cols(); ++l)
          if (l != i)
            for (int p = 0; p < static_cast<int>(orders(j, l)); ++p) v *= y[l];
        dr(j, i) = v;
      }
    return stoichiometry * dr;
  }
};

struct SteadyStateSolverConfig {
  double march_rtol = 1e-9;
  double march_atol = 1e-12;
  double march_dt0 = 1e-3;
  double march_tol = 1e-7;
  double march_t_max = 1e6;
  long march_max_steps = 200000;
  double newton_tol = 1e-12;
  int newton_max_iter = 50;
};

struct MarchObserver {
  // Called after every accepted step with the state; may be empty.
  std::function<void(double t, const Vector& y)> on_step;
};

/// Adaptive Dormand-Prince march of dy/dt = S r(y) until the rate residual
/// falls below march_tol. Returns the final state.
inline Vector march_to_steady_state(const ReactionNetwork& net, const Vector& k, Vector y,
                                    const SteadyStateSolverConfig& cfg,
                                    const MarchObserver& obs = {}) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  auto f = [&](const Vector& s) { return net.rhs(s, k); };
  double t = 0.0;
  double h = cfg.march_dt0;
  Vector k1 = f(y);
  for (long step = 0; step < cfg.march_max_steps && t < cfg.march_t_max; ++step) {
    if (k1.lpNorm<Eigen::Infinity>() < cfg.march_tol) return y;
    const Vector k2 = f(y + h * (a21 * k1));
    const Vector k3 = f(y + h * (a31 * k1 + a32 * k2));
    const Vector k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vector y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vector k7 = f(y_new);
    const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = cfg.march_atol + cfg.march_rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      en = std::max(en, std::abs(err[i]) / sc);
    }
    if (!std::isfinite(en)) {
      h *= 0.1;
      continue;
    }
    if (en <= 1.0) {
      t += h;
      y = y_new;
      k1 = k7;
      if (obs.on_step) obs.on_step(t, y);
    }
    const double factor = en > 0.0 ? 0.9 * std::pow(en, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
  }
  throw SampleRejection("steady-state march did not settle within its budget");
}

/// Time march to near-equilibrium, then Gauss-Newton polish of
/// [S r(y); C y - totals] = 0.
inline Vector solve_steady_state(const ReactionNetwork& net, const Vector& x,
                                 const SteadyStateSolverConfig& cfg = {}) {
  const Vector k = net.rate_constants_of_x(x);
  for (double v : k)
    if (!(v > 0.0) || !std::isfinite(v)) throw SampleRejection("non-positive rate constant");
  const Vector totals = net.conserved_totals_of_x(x);
  Vector y = march_to_steady_state(net, k, net.initial_state_of_x(x), cfg);

  const Eigen::Index n = y.size();
  const Eigen::Index m = net.conservation.rows();
  bool converged = false;
  for (int it = 0; it < cfg.newton_max_iter; ++it) {
    Vector f(n + m);
    f.head(n) = net.rhs(y, k);
    f.tail(m) = net.conservation * y - totals;
    if (f.head(n).lpNorm<Eigen::Infinity>() < cfg.newton_tol &&
        f.tail(m).lpNorm<Eigen::Infinity>() < cfg.newton_tol) {
      converged = true;
      break;
    }
    Matrix j(n + m, n);
    j.topRows(n) = net.rhs_jacobian(y, k);
    j.bottomRows(m) = net.conservation;
    const Vector dy = j.colPivHouseholderQr().solve(-f);
    y += dy;
    if (!y.allFinite()) break;
    if (dy.lpNorm<Eigen::Infinity>() < 1e-16 * std::max(1.0, y.lpNorm<Eigen::Infinity>())) {
      f.head(n) = net.rhs(y, k);
      converged = f.head(n).lpNorm<Eigen::Infinity>() < cfg.newton_tol;
      break;
    }
  }
  if (!converged) throw SampleRejection("Newton polish did not reach tolerance");
  for (double v : y)
    if (!(v > 0.0)) throw SampleRejection("steady state has a non-positive density");
  return y;
}

// ---------------------------------------------------------------------------
// Built-in benchmark

/// Log-uniform sampling box for the conditions.
struct SamplingBox {
  std::vector<std::string> names;
  Vector lower, upper;

  Vector center() const {
    return (0.5 * (lower.array().log() + upper.array().log())).exp().matrix();
  }
  Vector draw(Rng& rng) const {
    Vector x(lower.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x[i] = std::exp(std::log(lower[i]) + u(rng) * (std::log(upper[i]) - std::log(lower[i])));
    return x;
  }
  bool contains(const Vector& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
};

struct BenchmarkSystem {
  ReactionNetwork network;
  ConstraintSet constraints;
  SamplingBox box;
  double nuclei_per_pressure = 1.0;
};

/// Five-species discharge analogue. Species (e, A, A+, A*, A2); conditions
/// x = (p, I, R) for pressure, current and radius.
///
/// Reactions and rate constants:
///   R1 e + A  -> 2e + A+   k1 = 0.5 I/R exp(-0.3 p)
///   R2 e + A  -> e + A*    k2 = 1.0 I/R
///   R3 A*     -> A         k3 = 2 / (1 + p)
///   R4 e + A+ -> A         k4 = 0.5 / R
///   R5 A + A* -> A2        k5 = 0.2 sqrt(p)
///   R6 A2     -> 2A        k6 = 0.1 p
///
/// Invariants: quasi-neutrality n_e - n_A+ = 0, and nuclei
/// n_A + n_A* + n_A+ + 2 n_A2 = p (ideal-gas analogue, one unit per pressure).
inline BenchmarkSystem default_benchmark() {
  BenchmarkSystem b;
  ReactionNetwork& net = b.network;
  net.species = {"e", "A", "A+", "A*", "A2"};
  net.reactions = {"ionization", "excitation", "radiative_decay", "recombination", "association",
                   "dissociation"};
  net.stoichiometry.resize(5, 6);
  // clang-format off
  net.stoichiometry <<
      1,  0,  0, -1,  0,  0,
     -1, -1,  1,  1, -1,  2,
      1,  0,  0, -1,  0,  0,
      0,  1, -1,  0, -1,  0,
      0,  0,  0,  0,  1, -1;
  net.orders.resize(6, 5);
  net.orders <<
      1, 1, 0, 0, 0,
      1, 1, 0, 0, 0,
      0, 0, 0, 1, 0,
      1, 0, 1, 0, 0,
      0, 1, 0, 1, 0,
      0, 0, 0, 0, 1;
  net.conservation.resize(2, 5);
  net.conservation <<
      1, 0, -1, 0, 0,
      0, 1,  1, 1, 2;
  // clang-format on
  net.rate_constants_of_x = [](const Vector& x) {
    const double p = x[0], current = x[1], radius = x[2];
    Vector k(6);
    k << 0.5 * current / radius * std::exp(-0.3 * p), 1.0 * current / radius, 2.0 / (1.0 + p),
        0.5 / radius, 0.2 * std::sqrt(p), 0.1 * p;
    return k;
  };
  const double c = b.nuclei_per_pressure;
  net.conserved_totals_of_x = [c](const Vector& x) {
    Vector t(2);
    t << 0.0, c * x[0];
    return t;
  };
  net.initial_state_of_x = [c](const Vector& x) {
    const double total = c * x[0];
    Vector y(5);
    y << 0.05 * total, 0.8 * total, 0.05 * total, 0.05 * total, 0.05 * total;
    return y;
  };

  AffineConstraint neutrality{"quasi_neutrality", Vector::Zero(5), 0.0, Vector::Zero(3)};
  neutrality.a << 1, 0, -1, 0, 0;
  AffineConstraint nuclei{"nuclei_conservation", Vector::Zero(5), 0.0, Vector::Zero(3)};
  nuclei.a << 0, 1, 1, 1, 2;
  nuclei.bx << c, 0, 0;
  b.constraints = ConstraintSet(3, 5, {neutrality, nuclei});

  b.box.names = {"pressure", "current", "radius"};
  b.box.lower.resize(3);
  b.box.upper.resize(3);
  b.box.lower << 0.5, 0.1, 0.5;
  b.box.upper << 5.0, 1.0, 2.0;
  return b;
}

struct GeneratedData {
  Dataset data;
  std::size_t rejected = 0;
};

/// Draws n conditions from the box and solves each to steady state. Sample i
/// uses the substream (seed, i, attempt); rejected draws are retried.
/// Samples are independent, so `jobs` threads give identical output.
inline GeneratedData generate_dataset(const BenchmarkSystem& sys, std::size_t n, std::uint64_t seed,
                                      const SteadyStateSolverConfig& cfg = {},
                                      int max_attempts = 20, int jobs = 1) {
  GeneratedData g;
  const int dx = static_cast<int>(sys.box.lower.size());
  g.data.x.resize(static_cast<Eigen::Index>(n), dx);
  g.data.y.resize(static_cast<Eigen::Index>(n), sys.network.dim());
  std::vector<std::size_t> rejected(n, 0);
  std::vector<char> solved(n, 0);

  auto run = [&](std::size_t i) {
    for (int attempt = 0; attempt < max_attempts && !solved[i]; ++attempt) {
      Rng rng = substream(seed, {stream::dataset, i, static_cast<std::uint64_t>(attempt)});
      const Vector x = sys.box.draw(rng);
      try {
        const Vector y = solve_steady_state(sys.network, x, cfg);
        g.data.x.row(static_cast<Eigen::Index>(i)) = x.transpose();
        g.data.y.row(static_cast<Eigen::Index>(i)) = y.transpose();
        solved[i] = 1;
      } catch (const SampleRejection&) {
        ++rejected[i];
      }
    }
  };

  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    g.rejected += rejected[i];
    if (!solved[i]) throw SampleRejection("sample " + std::to_string(i) + " rejected on every attempt");
  }
  return g;
}

}  // namespace cdm
