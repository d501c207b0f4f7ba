#pragma once

// Nonnegative payoff fields f.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stopgame/errors.hpp"
#include "stopgame/regions.hpp"

namespace stopgame {

class PayoffField {
 public:
  enum class Kind { ButterflyMin, Constant, Put, CosineBump, GridTabulated };

  /// |x1 - x2| ^ a
  static PayoffField butterfly_min(double a) {
    if (!(a > 0)) throw DomainError("butterfly payoff: a must be > 0");
    PayoffField f(Kind::ButterflyMin, "butterfly_min");
    f.p_ = {a};
    f.sup_ = a;
    return f;
  }
  static PayoffField constant(double k) {
    if (!(k >= 0)) throw DomainError("constant payoff: value must be >= 0");
    PayoffField f(Kind::Constant, "constant");
    f.p_ = {k};
    f.sup_ = k;
    return f;
  }
  /// max(K - x1, 0); unbounded as x1 -> -inf, so sup is taken over the window
  /// [x_min, inf).
  static PayoffField put(double strike, double x_min) {
    if (!(strike > 0)) throw DomainError("put payoff: strike must be > 0");
    PayoffField f(Kind::Put, "put");
    f.p_ = {strike};
    f.sup_ = std::max(0.0, strike - x_min);
    return f;
  }
  /// k0 + k1 cos(x1), k0 >= |k1|
  static PayoffField cosine_bump(double k0, double k1) {
    if (!(k0 >= std::fabs(k1))) throw DomainError("cosine_bump payoff: need k0 >= |k1|");
    PayoffField f(Kind::CosineBump, "cosine_bump");
    f.p_ = {k0, k1};
    f.sup_ = k0 + std::fabs(k1);
    return f;
  }
  /// Multilinear interpolation of node values on the grid's cell centers,
  /// clamped to the nearest center outside.
  static PayoffField tabulated(Grid grid, std::vector<double> values) {
    if (values.size() != grid.size()) throw ShapeError("tabulated payoff: value count must match the grid");
    for (double v : values)
      if (!(v >= 0) || !std::isfinite(v)) throw DomainError("tabulated payoff: values must be finite and >= 0");
    PayoffField f(Kind::GridTabulated, "tabulated");
    f.sup_ = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
    f.grid_ = std::move(grid);
    f.table_ = std::move(values);
    return f;
  }

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  const std::vector<double>& params() const noexcept { return p_; }
  /// Upper bound of f over the scenario window.
  double sup() const noexcept { return sup_; }

  double operator()(const Point& x) const { return eval(x); }
  double eval(const Point& x) const {
    switch (kind_) {
      case Kind::ButterflyMin:
        if (x.dim() < 2) throw ShapeError("butterfly payoff: needs dimension 2");
        return std::min(std::fabs(x[0] - x[1]), p_[0]);
      case Kind::Constant: return p_[0];
      case Kind::Put: return std::max(p_[0] - x[0], 0.0);
      case Kind::CosineBump: return p_[0] + p_[1] * std::cos(x[0]);
      case Kind::GridTabulated: return interpolate(x);
    }
    return 0.0;
  }

 private:
  PayoffField(Kind k, std::string name) : kind_(k), name_(std::move(name)) {}

  double interpolate(const Point& x) const {
    const int d = grid_.dim();
    std::vector<int> lo(d);
    std::vector<double> w(d);
    for (int i = 0; i < d; ++i) {
      double u = (x[i] - grid_.lower()[i]) / grid_.width(i) - 0.5;
      u = std::clamp(u, 0.0, static_cast<double>(grid_.counts()[i] - 1));
      lo[i] = std::min(static_cast<int>(u), grid_.counts()[i] - 2);
      w[i] = u - lo[i];
    }
    double s = 0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      std::vector<int> m(d);
      double wt = 1;
      for (int i = 0; i < d; ++i) {
        int bit = (corner >> i) & 1;
        m[i] = lo[i] + bit;
        wt *= bit ? w[i] : 1 - w[i];
      }
      if (wt != 0) s += wt * table_[grid_.flat_index(m)];
    }
    return s;
  }

  Kind kind_;
  std::string name_;
  std::vector<double> p_;
  double sup_ = 0;
  Grid grid_;
  std::vector<double> table_;
};

}  // namespace stopgame
