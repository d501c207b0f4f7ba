#pragma once

// Stopping policies as first-class values: analytic shapes (unions and
// intersections of half-spaces and balls, kept in negation normal form),
// grid masks, set algebra, closure and the boundary collar.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stopgame/errors.hpp"

namespace stopgame {

inline constexpr int kMaxDim = 4;

/// A point of R^d for d <= kMaxDim, stored inline.
class Point {
 public:
  Point() = default;
  explicit Point(int dim) : dim_(check_dim(dim)) {}
  Point(std::initializer_list<double> xs) : dim_(check_dim(static_cast<int>(xs.size()))) {
    std::copy(xs.begin(), xs.end(), c_.begin());
  }
  explicit Point(std::span<const double> xs) : dim_(check_dim(static_cast<int>(xs.size()))) {
    std::copy(xs.begin(), xs.end(), c_.begin());
  }

  int dim() const noexcept { return dim_; }
  double& operator[](int i) noexcept { return c_[i]; }
  double operator[](int i) const noexcept { return c_[i]; }
  std::span<const double> coords() const noexcept { return {c_.data(), static_cast<std::size_t>(dim_)}; }
  std::vector<double> to_vector() const { return {c_.begin(), c_.begin() + dim_}; }

  friend bool operator==(const Point& a, const Point& b) {
    if (a.dim_ != b.dim_) return false;
    for (int i = 0; i < a.dim_; ++i)
      if (a.c_[i] != b.c_[i]) return false;
    return true;
  }

 private:
  static int check_dim(int d) {
    if (d < 1 || d > kMaxDim) throw DomainError("Point: dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    return d;
  }
  std::array<double, kMaxDim> c_{};
  int dim_ = 0;
};

inline double dot(const Point& a, const Point& b) {
  double s = 0;
  for (int i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}
inline double norm(const Point& a) { return std::sqrt(dot(a, a)); }
inline Point lerp(const Point& a, const Point& b, double w) {
  Point p(a.dim());
  for (int i = 0; i < a.dim(); ++i) p[i] = (1 - w) * a[i] + w * b[i];
  return p;
}
inline double distance(const Point& a, const Point& b) {
  double s = 0;
  for (int i = 0; i < a.dim(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// A d x d matrix, row-major.
struct Matrix {
  int dim = 0;
  std::array<double, kMaxDim * kMaxDim> a{};
  double operator()(int r, int c) const noexcept { return a[r * kMaxDim + c]; }
  double& operator()(int r, int c) noexcept { return a[r * kMaxDim + c]; }
  Point apply(const Point& x) const {
    Point y(dim);
    for (int r = 0; r < dim; ++r) {
      double s = 0;
      for (int c = 0; c < dim; ++c) s += (*this)(r, c) * x[c];
      y[r] = s;
    }
    return y;
  }
};

// ---------------------------------------------------------------------------
// Analytic shapes

/// One face of an analytic region: {n.x >= b} (plane, n unit) or
/// {|x - c| <= r} / {|x - c| >= r} (sphere). The signed value is the
/// Euclidean distance to the face, positive inside.
struct Literal {
  enum class Kind { Plane, Sphere };
  Kind kind = Kind::Plane;
  Point normal;
  double offset = 0;
  Point center;
  double radius = 0;
  bool exterior = false;
  bool strict = false;

  static Literal plane(const Point& a, double b, bool strict = false) {
    double n = norm(a);
    if (!(n > 0)) throw DomainError("halfspace: normal must be nonzero");
    Literal l;
    l.kind = Kind::Plane;
    l.normal = Point(a.dim());
    for (int i = 0; i < a.dim(); ++i) l.normal[i] = a[i] / n;
    l.offset = b / n;
    l.strict = strict;
    return l;
  }
  static Literal sphere(const Point& c, double r, bool exterior, bool strict = false) {
    if (!(r > 0)) throw DomainError("ball: radius must be > 0");
    Literal l;
    l.kind = Kind::Sphere;
    l.center = c;
    l.radius = r;
    l.exterior = exterior;
    l.strict = strict;
    return l;
  }

  int dim() const { return kind == Kind::Plane ? normal.dim() : center.dim(); }

  double signed_value(const Point& x) const {
    if (kind == Kind::Plane) return dot(normal, x) - offset;
    double d = distance(x, center);
    return exterior ? d - radius : radius - d;
  }
  bool contains(const Point& x) const {
    double s = signed_value(x);
    return strict ? s > 0 : s >= 0;
  }
  Literal negated() const {
    Literal l = *this;
    l.strict = !strict;
    if (kind == Kind::Plane) {
      for (int i = 0; i < l.normal.dim(); ++i) l.normal[i] = -normal[i];
      l.offset = -offset;
    } else {
      l.exterior = !exterior;
    }
    return l;
  }
  /// Closest point of the face to x.
  Point project(const Point& x) const {
    Point p = x;
    if (kind == Kind::Plane) {
      double s = signed_value(x);
      for (int i = 0; i < x.dim(); ++i) p[i] = x[i] - s * normal[i];
      return p;
    }
    double d = distance(x, center);
    if (d == 0) {
      p = center;
      p[0] += radius;
      return p;
    }
    for (int i = 0; i < x.dim(); ++i) p[i] = center[i] + (x[i] - center[i]) * radius / d;
    return p;
  }
  /// Unit normal of the face near x (outward from the literal's set is irrelevant here).
  Point unit_normal_at(const Point& x) const {
    if (kind == Kind::Plane) return normal;
    Point n(x.dim());
    double d = distance(x, center);
    if (d == 0) {
      n[0] = 1;
      return n;
    }
    for (int i = 0; i < x.dim(); ++i) n[i] = (x[i] - center[i]) / d;
    return n;
  }
  Literal transformed(const Matrix& m) const {
    Literal l = *this;
    if (kind == Kind::Plane)
      l.normal = m.apply(normal);  // orthogonal m: (Mn).(Mx) = n.x
    else
      l.center = m.apply(center);
    return l;
  }
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    auto vec = [&](const Point& p) {
      os << '[';
      for (int i = 0; i < p.dim(); ++i) os << (i ? "," : "") << p[i];
      os << ']';
    };
    if (kind == Kind::Plane) {
      os << (strict ? "open_halfspace(" : "halfspace(");
      vec(normal);
      os << ',' << offset << ')';
    } else {
      os << (exterior ? (strict ? "open_exterior(" : "exterior(") : (strict ? "open_ball(" : "ball("));
      vec(center);
      os << ',' << radius << ')';
    }
    return os.str();
  }
};

/// Boolean combination of literals in negation normal form.
class Shape {
 public:
  enum class Op { All, Empty, Lit, Union, Intersect };

  static Shape all() { return Shape(Op::All); }
  static Shape empty() { return Shape(Op::Empty); }
  static Shape literal(Literal l) {
    Shape s(Op::Lit);
    s.lit_ = std::move(l);
    return s;
  }
  /// {a.x >= b}
  static Shape halfspace(const Point& a, double b) { return literal(Literal::plane(a, b)); }
  /// {lo <= c.x <= hi}
  static Shape slab(const Point& c, double lo, double hi) {
    if (!(hi >= lo)) throw DomainError("slab: need lo <= hi");
    Point neg(c.dim());
    for (int i = 0; i < c.dim(); ++i) neg[i] = -c[i];
    return intersect_of({halfspace(c, lo), halfspace(neg, -hi)});
  }
  /// closed ball {|x - c| <= r}
  static Shape ball(const Point& c, double r) { return literal(Literal::sphere(c, r, false)); }
  /// open ball {|x - c| < r}
  static Shape open_ball(const Point& c, double r) { return literal(Literal::sphere(c, r, false, true)); }

  static Shape union_of(std::vector<Shape> parts) { return combine(Op::Union, std::move(parts)); }
  static Shape intersect_of(std::vector<Shape> parts) { return combine(Op::Intersect, std::move(parts)); }

  Op op() const noexcept { return op_; }
  const Literal& lit() const noexcept { return lit_; }
  const std::vector<Shape>& parts() const noexcept { return kids_; }
  bool is_all() const noexcept { return op_ == Op::All; }
  bool is_empty() const noexcept { return op_ == Op::Empty; }

  bool contains(const Point& x) const {
    switch (op_) {
      case Op::All: return true;
      case Op::Empty: return false;
      case Op::Lit: return lit_.contains(x);
      case Op::Union:
        for (const auto& k : kids_)
          if (k.contains(x)) return true;
        return false;
      case Op::Intersect:
        for (const auto& k : kids_)
          if (!k.contains(x)) return false;
        return true;
    }
    return false;
  }

  /// Membership in the structural closure, with slack tol on every face.
  bool closure_contains(const Point& x, double tol = 1e-12) const {
    switch (op_) {
      case Op::All: return true;
      case Op::Empty: return false;
      case Op::Lit: return lit_.signed_value(x) >= -tol;
      case Op::Union:
        for (const auto& k : kids_)
          if (k.closure_contains(x, tol)) return true;
        return false;
      case Op::Intersect:
        for (const auto& k : kids_)
          if (!k.closure_contains(x, tol)) return false;
        return true;
    }
    return false;
  }

  Shape complement() const {
    switch (op_) {
      case Op::All: return empty();
      case Op::Empty: return all();
      case Op::Lit: return literal(lit_.negated());
      case Op::Union:
      case Op::Intersect: {
        std::vector<Shape> neg;
        for (const auto& k : kids_) neg.push_back(k.complement());
        return combine(op_ == Op::Union ? Op::Intersect : Op::Union, std::move(neg));
      }
    }
    return empty();
  }

  /// Strict inequalities relaxed.
  Shape closure() const {
    Shape s = *this;
    s.relax();
    return s;
  }

  Shape transformed(const Matrix& m) const {
    Shape s = *this;
    if (op_ == Op::Lit) s.lit_ = lit_.transformed(m);
    for (auto& k : s.kids_) k = k.transformed(m);
    return s;
  }

  void collect_literals(std::vector<Literal>& out) const {
    if (op_ == Op::Lit) out.push_back(lit_);
    for (const auto& k : kids_) k.collect_literals(out);
  }

  /// Dimension of the first literal, or 0 for All/Empty.
  int dim() const {
    if (op_ == Op::Lit) return lit_.dim();
    for (const auto& k : kids_)
      if (int d = k.dim()) return d;
    return 0;
  }

  bool is_closed() const {
    if (op_ == Op::Lit) return !lit_.strict;
    for (const auto& k : kids_)
      if (!k.is_closed()) return false;
    return true;
  }

  std::string describe() const {
    switch (op_) {
      case Op::All: return "all";
      case Op::Empty: return "empty";
      case Op::Lit: return lit_.describe();
      case Op::Union:
      case Op::Intersect: {
        std::string s = op_ == Op::Union ? "union(" : "intersect(";
        for (std::size_t i = 0; i < kids_.size(); ++i) s += (i ? "," : "") + kids_[i].describe();
        return s + ")";
      }
    }
    return "";
  }

 private:
  explicit Shape(Op op) : op_(op) {}

  void relax() {
    if (op_ == Op::Lit) lit_.strict = false;
    for (auto& k : kids_) k.relax();
  }

  static Shape combine(Op op, std::vector<Shape> parts) {
    const Op absorbing = op == Op::Union ? Op::All : Op::Empty;
    const Op neutral = op == Op::Union ? Op::Empty : Op::All;
    Shape out(op);
    for (auto& p : parts) {
      if (p.op_ == absorbing) return Shape(absorbing);
      if (p.op_ == neutral) continue;
      if (p.op_ == op) {
        for (auto& k : p.kids_) out.kids_.push_back(std::move(k));
      } else {
        out.kids_.push_back(std::move(p));
      }
    }
    if (out.kids_.empty()) return Shape(neutral);
    if (out.kids_.size() == 1) return std::move(out.kids_.front());
    return out;
  }

  Op op_;
  Literal lit_;
  std::vector<Shape> kids_;
};

/// Conservative structural test for a being a subset of b: true only when
/// provable from parallel planes, concentric spheres and the set operations.
inline bool literal_subset(const Literal& a, const Literal& b) {
  if (a.kind != b.kind) return false;
  auto tight = [&](double lhs, double rhs) { return lhs > rhs || (lhs == rhs && (a.strict || !b.strict)); };
  if (a.kind == Literal::Kind::Plane) return a.normal == b.normal && tight(a.offset, b.offset);
  if (!(a.center == b.center) || a.exterior != b.exterior) return false;
  return a.exterior ? tight(a.radius, b.radius) : tight(b.radius, a.radius);
}

inline bool structural_subset(const Shape& a, const Shape& b) {
  using Op = Shape::Op;
  if (a.is_empty() || b.is_all()) return true;
  if (a.is_all() || b.is_empty()) return false;
  if (a.op() == Op::Union)
    return std::all_of(a.parts().begin(), a.parts().end(), [&](const Shape& k) { return structural_subset(k, b); });
  if (b.op() == Op::Intersect)
    return std::all_of(b.parts().begin(), b.parts().end(), [&](const Shape& k) { return structural_subset(a, k); });
  if (a.op() == Op::Lit && b.op() == Op::Lit) return literal_subset(a.lit(), b.lit());
  if (b.op() == Op::Union &&
      std::any_of(b.parts().begin(), b.parts().end(), [&](const Shape& k) { return structural_subset(a, k); }))
    return true;
  return a.op() == Op::Intersect &&
         std::any_of(a.parts().begin(), a.parts().end(), [&](const Shape& k) { return structural_subset(k, b); });
}

// ---------------------------------------------------------------------------
// Grids and masks

/// Axis-aligned box split into counts[i] cells per axis; cells are
/// classified by their centers.
class Grid {
 public:
  Grid() = default;
  Grid(Point lower, Point upper, std::vector<int> counts)
      : lower_(lower), upper_(upper), counts_(std::move(counts)) {
    if (lower_.dim() != upper_.dim() || static_cast<int>(counts_.size()) != lower_.dim())
      throw ShapeError("Grid: lower, upper and counts must share the dimension");
    for (int i = 0; i < dim(); ++i) {
      if (counts_[i] < 2) throw DomainError("Grid: need >= 2 cells per axis");
      if (!(upper_[i] > lower_[i])) throw DomainError("Grid: upper must exceed lower on every axis");
    }
  }

  int dim() const noexcept { return lower_.dim(); }
  const Point& lower() const noexcept { return lower_; }
  const Point& upper() const noexcept { return upper_; }
  const std::vector<int>& counts() const noexcept { return counts_; }
  std::size_t size() const noexcept {
    std::size_t n = 1;
    for (int c : counts_) n *= static_cast<std::size_t>(c);
    return counts_.empty() ? 0 : n;
  }
  double width(int axis) const { return (upper_[axis] - lower_[axis]) / counts_[axis]; }
  double cell_diagonal() const {
    double s = 0;
    for (int i = 0; i < dim(); ++i) s += width(i) * width(i);
    return std::sqrt(s);
  }

  std::vector<int> multi_index(std::size_t idx) const {
    std::vector<int> m(dim());
    for (int i = 0; i < dim(); ++i) {
      m[i] = static_cast<int>(idx % counts_[i]);
      idx /= counts_[i];
    }
    return m;
  }
  std::size_t flat_index(const std::vector<int>& m) const {
    std::size_t idx = 0;
    for (int i = dim() - 1; i >= 0; --i) idx = idx * counts_[i] + m[i];
    return idx;
  }
  Point center(std::size_t idx) const {
    Point p(dim());
    for (int i = 0; i < dim(); ++i) {
      int k = static_cast<int>(idx % counts_[i]);
      idx /= counts_[i];
      p[i] = lower_[i] + (k + 0.5) * width(i);
    }
    return p;
  }
  /// Cell containing x, if x lies in the box.
  std::optional<std::size_t> locate(const Point& x) const {
    std::size_t idx = 0, stride = 1;
    for (int i = 0; i < dim(); ++i) {
      double f = (x[i] - lower_[i]) / width(i);
      if (!(f >= 0) || f > counts_[i]) return std::nullopt;
      int k = std::min(static_cast<int>(f), counts_[i] - 1);
      idx += stride * k;
      stride *= counts_[i];
    }
    return idx;
  }
  /// Visit every cell of the 3^d block around idx (including idx).
  template <class F>
  void for_each_neighbor(std::size_t idx, F&& f) const {
    auto m = multi_index(idx);
    std::vector<int> off(dim(), -1);
    while (true) {
      std::vector<int> q(dim());
      bool ok = true;
      for (int i = 0; i < dim(); ++i) {
        q[i] = m[i] + off[i];
        if (q[i] < 0 || q[i] >= counts_[i]) ok = false;
      }
      if (ok) f(flat_index(q));
      int i = 0;
      while (i < dim() && off[i] == 1) off[i++] = -1;
      if (i == dim()) break;
      ++off[i];
    }
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.lower_ == b.lower_ && a.upper_ == b.upper_ && a.counts_ == b.counts_;
  }

 private:
  Point lower_, upper_;
  std::vector<int> counts_;
};

/// Bitset over grid cells; points outside the box take the `outside` value.
struct Mask {
  Grid grid;
  std::vector<std::uint8_t> bits;
  bool outside = false;

  static Mask filled(const Grid& g, bool value, bool outside = false) {
    return Mask{g, std::vector<std::uint8_t>(g.size(), value ? 1 : 0), outside};
  }
  static Mask sample(const Grid& g, const Shape& s, bool outside = false) {
    Mask m{g, std::vector<std::uint8_t>(g.size()), outside};
    for (std::size_t i = 0; i < g.size(); ++i) m.bits[i] = s.contains(g.center(i)) ? 1 : 0;
    return m;
  }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  bool contains(const Point& x) const {
    auto c = grid.locate(x);
    return c ? bits[*c] != 0 : outside;
  }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
  bool subset_of(const Mask& o) const {
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i] && !o.bits[i]) return false;
    return true;
  }
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (auto b : bits) h = (h ^ b) * 1099511628211ull;
    return (h ^ static_cast<std::uint64_t>(outside)) * 1099511628211ull;
  }
  friend bool operator==(const Mask& a, const Mask& b) {
    return a.grid == b.grid && a.bits == b.bits && a.outside == b.outside;
  }
};

// ---------------------------------------------------------------------------
// Policy regions

class PolicyRegion {
 public:
  PolicyRegion() : analytic_(Shape::empty()), provenance_("empty") {}

  static PolicyRegion from_shape(Shape s, std::string label = {}) {
    PolicyRegion r;
    if (label.empty()) label = s.describe();
    r.analytic_ = std::move(s);
    r.provenance_ = std::move(label);
    return r;
  }
  static PolicyRegion from_mask(Mask m, std::string label = "mask") {
    PolicyRegion r;
    r.analytic_.reset();
    r.mask_ = std::move(m);
    r.provenance_ = std::move(label);
    return r;
  }
  /// Both forms; the mask is resampled from the shape to keep them consistent.
  static PolicyRegion from_shape_on(Shape s, const Grid& g, std::string label = {}) {
    auto r = from_shape(std::move(s), std::move(label));
    r.mask_ = Mask::sample(g, *r.analytic_);
    return r;
  }
  static PolicyRegion full(std::string label = "all") { return from_shape(Shape::all(), std::move(label)); }
  static PolicyRegion none(std::string label = "empty") { return from_shape(Shape::empty(), std::move(label)); }

  const std::optional<Shape>& analytic() const noexcept { return analytic_; }
  const std::optional<Mask>& mask() const noexcept { return mask_; }
  const std::string& provenance() const noexcept { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

  bool contains(const Point& x) const {
    if (analytic_) return analytic_->contains(x);
    return mask_->contains(x);
  }

  /// Cell-center sampling of the region on g.
  Mask mask_on(const Grid& g) const {
    if (mask_ && mask_->grid == g) return *mask_;
    if (analytic_) return Mask::sample(g, *analytic_);
    throw ShapeError("PolicyRegion: mask-only region on a different grid");
  }

  /// Identity used for caching value fields.
  std::string key() const {
    if (analytic_) return "A:" + analytic_->describe();
    return "M:" + std::to_string(mask_->hash()) + ":" + std::to_string(mask_->bits.size());
  }

 private:
  std::optional<Shape> analytic_;
  std::optional<Mask> mask_;
  std::string provenance_;
};

namespace detail {

inline const Grid* common_grid(const PolicyRegion& r, const PolicyRegion& t) {
  const Grid* g = nullptr;
  if (r.mask()) g = &r.mask()->grid;
  if (t.mask()) {
    if (g && !(*g == t.mask()->grid)) throw ShapeError("region set algebra: grid mismatch");
    if (!g) g = &t.mask()->grid;
  }
  return g;
}

template <class Op>
PolicyRegion combine(const PolicyRegion& r, const PolicyRegion& t, bool is_union, Op bit_op,
                     const std::string& label) {
  const Grid* g = common_grid(r, t);
  if (r.analytic() && t.analytic()) {
    const Shape& A = *r.analytic();
    const Shape& B = *t.analytic();
    // nested operands: keep the absorbing one so region identity survives
    Shape s = structural_subset(A, B)   ? (is_union ? B : A)
              : structural_subset(B, A) ? (is_union ? A : B)
              : is_union                ? Shape::union_of({A, B})
                                        : Shape::intersect_of({A, B});
    return g ? PolicyRegion::from_shape_on(std::move(s), *g, label) : PolicyRegion::from_shape(std::move(s), label);
  }
  Mask a = r.mask_on(*g), b = t.mask_on(*g);
  Mask out{*g, std::vector<std::uint8_t>(g->size()), static_cast<bool>(bit_op(a.outside, b.outside))};
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = bit_op(a.bits[i], b.bits[i]) ? 1 : 0;
  return PolicyRegion::from_mask(std::move(out), label);
}

}  // namespace detail

inline PolicyRegion region_union(const PolicyRegion& r, const PolicyRegion& t) {
  return detail::combine(r, t, true, [](auto a, auto b) { return a || b; },
                         "union(" + r.provenance() + "," + t.provenance() + ")");
}
inline PolicyRegion region_intersection(const PolicyRegion& r, const PolicyRegion& t) {
  return detail::combine(r, t, false, [](auto a, auto b) { return a && b; },
                         "intersect(" + r.provenance() + "," + t.provenance() + ")");
}
inline PolicyRegion region_complement(const PolicyRegion& r) {
  std::string label = "complement(" + r.provenance() + ")";
  if (r.analytic()) {
    Shape s = r.analytic()->complement();
    return r.mask() ? PolicyRegion::from_shape_on(std::move(s), r.mask()->grid, label)
                    : PolicyRegion::from_shape(std::move(s), label);
  }
  Mask m = *r.mask();
  for (auto& b : m.bits) b = b ? 0 : 1;
  m.outside = !m.outside;
  return PolicyRegion::from_mask(std::move(m), label);
}

/// Euclidean closure at grid resolution. Analytic forms are closed
/// structurally (strict inequalities relaxed) and resampled. A mask denotes
/// the finite set of its cell centers, which is already closed, so the
/// mask-only closure is the identity.
inline PolicyRegion grid_closure(const PolicyRegion& r) {
  std::string label = "closure(" + r.provenance() + ")";
  if (r.analytic()) {
    Shape s = r.analytic()->closure();
    return r.mask() ? PolicyRegion::from_shape_on(std::move(s), r.mask()->grid, label)
                    : PolicyRegion::from_shape(std::move(s), label);
  }
  return PolicyRegion::from_mask(*r.mask(), label);
}

/// Closure mask on g (cell-center sampling of the closed form).
inline Mask closure_mask(const PolicyRegion& r, const Grid& g) {
  if (r.analytic()) return Mask::sample(g, r.analytic()->closure(), false);
  return r.mask_on(g);
}

/// One-cell collar: cells whose 3^d neighbourhood is not membership-constant.
inline std::vector<std::uint8_t> collar_cells(const Mask& m) {
  std::vector<std::uint8_t> collar(m.bits.size(), 0);
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    bool mixed = false;
    m.grid.for_each_neighbor(i, [&](std::size_t j) {
      if (m.bits[j] != m.bits[i]) mixed = true;
    });
    collar[i] = mixed ? 1 : 0;
  }
  return collar;
}

// ---------------------------------------------------------------------------
// Probes used by the path simulator

/// Membership plus the analytic faces used for bridge crossing tests.
class RegionProbe {
 public:
  explicit RegionProbe(const PolicyRegion& r) {
    if (r.analytic()) {
      shape_ = *r.analytic();
      shape_->collect_literals(faces_);
      empty_ = shape_->is_empty();
    } else {
      mask_ = *r.mask();
      empty_ = mask_->count() == 0 && !mask_->outside;
      build_mask_distance();
    }
  }
  static RegionProbe of(const PolicyRegion& r) { return RegionProbe(r); }

  bool contains(const Point& x) const { return shape_ ? shape_->contains(x) : mask_->contains(x); }
  bool closure_contains(const Point& x) const {
    return shape_ ? shape_->closure_contains(x, 1e-9) : mask_->contains(x);
  }
  bool is_analytic() const noexcept { return shape_.has_value(); }
  bool never_hit() const noexcept { return empty_; }
  const std::vector<Literal>& faces() const noexcept { return faces_; }

  /// Lower bound on the distance from x to the region boundary (analytic
  /// form) or from x, outside R, to R (mask form).
  double face_distance(const Point& x) const {
    double d = std::numeric_limits<double>::infinity();
    if (mask_) {
      const Grid& g = mask_->grid;
      double out = 0, in = d;
      for (int i = 0; i < g.dim(); ++i) {
        out = std::max({out, g.lower()[i] - x[i], x[i] - g.upper()[i]});
        in = std::min({in, x[i] - g.lower()[i], g.upper()[i] - x[i]});
      }
      auto c = g.locate(x);
      if (!c) return mask_->outside ? 0.0 : out;
      double lb = mask_lb_.empty() ? 0.0 : mask_lb_[*c];
      return mask_->outside ? std::min(lb, std::max(0.0, in)) : lb;
    }
    for (const auto& f : faces_) d = std::min(d, std::fabs(f.signed_value(x)));
    return d;
  }

  /// Point where the segment a -> b first meets the region (a outside, b inside).
  Point boundary_point(const Point& a, const Point& b) const {
    double lo = 0, hi = 1;
    for (int it = 0; it < 40; ++it) {
      double mid = 0.5 * (lo + hi);
      (contains(lerp(a, b, mid)) ? hi : lo) = mid;
    }
    return lerp(a, b, hi);
  }

 private:
  // Distance between cell centers minus one cell diagonal bounds the
  // distance between any two points of the two cells from below.
  void build_mask_distance() {
    const Grid& g = mask_->grid;
    std::vector<Point> inside;
    for (std::size_t i = 0; i < g.size(); ++i)
      if ((*mask_)[i]) inside.push_back(g.center(i));
    if (inside.empty() || static_cast<double>(inside.size()) * static_cast<double>(g.size()) > 5e7) return;
    const double diag = g.cell_diagonal();
    mask_lb_.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*mask_)[i]) continue;
      Point c = g.center(i);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : inside) best = std::min(best, distance(c, q));
      mask_lb_[i] = std::max(0.0, best - diag);
    }
  }

  std::optional<Shape> shape_;
  std::optional<Mask> mask_;
  std::vector<Literal> faces_;
  std::vector<double> mask_lb_;
  bool empty_ = false;
};

/// The pi/4 rotation y = M x of the two-dimensional example.
inline Matrix rotation_pi_over_4() {
  Matrix m;
  m.dim = 2;
  const double s = 1.0 / std::sqrt(2.0);
  m(0, 0) = s;
  m(0, 1) = s;
  m(1, 0) = -s;
  m(1, 1) = s;
  return m;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t;
  t.dim = m.dim;
  for (int r = 0; r < m.dim; ++r)
    for (int c = 0; c < m.dim; ++c) t(r, c) = m(c, r);
  return t;
}

}  // namespace stopgame
