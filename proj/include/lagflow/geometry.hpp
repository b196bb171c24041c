#pragma once

// Planar computational geometry: convex polygons, exact polygon moments and
// Laguerre (power) diagrams clipped to a convex, optionally x-periodic domain.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lagflow/error.hpp"

namespace lagflow {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2& operator+=(Point2 o) { x += o.x; y += o.y; return *this; }
  Point2& operator-=(Point2 o) { x -= o.x; y -= o.y; return *this; }
  Point2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator-(Point2 a) { return {-a.x, -a.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  friend Point2 operator/(Point2 a, double s) { return {a.x / s, a.y / s}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm2(Point2 a) { return dot(a, a); }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

/// Edge label for polygon edges that come from the domain boundary.
inline constexpr int kBoundaryEdge = -1;

/// Counterclockwise convex polygon. Every edge (v[k], v[k+1]) carries an
/// integer label: kBoundaryEdge, or the index of the site whose bisector
/// produced it. An empty polygon (no vertices) is the empty set.
class ConvexPolygon {
 public:
  ConvexPolygon() = default;

  /// Validating constructor. Coincident consecutive vertices within `tol`
  /// (relative to the polygon's extent) are merged; clockwise input is reversed.
  explicit ConvexPolygon(std::vector<Point2> vertices, double tol = 1e-12) {
    for (auto& v : vertices) {
      if (!is_finite(v)) throw Error(ErrorCode::InvalidArgument, "polygon vertex is not finite");
    }
    double extent = 0.0;
    for (auto& a : vertices)
      for (auto& b : vertices) extent = std::max(extent, norm(a - b));
    std::vector<Point2> dedup;
    for (auto& v : vertices) {
      if (dedup.empty() || norm(v - dedup.back()) > tol * extent) dedup.push_back(v);
    }
    while (dedup.size() > 1 && norm(dedup.front() - dedup.back()) <= tol * extent) dedup.pop_back();
    if (dedup.size() < 3) throw Error(ErrorCode::InvalidArgument, "polygon needs at least 3 distinct vertices");
    vertices_ = std::move(dedup);
    if (signed_area() < 0.0) std::reverse(vertices_.begin(), vertices_.end());
    const std::size_t n = vertices_.size();
    for (std::size_t k = 0; k < n; ++k) {
      const Point2 a = vertices_[k], b = vertices_[(k + 1) % n], c = vertices_[(k + 2) % n];
      if (cross(b - a, c - b) <= tol * extent * extent)
        throw Error(ErrorCode::InvalidArgument, "polygon is not strictly convex");
    }
    labels_.assign(n, kBoundaryEdge);
  }

  /// Unchecked constructor used by the clipping kernels.
  static ConvexPolygon from_raw(std::vector<Point2> vertices, std::vector<int> labels) {
    ConvexPolygon p;
    p.vertices_ = std::move(vertices);
    p.labels_ = std::move(labels);
    return p;
  }

  bool empty() const { return vertices_.empty(); }
  std::size_t size() const { return vertices_.size(); }
  std::span<const Point2> vertices() const { return vertices_; }
  std::span<const int> edge_labels() const { return labels_; }
  Point2 vertex(std::size_t k) const { return vertices_[k]; }
  int edge_label(std::size_t k) const { return labels_[k]; }

  double signed_area() const {
    if (vertices_.size() < 3) return 0.0;
    const Point2 o = vertices_[0];
    double twice = 0.0;
    for (std::size_t k = 1; k + 1 < vertices_.size(); ++k)
      twice += cross(vertices_[k] - o, vertices_[k + 1] - o);
    return 0.5 * twice;
  }

  double area() const { return std::max(0.0, signed_area()); }

  double diameter() const {
    double d = 0.0;
    for (std::size_t a = 0; a < vertices_.size(); ++a)
      for (std::size_t b = a + 1; b < vertices_.size(); ++b) d = std::max(d, norm(vertices_[a] - vertices_[b]));
    return d;
  }

  bool contains(Point2 p, double tol = 0.0) const {
    const std::size_t n = vertices_.size();
    if (n < 3) return false;
    for (std::size_t k = 0; k < n; ++k) {
      const Point2 a = vertices_[k], b = vertices_[(k + 1) % n];
      if (cross(b - a, p - a) < -tol * norm(b - a)) return false;
    }
    return true;
  }

  ConvexPolygon translated(Point2 t) const {
    ConvexPolygon p = *this;
    for (auto& v : p.vertices_) v += t;
    return p;
  }

 private:
  std::vector<Point2> vertices_;
  std::vector<int> labels_;
};

namespace detail {

// In-place clip of (pts, labels) against {x : <normal, x> <= offset}; the new
// edge along the clip line gets `label`. `out_*` are scratch buffers.
inline void clip_into(const std::vector<Point2>& pts, const std::vector<int>& labels, Point2 normal,
                      double offset, int label, std::vector<Point2>& out_pts, std::vector<int>& out_labels) {
  out_pts.clear();
  out_labels.clear();
  const std::size_t n = pts.size();
  if (n == 0) return;
  double s_first = dot(pts[0], normal) - offset;
  double s_cur = s_first;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t kn = (k + 1 == n) ? 0 : k + 1;
    const double s_next = (kn == 0) ? s_first : dot(pts[kn], normal) - offset;
    const double a = s_cur, b = s_next;
    if (a <= 0.0) {
      if (b > 0.0 && a < 0.0) {
        const double t = a / (a - b);
        out_pts.push_back(pts[k]);
        out_labels.push_back(labels[k]);
        out_pts.push_back(pts[k] + t * (pts[kn] - pts[k]));
        out_labels.push_back(label);
      } else if (b > 0.0) {
        out_pts.push_back(pts[k]);
        out_labels.push_back(label);
      } else {
        out_pts.push_back(pts[k]);
        out_labels.push_back(labels[k]);
      }
    } else if (b < 0.0) {
      const double t = a / (a - b);
      out_pts.push_back(pts[k] + t * (pts[kn] - pts[k]));
      out_labels.push_back(labels[k]);
    }
    s_cur = s_next;
  }
  if (out_pts.size() < 3) {
    out_pts.clear();
    out_labels.clear();
  }
}

inline bool all_inside(const std::vector<Point2>& pts, Point2 normal, double offset) {
  for (const auto& p : pts)
    if (dot(p, normal) > offset) return false;
  return true;
}

}  // namespace detail

/// Intersection of `poly` with the halfplane {x : <normal, x> <= offset}.
/// Returns an empty polygon when the intersection has no interior.
inline ConvexPolygon clip_halfplane(const ConvexPolygon& poly, Point2 normal, double offset,
                                    int label = kBoundaryEdge) {
  std::vector<Point2> pts(poly.vertices().begin(), poly.vertices().end());
  std::vector<int> labels(poly.edge_labels().begin(), poly.edge_labels().end());
  std::vector<Point2> out_pts;
  std::vector<int> out_labels;
  detail::clip_into(pts, labels, normal, offset, label, out_pts, out_labels);
  ConvexPolygon result = ConvexPolygon::from_raw(std::move(out_pts), std::move(out_labels));
  if (result.signed_area() <= 0.0) return {};
  return result;
}

// ---------------------------------------------------------------------------
// Moments

/// Zeroth, first and second moments of a convex cell.
struct CellMoments {
  double area = 0.0;
  Point2 barycenter;
  double central_second_moment = 0.0;  // int |x - barycenter|^2 dx

  /// int_cell |x - p|^2 dx (parallel-axis identity).
  double second_moment_about(Point2 p) const { return central_second_moment + area * norm2(p - barycenter); }
};

namespace detail {

struct RawMoments {
  double area = 0.0;
  Point2 barycenter;
  double central = 0.0;
};

// Fan triangulation from the first vertex with analytic triangle integrals.
inline RawMoments raw_moments(std::span<const Point2> v) {
  RawMoments m;
  const std::size_t n = v.size();
  if (n < 3) return m;
  const Point2 o = v[0];
  double area = 0.0;
  Point2 first{0.0, 0.0};
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const Point2 b = v[k] - o, c = v[k + 1] - o;
    const double a = 0.5 * cross(b, c);
    area += a;
    first += (a / 3.0) * (b + c);
  }
  if (area <= 0.0) return m;
  const Point2 g = o + first / area;
  double second = 0.0;
  const Point2 a0 = o - g;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const Point2 b = v[k] - g, c = v[k + 1] - g;
    const double a = 0.5 * cross(b - a0, c - a0);
    second += a / 6.0 * (norm2(a0) + norm2(b) + norm2(c) + dot(a0, b) + dot(b, c) + dot(c, a0));
  }
  m.area = area;
  m.barycenter = g;
  m.central = std::max(0.0, second);
  return m;
}

}  // namespace detail

/// Exact moments of `cell`. `site` only sets the scale used to decide that
/// the cell is degenerate; the returned moments support any reference point.
inline CellMoments compute_moments(const ConvexPolygon& cell, Point2 site) {
  const auto raw = detail::raw_moments(cell.vertices());
  double extent = cell.diameter();
  for (const auto& v : cell.vertices()) extent = std::max(extent, norm(v - site));
  const double threshold = 1e-14 * std::max(extent * extent, std::numeric_limits<double>::min());
  if (cell.empty() || !(raw.area > threshold))
    throw Error(ErrorCode::DegenerateCell, "cell area below machine-scale threshold");
  return CellMoments{raw.area, raw.barycenter, raw.central};
}

// ---------------------------------------------------------------------------
// Domain

struct BoundingBox {
  Point2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point2 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  void extend(Point2 p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  double width() const { return hi.x - lo.x; }
  double height() const { return hi.y - lo.y; }
};

/// Convex polygonal fluid domain, optionally periodic in x.
class Domain {
 public:
  Domain() = default;

  explicit Domain(ConvexPolygon boundary) : boundary_(std::move(boundary)) {
    if (boundary_.empty() || !(boundary_.area() > 0.0))
      throw Error(ErrorCode::InvalidArgument, "domain must have positive area");
  }

  static Domain rectangle(double x0, double y0, double x1, double y1) {
    if (!(x1 > x0) || !(y1 > y0)) throw Error(ErrorCode::InvalidArgument, "rectangle must have positive extent");
    return Domain(ConvexPolygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}));
  }

  /// Rectangle [x0, x1] x [y0, y1] with x identified modulo x1 - x0.
  static Domain periodic_rectangle(double x0, double y0, double x1, double y1) {
    Domain d = rectangle(x0, y0, x1, y1);
    d.periodic_x_ = true;
    d.period_ = x1 - x0;
    return d;
  }

  const ConvexPolygon& boundary() const { return boundary_; }
  bool periodic_x() const { return periodic_x_; }
  double period_length() const { return period_; }
  double area() const { return boundary_.area(); }
  double diameter() const { return boundary_.diameter(); }

  BoundingBox bounds() const {
    BoundingBox box;
    for (auto v : boundary_.vertices()) box.extend(v);
    return box;
  }

  Point2 centroid() const { return detail::raw_moments(boundary_.vertices()).barycenter; }

  bool is_axis_rectangle() const {
    if (boundary_.size() != 4) return false;
    const auto box = bounds();
    const double tol = 1e-12 * diameter();
    for (auto v : boundary_.vertices()) {
      const bool on_x = std::abs(v.x - box.lo.x) <= tol || std::abs(v.x - box.hi.x) <= tol;
      const bool on_y = std::abs(v.y - box.lo.y) <= tol || std::abs(v.y - box.hi.y) <= tol;
      if (!on_x || !on_y) return false;
    }
    return true;
  }

  /// Maps x into the fundamental strip [x0, x0 + L) for periodic domains.
  Point2 wrap(Point2 p) const {
    if (!periodic_x_) return p;
    const double x0 = bounds().lo.x;
    double u = std::fmod(p.x - x0, period_);
    if (u < 0.0) u += period_;
    if (u >= period_) u -= period_;
    return {x0 + u, p.y};
  }

  /// Minimal-image displacement b - a.
  Point2 displacement(Point2 a, Point2 b) const {
    Point2 d = b - a;
    if (periodic_x_) d.x -= period_ * std::round(d.x / period_);
    return d;
  }

  bool contains(Point2 p) const { return boundary_.contains(wrap(p), 1e-12 * diameter()); }

 private:
  ConvexPolygon boundary_;
  bool periodic_x_ = false;
  double period_ = 0.0;
};

// ---------------------------------------------------------------------------
// Periodic replication

/// Sites replicated at x - L, x, x + L. `original[k]` is the source index of
/// replica k; replicas [N, 2N) are the central copy.
struct PeriodicReplicas {
  std::vector<Point2> points;
  std::vector<std::size_t> original;
  std::size_t central_begin = 0;
};

inline PeriodicReplicas replicate_periodic(std::span<const Point2> sites, const Domain& domain) {
  if (!domain.periodic_x()) throw Error(ErrorCode::NotPeriodic, "domain is not periodic in x");
  const double period = domain.period_length();
  PeriodicReplicas r;
  r.points.reserve(3 * sites.size());
  r.original.reserve(3 * sites.size());
  for (int copy = -1; copy <= 1; ++copy) {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      r.points.push_back(sites[i] + Point2{copy * period, 0.0});
      r.original.push_back(i);
    }
  }
  r.central_begin = sites.size();
  return r;
}

// ---------------------------------------------------------------------------
// Power diagram

struct Neighbor {
  std::size_t site = 0;   // original index of the neighboring site
  double length = 0.0;    // shared edge length
  double distance = 0.0;  // |M_i - M_j| for the replica of j that produced the edge
};

/// Laguerre cells of weighted sites, clipped to the domain. For periodic
/// domains each cell is stored unwrapped, around its (wrapped) site; its
/// pieces in the fundamental strip are available through wrapped_pieces().
struct PowerDiagram {
  std::vector<Point2> sites;
  std::vector<double> weights;
  Domain domain;
  std::vector<ConvexPolygon> cells;
  std::vector<double> areas;
  std::vector<std::vector<Neighbor>> adjacency;

  std::size_t size() const { return sites.size(); }
  bool is_empty(std::size_t i) const { return cells[i].empty(); }

  double edge_length(std::size_t i, std::size_t j) const {
    double total = 0.0;
    for (const auto& nb : adjacency[i])
      if (nb.site == j) total += nb.length;
    return total;
  }

  double min_area() const {
    double m = std::numeric_limits<double>::infinity();
    for (double a : areas) m = std::min(m, a);
    return m;
  }

  double total_area() const {
    double s = 0.0;
    for (double a : areas) s += a;
    return s;
  }
};

namespace detail {

// Uniform bucket grid over a point set, used to enumerate sites by
// increasing Chebyshev ring around a query bucket.
class SiteGrid {
 public:
  SiteGrid(std::span<const Point2> pts, BoundingBox box) : box_(box) {
    const double w = std::max(box.width(), 1e-300), h = std::max(box.height(), 1e-300);
    const double n = static_cast<double>(std::max<std::size_t>(pts.size(), 1));
    const double cell = std::sqrt(w * h / n);
    nx_ = std::clamp(static_cast<int>(std::ceil(w / cell)), 1, 1 << 14);
    ny_ = std::clamp(static_cast<int>(std::ceil(h / cell)), 1, 1 << 14);
    cw_ = w / nx_;
    ch_ = h / ny_;
    start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
    std::vector<std::size_t> bucket(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
      auto [cx, cy] = cell_of(pts[k]);
      bucket[k] = static_cast<std::size_t>(cy) * nx_ + cx;
      ++start_[bucket[k] + 1];
    }
    for (std::size_t b = 1; b < start_.size(); ++b) start_[b] += start_[b - 1];
    items_.resize(pts.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t k = 0; k < pts.size(); ++k) items_[fill[bucket[k]]++] = k;
  }

  std::pair<int, int> cell_of(Point2 p) const {
    const int cx = std::clamp(static_cast<int>(std::floor((p.x - box_.lo.x) / cw_)), 0, nx_ - 1);
    const int cy = std::clamp(static_cast<int>(std::floor((p.y - box_.lo.y) / ch_)), 0, ny_ - 1);
    return {cx, cy};
  }

  double min_cell_size() const { return std::min(cw_, ch_); }

  int max_ring(int cx, int cy) const {
    return std::max({cx, nx_ - 1 - cx, cy, ny_ - 1 - cy});
  }

  template <class F>
  void for_each_in_ring(int cx, int cy, int ring, F&& f) const {
    if (ring == 0) {
      visit_bucket(cx, cy, f);
      return;
    }
    for (int x = cx - ring; x <= cx + ring; ++x) {
      visit_bucket(x, cy - ring, f);
      visit_bucket(x, cy + ring, f);
    }
    for (int y = cy - ring + 1; y <= cy + ring - 1; ++y) {
      visit_bucket(cx - ring, y, f);
      visit_bucket(cx + ring, y, f);
    }
  }

 private:
  template <class F>
  void visit_bucket(int x, int y, F& f) const {
    if (x < 0 || y < 0 || x >= nx_ || y >= ny_) return;
    const std::size_t b = static_cast<std::size_t>(y) * nx_ + x;
    for (std::size_t k = start_[b]; k < start_[b + 1]; ++k) f(items_[k]);
  }

  BoundingBox box_;
  int nx_ = 1, ny_ = 1;
  double cw_ = 1.0, ch_ = 1.0;
  std::vector<std::size_t> start_;
  std::vector<std::size_t> items_;
};

struct SiteLayout {
  std::vector<Point2> points;         // all sites, including periodic replicas
  std::vector<std::size_t> original;  // replica -> original index
  std::size_t central_begin = 0;
  ConvexPolygon clip_region;          // region every cell is clipped to
};

inline SiteLayout layout_sites(std::span<const Point2> sites, const Domain& domain) {
  SiteLayout layout;
  if (domain.periodic_x()) {
    std::vector<Point2> wrapped(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) wrapped[i] = domain.wrap(sites[i]);
    auto rep = replicate_periodic(wrapped, domain);
    layout.points = std::move(rep.points);
    layout.original = std::move(rep.original);
    layout.central_begin = rep.central_begin;
    const auto box = domain.bounds();
    const double period = domain.period_length();
    layout.clip_region = ConvexPolygon({{box.lo.x - period, box.lo.y},
                                        {box.hi.x + period, box.lo.y},
                                        {box.hi.x + period, box.hi.y},
                                        {box.lo.x - period, box.hi.y}});
  } else {
    layout.points.assign(sites.begin(), sites.end());
    layout.original.resize(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) layout.original[i] = i;
    layout.clip_region = domain.boundary();
  }
  return layout;
}

inline BoundingBox grid_box(const SiteLayout& layout) {
  BoundingBox box;
  for (auto p : layout.points) box.extend(p);
  for (auto v : layout.clip_region.vertices()) box.extend(v);
  return box;
}

}  // namespace detail

/// Throws DuplicateSites if two sites (after periodic wrapping) are closer
/// than 1e-12 * diam(domain).
inline void check_distinct_sites(std::span<const Point2> sites, const Domain& domain) {
  if (sites.empty()) throw Error(ErrorCode::EmptyInput, "no sites");
  for (std::size_t i = 0; i < sites.size(); ++i)
    if (!is_finite(sites[i])) throw Error(ErrorCode::InvalidArgument, "site " + std::to_string(i) + " is not finite");
  const auto layout = detail::layout_sites(sites, domain);
  const detail::SiteGrid grid(layout.points, detail::grid_box(layout));
  const double tol = 1e-12 * domain.diameter();
  const std::size_t n = sites.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ci = layout.central_begin + i;
    const Point2 p = layout.points[ci];
    auto [cx, cy] = grid.cell_of(p);
    for (int ring = 0; ring <= 1; ++ring) {
      grid.for_each_in_ring(cx, cy, ring, [&](std::size_t k) {
        if (k == ci || layout.original[k] == i) return;
        if (norm(layout.points[k] - p) <= tol)
          throw Error(ErrorCode::DuplicateSites, "sites " + std::to_string(i) + " and " +
                                                     std::to_string(layout.original[k]) + " coincide");
      });
    }
  }
}

/// Laguerre diagram of (sites, weights): cell i collects the points of the
/// domain where |x - M_i|^2 + psi_i <= |x - M_j|^2 + psi_j for every j.
inline PowerDiagram build_power_diagram(std::span<const Point2> sites, std::span<const double> weights,
                                        const Domain& domain) {
  if (sites.empty()) throw Error(ErrorCode::EmptyInput, "no sites");
  if (sites.size() != weights.size()) throw Error(ErrorCode::InvalidArgument, "sites and weights differ in length");
  for (double w : weights)
    if (!std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "weight is not finite");
  check_distinct_sites(sites, domain);

  const std::size_t n = sites.size();
  const auto layout = detail::layout_sites(sites, domain);
  const detail::SiteGrid grid(layout.points, detail::grid_box(layout));
  const double min_weight = *std::min_element(weights.begin(), weights.end());
  const double edge_tol = 1e-12 * domain.diameter();
  const double ring_step = grid.min_cell_size();

  PowerDiagram diagram;
  diagram.sites.resize(n);
  for (std::size_t i = 0; i < n; ++i) diagram.sites[i] = layout.points[layout.central_begin + i];
  diagram.weights.assign(weights.begin(), weights.end());
  diagram.domain = domain;
  diagram.cells.resize(n);
  diagram.areas.assign(n, 0.0);
  diagram.adjacency.resize(n);

  const auto region = layout.clip_region;
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);

#pragma omp parallel
  {
    std::vector<Point2> pts, scratch_pts;
    std::vector<int> labels, scratch_labels;
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t si = 0; si < count; ++si) {
      const std::size_t i = static_cast<std::size_t>(si);
      const std::size_t ci = layout.central_begin + i;
      const Point2 mi = layout.points[ci];
      const double wi = weights[i];
      pts.clear();
      labels.clear();
      for (std::size_t k = 0; k < region.size(); ++k) {
        pts.push_back(region.vertex(k) - mi);
        labels.push_back(kBoundaryEdge);
      }
      auto [cx, cy] = grid.cell_of(mi);
      const int last_ring = grid.max_ring(cx, cy);
      for (int ring = 0; ring <= last_ring && !pts.empty(); ++ring) {
        grid.for_each_in_ring(cx, cy, ring, [&](std::size_t k) {
          if (k == ci || pts.empty()) return;
          const Point2 d = layout.points[k] - mi;
          const double offset = 0.5 * (norm2(d) + weights[layout.original[k]] - wi);
          if (detail::all_inside(pts, d, offset)) return;
          detail::clip_into(pts, labels, d, offset, static_cast<int>(k), scratch_pts, scratch_labels);
          pts.swap(scratch_pts);
          labels.swap(scratch_labels);
        });
        if (pts.empty() || ring == 0) continue;
        // Every site beyond this ring is at distance >= reach from M_i.
        double r2 = 0.0;
        for (auto p : pts) r2 = std::max(r2, norm2(p));
        const double radius = std::sqrt(r2);
        const double reach = ring * ring_step;
        if (reach >= radius && (reach - radius) * (reach - radius) + min_weight >= r2 + wi) break;
      }

      auto& adj = diagram.adjacency[i];
      adj.clear();
      if (pts.size() >= 3) {
        for (auto& p : pts) p += mi;
        auto cell = ConvexPolygon::from_raw(pts, labels);
        const double area = cell.signed_area();
        if (area > 0.0) {
          const std::size_t m = pts.size();
          for (std::size_t k = 0; k < m; ++k) {
            if (labels[k] < 0) continue;
            const double len = norm(pts[(k + 1) % m] - pts[k]);
            if (len <= edge_tol) continue;
            const std::size_t other = static_cast<std::size_t>(labels[k]);
            if (layout.original[other] == i) continue;  // own periodic replica
            adj.push_back({layout.original[other], len, norm(layout.points[other] - mi)});
          }
          diagram.cells[i] = std::move(cell);
          diagram.areas[i] = area;
        }
      }
    }
  }
  return diagram;
}

/// Pieces of an unwrapped periodic cell mapped back into the fundamental
/// strip. For non-periodic domains returns the cell itself.
inline std::vector<ConvexPolygon> wrapped_pieces(const ConvexPolygon& cell, const Domain& domain) {
  std::vector<ConvexPolygon> pieces;
  if (cell.empty()) return pieces;
  if (!domain.periodic_x()) {
    pieces.push_back(cell);
    return pieces;
  }
  const auto box = domain.bounds();
  const double period = domain.period_length();
  for (int shift = -1; shift <= 1; ++shift) {
    // Portion of the cell lying in [lo + shift L, lo + (shift + 1) L).
    const double left = box.lo.x + shift * period, right = left + period;
    auto piece = clip_halfplane(cell, {-1.0, 0.0}, -left);
    if (piece.empty()) continue;
    piece = clip_halfplane(piece, {1.0, 0.0}, right);
    if (piece.empty()) continue;
    pieces.push_back(piece.translated({-shift * period, 0.0}));
  }
  return pieces;
}

}  // namespace lagflow
