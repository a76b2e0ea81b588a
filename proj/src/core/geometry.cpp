#include "swnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

namespace swnet {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxDomainRetries = 100;
constexpr double kMinFluidFraction = 0.10;

Vec2 quadrant_signs(int quadrant) {
  switch (((quadrant % 4) + 4) % 4) {
    case 0: return {1.0, 1.0};
    case 1: return {-1.0, 1.0};
    case 2: return {-1.0, -1.0};
    default: return {1.0, -1.0};
  }
}

Vec2 box_corner(Vec2 extent, int quadrant) {
  const Vec2 s = quadrant_signs(quadrant);
  return {s.x > 0 ? extent.x : 0.0, s.y > 0 ? extent.y : 0.0};
}

double cross(Vec2 o, Vec2 a, Vec2 b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_cross(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const double d1 = cross(q1, q2, p1);
  const double d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1);
  const double d4 = cross(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 &&
         d3 != 0 && d4 != 0;
}

bool inside_corner(const CornerShape& s, Vec2 p) {
  const Vec2 q = quadrant_signs(s.quadrant);
  const bool solid = q.x * (p.x - s.vertex.x) >= 0 && q.y * (p.y - s.vertex.y) >= 0;
  return !solid;
}

bool inside_double_corner(const DoubleCornerShape& s, Vec2 p) {
  const Vec2 q = quadrant_signs(s.quadrant);
  const double a = q.x * (p.x - s.center.x);
  const double b = q.y * (p.y - s.center.y);
  const double hx = 0.5 * s.offset_x;
  const double hy = 0.5 * s.offset_y;
  const bool solid = (a >= -hx && b >= hy) || (a >= hx && b >= -hy);
  return !solid;
}

bool inside_ellipse_arcs(const EllipseArcsShape& s, Vec2 extent, Vec2 p) {
  const Vec2 k = box_corner(extent, s.corner);
  const double ex = (p.x - k.x) / s.convex_axes.x;
  const double ey = (p.y - k.y) / s.convex_axes.y;
  if (ex * ex + ey * ey < 1.0) return false;

  const Vec2 kc = box_corner(extent, s.corner + 2);
  const double dx = std::abs(p.x - kc.x);
  const double dy = std::abs(p.y - kc.y);
  const double a = s.concave_axes.x;
  const double b = s.concave_axes.y;
  if (dx < a && dy < b) {
    const double u = (dx - a) / a;
    const double v = (dy - b) / b;
    if (u * u + v * v > 1.0) return false;
  }
  return true;
}

DomainSpec sample_once(Category category, Rng& rng) {
  DomainSpec spec;
  spec.category = category;
  spec.extent = default_extent(category);
  switch (category) {
    case Category::kBox:
      spec.shape = BoxShape{};
      break;
    case Category::kCorner: {
      CornerShape s;
      s.vertex = {rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2)};
      s.quadrant = static_cast<int>(rng.index(4));
      spec.shape = s;
      break;
    }
    case Category::kDoubleCorner: {
      DoubleCornerShape s;
      s.center = {rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1)};
      s.offset_x = rng.uniform(0.4, 0.8);
      s.offset_y = rng.uniform(0.4, 0.8);
      s.quadrant = static_cast<int>(rng.index(4));
      spec.shape = s;
      break;
    }
    case Category::kConvexCircle: {
      ConvexCircleShape s;
      s.radius = rng.uniform(0.3, 0.8);
      const double angle = rng.uniform(0.0, 2.0 * kPi);
      const double gap = rng.uniform(0.1, 0.3);
      const double d = s.radius + gap;
      s.center = {1.0 + d * std::cos(angle), 1.0 + d * std::sin(angle)};
      spec.shape = s;
      break;
    }
    case Category::kConcaveCircle: {
      ConcaveCircleShape s;
      s.radius = rng.uniform(0.3, 0.8);
      s.wall_angle = rng.uniform(0.0, 2.0 * kPi);
      const double shift = rng.uniform(0.0, 0.2);
      s.center = {1.0 + shift * std::cos(s.wall_angle), 1.0 + shift * std::sin(s.wall_angle)};
      spec.shape = s;
      break;
    }
    case Category::kSplineBlob: {
      std::array<Vec2, 4> control;
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      for (int k = 0; k < 4; ++k) {
        const double theta = phase + k * 0.5 * kPi + rng.uniform(-kPi / 8.0, kPi / 8.0);
        const double radius = rng.uniform(0.4, 0.7);
        control[k] = {std::clamp(0.5 + radius * std::cos(theta), 0.02, 0.98),
                      std::clamp(0.5 + radius * std::sin(theta), 0.02, 0.98)};
      }
      spec.shape = make_spline_blob(control);
      break;
    }
    case Category::kEllipseArcs: {
      EllipseArcsShape s;
      s.corner = static_cast<int>(rng.index(4));
      auto axes = [&rng]() {
        const double minor = rng.uniform(0.25, 0.5);
        const double major = std::min(minor * rng.uniform(1.0, 1.6), 0.75);
        return rng.uniform01() < 0.5 ? Vec2{minor, major} : Vec2{major, minor};
      };
      s.convex_axes = axes();
      s.concave_axes = axes();
      spec.shape = s;
      break;
    }
  }
  return spec;
}

bool acceptable(const DomainSpec& spec) {
  if (const auto* blob = std::get_if<SplineBlobShape>(&spec.shape)) {
    if (polyline_self_intersects(blob->curve)) return false;
    const double area = std::abs(polygon_area(blob->curve));
    return area >= kMinFluidFraction * spec.extent.x * spec.extent.y;
  }
  return true;
}

}  // namespace

std::string to_string(Category category) {
  switch (category) {
    case Category::kBox: return "Box";
    case Category::kCorner: return "Corner";
    case Category::kDoubleCorner: return "DoubleCorner";
    case Category::kConvexCircle: return "ConvexCircle";
    case Category::kConcaveCircle: return "ConcaveCircle";
    case Category::kSplineBlob: return "SplineBlob";
    case Category::kEllipseArcs: return "EllipseArcs";
  }
  return "Unknown";
}

std::optional<Category> parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

std::uint8_t EdgeConditions::bits() const {
  std::uint8_t b = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (edge[i] == EdgeCondition::kOpen) b |= static_cast<std::uint8_t>(1u << i);
  }
  return b;
}

EdgeConditions EdgeConditions::from_bits(std::uint8_t bits) {
  EdgeConditions e;
  for (std::size_t i = 0; i < 4; ++i) {
    e.edge[i] = (bits >> i) & 1u ? EdgeCondition::kOpen : EdgeCondition::kWall;
  }
  return e;
}

std::size_t GeometryField::fluid_count() const {
  return static_cast<std::size_t>(std::count(mask.values().begin(), mask.values().end(), 0));
}

std::optional<std::pair<std::size_t, std::size_t>> GeometryField::cell_at(Vec2 p) const {
  const double dx = extent.x / static_cast<double>(cols());
  const double dy = extent.y / static_cast<double>(rows());
  if (p.x < 0 || p.y < 0 || p.x >= extent.x || p.y >= extent.y) return std::nullopt;
  const auto c = std::min(static_cast<std::size_t>(p.x / dx), cols() - 1);
  const auto r = std::min(static_cast<std::size_t>(p.y / dy), rows() - 1);
  return std::make_pair(r, c);
}

EdgeConditions default_edges(Category category) {
  switch (category) {
    case Category::kBox:
    case Category::kSplineBlob:
    case Category::kEllipseArcs:
      return EdgeConditions::all(EdgeCondition::kWall);
    default:
      return EdgeConditions::all(EdgeCondition::kOpen);
  }
}

Vec2 default_extent(Category category) {
  switch (category) {
    case Category::kBox:
    case Category::kSplineBlob:
    case Category::kEllipseArcs:
      return {1.0, 1.0};
    default:
      return {2.0, 2.0};
  }
}

std::vector<Vec2> sample_closed_bspline(const std::array<Vec2, 4>& control,
                                        std::size_t samples) {
  std::vector<Vec2> out;
  out.reserve(samples);
  for (std::size_t n = 0; n < samples; ++n) {
    const double u = 4.0 * static_cast<double>(n) / static_cast<double>(samples);
    const auto seg = static_cast<std::size_t>(u);
    const double t = u - static_cast<double>(seg);
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double b0 = (1 - t) * (1 - t) * (1 - t) / 6.0;
    const double b1 = (3 * t3 - 6 * t2 + 4) / 6.0;
    const double b2 = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0;
    const double b3 = t3 / 6.0;
    const Vec2& p0 = control[seg % 4];
    const Vec2& p1 = control[(seg + 1) % 4];
    const Vec2& p2 = control[(seg + 2) % 4];
    const Vec2& p3 = control[(seg + 3) % 4];
    out.push_back({b0 * p0.x + b1 * p1.x + b2 * p2.x + b3 * p3.x,
                   b0 * p0.y + b1 * p1.y + b2 * p2.y + b3 * p3.y});
  }
  return out;
}

bool polyline_self_intersects(const std::vector<Vec2>& closed) {
  const std::size_t n = closed.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a1 = closed[i];
    const Vec2 a2 = closed[(i + 1) % n];
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the wrap
      if (segments_cross(a1, a2, closed[j], closed[(j + 1) % n])) return true;
    }
  }
  return false;
}

double polygon_area(const std::vector<Vec2>& closed) {
  double twice = 0.0;
  for (std::size_t i = 0, n = closed.size(); i < n; ++i) {
    const Vec2 a = closed[i];
    const Vec2 b = closed[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

bool point_in_polygon(const std::vector<Vec2>& closed, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, n = closed.size(), j = n - 1; i < n; j = i++) {
    const Vec2 a = closed[i];
    const Vec2 b = closed[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

SplineBlobShape make_spline_blob(const std::array<Vec2, 4>& control) {
  return SplineBlobShape{control, sample_closed_bspline(control)};
}

DomainSpec sample_domain(Category category, Rng& rng) {
  for (int attempt = 0; attempt < kMaxDomainRetries; ++attempt) {
    DomainSpec spec = sample_once(category, rng);
    if (acceptable(spec)) return spec;
  }
  throw Error(ErrorCode::kGeometry,
              "sample_domain: no acceptable " + to_string(category) + " domain after " +
                  std::to_string(kMaxDomainRetries) + " attempts");
}

bool point_in_domain(const DomainSpec& spec, Vec2 p) {
  if (p.x < 0 || p.y < 0 || p.x > spec.extent.x || p.y > spec.extent.y) return false;
  return std::visit(
      [&](const auto& s) -> bool {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, BoxShape>) {
          return true;
        } else if constexpr (std::is_same_v<S, CornerShape>) {
          return inside_corner(s, p);
        } else if constexpr (std::is_same_v<S, DoubleCornerShape>) {
          return inside_double_corner(s, p);
        } else if constexpr (std::is_same_v<S, ConvexCircleShape>) {
          const double dx = p.x - s.center.x;
          const double dy = p.y - s.center.y;
          return dx * dx + dy * dy >= s.radius * s.radius;
        } else if constexpr (std::is_same_v<S, ConcaveCircleShape>) {
          const double dx = p.x - s.center.x;
          const double dy = p.y - s.center.y;
          if (dx * dx + dy * dy < s.radius * s.radius) return true;
          return dx * std::cos(s.wall_angle) + dy * std::sin(s.wall_angle) < 0.0;
        } else if constexpr (std::is_same_v<S, SplineBlobShape>) {
          double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
          for (const Vec2& c : s.curve) {
            lo_x = std::min(lo_x, c.x);
            lo_y = std::min(lo_y, c.y);
            hi_x = std::max(hi_x, c.x);
            hi_y = std::max(hi_y, c.y);
          }
          if (p.x < lo_x || p.x > hi_x || p.y < lo_y || p.y > hi_y) return false;
          return point_in_polygon(s.curve, p);
        } else {
          return inside_ellipse_arcs(s, spec.extent, p);
        }
      },
      spec.shape);
}

bool fluid_is_connected(const Grid<std::uint8_t>& mask) {
  const std::size_t rows = mask.rows();
  const std::size_t cols = mask.cols();
  std::size_t fluid = 0;
  std::size_t start = mask.size();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) {
      ++fluid;
      if (start == mask.size()) start = i;
    }
  }
  if (fluid == 0) return false;
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::queue<std::size_t> frontier;
  frontier.push(start);
  seen[start] = 1;
  std::size_t reached = 0;
  while (!frontier.empty()) {
    const std::size_t k = frontier.front();
    frontier.pop();
    ++reached;
    const std::size_t r = k / cols;
    const std::size_t c = k % cols;
    auto visit = [&](std::size_t rr, std::size_t cc) {
      const std::size_t kk = rr * cols + cc;
      if (mask[kk] == 0 && !seen[kk]) {
        seen[kk] = 1;
        frontier.push(kk);
      }
    };
    if (r > 0) visit(r - 1, c);
    if (r + 1 < rows) visit(r + 1, c);
    if (c > 0) visit(r, c - 1);
    if (c + 1 < cols) visit(r, c + 1);
  }
  return reached == fluid;
}

GeometryField rasterize(const DomainSpec& spec, double resolution) {
  if (!(resolution > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "rasterize: resolution must be positive");
  }
  const auto cols = static_cast<std::size_t>(std::lround(spec.extent.x * resolution));
  const auto rows = static_cast<std::size_t>(std::lround(spec.extent.y * resolution));
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::kInvalidArgument, "rasterize: extent smaller than one cell");
  }

  GeometryField field;
  field.mask = Grid<std::uint8_t>(rows, cols, 1);
  field.edges = default_edges(spec.category);
  field.extent = spec.extent;
  const double dx = spec.extent.x / static_cast<double>(cols);
  const double dy = spec.extent.y / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Vec2 p{(static_cast<double>(c) + 0.5) * dx, (static_cast<double>(r) + 0.5) * dy};
      field.mask(r, c) = point_in_domain(spec, p) ? 0 : 1;
    }
  }

  // Keep only the largest 4-connected fluid component.
  std::vector<int> label(field.mask.size(), -1);
  std::vector<std::size_t> sizes;
  for (std::size_t k = 0; k < field.mask.size(); ++k) {
    if (field.mask[k] != 0 || label[k] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t count = 0;
    std::queue<std::size_t> frontier;
    frontier.push(k);
    label[k] = id;
    while (!frontier.empty()) {
      const std::size_t cur = frontier.front();
      frontier.pop();
      ++count;
      const std::size_t r = cur / cols;
      const std::size_t c = cur % cols;
      auto visit = [&](std::size_t rr, std::size_t cc) {
        const std::size_t kk = rr * cols + cc;
        if (field.mask[kk] == 0 && label[kk] < 0) {
          label[kk] = id;
          frontier.push(kk);
        }
      };
      if (r > 0) visit(r - 1, c);
      if (r + 1 < rows) visit(r + 1, c);
      if (c > 0) visit(r, c - 1);
      if (c + 1 < cols) visit(r, c + 1);
    }
    sizes.push_back(count);
  }
  if (sizes.empty()) {
    throw Error(ErrorCode::kGeometry, "rasterize: domain has no fluid cells");
  }
  const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t k = 0; k < field.mask.size(); ++k) {
    if (field.mask[k] == 0 && label[k] != keep) field.mask[k] = 1;
  }
  return field;
}

}  // namespace swnet
