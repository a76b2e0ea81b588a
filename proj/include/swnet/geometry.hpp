#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "swnet/common.hpp"

namespace swnet {

enum class Category : std::uint8_t {
  kBox = 0,
  kCorner,
  kDoubleCorner,
  kConvexCircle,
  kConcaveCircle,
  kSplineBlob,
  kEllipseArcs,
};

inline constexpr std::array<Category, 7> kAllCategories = {
    Category::kBox,          Category::kCorner,        Category::kDoubleCorner,
    Category::kConvexCircle, Category::kConcaveCircle, Category::kSplineBlob,
    Category::kEllipseArcs};

std::string to_string(Category category);
std::optional<Category> parse_category(std::string_view name);

enum class EdgeCondition : std::uint8_t { kWall = 0, kOpen = 1 };

/// Outer grid edges. Row 0 is the south edge (y = 0), column 0 the west edge.
enum Edge : std::size_t { kWest = 0, kEast = 1, kSouth = 2, kNorth = 3 };

struct EdgeConditions {
  std::array<EdgeCondition, 4> edge{EdgeCondition::kWall, EdgeCondition::kWall,
                                    EdgeCondition::kWall, EdgeCondition::kWall};

  static EdgeConditions all(EdgeCondition c) { return {{c, c, c, c}}; }
  /// Bit i set when edge i is open.
  std::uint8_t bits() const;
  static EdgeConditions from_bits(std::uint8_t bits);
  bool operator==(const EdgeConditions&) const = default;
};

// Quadrant orientation shared by corner-like shapes: 0 = NE, 1 = NW, 2 = SW, 3 = SE.
struct BoxShape {};

/// Solid quadrant with its corner at `vertex`.
struct CornerShape {
  Vec2 vertex;
  int quadrant = 0;
};

/// Two-step staircase of solid around `center`. In quadrant-local coordinates
/// (a, b) the solid is {a >= -ox/2, b >= oy/2} U {a >= ox/2, b >= -oy/2}.
struct DoubleCornerShape {
  Vec2 center;
  double offset_x = 0.6;
  double offset_y = 0.6;
  int quadrant = 0;
};

/// Solid disc (a convex wall seen from the fluid).
struct ConvexCircleShape {
  Vec2 center;
  double radius = 0.5;
};

/// Circular bay cut into a straight wall: fluid is the disc plus the open
/// half-plane {(p - c) . n < 0}, with n = (cos wall_angle, sin wall_angle).
struct ConcaveCircleShape {
  Vec2 center;
  double radius = 0.5;
  double wall_angle = 0.0;
};

/// Fluid enclosed by a closed uniform cubic B-spline through four control
/// points (wrapped). `curve` is the sampled boundary polyline.
struct SplineBlobShape {
  std::array<Vec2, 4> control;
  std::vector<Vec2> curve;
};

/// Convex quarter-ellipse of solid anchored at box corner `corner` and a
/// concave (rounded) corner of solid at the opposite box corner.
struct EllipseArcsShape {
  int corner = 2;
  Vec2 convex_axes{0.3, 0.4};
  Vec2 concave_axes{0.3, 0.4};
};

using Shape = std::variant<BoxShape, CornerShape, DoubleCornerShape, ConvexCircleShape,
                           ConcaveCircleShape, SplineBlobShape, EllipseArcsShape>;

struct DomainSpec {
  Category category = Category::kBox;
  Vec2 extent{1.0, 1.0};
  Shape shape = BoxShape{};
};

struct GeometryField {
  Grid<std::uint8_t> mask;  // 1 = solid, 0 = fluid
  EdgeConditions edges;
  Vec2 extent{1.0, 1.0};

  std::size_t rows() const { return mask.rows(); }
  std::size_t cols() const { return mask.cols(); }
  double cell_size() const { return extent.x / static_cast<double>(mask.cols()); }
  bool solid(std::size_t r, std::size_t c) const { return mask(r, c) != 0; }
  std::size_t fluid_count() const;
  /// Cell containing a physical point, or nullopt outside the grid.
  std::optional<std::pair<std::size_t, std::size_t>> cell_at(Vec2 p) const;
};

/// Category-level edge tags: closed categories are all-wall, open ones all-open.
EdgeConditions default_edges(Category category);
Vec2 default_extent(Category category);

/// Number of points used to sample a spline boundary.
inline constexpr std::size_t kSplineSamples = 512;

std::vector<Vec2> sample_closed_bspline(const std::array<Vec2, 4>& control,
                                        std::size_t samples = kSplineSamples);
bool polyline_self_intersects(const std::vector<Vec2>& closed);
double polygon_area(const std::vector<Vec2>& closed);
/// Even-odd crossing test against a closed polyline.
bool point_in_polygon(const std::vector<Vec2>& closed, Vec2 p);

SplineBlobShape make_spline_blob(const std::array<Vec2, 4>& control);

/// Draws a random domain of the given category.
DomainSpec sample_domain(Category category, Rng& rng);

bool point_in_domain(const DomainSpec& spec, Vec2 p);

/// Cell-centre rasterization at `resolution` cells per metre. Fluid cells not
/// 4-connected to the largest fluid component are marked solid.
GeometryField rasterize(const DomainSpec& spec, double resolution);

/// True iff the fluid cells form a single 4-connected component.
bool fluid_is_connected(const Grid<std::uint8_t>& mask);

}  // namespace swnet
