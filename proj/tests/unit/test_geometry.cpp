#include <cmath>
#include <numbers>

#include "doctest.h"
#include "swnet/geometry.hpp"

using namespace swnet;

namespace {

std::size_t solid_count(const GeometryField& g) { return g.mask.size() - g.fluid_count(); }

}  // namespace

TEST_CASE("category names round-trip") {
  for (Category c : kAllCategories) {
    const auto parsed = parse_category(to_string(c));
    REQUIRE(parsed);
    CHECK(*parsed == c);
  }
  CHECK_FALSE(parse_category("Triangle"));
}

TEST_CASE("edge condition bit packing") {
  EdgeConditions e;
  e.edge[kEast] = EdgeCondition::kOpen;
  e.edge[kNorth] = EdgeCondition::kOpen;
  CHECK(e.bits() == 0b1010);
  CHECK(EdgeConditions::from_bits(e.bits()) == e);
  CHECK(EdgeConditions::all(EdgeCondition::kOpen).bits() == 0xF);
}

TEST_CASE("box rasterizes to an all-fluid grid with walls") {
  Rng rng(1);
  const DomainSpec spec = sample_domain(Category::kBox, rng);
  const GeometryField g = rasterize(spec, 128);
  CHECK(g.rows() == 128);
  CHECK(g.cols() == 128);
  CHECK(g.fluid_count() == 128u * 128u);
  CHECK(g.edges == EdgeConditions::all(EdgeCondition::kWall));
  CHECK(point_in_domain(spec, {0.5, 0.5}));
  CHECK(g.cell_size() == doctest::Approx(1.0 / 128));
}

TEST_CASE("corner occludes exactly one quadrant") {
  DomainSpec spec;
  spec.category = Category::kCorner;
  spec.extent = {2.0, 2.0};
  spec.shape = CornerShape{{1.0, 1.0}, 0};
  CHECK_FALSE(point_in_domain(spec, {1.5, 1.5}));
  CHECK(point_in_domain(spec, {0.5, 1.5}));
  CHECK(point_in_domain(spec, {0.5, 0.5}));
  CHECK(point_in_domain(spec, {1.5, 0.5}));
  const GeometryField g = rasterize(spec, 32);
  CHECK(solid_count(g) == 64u * 64u / 4);
  CHECK(g.edges == EdgeConditions::all(EdgeCondition::kOpen));

  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const DomainSpec s = sample_domain(Category::kCorner, rng);
    const auto& c = std::get<CornerShape>(s.shape);
    CHECK(c.vertex.x >= 0.8);
    CHECK(c.vertex.x <= 1.2);
    CHECK(c.quadrant >= 0);
    CHECK(c.quadrant < 4);
  }
}

TEST_CASE("convex circle pixel area matches the analytic disc") {
  DomainSpec spec;
  spec.category = Category::kConvexCircle;
  spec.extent = {2.0, 2.0};
  for (double r : {0.3, 0.55, 0.8}) {
    spec.shape = ConvexCircleShape{{1.0, 1.0}, r};
    const GeometryField g = rasterize(spec, 128);
    const double expected = std::numbers::pi * r * r * 128 * 128;
    CHECK(std::abs(double(solid_count(g)) - expected) / expected < 0.02);
  }
}

TEST_CASE("ellipse axes stay within their sampling ranges") {
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    const DomainSpec s = sample_domain(Category::kEllipseArcs, rng);
    const auto& e = std::get<EllipseArcsShape>(s.shape);
    for (Vec2 axes : {e.convex_axes, e.concave_axes}) {
      const double minor = std::min(axes.x, axes.y);
      CHECK(minor >= 0.25);
      CHECK(minor <= 0.5);
    }
  }
}

TEST_CASE("spline outline helpers") {
  const std::vector<Vec2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK(polygon_area(square) == doctest::Approx(1.0));
  CHECK(point_in_polygon(square, {0.5, 0.5}));
  CHECK_FALSE(point_in_polygon(square, {1.5, 0.5}));
  CHECK_FALSE(polyline_self_intersects(square));
  const std::vector<Vec2> bowtie{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  CHECK(polyline_self_intersects(bowtie));

  Rng rng(3);
  const DomainSpec s = sample_domain(Category::kSplineBlob, rng);
  const auto& blob = std::get<SplineBlobShape>(s.shape);
  CHECK(blob.curve.size() == kSplineSamples);
  CHECK_FALSE(point_in_domain(s, {-0.5, -0.5}));
  const bool all_corners = point_in_domain(s, {0.999, 0.001}) &&
                           point_in_domain(s, {0.001, 0.999}) &&
                           point_in_domain(s, {0.001, 0.001}) && point_in_domain(s, {0.999, 0.999});
  CHECK_FALSE(all_corners);
}

TEST_CASE("sampling is reproducible and rasterization is pure") {
  for (Category c : kAllCategories) {
    Rng a(42);
    Rng b(42);
    const GeometryField ga = rasterize(sample_domain(c, a), 64);
    const GeometryField gb = rasterize(sample_domain(c, b), 64);
    CHECK(ga.mask == gb.mask);
    Rng d(42);
    const DomainSpec spec = sample_domain(c, d);
    CHECK(rasterize(spec, 64).mask == rasterize(spec, 64).mask);
  }
}

TEST_CASE("every category yields a connected region with enough fluid") {
  Rng rng(2024);
  for (Category c : kAllCategories) {
    const bool closed = c == Category::kBox || c == Category::kSplineBlob ||
                        c == Category::kEllipseArcs;
    for (int i = 0; i < 1000; ++i) {
      const DomainSpec spec = sample_domain(c, rng);
      const GeometryField g = rasterize(spec, 32);
      CHECK(g.fluid_count() >= 0.1 * double(g.mask.size()));
      CHECK(fluid_is_connected(g.mask));
      CHECK(g.edges == EdgeConditions::all(closed ? EdgeCondition::kWall : EdgeCondition::kOpen));
    }
  }
}

TEST_CASE("refining the grid only changes cells along the boundary") {
  Rng rng(9);
  for (Category c : kAllCategories) {
    const DomainSpec spec = sample_domain(c, rng);
    const GeometryField coarse = rasterize(spec, 32);
    const GeometryField fine = rasterize(spec, 64);
    const double h = coarse.cell_size();
    const double f = fine.cell_size();
    std::size_t outside_band = 0;
    for (std::size_t i = 0; i < fine.rows(); ++i) {
      for (std::size_t j = 0; j < fine.cols(); ++j) {
        if (fine.mask(i, j) == coarse.mask(i / 2, j / 2)) continue;
        // A disagreeing cell must have a boundary crossing within one coarse cell.
        const Vec2 p{(j + 0.5) * f, (i + 0.5) * f};
        const bool here = point_in_domain(spec, p);
        bool near = false;
        for (double dx : {-h, 0.0, h}) {
          for (double dy : {-h, 0.0, h}) {
            if (point_in_domain(spec, {p.x + dx, p.y + dy}) != here) near = true;
          }
        }
        if (!near) ++outside_band;
      }
    }
    CHECK(outside_band == 0);
  }
}

TEST_CASE("connectivity filter removes isolated pockets") {
  Grid<std::uint8_t> m(4, 4, 0);
  CHECK(fluid_is_connected(m));
  for (std::size_t c = 0; c < 4; ++c) m(2, c) = 1;
  CHECK_FALSE(fluid_is_connected(m));
}
