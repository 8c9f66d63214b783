#include "doctest_torch.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cyws/error.hpp"
#include "cyws/geometry.hpp"

using namespace cyws;
using namespace cyws::geometry;

namespace {

// Corner enumeration with the matrix written out by hand.
Bbox corner_oracle(const Bbox& b, const AffineTransform::Matrix& m) {
  double xs[4], ys[4];
  const double cx[4] = {b.x1, b.x2, b.x2, b.x1};
  const double cy[4] = {b.y1, b.y1, b.y2, b.y2};
  for (int i = 0; i < 4; ++i) {
    xs[i] = m[0] * cx[i] + m[1] * cy[i] + m[2];
    ys[i] = m[3] * cx[i] + m[4] * cy[i] + m[5];
  }
  return {*std::min_element(xs, xs + 4), *std::min_element(ys, ys + 4), *std::max_element(xs, xs + 4),
          *std::max_element(ys, ys + 4)};
}

void check_box(const Bbox& a, const Bbox& b, double eps = 1e-9) {
  CHECK(a.x1 == doctest::Approx(b.x1).epsilon(eps));
  CHECK(a.y1 == doctest::Approx(b.y1).epsilon(eps));
  CHECK(a.x2 == doctest::Approx(b.x2).epsilon(eps));
  CHECK(a.y2 == doctest::Approx(b.y2).epsilon(eps));
}

Bbox random_box(std::mt19937_64& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> u(0.0, extent);
  double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
  return {std::min(a, b), std::min(c, d), std::max(a, b) + 0.5, std::max(c, d) + 0.5};
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("iou examples") {
    CHECK((iou({0, 0, 4, 4}, {0, 0, 4, 4}) == 1.0));
    CHECK((iou({0, 0, 1, 1}, {5, 5, 6, 6}) == 0.0));
    CHECK((iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0)));
    CHECK((iou({1, 1, 1, 1}, {1, 1, 1, 1}) == 0.0));
  }

  TEST_CASE("iou is symmetric and bounded") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i) {
      const auto a = random_box(rng), b = random_box(rng);
      const double v = iou(a, b);
      CHECK(v == iou(b, a));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("transform_bbox examples") {
    const Bbox b{0, 0, 4, 4};
    CHECK(transform_bbox(b, AffineTransform::identity()) == b);
    check_box(transform_bbox(b, AffineTransform::translation(10, 5)), {10, 5, 14, 9});

    const ImageFrame frame{100, 100};
    const auto rot = AffineTransform::from_params({1.0, 0.0, 0.0, std::numbers::pi / 2}, frame);
    const Bbox r{10, 10, 20, 30};
    check_box(transform_bbox(r, rot), corner_oracle(r, rot.matrix()));
  }

  TEST_CASE("positive rotation turns content counterclockwise on screen") {
    // A point right of the center moves up (smaller y) for a quarter turn.
    const auto t = AffineTransform::from_params({1.0, 0.0, 0.0, std::numbers::pi / 2}, {100, 100});
    const Point p = t.apply({80, 50});
    CHECK(p.x == doctest::Approx(50.0));
    CHECK(p.y == doctest::Approx(20.0));
  }

  TEST_CASE("translation is a fraction of the frame") {
    const auto t = AffineTransform::from_params({1.0, 0.1, -0.2, 0.0}, {200, 100});
    const Point p = t.apply({0, 0});
    CHECK(p.x == doctest::Approx(20.0));
    CHECK(p.y == doctest::Approx(-20.0));
  }

  TEST_CASE("transform_bbox matches corner enumeration on random affines") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> s(0.8, 1.5), tr(-0.2, 0.2), th(-std::numbers::pi, std::numbers::pi);
    for (int i = 0; i < 200; ++i) {
      const auto t = AffineTransform::from_params({s(rng), tr(rng), tr(rng), th(rng)}, {128, 96});
      const auto b = random_box(rng);
      check_box(transform_bbox(b, t), corner_oracle(b, t.matrix()));
    }
  }

  TEST_CASE("inverse round trip contains the box and is exact without rotation") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> s(0.8, 1.5), tr(-0.2, 0.2), th(-0.5, 0.5);
    for (int i = 0; i < 100; ++i) {
      const auto b = random_box(rng);
      const auto t = AffineTransform::from_params({s(rng), tr(rng), tr(rng), th(rng)}, {100, 100});
      const auto back = transform_bbox(transform_bbox(b, t), t.inverse());
      CHECK(back.x1 <= b.x1 + 1e-9);
      CHECK(back.y1 <= b.y1 + 1e-9);
      CHECK(back.x2 >= b.x2 - 1e-9);
      CHECK(back.y2 >= b.y2 - 1e-9);

      const auto axis = AffineTransform::from_params({s(rng), tr(rng), tr(rng), 0.0}, {100, 100});
      check_box(transform_bbox(transform_bbox(b, axis), axis.inverse()), b, 1e-12);
    }
  }

  TEST_CASE("singular transforms are rejected") {
    const AffineTransform flat({1, 2, 0, 2, 4, 0});
    CHECK_FALSE(flat.invertible());
    CHECK_THROWS_AS(flat.inverse(), InvalidAugmentation);
    CHECK_THROWS_AS(transform_bbox({0, 0, 1, 1}, flat), InvalidAugmentation);
  }

  TEST_CASE("composition applies the inner map first") {
    const auto a = AffineTransform::translation(3, 0);
    const auto b = AffineTransform::scaling(2, 2);
    const Point p = b.after(a).apply({1, 1});
    CHECK(p.x == doctest::Approx(8.0));
    CHECK(p.y == doctest::Approx(2.0));
  }

  TEST_CASE("clip_bbox examples") {
    const ImageFrame frame{100, 100};
    CHECK((clip_bbox({10, 10, 50, 50}, frame) == Bbox{10, 10, 50, 50}));
    CHECK_FALSE((clip_bbox({200, 200, 250, 250}, frame).has_value()));
    CHECK((clip_bbox({-5, -5, 5, 5}, frame) == Bbox{0, 0, 5, 5}));
  }

  TEST_CASE("clip_bbox drop threshold") {
    CHECK(drop_threshold(100.0) == 16.0);
    CHECK(drop_threshold(1000.0) == doctest::Approx(50.0));
    const ImageFrame frame{100, 100};
    // 40x40 box with a 3x40 sliver left: 120 px^2 > 80 (5%) and > 16.
    CHECK((clip_bbox({97, 10, 137, 50}, frame).has_value()));
    // 1x40 sliver: 40 px^2 < 80.
    CHECK_FALSE((clip_bbox({99, 10, 139, 50}, frame).has_value()));
  }

  TEST_CASE("clip_bbox output stays in frame and never grows") {
    std::mt19937_64 rng(9);
    const ImageFrame frame{64, 48};
    for (int i = 0; i < 500; ++i) {
      auto b = random_box(rng, 120.0);
      b.x1 -= 30;
      b.x2 -= 30;
      if (const auto c = clip_bbox(b, frame)) {
        CHECK(c->area() <= b.area() + 1e-12);
        CHECK(c->x1 >= 0.0);
        CHECK(c->y1 >= 0.0);
        CHECK(c->x2 <= 64.0);
        CHECK(c->y2 <= 48.0);
      }
    }
  }

  TEST_CASE("polygon clipping") {
    const auto square = to_polygon(Bbox{0, 0, 10, 10});
    const auto frame = to_polygon(ImageFrame{5, 20});
    const auto clipped = clip_polygon(square, frame);
    CHECK(polygon_area(clipped) == doctest::Approx(50.0));
    const auto bounds = polygon_bounds(clipped);
    REQUIRE(bounds.has_value());
    check_box(*bounds, {0, 0, 5, 10});
    CHECK((clip_polygon(square, to_polygon(Bbox{20, 20, 30, 30})).empty()));
  }
}
