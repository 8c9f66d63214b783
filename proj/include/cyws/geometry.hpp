#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace cyws::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in continuous pixel coordinates. Origin is the top-left
/// corner of the image, x grows rightwards and y downwards.
struct Bbox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  Point center() const { return {(x1 + x2) / 2.0, (y1 + y2) / 2.0}; }
  bool valid() const { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const Bbox&, const Bbox&) = default;
};

/// Prints [x1, y1, x2, y2].
std::ostream& operator<<(std::ostream& out, const Bbox& b);

struct ImageFrame {
  int width = 0;
  int height = 0;

  bool valid() const { return width > 0 && height > 0; }
  friend bool operator==(const ImageFrame&, const ImageFrame&) = default;
};

/// A scored box. Shared by the detection head and the evaluator.
struct Detection {
  Bbox bbox;
  double score = 0.0;
};

/// Sampled augmentation parameters. Translation is a fraction of the frame
/// size; rotation is in radians about the frame center, positive values turn
/// the content counterclockwise as seen on screen (y axis pointing down).
struct AffineParams {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  double rotation = 0.0;

  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

class AffineTransform {
 public:
  /// Row-major 2x3 matrix [a b c; d e f] mapping (x, y, 1) to (x', y').
  using Matrix = std::array<double, 6>;

  AffineTransform() = default;
  explicit AffineTransform(const Matrix& m, AffineParams params = {}) : m_(m), params_(params) {}

  static AffineTransform identity() { return AffineTransform{}; }
  static AffineTransform translation(double dx, double dy);
  static AffineTransform scaling(double sx, double sy);
  /// Scale and rotate about the center of `frame`, then shift by
  /// (tx * width, ty * height).
  static AffineTransform from_params(const AffineParams& p, const ImageFrame& frame);

  const Matrix& matrix() const { return m_; }
  const AffineParams& params() const { return params_; }

  double determinant() const { return m_[0] * m_[4] - m_[1] * m_[3]; }
  bool invertible() const;
  /// Throws InvalidAugmentation when the matrix is singular.
  AffineTransform inverse() const;
  Point apply(Point p) const;
  /// Returns the map x -> this(inner(x)). Keeps this transform's params.
  AffineTransform after(const AffineTransform& inner) const;

 private:
  Matrix m_{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  AffineParams params_{};
};

double iou(const Bbox& a, const Bbox& b);

/// Tightest axis-aligned box around the four transformed corners of `b`.
/// The result is not clipped to any frame.
Bbox transform_bbox(const Bbox& b, const AffineTransform& t);

/// Clipped area below this value (for a box of the given original area)
/// means the box no longer counts.
double drop_threshold(double original_area);

/// Intersection with [0,width]x[0,height]; nullopt when the remainder is
/// empty or under drop_threshold().
std::optional<Bbox> clip_bbox(const Bbox& b, const ImageFrame& frame);

using Polygon = std::vector<Point>;

Polygon to_polygon(const Bbox& b);
Polygon to_polygon(const ImageFrame& frame);
Polygon transform_polygon(std::span<const Point> poly, const AffineTransform& t);
/// Sutherland-Hodgman clip of `subject` against a convex `clip` polygon.
Polygon clip_polygon(std::span<const Point> subject, std::span<const Point> clip);
double polygon_area(std::span<const Point> poly);
/// Bounding box of a polygon; nullopt for an empty polygon.
std::optional<Bbox> polygon_bounds(std::span<const Point> poly);

}  // namespace cyws::geometry

namespace cyws {
using geometry::Bbox;
using geometry::Detection;
using geometry::ImageFrame;
}  // namespace cyws
