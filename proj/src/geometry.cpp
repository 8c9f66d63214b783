#include "cyws/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cyws/error.hpp"

namespace cyws::geometry {

std::ostream& operator<<(std::ostream& out, const Bbox& b) {
  return out << '[' << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ']';
}

AffineTransform AffineTransform::translation(double dx, double dy) {
  return AffineTransform({1.0, 0.0, dx, 0.0, 1.0, dy});
}

AffineTransform AffineTransform::scaling(double sx, double sy) {
  return AffineTransform({sx, 0.0, 0.0, 0.0, sy, 0.0});
}

AffineTransform AffineTransform::from_params(const AffineParams& p, const ImageFrame& frame) {
  const double cx = frame.width / 2.0;
  const double cy = frame.height / 2.0;
  const double a = p.scale * std::cos(p.rotation);
  const double b = p.scale * std::sin(p.rotation);
  // With y pointing down, [a b; -b a] turns content counterclockwise on screen.
  const Matrix m{a, b, cx + p.tx * frame.width - (a * cx + b * cy),
                 -b, a, cy + p.ty * frame.height - (-b * cx + a * cy)};
  return AffineTransform(m, p);
}

bool AffineTransform::invertible() const {
  const double det = determinant();
  return std::isfinite(det) && std::abs(det) > 1e-12;
}

AffineTransform AffineTransform::inverse() const {
  if (!invertible()) throw InvalidAugmentation("affine transform is not invertible");
  const double det = determinant();
  const double ia = m_[4] / det;
  const double ib = -m_[1] / det;
  const double id = -m_[3] / det;
  const double ie = m_[0] / det;
  return AffineTransform({ia, ib, -(ia * m_[2] + ib * m_[5]), id, ie, -(id * m_[2] + ie * m_[5])});
}

Point AffineTransform::apply(Point p) const {
  return {m_[0] * p.x + m_[1] * p.y + m_[2], m_[3] * p.x + m_[4] * p.y + m_[5]};
}

AffineTransform AffineTransform::after(const AffineTransform& inner) const {
  const Matrix& n = inner.m_;
  const Matrix m{m_[0] * n[0] + m_[1] * n[3], m_[0] * n[1] + m_[1] * n[4],
                 m_[0] * n[2] + m_[1] * n[5] + m_[2],
                 m_[3] * n[0] + m_[4] * n[3], m_[3] * n[1] + m_[4] * n[4],
                 m_[3] * n[2] + m_[4] * n[5] + m_[5]};
  return AffineTransform(m, params_);
}

double iou(const Bbox& a, const Bbox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Bbox transform_bbox(const Bbox& b, const AffineTransform& t) {
  if (!t.invertible()) throw InvalidAugmentation("cannot re-project a box through a singular affine");
  const Point corners[4] = {t.apply({b.x1, b.y1}), t.apply({b.x2, b.y1}),
                            t.apply({b.x1, b.y2}), t.apply({b.x2, b.y2})};
  Bbox out{corners[0].x, corners[0].y, corners[0].x, corners[0].y};
  for (const Point& c : corners) {
    out.x1 = std::min(out.x1, c.x);
    out.y1 = std::min(out.y1, c.y);
    out.x2 = std::max(out.x2, c.x);
    out.y2 = std::max(out.y2, c.y);
  }
  return out;
}

double drop_threshold(double original_area) { return std::max(16.0, 0.05 * original_area); }

std::optional<Bbox> clip_bbox(const Bbox& b, const ImageFrame& frame) {
  const Bbox c{std::max(b.x1, 0.0), std::max(b.y1, 0.0),
               std::min(b.x2, static_cast<double>(frame.width)),
               std::min(b.y2, static_cast<double>(frame.height))};
  if (c.x2 <= c.x1 || c.y2 <= c.y1) return std::nullopt;
  if (c.area() < drop_threshold(b.area())) return std::nullopt;
  return c;
}

Polygon to_polygon(const Bbox& b) { return {{b.x1, b.y1}, {b.x2, b.y1}, {b.x2, b.y2}, {b.x1, b.y2}}; }

Polygon to_polygon(const ImageFrame& frame) {
  return to_polygon(Bbox{0.0, 0.0, static_cast<double>(frame.width), static_cast<double>(frame.height)});
}

Polygon transform_polygon(std::span<const Point> poly, const AffineTransform& t) {
  Polygon out;
  out.reserve(poly.size());
  for (const Point& p : poly) out.push_back(t.apply(p));
  return out;
}

namespace {

double signed_area(std::span<const Point> poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return acc / 2.0;
}

double cross(const Point& a, const Point& b, const Point& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

}  // namespace

Polygon clip_polygon(std::span<const Point> subject, std::span<const Point> clip) {
  Polygon out(subject.begin(), subject.end());
  if (clip.size() < 3) return {};
  const double orientation = signed_area(clip) >= 0.0 ? 1.0 : -1.0;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point& a = clip[e];
    const Point& b = clip[(e + 1) % clip.size()];
    const Polygon input = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point& cur = input[i];
      const Point& prev = input[(i + input.size() - 1) % input.size()];
      const double dc = orientation * cross(a, b, cur);
      const double dp = orientation * cross(a, b, prev);
      if (dc >= 0.0) {
        if (dp < 0.0) {
          const double s = dp / (dp - dc);
          out.push_back({prev.x + s * (cur.x - prev.x), prev.y + s * (cur.y - prev.y)});
        }
        out.push_back(cur);
      } else if (dp >= 0.0) {
        const double s = dp / (dp - dc);
        out.push_back({prev.x + s * (cur.x - prev.x), prev.y + s * (cur.y - prev.y)});
      }
    }
  }
  return out;
}

double polygon_area(std::span<const Point> poly) { return std::abs(signed_area(poly)); }

std::optional<Bbox> polygon_bounds(std::span<const Point> poly) {
  if (poly.empty()) return std::nullopt;
  Bbox out{poly[0].x, poly[0].y, poly[0].x, poly[0].y};
  for (const Point& p : poly) {
    out.x1 = std::min(out.x1, p.x);
    out.y1 = std::min(out.y1, p.y);
    out.x2 = std::max(out.x2, p.x);
    out.y2 = std::max(out.y2, p.y);
  }
  return out;
}

}  // namespace cyws::geometry
