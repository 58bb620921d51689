#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace influence::svg {

/// Two decimals, enough for pixel coordinates.
inline std::string coord(double v) {
  if (!std::isfinite(v)) v = 0.0;
  if (std::abs(v) < 0.005) return "0";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

using Points = std::vector<std::pair<double, double>>;

class Canvas {
 public:
  Canvas(double width, double height) : width_(width), height_(height) {}

  void polyline(const Points& pts, std::string_view stroke, double stroke_width = 1.0,
                double opacity = 1.0) {
    if (pts.empty()) return;
    body_ += "<polyline fill=\"none\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" +
             coord(stroke_width) + "\"";
    if (opacity < 1.0) body_ += " stroke-opacity=\"" + coord(opacity) + "\"";
    body_ += " points=\"" + point_list(pts) + "\"/>\n";
  }

  void polygon(const Points& pts, std::string_view fill, double opacity) {
    if (pts.empty()) return;
    body_ += "<polygon stroke=\"none\" fill=\"" + std::string(fill) + "\" fill-opacity=\"" + coord(opacity) +
             "\" points=\"" + point_list(pts) + "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, std::string_view stroke, double stroke_width = 1.0) {
    body_ += "<line x1=\"" + coord(x1) + "\" y1=\"" + coord(y1) + "\" x2=\"" + coord(x2) + "\" y2=\"" +
             coord(y2) + "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" + coord(stroke_width) +
             "\"/>\n";
  }

  void rect(double x, double y, double w, double h, std::string_view stroke) {
    body_ += "<rect x=\"" + coord(x) + "\" y=\"" + coord(y) + "\" width=\"" + coord(w) + "\" height=\"" +
             coord(h) + "\" fill=\"none\" stroke=\"" + std::string(stroke) + "\"/>\n";
  }

  void circle(double x, double y, double r, std::string_view fill) {
    body_ += "<circle cx=\"" + coord(x) + "\" cy=\"" + coord(y) + "\" r=\"" + coord(r) + "\" fill=\"" +
             std::string(fill) + "\"/>\n";
  }

  void text(double x, double y, std::string_view s, double size = 12.0, std::string_view anchor = "start") {
    body_ += "<text x=\"" + coord(x) + "\" y=\"" + coord(y) + "\" font-size=\"" + coord(size) +
             "\" font-family=\"sans-serif\" text-anchor=\"" + std::string(anchor) + "\">" + escape(s) +
             "</text>\n";
  }

  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + coord(width_) + "\" height=\"" +
           coord(height_) + "\" viewBox=\"0 0 " + coord(width_) + " " + coord(height_) + "\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body_ + "</svg>\n";
  }

 private:
  static std::string point_list(const Points& pts) {
    std::string out;
    for (const auto& [x, y] : pts) {
      if (!out.empty()) out += ' ';
      out += coord(x);
      out += ',';
      out += coord(y);
    }
    return out;
  }

  double width_, height_;
  std::string body_;
};

/// Maps data coordinates into a rectangle of the canvas.
struct Panel {
  double left = 0, top = 0, width = 0, height = 0;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double x(double v) const {
    return left + (x_max > x_min ? (v - x_min) / (x_max - x_min) : 0.5) * width;
  }
  double y(double v) const {
    return top + height - (y_max > y_min ? (v - y_min) / (y_max - y_min) : 0.5) * height;
  }

  Points map(std::span<const double> xs, std::span<const double> ys) const {
    Points out;
    const std::size_t n = std::min(xs.size(), ys.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(x(xs[i]), y(ys[i]));
    return out;
  }

  /// Frame, title and the y range printed at the left edge.
  void decorate(Canvas& c, std::string_view title) const {
    c.rect(left, top, width, height, "#444");
    c.text(left, top - 6, title, 13);
    c.text(left - 6, top + 10, format_tick(y_max), 10, "end");
    c.text(left - 6, top + height, format_tick(y_min), 10, "end");
    c.text(left, top + height + 14, format_tick(x_min), 10, "start");
    c.text(left + width, top + height + 14, format_tick(x_max), 10, "end");
  }

  static std::string format_tick(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 4);
    return std::string(buf, res.ptr);
  }
};

/// Range covering every value, widened when degenerate.
inline std::pair<double, double> range_of(std::initializer_list<std::span<const double>> series) {
  double lo = INFINITY, hi = -INFINITY;
  for (auto s : series) {
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(lo <= hi)) return {0.0, 1.0};
  if (hi - lo < 1e-9) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

inline constexpr std::string_view kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

inline std::string_view color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

}  // namespace influence::svg
