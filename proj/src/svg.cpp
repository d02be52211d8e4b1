#include "mfpl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mfpl {

SvgPlot::SvgPlot(double width, double height) : width_(width), height_(height) {}

void SvgPlot::add_curve(const std::vector<double>& x, const std::vector<double>& y,
                        const std::string& color, double stroke_width,
                        const std::string& label) {
  curves_.push_back({x, y, color, stroke_width, label});
}

void SvgPlot::add_points(const std::vector<double>& x, const std::vector<double>& y,
                         const std::string& color, double radius) {
  points_.push_back({x, y, color, radius});
}

void SvgPlot::add_band(double x_lo, double x_hi, const std::string& color, double opacity) {
  bands_.push_back({x_lo, x_hi, color, opacity});
}

void SvgPlot::add_vline(double x, const std::string& color) { vlines_.emplace_back(x, color); }

void SvgPlot::write(const std::string& path) const {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  const auto scan = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
    for (double v : xs) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : ys) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  };
  for (const Curve& c : curves_) scan(c.x, c.y);
  for (const Points& p : points_) scan(p.x, p.y);
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.06 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double ml = 56, mr = 16, mt = title_.empty() ? 16 : 34, mb = 40;
  const double pw = width_ - ml - mr, ph = height_ - mt - mb;
  const auto X = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
  const auto Y = [&](double v) { return mt + (ymax - v) / (ymax - ymin) * ph; };

  std::ostringstream s;
  s.precision(8);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
    << height_ << "\" viewBox=\"0 0 " << width_ << ' ' << height_ << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const Band& b : bands_) {
    const double x0 = std::clamp(X(b.lo), ml, ml + pw);
    const double x1 = std::clamp(X(b.hi), ml, ml + pw);
    s << "<rect x=\"" << x0 << "\" y=\"" << mt << "\" width=\"" << std::max(0.8, x1 - x0)
      << "\" height=\"" << ph << "\" fill=\"" << b.color << "\" opacity=\"" << b.opacity
      << "\"/>\n";
  }
  // axes with 6 ticks per direction
  s << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    s << "<line x1=\"" << X(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << X(fx) << "\" y2=\""
      << mt + ph + 4 << "\" stroke=\"#333\"/>\n";
    s << "<text x=\"" << X(fx) << "\" y=\"" << mt + ph + 18
      << "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">";
    s << std::defaultfloat << fx << "</text>\n";
    s << "<line x1=\"" << ml - 4 << "\" y1=\"" << Y(fy) << "\" x2=\"" << ml << "\" y2=\""
      << Y(fy) << "\" stroke=\"#333\"/>\n";
    s << "<text x=\"" << ml - 8 << "\" y=\"" << Y(fy) + 4
      << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << fy
      << "</text>\n";
  }
  for (const auto& [vx, color] : vlines_)
    s << "<line x1=\"" << X(vx) << "\" y1=\"" << mt << "\" x2=\"" << X(vx) << "\" y2=\""
      << mt + ph << "\" stroke=\"" << color << "\" stroke-dasharray=\"4 3\"/>\n";
  for (const Curve& c : curves_) {
    s << "<polyline fill=\"none\" stroke=\"" << c.color << "\" stroke-width=\"" << c.width
      << "\" points=\"";
    for (std::size_t i = 0; i < c.x.size(); ++i) s << X(c.x[i]) << ',' << Y(c.y[i]) << ' ';
    s << "\"/>\n";
  }
  for (const Points& p : points_)
    for (std::size_t i = 0; i < p.x.size(); ++i)
      s << "<circle cx=\"" << X(p.x[i]) << "\" cy=\"" << Y(p.y[i]) << "\" r=\"" << p.radius
        << "\" fill=\"" << p.color << "\"/>\n";
  if (!title_.empty())
    s << "<text x=\"" << width_ / 2
      << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\">"
      << title_ << "</text>\n";
  double ly = mt + 14;
  for (const Curve& c : curves_)
    if (!c.label.empty()) {
      s << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 126
        << "\" y2=\"" << ly << "\" stroke=\"" << c.color << "\" stroke-width=\"2\"/>\n";
      s << "<text x=\"" << ml + pw - 120 << "\" y=\"" << ly + 4
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << c.label << "</text>\n";
      ly += 16;
    }
  s << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("svg: cannot write " + path);
  out << s.str();
}

}  // namespace mfpl
