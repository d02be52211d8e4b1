#ifndef MFPL_SVG_HPP
#define MFPL_SVG_HPP

#include <string>
#include <vector>

namespace mfpl {

// Minimal self-contained SVG line plot: curves, scatter points and shaded
// vertical bands, with simple axes and tick labels.
class SvgPlot {
 public:
  SvgPlot(double width = 720, double height = 480);

  void add_curve(const std::vector<double>& x, const std::vector<double>& y,
                 const std::string& color, double stroke_width = 1.5,
                 const std::string& label = "");
  void add_points(const std::vector<double>& x, const std::vector<double>& y,
                  const std::string& color, double radius = 3.5);
  void add_band(double x_lo, double x_hi, const std::string& color, double opacity = 0.25);
  void add_vline(double x, const std::string& color);
  void set_title(const std::string& title) { title_ = title; }

  void write(const std::string& path) const;

 private:
  struct Curve {
    std::vector<double> x, y;
    std::string color;
    double width;
    std::string label;
  };
  struct Points {
    std::vector<double> x, y;
    std::string color;
    double radius;
  };
  struct Band {
    double lo, hi;
    std::string color;
    double opacity;
  };

  double width_, height_;
  std::string title_;
  std::vector<Curve> curves_;
  std::vector<Points> points_;
  std::vector<Band> bands_;
  std::vector<std::pair<double, std::string>> vlines_;
};

}  // namespace mfpl

#endif
