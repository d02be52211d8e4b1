#include "mfpl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mfpl {

double Dataset::max_abs_x() const {
  double m = 0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

Dataset Dataset::from_points(std::vector<std::pair<double, double>> pts) {
  if (pts.empty()) throw EmptyDataset("dataset: no points");
  std::sort(pts.begin(), pts.end(),
            [](const auto& p, const auto& q) { return p.first < q.first; });
  Dataset ds;
  ds.x.reserve(pts.size());
  ds.y.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!std::isfinite(pts[i].first) || !std::isfinite(pts[i].second))
      throw ParseError("dataset: non-finite value at point " + std::to_string(i + 1));
    if (i > 0 && !(pts[i - 1].first < pts[i].first))
      throw DuplicateInput("dataset: duplicate input x = " + std::to_string(pts[i].first));
    ds.x.push_back(pts[i].first);
    ds.y.push_back(pts[i].second);
  }
  return ds;
}

Dataset parse_dataset_csv(const std::string& text) {
  std::vector<std::pair<double, double>> pts;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // skip blank lines and an optional "x,y" header
    std::string trimmed = line;
    trimmed.erase(std::remove_if(trimmed.begin(), trimmed.end(), ::isspace), trimmed.end());
    if (trimmed.empty()) continue;
    if (lineno == 1 && (trimmed == "x,y" || trimmed == "X,Y")) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError("csv: missing comma at line " + std::to_string(lineno));
    try {
      std::size_t used = 0;
      const std::string xs = line.substr(0, comma);
      const std::string ys = line.substr(comma + 1);
      const double xv = std::stod(xs, &used);
      while (used < xs.size() && std::isspace(static_cast<unsigned char>(xs[used]))) ++used;
      if (used != xs.size()) throw std::invalid_argument("trailing");
      const double yv = std::stod(ys, &used);
      while (used < ys.size() && std::isspace(static_cast<unsigned char>(ys[used]))) ++used;
      if (used != ys.size()) throw std::invalid_argument("trailing");
      pts.emplace_back(xv, yv);
    } catch (const std::exception&) {
      throw ParseError("csv: malformed row at line " + std::to_string(lineno));
    }
  }
  return Dataset::from_points(std::move(pts));
}

Dataset parse_dataset_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("json: ") + e.what());
  }
  if (!j.contains("points") || !j["points"].is_array())
    throw ParseError("json: expected object with \"points\" array");
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ParseError("json: each point must be [x, y]");
    pts.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return Dataset::from_points(std::move(pts));
}

Dataset load_dataset(const std::string& path, DataFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return format == DataFormat::Csv ? parse_dataset_csv(buf.str())
                                   : parse_dataset_json(buf.str());
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << "x,y\n";
  out.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) out << ds.x[i] << ',' << ds.y[i] << '\n';
}

PredictionIntervals make_intervals(const Dataset& ds, double L) {
  if (!(L > ds.max_abs_x()))
    throw PaddingTooSmall("intervals: L must exceed max|x_j| = " +
                          std::to_string(ds.max_abs_x()));
  PredictionIntervals pi;
  pi.L = L;
  pi.edges.reserve(ds.size() + 2);
  pi.edges.push_back(-L);
  for (double v : ds.x) pi.edges.push_back(v);
  pi.edges.push_back(L);
  return pi;
}

double default_padding(const Dataset& ds) { return 1.5 * ds.max_abs_x() + 1.0; }

std::size_t PredictionIntervals::locate(double x) const {
  // first edge >= x, ties to the left interval
  const auto it = std::lower_bound(edges.begin() + 1, edges.end(), x);
  if (it == edges.end()) return count() - 1;
  const std::size_t j = static_cast<std::size_t>(it - edges.begin()) - 1;
  return std::min(j, count() - 1);
}

}  // namespace mfpl
