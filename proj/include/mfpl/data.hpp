#ifndef MFPL_DATA_HPP
#define MFPL_DATA_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfpl {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};
struct DuplicateInput : std::runtime_error {
  explicit DuplicateInput(const std::string& what) : std::runtime_error(what) {}
};
struct EmptyDataset : std::runtime_error {
  explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};
struct PaddingTooSmall : std::runtime_error {
  explicit PaddingTooSmall(const std::string& what) : std::runtime_error(what) {}
};

// Training pairs with strictly increasing inputs.
struct Dataset {
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const { return x.size(); }
  double max_abs_x() const;

  // sorts by x, validates strict ordering and finiteness
  static Dataset from_points(std::vector<std::pair<double, double>> pts);
};

enum class DataFormat { Csv, Json };

Dataset load_dataset(const std::string& path, DataFormat format);
Dataset parse_dataset_csv(const std::string& text);
Dataset parse_dataset_json(const std::string& text);
void save_dataset_csv(const Dataset& ds, const std::string& path);

// The M+1 intervals between consecutive inputs, padded to [-L, L].
struct PredictionIntervals {
  double L = 0;
  std::vector<double> edges;  // -L, x_1, ..., x_M, L

  std::size_t count() const { return edges.size() - 1; }
  double lo(std::size_t j) const { return edges[j]; }
  double hi(std::size_t j) const { return edges[j + 1]; }
  double length(std::size_t j) const { return edges[j + 1] - edges[j]; }

  // interval index of x in [-L, L]; shared endpoints resolve to the left interval
  std::size_t locate(double x) const;
};

PredictionIntervals make_intervals(const Dataset& ds, double L);
double default_padding(const Dataset& ds);  // 1.5 * max|x_j| + 1

}  // namespace mfpl

#endif
