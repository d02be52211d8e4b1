#ifndef MFPL_FIGURES_HPP
#define MFPL_FIGURES_HPP

#include <optional>
#include <string>
#include <vector>

#include "mfpl/experiment.hpp"

namespace mfpl {

struct UnknownFigure : std::runtime_error {
  explicit UnknownFigure(const std::string& what) : std::runtime_error(what) {}
};

// Built-in training recipes echoing the paper's figures. The counterexample
// dataset is exact; the other training sets are fixed stand-ins of similar
// shape, so those outputs are qualitative reproductions.
std::vector<std::string> figure_ids();
ExperimentConfig figure_config(const std::string& id);
ExperimentReport reproduce(const std::string& id, const std::string& out_dir,
                           std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace mfpl

#endif
