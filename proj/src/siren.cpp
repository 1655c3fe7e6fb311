#include "ecnr/siren.hpp"

namespace ecnr {

void TrainSchedule::validate() const {
  if (epochs < 0) throw ConfigError("epoch count must be non-negative");
  if (lr < 0) throw ConfigError("learning rate must be non-negative");
  if (prune_epochs.size() != prune_sparsity.size())
    throw ConfigError("prune epoch and sparsity lists must have equal length");
  for (std::size_t i = 0; i < prune_sparsity.size(); ++i) {
    if (prune_sparsity[i] < 0.0 || prune_sparsity[i] >= 1.0) throw ConfigError("prune sparsity must lie in [0, 1)");
    if (i > 0 && prune_sparsity[i] <= prune_sparsity[i - 1])
      throw ConfigError("prune sparsity targets must be strictly increasing");
    if (i > 0 && prune_epochs[i] <= prune_epochs[i - 1]) throw ConfigError("prune epochs must be strictly increasing");
    if (prune_epochs[i] < 0) throw ConfigError("prune epochs must be non-negative");
  }
}

}  // namespace ecnr
