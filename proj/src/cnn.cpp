#include "ecnr/cnn.hpp"

namespace ecnr {

void CnnConfig::validate() const {
  if (layers < 1) throw ConfigError("CNN needs at least one layer");
  if (channels < 1) throw ConfigError("CNN channel count must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("CNN kernel size must be odd and positive");
}

}  // namespace ecnr
