#include "dgpo/rng.hpp"

#include <sstream>

namespace dgpo {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_ << ' ' << uniform_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_ >> normal_ >> uniform_;
}

}  // namespace dgpo
