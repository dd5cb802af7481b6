#pragma once

#include <stdexcept>

#include "plqt/linops.hpp"

namespace plqt {

/// A pure state extended by the classical sign bit carried through
/// negative-strength jumps, plus the current time.
struct SignedState {
  ComplexVector psi;
  int sign = 1;  // exactly -1 or +1
  double t = 0.0;
};

inline void validate_state(const SignedState& st) {
  if (st.sign != 1 && st.sign != -1) {
    throw std::invalid_argument("SignedState: sign must be +1 or -1");
  }
  if (st.psi.size() == 0 || st.psi.norm() == 0.0) {
    throw std::invalid_argument("SignedState: state vector must be nonzero");
  }
}

}  // namespace plqt
