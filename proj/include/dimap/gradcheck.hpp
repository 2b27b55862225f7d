#pragma once

#include <cstdint>
#include <string>

#include "dimap/network.hpp"

namespace dimap {

struct GradCheckResult {
  bool pass = false;
  double max_rel_error = 0.0;
  size_t components = 0;  // total parameter count
  size_t checked = 0;     // components compared against finite differences
  size_t skipped = 0;     // components whose +-step probes crossed a kink
  std::string spec;
};

/// Compare every analytic parameter gradient against central finite
/// differences on float64. Probe parameters and inputs are drawn from
/// `seed`. A component is compared only when the activation pattern
/// (rectifier signs and pool argmaxes) is identical at the center and both
/// perturbed points; inside one pattern the output is affine in any single
/// parameter, so the difference quotient is exact, while across a kink it
/// measures nothing. Components probing exactly at a kink are skipped and
/// counted; the check fails if fewer than half the components were
/// comparable. `corrupt_component`, if >= 0, perturbs one analytic gradient
/// entry first (negative-control hook for the tests).
GradCheckResult finite_difference_check(const NetworkSpec& spec, uint64_t seed,
                                        double step = 1e-3, double tol = 1e-4,
                                        int batch = 3, long corrupt_component = -1);

/// A randomized small spec (conv depth, pooling mode, aux width, dueling
/// flag all vary) for property-style gradient testing.
NetworkSpec random_network_spec(uint64_t seed);

}  // namespace dimap
