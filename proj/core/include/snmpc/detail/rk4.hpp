#pragma once

namespace snmpc::detail {

/// Classical 4th-order Runge-Kutta with zero-order-hold inputs folded
/// into `rhs`. State needs operator+ and scalar multiplication.
template <class State, class Rhs>
State rk4(Rhs&& rhs, State x, double dt, int substeps) {
  const double h = dt / substeps;
  for (int s = 0; s < substeps; ++s) {
    const State k1 = rhs(x);
    const State k2 = rhs(x + (0.5 * h) * k1);
    const State k3 = rhs(x + (0.5 * h) * k2);
    const State k4 = rhs(x + h * k3);
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

}  // namespace snmpc::detail
