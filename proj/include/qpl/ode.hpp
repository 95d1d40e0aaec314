#pragma once

// Thin wrappers over Boost.Odeint for the integrators used in the library:
// adaptive Dormand-Prince 5(4) with dense output, and classical fixed-step RK4.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "qpl/errors.hpp"

namespace qpl {

using State = std::vector<double>;
using Rhs = std::function<void(const State&, State&, double)>;

struct AdaptiveOptions {
  double rtol = 1e-12;
  double atol = 1e-12;
  double initial_step = 1e-3;
  long max_steps = 2'000'000;
};

inline void check_finite(const State& x, double t) {
  for (double v : x)
    if (!std::isfinite(v)) throw IntegrationError("non-finite state at t = " + std::to_string(t));
}

/// Integrates from `times.front()` and records the state at every entry of
/// `times` (monotone in either direction). `observe` receives (index, state).
inline void integrate_dense(const Rhs& rhs, State x, std::span<const double> times,
                            const std::function<void(std::size_t, const State&)>& observe,
                            const AdaptiveOptions& opt = {}) {
  namespace odeint = boost::numeric::odeint;
  if (times.empty()) return;
  observe(0, x);
  if (times.size() == 1) return;
  const double dir = times.back() >= times.front() ? 1.0 : -1.0;
  auto stepper = odeint::make_dense_output(opt.atol, opt.rtol, odeint::runge_kutta_dopri5<State>());
  stepper.initialize(x, times.front(), dir * opt.initial_step);
  State out(x.size());
  long steps = 0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    while (dir * (stepper.current_time() - times[i]) < 0.0) {
      stepper.do_step(rhs);
      check_finite(stepper.current_state(), stepper.current_time());
      if (++steps > opt.max_steps) throw IntegrationError("step limit exceeded");
      const double h = std::abs(stepper.current_time_step());
      if (h < 1e-14 * (1.0 + std::abs(stepper.current_time())))
        throw IntegrationError("step size underflow at t = " + std::to_string(stepper.current_time()));
    }
    stepper.calc_state(times[i], out);
    observe(i, out);
  }
}

/// Classical RK4 with `n` equal steps from t0 to t1; the result is a smooth
/// function of the initial state, which finite-difference callers rely on.
inline State integrate_rk4(const Rhs& rhs, State x, double t0, double t1, int n) {
  namespace odeint = boost::numeric::odeint;
  odeint::runge_kutta4<State> stepper;
  const double h = (t1 - t0) / n;
  for (int i = 0; i < n; ++i) stepper.do_step(rhs, x, t0 + i * h, h);
  check_finite(x, t1);
  return x;
}

}  // namespace qpl
