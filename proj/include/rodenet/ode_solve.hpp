#pragma once

#include <stdexcept>
#include <string>

namespace rodenet {

enum class SolverMethod { kEuler, kRk2, kRk4 };

struct SolverConfig {
    SolverMethod method = SolverMethod::kEuler;
    double t0 = 0.0;
    double t1 = 1.0;
    int steps = 1;  // h = (t1 - t0) / steps; t1 < t0 integrates backward
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fixed-step initial value problem solver over any state type providing
/// axpy_in_place(State&, double, const State&) and all_finite(const State&).
/// f(state, t) returns the derivative. Euler evaluates at the left endpoint
/// of each step; RK2 is the midpoint rule, RK4 the classical scheme.
template <typename State, typename F>
State ode_solve(State z, const SolverConfig& cfg, F&& f) {
    if (cfg.steps < 1) throw std::invalid_argument("ode_solve: steps must be >= 1");
    const double h = (cfg.t1 - cfg.t0) / cfg.steps;
    for (int i = 0; i < cfg.steps; ++i) {
        const double t = cfg.t0 + i * h;
        switch (cfg.method) {
            case SolverMethod::kEuler: {
                axpy_in_place(z, h, f(z, t));
                break;
            }
            case SolverMethod::kRk2: {
                State k1 = f(z, t);
                State y = z;
                axpy_in_place(y, h / 2, k1);
                axpy_in_place(z, h, f(y, t + h / 2));
                break;
            }
            case SolverMethod::kRk4: {
                State k1 = f(z, t);
                State y2 = z;
                axpy_in_place(y2, h / 2, k1);
                State k2 = f(y2, t + h / 2);
                State y3 = z;
                axpy_in_place(y3, h / 2, k2);
                State k3 = f(y3, t + h / 2);
                State y4 = z;
                axpy_in_place(y4, h, k3);
                State k4 = f(y4, t + h);
                axpy_in_place(z, h / 6, k1);
                axpy_in_place(z, h / 3, k2);
                axpy_in_place(z, h / 3, k3);
                axpy_in_place(z, h / 6, k4);
                break;
            }
        }
        if (!all_finite(z)) {
            throw NumericError("ode_solve: non-finite state at step " + std::to_string(i));
        }
    }
    return z;
}

}  // namespace rodenet
