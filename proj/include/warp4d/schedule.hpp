#pragma once

#include <functional>
#include <string>

#include "warp4d/tensor.hpp"

namespace warp4d {

// Spatial noise-schedule endpoints. With the default values the schedule
// carries more data weight in low-confidence regions (sigma_low at c=0)
// than in high-confidence ones (sigma_high at c=1), exactly as the formula
// [sigma_low + c*(sigma_high - sigma_low)]*t prescribes.
struct NoiseScheduleConfig {
    double sigma_low = 1.0;
    double sigma_high = 0.85;

    void validate() const {
        if (!(sigma_low > 0.0 && sigma_low <= 1.0))
            throw DomainError("schedule: sigma_low must lie in (0, 1]");
        if (!(sigma_high > 0.0 && sigma_high <= 1.0))
            throw DomainError("schedule: sigma_high must lie in (0, 1]");
    }
};

enum class VelocityMode { Plain, ScheduleConsistent };

VelocityMode velocity_mode_from_string(const std::string& s);
std::string to_string(VelocityMode m);

// Per-site interpolation weight Sigma_t = [sigma_low + c*(sigma_high -
// sigma_low)] * t, shaped like c. Throws DomainError when t is outside
// [0,1].
Tensor sigma_map(const Tensor& c, double t, const NoiseScheduleConfig& cfg);

// Convex mixing (1 - Sigma)*x0 + Sigma*x1 per site; sigma holds one weight
// per site (x's shape minus the trailing channel dim) or matches x
// exactly. Throws DimensionError on mismatch.
Tensor flow_state(const Tensor& x0, const Tensor& x1, const Tensor& sigma_t);

// Plain mode: x1 - x0. ScheduleConsistent: the analytic time-derivative of
// flow_state under sigma_map, [sigma_low + c*(sigma_high - sigma_low)] *
// (x1 - x0).
Tensor velocity_target(const Tensor& x0, const Tensor& x1, const Tensor& c,
                       const NoiseScheduleConfig& cfg, VelocityMode mode);

// Bundle of one flow-matching supervision point.
struct FlowState {
    Tensor x_t;
    double t = 0.0;
    Tensor sigma_t;
    Tensor v_target;
};

FlowState make_flow_state(const Tensor& x0, const Tensor& x1, const Tensor& c, double t,
                          const NoiseScheduleConfig& cfg, VelocityMode mode);

// Explicit Euler transport of x0 along v_field from t=0 to t=1 in n_steps.
// In ScheduleConsistent mode the terminal state is de-mixed per site:
// x_clean = (x - (1 - Sigma_1)*x0) / Sigma_1, throwing
// DegenerateScheduleError when Sigma_1 vanishes at any site.
Tensor sample_ode(const std::function<Tensor(const Tensor& x, double t)>& v_field,
                  const Tensor& x0, const Tensor& c, const NoiseScheduleConfig& cfg,
                  int n_steps, VelocityMode mode);

}  // namespace warp4d
