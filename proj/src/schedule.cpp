#include "warp4d/schedule.hpp"

namespace warp4d {

VelocityMode velocity_mode_from_string(const std::string& s) {
    if (s == "plain") return VelocityMode::Plain;
    if (s == "schedule_consistent") return VelocityMode::ScheduleConsistent;
    throw DomainError("velocity_mode must be \"plain\" or \"schedule_consistent\", got \"" + s +
                      "\"");
}

std::string to_string(VelocityMode m) {
    return m == VelocityMode::Plain ? "plain" : "schedule_consistent";
}

namespace {

// sigma either matches x exactly (per-entry weights) or covers x's leading
// site dims (one weight per site, broadcast over the channel dim). Returns
// the number of channels each sigma entry covers.
size_t site_span(const Tensor& x, const Tensor& sigma, const char* what) {
    if (sigma.same_shape(x)) return 1;
    if (sigma.ndim() == x.ndim() - 1) {
        bool ok = true;
        for (int i = 0; i < sigma.ndim(); ++i) ok = ok && sigma.dim(i) == x.dim(i);
        if (ok) return static_cast<size_t>(x.dim(x.ndim() - 1));
    }
    throw DimensionError(std::string(what) +
                         ": per-site tensor must match x's shape or its leading dims");
}

}  // namespace

Tensor sigma_map(const Tensor& c, double t, const NoiseScheduleConfig& cfg) {
    cfg.validate();
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("sigma_map: t must lie in [0, 1]");
    Tensor out = c;
    const double span = cfg.sigma_high - cfg.sigma_low;
    for (size_t i = 0; i < out.size(); ++i) out[i] = (cfg.sigma_low + c[i] * span) * t;
    return out;
}

Tensor flow_state(const Tensor& x0, const Tensor& x1, const Tensor& sigma_t) {
    require_same_shape(x0, x1, "flow_state");
    const size_t span = site_span(x0, sigma_t, "flow_state");
    Tensor out = x0;
    for (size_t i = 0; i < x0.size(); ++i) {
        const double s = sigma_t[i / span];
        out[i] = (1.0 - s) * x0[i] + s * x1[i];
    }
    return out;
}

Tensor velocity_target(const Tensor& x0, const Tensor& x1, const Tensor& c,
                       const NoiseScheduleConfig& cfg, VelocityMode mode) {
    require_same_shape(x0, x1, "velocity_target");
    Tensor out = x0;
    if (mode == VelocityMode::Plain) {
        for (size_t i = 0; i < x0.size(); ++i) out[i] = x1[i] - x0[i];
        return out;
    }
    cfg.validate();
    const size_t span = site_span(x0, c, "velocity_target");
    const double range = cfg.sigma_high - cfg.sigma_low;
    for (size_t i = 0; i < x0.size(); ++i) {
        const double coeff = cfg.sigma_low + c[i / span] * range;
        out[i] = coeff * (x1[i] - x0[i]);
    }
    return out;
}

FlowState make_flow_state(const Tensor& x0, const Tensor& x1, const Tensor& c, double t,
                          const NoiseScheduleConfig& cfg, VelocityMode mode) {
    FlowState fs;
    fs.t = t;
    fs.sigma_t = sigma_map(c, t, cfg);
    fs.x_t = flow_state(x0, x1, fs.sigma_t);
    fs.v_target = velocity_target(x0, x1, c, cfg, mode);
    return fs;
}

Tensor sample_ode(const std::function<Tensor(const Tensor& x, double t)>& v_field,
                  const Tensor& x0, const Tensor& c, const NoiseScheduleConfig& cfg,
                  int n_steps, VelocityMode mode) {
    if (n_steps < 1) throw DomainError("sample_ode: n_steps must be >= 1");
    cfg.validate();
    const double dt = 1.0 / n_steps;
    Tensor x = x0;
    for (int k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const Tensor v = v_field(x, t);
        require_same_shape(v, x, "sample_ode velocity");
        for (size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
    }
    if (mode == VelocityMode::Plain) return x;

    const size_t span = site_span(x0, c, "sample_ode");
    const double range = cfg.sigma_high - cfg.sigma_low;
    for (size_t i = 0; i < x.size(); ++i) {
        const double sigma1 = cfg.sigma_low + c[i / span] * range;
        if (sigma1 == 0.0)
            throw DegenerateScheduleError("sample_ode: Sigma_1 vanishes, cannot de-mix");
        x[i] = (x[i] - (1.0 - sigma1) * x0[i]) / sigma1;
    }
    return x;
}

}  // namespace warp4d
