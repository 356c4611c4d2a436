#include "warp4d/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace warp4d {

namespace {

void check_inputs(const AttentionInputs& inp, const char* what) {
    if (inp.Q.ndim() != 2 || inp.K.ndim() != 2 || inp.V.ndim() != 2)
        throw DimensionError(std::string(what) + ": Q, K, V must be rank-2");
    if (inp.Q.dim(1) != inp.K.dim(1))
        throw DimensionError(std::string(what) + ": Q and K disagree on head dim");
    if (inp.K.dim(0) != inp.V.dim(0))
        throw DimensionError(std::string(what) + ": K and V disagree on token count");
    if (inp.Q.dim(0) < 1 || inp.K.dim(0) < 1 || inp.Q.dim(1) < 1 || inp.V.dim(1) < 1)
        throw DimensionError(std::string(what) + ": all dims must be positive");
}

// softmax(QK^T/sqrt(d) + lambda*fg_j) V; bias omitted when fg == nullptr.
Tensor biased_attention(const AttentionInputs& inp, const std::vector<double>* fg,
                        double lambda, const char* what) {
    check_inputs(inp, what);
    const int lq = inp.Q.dim(0), lk = inp.K.dim(0), d = inp.Q.dim(1), dv = inp.V.dim(1);
    if (fg != nullptr && static_cast<int>(fg->size()) != lk)
        throw DimensionError(std::string(what) + ": bias mask length must equal Lk");
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor out({lq, dv});
    std::vector<double> logits(static_cast<size_t>(lk));
    for (int i = 0; i < lq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < lk; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += inp.Q.at(i, k) * inp.K.at(j, k);
            s *= scale;
            if (fg != nullptr) s += lambda * (*fg)[static_cast<size_t>(j)];
            logits[static_cast<size_t>(j)] = s;
            mx = std::max(mx, s);
        }
        double sum = 0.0;
        for (int j = 0; j < lk; ++j) {
            logits[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - mx);
            sum += logits[static_cast<size_t>(j)];
        }
        for (int v = 0; v < dv; ++v) {
            double acc = 0.0;
            for (int j = 0; j < lk; ++j) acc += logits[static_cast<size_t>(j)] * inp.V.at(j, v);
            out.at(i, v) = acc / sum;
        }
    }
    return out;
}

}  // namespace

Tensor BoostBias::dense(int lq) const {
    Tensor b({lq, static_cast<int>(key_fg.size())});
    for (int i = 0; i < lq; ++i)
        for (size_t j = 0; j < key_fg.size(); ++j)
            b.at(i, static_cast<int>(j)) = lambda * key_fg[j];
    return b;
}

Tensor global_attention(const AttentionInputs& inp) {
    return biased_attention(inp, nullptr, 0.0, "global_attention");
}

BoostBias boost_bias(const std::vector<double>& key_fg, double lambda) {
    if (lambda < 0.0) throw DomainError("boost_bias: lambda must be non-negative");
    for (double v : key_fg)
        if (v != 0.0 && v != 1.0)
            throw DomainError("boost_bias: mask entries must be 0 or 1");
    return {lambda, key_fg};
}

Tensor guided_attention(const AttentionInputs& inp, const BoostBias& bias) {
    return biased_attention(inp, &bias.key_fg, bias.lambda, "guided_attention");
}

Tensor fuse(const Tensor& o_global, const Tensor& o_guided, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("fuse: alpha must lie in [0, 1]");
    require_same_shape(o_global, o_guided, "fuse");
    Tensor out = o_global;
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - alpha) * o_global[i] + alpha * o_guided[i];
    return out;
}

double alpha_schedule(int64_t step, const FusionSchedule& sched) {
    sched.validate();
    if (step < 0) throw DomainError("alpha_schedule: step must be >= 0");
    const double frac = std::min(static_cast<double>(step) / sched.ramp_steps, 1.0);
    return frac * sched.alpha_max;
}

}  // namespace warp4d
