#pragma once

#include <cstdint>
#include <vector>

#include "warp4d/tensor.hpp"

namespace warp4d {

struct AttentionInputs {
    Tensor Q;  // (Lq, d)
    Tensor K;  // (Lk, d)
    Tensor V;  // (Lk, dv)
};

// Column-constant additive logit bias b[i][j] = lambda * key_fg[j], stored
// compactly as the scalar and the key-token membership vector.
struct BoostBias {
    double lambda = 0.0;
    std::vector<double> key_fg;  // Lk entries in {0, 1}

    double at(int /*i*/, int j) const { return lambda * key_fg[static_cast<size_t>(j)]; }
    Tensor dense(int lq) const;
};

struct FusionSchedule {
    double alpha_max = 0.0;
    int ramp_steps = 1;

    void validate() const {
        if (!(alpha_max >= 0.0 && alpha_max <= 1.0))
            throw DomainError("fusion: alpha_max must lie in [0, 1]");
        if (ramp_steps < 1) throw DomainError("fusion: ramp_steps must be >= 1");
    }
};

// softmax(Q K^T / sqrt(d)) V with row-stabilized softmax.
Tensor global_attention(const AttentionInputs& inp);

// Builds the boost bias; lambda must be non-negative and the mask binary.
BoostBias boost_bias(const std::vector<double>& key_fg, double lambda);

// softmax(Q K^T / sqrt(d) + B) V.
Tensor guided_attention(const AttentionInputs& inp, const BoostBias& bias);

// (1 - alpha) * o_global + alpha * o_guided; alpha must lie in [0, 1].
Tensor fuse(const Tensor& o_global, const Tensor& o_guided, double alpha);

// Linear curriculum ramp: min(step / ramp_steps, 1) * alpha_max.
double alpha_schedule(int64_t step, const FusionSchedule& sched);

}  // namespace warp4d
