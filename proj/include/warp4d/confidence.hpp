#pragma once

#include <cstdint>
#include <vector>

#include "warp4d/serialize.hpp"
#include "warp4d/tensor.hpp"

namespace warp4d {

// Confidence maps are plain (H',W') tensors with entries in [0,1] on the
// latent grid used by the noise schedule.

// Deterministic baseline: box-blur of the occupancy mask followed by exact
// area resampling to the latent grid. radius = 0 gives the area-resampled
// mask itself.
Tensor heuristic_confidence(const Tensor& m_geo, int blur_radius, int out_h, int out_w);

// Number of channels produced by encode_features.
inline constexpr int kFeatureChannels = 8;

// Fixed, bias-free linear feature encoder: a 3-level average-pool pyramid
// (each level pooled and area-resampled back to the input grid, scaled by
// 1/sqrt(3)) followed by a seeded random channel projection. Each pyramid
// level is a doubly stochastic linear map (spectral norm <= 1), so the
// whole encoder is Lipschitz with constant at most the projection's
// operator norm.
Tensor encode_features(const Tensor& x);

// The (3*in_ch) x kFeatureChannels projection matrix used by
// encode_features for a given input channel count (row-major, cached).
// Exposed so tests can bound its operator norm independently.
const std::vector<double>& feature_projection(int in_ch);

// Two-layer 3x3 conv stack mapping (features ⊕ mask) channels to a single
// sigmoid confidence channel, plus the softplus-reparameterized loss
// coefficients. All values are doubles in memory; checkpoints store them
// as 32-bit floats.
struct EstimatorParams {
    int in_ch = 0;
    int hidden = 0;
    std::vector<double> w1, b1;  // (hidden, in_ch, 3, 3), (hidden)
    std::vector<double> w2, b2;  // (1, hidden, 3, 3), (1)
    double lambda1_raw = 0.0;
    double lambda2_raw = 0.0;

    static EstimatorParams init(int in_ch, int hidden, uint64_t seed);
    // Zero-valued clone of the same architecture, for gradient accumulation.
    EstimatorParams zeros_like() const;

    size_t parameter_count() const;
    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);

    std::vector<NamedTensor> to_named() const;
    static EstimatorParams from_named(const std::vector<NamedTensor>& named);
};

struct EstimatorTrace {
    Tensor input;  // (H', W', in_ch)
    Tensor act1;   // (H', W', hidden), after tanh
    Tensor c;      // (H', W')
};

// Forward pass: concat(z_warp, m_geo) -> conv 3x3 -> tanh -> conv 3x3 ->
// sigmoid. Output entries lie strictly in (0,1). Throws DimensionError on
// shape mismatches.
Tensor estimate_confidence(const Tensor& z_warp, const Tensor& m_geo,
                           const EstimatorParams& p, EstimatorTrace* trace = nullptr);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(c).
void estimate_confidence_backward(const EstimatorParams& p, const EstimatorTrace& trace,
                                  const Tensor& dc, EstimatorParams& grads);

struct AuxLossResult {
    double loss = 0.0;
    double term_mask = 0.0;     // ||c - resize(m_geo)||^2
    double term_feature = 0.0;  // ||c - |E(x_gt)-E(x_warp)| target||^2
    Tensor dloss_dc;
    double dloss_dlambda1_raw = 0.0;
    double dloss_dlambda2_raw = 0.0;
};

// softplus(l1)*||c - bilinear(m_geo)||^2 + softplus(l2)*||c - t_feat||^2,
// summed over sites, where t_feat is the channel-mean absolute encoder
// difference area-pooled to c's grid. Returns the loss with its gradients
// with respect to c and the raw lambda parameters.
AuxLossResult aux_loss(const Tensor& c, const Tensor& m_geo, const Tensor& x_gt,
                       const Tensor& x_warp, const EstimatorParams& p);

double softplus(double x);

}  // namespace warp4d
