#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "warp4d/attention.hpp"
#include "warp4d/confidence.hpp"
#include "warp4d/nn.hpp"
#include "warp4d/schedule.hpp"
#include "warp4d/synthdata.hpp"
#include "warp4d/tensor.hpp"

namespace warp4d {

// ---------------------------------------------------------------------------
// Velocity network: tokens -> velocity. Token channels are the concatenation
// x_t (C) | x_warp prior (C) | confidence (1); a sinusoidal embedding of t is
// mapped linearly and added to every token. Two residual blocks of
// {layernorm -> two-path attention -> layernorm -> tanh feedforward} feed a
// final layernorm and a linear head back to C channels. All weights are kept
// at 32-bit precision (every stored value is exactly representable in f32);
// gradient arithmetic runs in doubles so finite-difference checks are sharp.
// ---------------------------------------------------------------------------

struct NetConfig {
    int channels = 2;     // C, channels of the state being transported
    int dim = 16;         // token width D
    int blocks = 2;
    double lambda = 4.0;  // guided-path key boost strength

    void validate() const;
};

inline constexpr int kTimeFeatures = 8;  // 4 frequencies x (sin, cos)

struct VelocityNet {
    NetConfig cfg;
    ParamLayout layout;
    std::vector<double> theta;

    static VelocityNet init(const NetConfig& cfg, uint64_t seed);

    int input_channels() const { return 2 * cfg.channels + 1; }
    const double* seg(const std::string& name) const { return theta.data() + layout.find(name).offset; }

    std::vector<NamedTensor> to_named() const;
    static VelocityNet from_named(const std::vector<NamedTensor>& named);
};

// Rounds every entry through 32-bit float precision (used after each
// optimizer step so checkpoints round-trip losslessly).
void quantize_f32(std::vector<double>& v);

struct BlockTrace {
    std::vector<double> ln1_out, ln1_mean, ln1_rstd;
    AttnCache attn;
    std::vector<double> h_attn;  // after attention residual
    std::vector<double> ln2_out, ln2_mean, ln2_rstd;
    std::vector<double> ffn_a1;  // after tanh
    std::vector<double> h_ffn;   // after feedforward residual
};

struct NetTrace {
    int s = 0;
    std::vector<double> x_in;   // (S, 2C+1)
    std::vector<double> tfeat;  // (kTimeFeatures)
    std::vector<double> h0;     // embedded tokens + time embedding
    std::vector<BlockTrace> blocks;
    std::vector<double> lnf_out, lnf_mean, lnf_rstd;
};

// x_t, x_warp: (S, C); c: (S); key_fg: S entries in {0,1}; alpha in [0,1].
// Returns the predicted velocity, shaped like x_t. Pass a trace to enable
// net_backward.
Tensor net_forward(const VelocityNet& net, const Tensor& x_t, const Tensor& x_warp,
                   const Tensor& c, double t, const std::vector<double>& key_fg,
                   double alpha, NetTrace* trace = nullptr);

// Accumulates d(loss)/d(theta) into dtheta (layout-sized) given
// d(loss)/d(output). Input gradients are not produced: every network input
// is a leaf of the training graph.
void net_backward(const VelocityNet& net, const NetTrace& trace, const Tensor& dout,
                  double alpha, std::vector<double>& dtheta);

// ---------------------------------------------------------------------------
// Batches. One element is a single flow-matching supervision point: latent
// tokens plus (for scene elements) the full-resolution images feeding the
// confidence estimator's auxiliary objective.
// ---------------------------------------------------------------------------

struct FlowElem {
    Tensor x0, x1, x_warp;   // (S, C)
    Tensor c;                // (S), conditioning; frozen at assembly time
    std::vector<double> fg;  // (S) binary interaction-token mask
    Tensor m_geo_lat;        // (S) latent occupancy in [0,1]
    double t = 0.0;
    Tensor sigma_t;          // (S)
    Tensor x_t, v_target;    // (S, C)

    int lat_h = 0, lat_w = 0;  // latent grid; 0x0 for the toy task (S=1)

    // Auxiliary-path inputs; empty for toy elements.
    Tensor z_warp_lat;   // (lat_h, lat_w, C) estimator input image
    Tensor m_geo_aux;    // (lat_h, lat_w) estimator input mask
    Tensor x_gt_img;     // (H, W, C) clean target frame
    Tensor x_warp_img;   // (H, W, C) warped prior frame
    Tensor m_geo_img;    // (H, W) occupancy of the warped frame

    bool has_aux() const { return x_gt_img.size() > 0; }
};

struct FlowBatch {
    std::vector<FlowElem> elems;
};

// Draws t ~ U[0,1] and x0 ~ N(0,I), then fills sigma_t, x_t, v_target from
// the element's (x0, x1, c). The stored x_t always equals
// flow_state(x0, x1, sigma_t) bit for bit, by construction.
void draw_flow_point(FlowElem& e, const NoiseScheduleConfig& sched, VelocityMode mode,
                     Rng& rng);

// Two-dimensional Gaussian-mixture toy target. Mode separation is chosen so
// the optimal velocity field's residual error sits well below the training
// targets used in the tests (the irreducible error of this task shrinks as
// the modes move apart relative to the unit noise).
struct ToySpec {
    std::vector<std::array<double, 2>> modes{{-6.0, 0.0}, {6.0, 0.0}};
    std::vector<double> weights{0.7, 0.3};
    double sigma = 0.35;

    void validate() const;
};

std::array<double, 2> sample_toy(const ToySpec& spec, Rng& rng);

// Single-token element: x1 from the mixture, x_warp = 0, c = 0, fg = {0}.
FlowElem make_toy_elem(const ToySpec& spec, const NoiseScheduleConfig& sched,
                       VelocityMode mode, Rng& rng);

// Latent tokenization of one scene frame pair: view A warped into view B as
// the prior, view B as the target, heuristic confidence as conditioning.
struct SceneTokenConfig {
    int latent_h = 12;
    int latent_w = 21;
    int blur_radius = 2;       // confidence blur at full resolution
    double fg_threshold = 0.1; // latent foreground coverage -> interaction token

    void validate() const;
};

FlowElem scene_frame_elem(const SceneSample& sample, int frame,
                          const SceneTokenConfig& tok);

// Renders n_samples small scenes (seeds derived from seed by index) and
// tokenizes every frame of each.
std::vector<FlowElem> build_scene_pool(const GenConfig& gen, const SceneTokenConfig& tok,
                                       int n_samples, uint64_t seed);

// ---------------------------------------------------------------------------
// Loss and training.
// ---------------------------------------------------------------------------

struct TrainConfig {
    int64_t steps = 5000;
    int batch_size = 8;
    double lr = 0.05;
    double momentum = 0.0;  // plain descent by default
    uint64_t seed = 1;
    int stage = 1;                 // stage 2 freezes the attention weights
    bool zero_confidence = false;  // ablation: condition and schedule on c = 0
    NetConfig net;
    NoiseScheduleConfig schedule;
    VelocityMode velocity_mode = VelocityMode::Plain;
    FusionSchedule fusion{0.5, 500};
    int est_hidden = 6;

    void validate() const;
};

// Batch provider invoked once per step with a step-derived generator.
using BatchSource = std::function<FlowBatch(const TrainConfig& cfg, int64_t step, Rng& rng)>;

BatchSource make_toy_source(ToySpec spec);
// Copies templates from the pool each step, zeroing c when the ablation
// flag is set, then draws the flow point.
BatchSource make_scene_source(std::vector<FlowElem> pool);

struct LossResult {
    double total = 0.0;
    double fm = 0.0;   // mean squared velocity error over every site/channel
    double aux = 0.0;  // estimator objective, averaged per site and element
    std::vector<double> dtheta;
    EstimatorParams dest;
};

// Joint objective. The network's conditioning c is the frozen per-element
// copy; the auxiliary term re-runs the estimator forward, so its gradient
// reaches every estimator parameter. Throws NumericFailureError naming the
// offending term if either term is non-finite.
LossResult loss(const VelocityNet& net, const EstimatorParams& est, const FlowBatch& batch,
                double alpha);

struct LossRow {
    int64_t step = 0;
    double fm = 0.0, aux = 0.0, alpha = 0.0;
};

struct TrainResult {
    VelocityNet net;
    EstimatorParams est;
    std::vector<LossRow> curve;
};

// Single-threaded descent loop: batch -> loss -> (momentum) update ->
// f32 quantization, with alpha following the fusion schedule. Aborts with
// NumericFailureError when the loss exceeds 1e6.
TrainResult train(const TrainConfig& cfg, const BatchSource& source);

void write_loss_csv(const std::string& path, const std::vector<LossRow>& curve);

// Checkpoint bundling the network and the estimator in the named-tensor
// container; f32 storage is lossless because parameters are f32-quantized.
void save_model(const std::string& path, const VelocityNet& net, const EstimatorParams& est);

struct ModelBundle {
    VelocityNet net;
    EstimatorParams est;
};

ModelBundle load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Sampling and evaluation.
// ---------------------------------------------------------------------------

// Integrates the learned field for one element from the given x0.
Tensor generate_element(const VelocityNet& net, const FlowElem& e, const Tensor& x0,
                        const NoiseScheduleConfig& sched, VelocityMode mode, double alpha,
                        int n_steps);

// Draws n toy points by running the ODE per sample; returns (n, 2).
Tensor sample_toy_points(const VelocityNet& net, const ToySpec& spec, int n, int ode_steps,
                         const NoiseScheduleConfig& sched, VelocityMode mode, uint64_t seed);

// Fraction of points with x < 0 and x >= 0 (mode-weight estimate for the
// default two-mode spec).
std::array<double, 2> toy_mode_weights(const Tensor& points);

struct EvalResult {
    double psnr = 0.0;
    double ssim = 0.0;
    double mse_holes = 0.0;    // sites with latent occupancy < 0.5
    double mse_covered = 0.0;  // sites with latent occupancy >= 0.5
    int64_t n_holes = 0, n_covered = 0;
    int n_elems = 0;
};

// Generates each element from a seed-matched x0 (stream "eval", substream =
// element index) and compares against x1 on the latent grid. Latent dims
// must be >= 11 for the SSIM window.
EvalResult evaluate(const VelocityNet& net, const std::vector<FlowElem>& elems,
                    const NoiseScheduleConfig& sched, VelocityMode mode, double alpha,
                    int n_steps, uint64_t seed);

// ---------------------------------------------------------------------------
// Finite-difference verification of every trainable parameter.
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_net = 0.0;
    double max_rel_est = 0.0;
    size_t n_net = 0, n_est = 0;
    double tol_net = 1e-3, tol_est = 1e-4;

    bool pass() const { return max_rel_net <= tol_net && max_rel_est <= tol_est; }
};

GradCheckReport grad_check(uint64_t seed);

}  // namespace warp4d
