#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "warp4d/errors.hpp"
#include "warp4d/rng.hpp"

namespace warp4d {

// Registry of named parameter segments living inside one flat vector<double>.
// Keeping every trainable value in a single contiguous buffer makes SGD,
// finite-difference checking, and checkpointing trivial: they all walk one
// array, and a segment name maps to an (offset, count) window into it.
struct ParamLayout {
    struct Segment {
        std::string name;
        std::vector<int> shape;
        size_t offset = 0;
        size_t count = 0;
    };

    std::vector<Segment> segments;
    size_t total = 0;

    // Registers a segment and returns its offset. Throws DomainError on a
    // duplicate name or non-positive dimension.
    size_t add(const std::string& name, const std::vector<int>& shape);
    bool has(const std::string& name) const;
    const Segment& find(const std::string& name) const;  // DomainError if absent
};

// ---------------------------------------------------------------------------
// Raw-buffer primitives. Forward functions OVERWRITE their outputs; backward
// functions ACCUMULATE (+=) into every gradient buffer, so callers zero the
// gradient vector once per pass and residual joins compose naturally.
// ---------------------------------------------------------------------------

// y[s,o] = sum_i x[s,i] * w[o,i] (+ b[o]).  w is (cout, cin) row-major;
// pass b == nullptr for a bias-free map.
void linear_fwd(const double* x, int s, int cin, const double* w, const double* b,
                int cout, double* y);
// Accumulates dx (s,cin), dw (cout,cin), db (cout).  Any of the three output
// pointers may be null to skip that gradient.
void linear_bwd(const double* x, int s, int cin, const double* w, int cout,
                const double* dy, double* dx, double* dw, double* db);

void tanh_fwd(const double* x, size_t n, double* y);
// dx += dy * (1 - y^2), using the forward output y.
void tanh_bwd(const double* y, const double* dy, size_t n, double* dx);

// Row-wise layer norm over c channels with learned gain/shift.
// mean and rstd (length s) are cached for the backward pass.
void layernorm_fwd(const double* x, int s, int c, const double* gamma,
                   const double* beta, double* y, double* mean, double* rstd);
void layernorm_bwd(const double* x, int s, int c, const double* gamma,
                   const double* mean, const double* rstd, const double* dy,
                   double* dx, double* dgamma, double* dbeta);

// Numerically stabilized softmax of each length-c row.
void softmax_rows(const double* logits, int r, int c, double* probs);

// Self-attention over s tokens of width d that mixes two read-out paths:
// an unbiased softmax(QK^T/sqrt(d))V and a copy whose logits carry a fixed
// additive column bias lambda*key_fg[j] steering mass toward flagged keys.
// The two contexts are blended with weight alpha before the output map.
// Both softmax matrices are cached because the backward pass needs each
// path's own probabilities to route its share of the gradient.
struct AttnCache {
    int s = 0, d = 0;
    std::vector<double> q, k, v;      // (s,d) post-projection
    std::vector<double> attn_global;  // (s,s) softmax rows, unbiased path
    std::vector<double> attn_guided;  // (s,s) softmax rows, biased path
    std::vector<double> ctx;          // (s,d) fused context, input to wo
};

// wq, wk, wv, wo are bias-free (d,d) maps.  key_fg holds s entries in {0,1};
// alpha in [0,1] weights the biased path.  y (s,d) is overwritten.
void twopath_attn_fwd(const double* x, int s, int d, const double* wq,
                      const double* wk, const double* wv, const double* wo,
                      const double* key_fg, double lambda, double alpha,
                      double* y, AttnCache& cache);
// Accumulates dx and the four weight gradients.  lambda and key_fg do not
// appear: the logit bias is constant, so it vanishes from every derivative.
void twopath_attn_bwd(const double* x, const AttnCache& cache, const double* wq,
                      const double* wk, const double* wv, const double* wo,
                      double alpha, const double* dy, double* dx, double* dwq,
                      double* dwk, double* dwv, double* dwo);

// Fills w with N(0,1) * scale draws from rng.
void init_gaussian(Rng& rng, double* w, size_t n, double scale);

}  // namespace warp4d
