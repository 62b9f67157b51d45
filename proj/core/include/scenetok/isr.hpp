#pragma once

#include <utility>
#include <vector>

#include "scenetok/autograd.hpp"
#include "scenetok/param_store.hpp"
#include "scenetok/tensor.hpp"

// Encodes where instances sit relative to each other: pairwise
// distance/angle features, coordinate position embeddings, a
// spatial-conditioned attention map over instance pairs, and a scene
// projector that pools the relation features into scene-level tokens.

namespace scenetok {

enum class SpatialMode { full, distance_only, orientation_only };
enum class AggregateOver { self, others };

struct IsrConfig {
    std::size_t d = 48;
    std::size_t heads = 4;   // scene encoder attention heads
    std::size_t layers = 2;  // scene encoder depth
    std::size_t ff_mult = 4;
    std::size_t n_scene_tokens = 1;
    SpatialMode mode = SpatialMode::full;
    AggregateOver aggregate_over = AggregateOver::self;
    double pe_base = 10000.0;

    void validate() const;
};

/// Pairwise geometry over instance centroids. Diagonal entries are zero by
/// convention; off-diagonal coincident pairs (distance < 1e-9) get zero
/// angles and are flagged rather than aborting.
struct PairGeometry {
    Tensor dist;     // [N,N] meters
    Tensor theta_h;  // [N,N] radians, atan2(dy, dx)
    Tensor theta_v;  // [N,N] radians, asin(dz / dist)
    std::vector<std::pair<int, int>> coincident;
};

PairGeometry pair_geometry(const Tensor& centroids /* [N,3] */);

/// [N,N,5] channels [sin th_h, cos th_h, sin th_v, cos th_v, dist].
/// distance_only zeroes channels 0-3; orientation_only zeroes channel 4.
Tensor spatial_features(const PairGeometry& g, SpatialMode mode);

/// Sinusoidal encoding of the 3 coordinates, D/3 channels per axis,
/// sin/cos pairs at frequencies base^(-2m/(D/3)). Requires D % 6 == 0.
Tensor position_embed(const Tensor& centroids, std::size_t d, double base = 10000.0);

/// l_i = W_P^T (P_i + O_i); W_P is [D,5], no bias. Returns [N,5].
Var spatial_conditioned_weights(const Tensor& pe, const Var& o_i, const Var& w_p);

/// omega_ij = sum_c l_i[c] * s_ij[c] * l_j[c]; raw bilinear scores, no
/// normalization. Returns [N,N].
Var attention_map(const Var& l, const Tensor& s);

/// self:   F_i = (sum_j omega_ij) * O_i   (per the printed equation)
/// others: F_i = sum_j omega_ij * O_j     (conventional attention read)
Var relation_aggregate(const Var& omega, const Var& o_i, AggregateOver over);

void init_isr_params(ParamStore& ps, const IsrConfig& cfg);

/// Pre-LayerNorm transformer encoder over the N relation features (no
/// sequence positional encoding), max-pool over instances, then one
/// independent two-layer MLP per scene token. Returns [n_scene_tokens, D].
Var scene_project(ParamStore& ps, const IsrConfig& cfg, const Var& f /* [N,D] */);

struct IsrOutput {
    Var instance_tokens;  // [N, D], passthrough of the input
    Var scene_tokens;     // [n_scene_tokens, D]
    PairGeometry geometry;
    Tensor spatial;  // [N,N,5]
    Var omega;       // [N,N]
};

/// Centroids enter as constants: gradients flow through the instance tokens
/// and parameters only, not into the geometry.
IsrOutput isr_forward(ParamStore& ps, const IsrConfig& cfg, const Var& o_i, const Tensor& centroids);

}  // namespace scenetok
