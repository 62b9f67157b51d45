#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "scenetok/scene.hpp"
#include "scenetok/tensor.hpp"

// Naive cross-check implementations, written as plain scalar loops with no
// shared code paths into the production modules. Tests and the verify CLI
// compare module outputs against these; they trade speed for obviousness.

namespace scenetok::ref {

/// Pinhole projection done longhand: world -> camera via the 4x4 pose, then
/// u = fx*x/z + cx, v = fy*y/z + cy. Empty when z <= z_near.
std::optional<std::array<double, 3>> project_point(double fx, double fy, double cx, double cy,
                                                   const std::array<double, 16>& pose, const Vec3& p,
                                                   double z_near);

/// Brute-force visible-point count for one instance in one frame.
std::size_t count_visible(const CameraFrame& frame, const Scene& scene, int instance_id,
                          double delta_occ);

/// Top-k by repeated scan for the max (count desc, id asc). Zero-count
/// frames never selected.
std::vector<int> top_k_frames(const std::vector<std::pair<int, std::size_t>>& count_by_frame,
                              std::size_t k);

/// Multi-head attention forward as explicit loops over batches, heads, and
/// positions. q [B,Lq,D], k/v [B,Lk,D], weights [D,D], biases [D].
/// key_valid, when given, is [B,Lk]; invalid keys get a -1e9 logit.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& wq,
                 const Tensor& bq, const Tensor& wk, const Tensor& bk, const Tensor& wv,
                 const Tensor& bv, const Tensor& wo, const Tensor& bo, std::size_t heads,
                 const Tensor* key_valid = nullptr);

struct PairStats {
    std::vector<double> dist;     // N*N row-major
    std::vector<double> theta_h;  // radians
    std::vector<double> theta_v;  // radians
};

/// Distance and angles per ordered pair, diagonal zero, coincident pairs
/// (dist < 1e-9) get zero angles.
PairStats pair_stats(const Tensor& centroids /* [N,3] */);

/// omega[i][j] = sum_c l[i][c] * s[i][j][c] * l[j][c] as a triple loop.
Tensor bilinear_scores(const Tensor& l /* [N,5] */, const Tensor& s /* [N,N,5] */);

/// self:   out[i] = (sum_j omega[i][j]) * tokens[i]
/// others: out[i] = sum_j omega[i][j] * tokens[j]
Tensor relation_aggregate(const Tensor& omega, const Tensor& tokens, bool over_others);

/// Row-wise softmax with max subtraction, as loops.
Tensor softmax_rows(const Tensor& x /* [R,C] */);

/// LayerNorm over the last axis of a 2D tensor, population variance, loops.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

double gelu_scalar(double x);  // tanh approximation

}  // namespace scenetok::ref
