#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scenetok/autograd.hpp"
#include "scenetok/param_store.hpp"
#include "scenetok/projection.hpp"

// Folds per-view 2D evidence into the 3D instance features: project both
// branches to a common width, summarize each camera view with a learnable
// CLS token, inject the view summaries into the instance features by
// cross-attention, and keep a residual path so the 3D branch survives
// unobserved instances.

namespace scenetok {

enum class Aggregation { cls_token, max_pool };

struct McmfConfig {
    std::size_t d = 48;    // common embedding width
    std::size_t d3d = 96;  // 3D encoder width
    std::size_t d2d = 80;  // 2D encoder width
    std::size_t k_views = 5;
    std::size_t heads = 4;
    Aggregation aggregation = Aggregation::cls_token;

    void validate() const;
};

/// Which physical frame fills each (view slot, instance) cell; -1 = padding.
/// View tokens are aggregated per physical frame over the instances that
/// selected it, then routed back to each instance's K slots.
struct ViewGrouping {
    std::vector<std::vector<int>> slot_frame;  // [K][N]

    static ViewGrouping from_selections(const std::vector<ViewSelection>& selections, std::size_t k);
    static ViewGrouping from_lift(const LiftedFeatures& lifted);

    std::size_t k() const { return slot_frame.size(); }
    std::size_t n() const { return slot_frame.empty() ? 0 : slot_frame[0].size(); }
    bool valid(std::size_t slot, std::size_t i) const { return slot_frame[slot][i] >= 0; }
    std::size_t valid_views_of(std::size_t i) const;
    Tensor validity() const;  // [K, N] of 0/1
};

void init_mcmf_params(ParamStore& ps, const McmfConfig& cfg);

/// Both branches through their own two-layer MLPs (LayerNorm + GELU between).
/// o3d: [1, N, D3d] -> [1, N, D]; o2d: [K, N, D2d] -> [K, N, D].
std::pair<Var, Var> project_features(ParamStore& ps, const McmfConfig& cfg, const Var& o3d,
                                     const Var& o2d);

/// One view summary from the tokens of the instances seen in that view.
/// cls_token: self-attention over [cls, tokens...], updated cls returned.
/// max_pool: elementwise max over the tokens (ablation variant).
Var aggregate_view(ParamStore& ps, const McmfConfig& cfg, const Var& view_tokens /* [M, D] */);

/// Per-frame aggregation routed back to slots: output[(k, i)] is the summary
/// of instance i's k-th selected frame; padding slots are zero.
Var build_multiview_keys(ParamStore& ps, const McmfConfig& cfg, const Var& o2d_proj /* [K,N,D] */,
                         const ViewGrouping& grouping);

/// Each instance cross-attends over its own K view summaries (invalid slots
/// masked out). Instances with zero valid views are skipped and emit exact
/// zeros so the residual passes the 3D branch through unchanged.
Var cross_modal_inject(ParamStore& ps, const McmfConfig& cfg, const Var& queries /* [1,N,D] */,
                       const Var& view_keys /* [K,N,D] */, const ViewGrouping& grouping);

struct McmfTrace {
    Var o3d_projected;   // [1, N, D]
    Var o2d_projected;   // [K, N, D]
    Var o3d_attended;    // [1, N, D], after instance self-attention + residual
    Var view_tokens;     // [K, N, D]
    Var fused;           // [1, N, D], cross-attention output
};

struct McmfOutput {
    Var instance_tokens;  // [N, D]
    std::optional<McmfTrace> trace;
};

McmfOutput mcmf_forward(ParamStore& ps, const McmfConfig& cfg, const Var& o3d, const Var& o2d,
                        const ViewGrouping& grouping, bool keep_trace = false);

}  // namespace scenetok
