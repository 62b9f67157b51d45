#include "scenetok/mcmf.hpp"

#include <algorithm>
#include <map>

namespace scenetok {

void McmfConfig::validate() const {
    if (heads == 0 || d % heads != 0) {
        throw TensorError("McmfConfig: D must be divisible by heads");
    }
    if (k_views == 0) throw TensorError("McmfConfig: K must be >= 1");
    if (d == 0 || d3d == 0 || d2d == 0) throw TensorError("McmfConfig: widths must be positive");
}

ViewGrouping ViewGrouping::from_selections(const std::vector<ViewSelection>& selections, std::size_t k) {
    ViewGrouping g;
    const std::size_t n = selections.size();
    g.slot_frame.assign(k, std::vector<int>(n, -1));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t slot = 0; slot < selections[i].frame_ids.size() && slot < k; ++slot) {
            g.slot_frame[slot][i] = selections[i].frame_ids[slot];
        }
    }
    return g;
}

ViewGrouping ViewGrouping::from_lift(const LiftedFeatures& lifted) {
    ViewGrouping g;
    g.slot_frame = lifted.slot_frame;
    return g;
}

std::size_t ViewGrouping::valid_views_of(std::size_t i) const {
    std::size_t c = 0;
    for (const auto& row : slot_frame) c += (row[i] >= 0);
    return c;
}

Tensor ViewGrouping::validity() const {
    Tensor t({k(), n()});
    for (std::size_t s = 0; s < k(); ++s) {
        for (std::size_t i = 0; i < n(); ++i) t.at(s, i) = valid(s, i) ? 1.0 : 0.0;
    }
    return t;
}

void init_mcmf_params(ParamStore& ps, const McmfConfig& cfg) {
    cfg.validate();
    add_mlp_params(ps, "mcmf.proj3d", cfg.d3d, cfg.d, cfg.d);
    add_mlp_params(ps, "mcmf.proj2d", cfg.d2d, cfg.d, cfg.d);
    ps.add("mcmf.cls", {cfg.d}, InitScheme::normal_002);
    add_attention_params(ps, "mcmf.view_attn", cfg.d);
    add_attention_params(ps, "mcmf.inst_attn", cfg.d);
    add_attention_params(ps, "mcmf.cross_attn", cfg.d);
}

std::pair<Var, Var> project_features(ParamStore& ps, const McmfConfig& cfg, const Var& o3d,
                                     const Var& o2d) {
    const Shape& s3 = o3d.shape();
    const Shape& s2 = o2d.shape();
    if (s3.size() != 3 || s3[0] != 1 || s3[2] != cfg.d3d) {
        throw TensorError("project_features: o3d must be [1, N, D3d], got " + shape_to_string(s3));
    }
    if (s2.size() != 3 || s2[2] != cfg.d2d || s2[1] != s3[1]) {
        throw TensorError("project_features: o2d must be [K, N, D2d], got " + shape_to_string(s2));
    }
    return {mlp_forward(ps, "mcmf.proj3d", o3d), mlp_forward(ps, "mcmf.proj2d", o2d)};
}

Var aggregate_view(ParamStore& ps, const McmfConfig& cfg, const Var& view_tokens) {
    const Shape& s = view_tokens.shape();
    if (s.size() != 2 || s[1] != cfg.d) {
        throw TensorError("aggregate_view: tokens must be [M, D], got " + shape_to_string(s));
    }
    if (cfg.aggregation == Aggregation::max_pool) {
        return max_pool(view_tokens, 0);
    }
    const std::size_t m = s[0];
    Var cls = reshape(ps.var("mcmf.cls"), {1, 1, cfg.d});
    Var seq = concat({cls, reshape(view_tokens, {1, m, cfg.d})}, 1);  // [1, M+1, D]
    AttentionParams attn = attention_vars(ps, "mcmf.view_attn");
    Var out = multi_head_attention(seq, seq, seq, attn, cfg.heads);
    return reshape(narrow(out, 1, 0, 1), {cfg.d});  // updated CLS token
}

Var build_multiview_keys(ParamStore& ps, const McmfConfig& cfg, const Var& o2d_proj,
                         const ViewGrouping& grouping) {
    const Shape& s = o2d_proj.shape();
    const std::size_t k = grouping.k();
    const std::size_t n = grouping.n();
    if (s.size() != 3 || s[0] != k || s[1] != n || s[2] != cfg.d) {
        throw TensorError("build_multiview_keys: o2d_proj shape " + shape_to_string(s) +
                          " does not match grouping [" + std::to_string(k) + ", " + std::to_string(n) + "]");
    }
    // tokens of each physical frame, in (instance, slot) scan order
    std::map<int, std::vector<Var>> frame_tokens;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t slot = 0; slot < k; ++slot) {
            const int f = grouping.slot_frame[slot][i];
            if (f < 0) continue;
            Var tok = reshape(narrow(narrow(o2d_proj, 0, slot, 1), 1, i, 1), {cfg.d});
            frame_tokens[f].push_back(tok);
        }
    }
    std::map<int, Var> frame_summary;
    for (const auto& [f, tokens] : frame_tokens) {
        frame_summary.emplace(f, aggregate_view(ps, cfg, stack0(tokens)));
    }

    const Var zero = Var::constant(Tensor({cfg.d}));
    std::vector<Var> slot_rows;
    slot_rows.reserve(k);
    for (std::size_t slot = 0; slot < k; ++slot) {
        std::vector<Var> row;
        row.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int f = grouping.slot_frame[slot][i];
            row.push_back(f >= 0 ? frame_summary.at(f) : zero);
        }
        slot_rows.push_back(stack0(row));  // [N, D]
    }
    return stack0(slot_rows);  // [K, N, D]
}

Var cross_modal_inject(ParamStore& ps, const McmfConfig& cfg, const Var& queries,
                       const Var& view_keys, const ViewGrouping& grouping) {
    const std::size_t k = grouping.k();
    const std::size_t n = grouping.n();
    if (queries.shape() != Shape{1, n, cfg.d}) {
        throw TensorError("cross_modal_inject: queries must be [1, N, D]");
    }
    if (view_keys.shape() != Shape{k, n, cfg.d}) {
        throw TensorError("cross_modal_inject: view_keys must be [K, N, D]");
    }

    std::vector<std::size_t> attended;  // instances with at least one valid view
    for (std::size_t i = 0; i < n; ++i) {
        if (grouping.valid_views_of(i) > 0) attended.push_back(i);
    }

    const Var zero_row = Var::constant(Tensor({std::size_t{1}, cfg.d}));
    if (attended.empty()) {
        std::vector<Var> rows(n, zero_row);
        return reshape(concat(rows, 0), {1, n, cfg.d});
    }

    // batch the attended instances: q [Na,1,D], kv [Na,K,D], mask [Na,K]
    std::vector<Var> qs, kvs;
    Tensor mask({attended.size(), k});
    for (std::size_t b = 0; b < attended.size(); ++b) {
        const std::size_t i = attended[b];
        qs.push_back(reshape(narrow(queries, 1, i, 1), {std::size_t{1}, cfg.d}));
        kvs.push_back(reshape(narrow(view_keys, 1, i, 1), {k, cfg.d}));
        for (std::size_t slot = 0; slot < k; ++slot) mask.at(b, slot) = grouping.valid(slot, i) ? 1.0 : 0.0;
    }
    Var q = reshape(stack0(qs), {attended.size(), std::size_t{1}, cfg.d});
    Var kv = stack0(kvs);  // [Na, K, D]
    AttentionParams attn = attention_vars(ps, "mcmf.cross_attn");
    Var fused = multi_head_attention(q, kv, kv, attn, cfg.heads, &mask);  // [Na, 1, D]

    std::vector<Var> rows;
    rows.reserve(n);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (next < attended.size() && attended[next] == i) {
            rows.push_back(reshape(narrow(fused, 0, next, 1), {std::size_t{1}, cfg.d}));
            ++next;
        } else {
            rows.push_back(zero_row);
        }
    }
    return reshape(concat(rows, 0), {1, n, cfg.d});
}

McmfOutput mcmf_forward(ParamStore& ps, const McmfConfig& cfg, const Var& o3d, const Var& o2d,
                        const ViewGrouping& grouping, bool keep_trace) {
    cfg.validate();
    const std::size_t n = o3d.shape().at(1);
    if (grouping.k() != o2d.shape().at(0) || grouping.n() != n) {
        throw TensorError("mcmf_forward: grouping does not match feature shapes");
    }

    auto [o3dp, o2dp] = project_features(ps, cfg, o3d, o2d);

    AttentionParams inst_attn = attention_vars(ps, "mcmf.inst_attn");
    Var o3da = add(o3dp, multi_head_attention(o3dp, o3dp, o3dp, inst_attn, cfg.heads));

    Var keys = build_multiview_keys(ps, cfg, o2dp, grouping);
    Var fused = cross_modal_inject(ps, cfg, o3da, keys, grouping);

    Var tokens = reshape(add(fused, o3da), {n, cfg.d});

    McmfOutput out;
    out.instance_tokens = tokens;
    if (keep_trace) {
        out.trace = McmfTrace{o3dp, o2dp, o3da, keys, fused};
    }
    return out;
}

}  // namespace scenetok
