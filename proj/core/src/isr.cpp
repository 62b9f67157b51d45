#include "scenetok/isr.hpp"

#include <algorithm>
#include <cmath>

namespace scenetok {

void IsrConfig::validate() const {
    if (d == 0 || d % 6 != 0) {
        throw TensorError("IsrConfig: D must be a positive multiple of 6 for the coordinate encoding");
    }
    if (heads == 0 || d % heads != 0) throw TensorError("IsrConfig: D must be divisible by heads");
    if (layers == 0) throw TensorError("IsrConfig: encoder needs at least one layer");
    if (n_scene_tokens == 0) throw TensorError("IsrConfig: n_scene_tokens must be >= 1");
}

PairGeometry pair_geometry(const Tensor& centroids) {
    const Shape& s = centroids.shape();
    if (s.size() != 2 || s[1] != 3) {
        throw TensorError("pair_geometry: centroids must be [N,3], got " + shape_to_string(s));
    }
    centroids.require_finite("pair_geometry");
    const std::size_t n = s[0];
    PairGeometry g;
    g.dist = Tensor({n, n});
    g.theta_h = Tensor({n, n});
    g.theta_v = Tensor({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;  // diagonal stays zero by convention
            const double dx = centroids.at(j, 0) - centroids.at(i, 0);
            const double dy = centroids.at(j, 1) - centroids.at(i, 1);
            const double dz = centroids.at(j, 2) - centroids.at(i, 2);
            const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
            g.dist.at(i, j) = d;
            if (d < 1e-9) {
                g.coincident.emplace_back(static_cast<int>(i), static_cast<int>(j));
                continue;  // angles stay zero
            }
            g.theta_h.at(i, j) = std::atan2(dy, dx);
            g.theta_v.at(i, j) = std::asin(std::clamp(dz / d, -1.0, 1.0));
        }
    }
    return g;
}

Tensor spatial_features(const PairGeometry& g, SpatialMode mode) {
    const std::size_t n = g.dist.dim(0);
    Tensor s({n, n, 5});
    const bool keep_angles = mode != SpatialMode::distance_only;
    const bool keep_dist = mode != SpatialMode::orientation_only;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (keep_angles) {
                s.at(i, j, 0) = std::sin(g.theta_h.at(i, j));
                s.at(i, j, 1) = std::cos(g.theta_h.at(i, j));
                s.at(i, j, 2) = std::sin(g.theta_v.at(i, j));
                s.at(i, j, 3) = std::cos(g.theta_v.at(i, j));
            }
            if (keep_dist) s.at(i, j, 4) = g.dist.at(i, j);
        }
    }
    return s;
}

Tensor position_embed(const Tensor& centroids, std::size_t d, double base) {
    const Shape& s = centroids.shape();
    if (s.size() != 2 || s[1] != 3) {
        throw TensorError("position_embed: centroids must be [N,3]");
    }
    if (d == 0 || d % 6 != 0) {
        throw TensorError("position_embed: D must be a multiple of 6, got " + std::to_string(d));
    }
    const std::size_t n = s[0];
    const std::size_t chunk = d / 3;
    const std::size_t pairs = chunk / 2;
    Tensor pe({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t axis = 0; axis < 3; ++axis) {
            const double c = centroids.at(i, axis);
            for (std::size_t m = 0; m < pairs; ++m) {
                const double freq =
                    std::pow(base, -2.0 * static_cast<double>(m) / static_cast<double>(chunk));
                pe.at(i, axis * chunk + 2 * m) = std::sin(c * freq);
                pe.at(i, axis * chunk + 2 * m + 1) = std::cos(c * freq);
            }
        }
    }
    return pe;
}

Var spatial_conditioned_weights(const Tensor& pe, const Var& o_i, const Var& w_p) {
    if (pe.shape() != o_i.shape()) {
        throw TensorError("spatial_conditioned_weights: PE shape " + shape_to_string(pe.shape()) +
                          " != token shape " + shape_to_string(o_i.shape()));
    }
    const std::size_t d = o_i.shape().at(1);
    if (w_p.shape() != Shape{d, 5}) {
        throw TensorError("spatial_conditioned_weights: W_P must be [D,5]");
    }
    return matmul(add(o_i, Var::constant(pe)), w_p);  // [N,5]
}

Var attention_map(const Var& l, const Tensor& s) {
    const Shape& sl = l.shape();
    if (sl.size() != 2 || sl[1] != 5) throw TensorError("attention_map: l must be [N,5]");
    const std::size_t n = sl[0];
    if (s.shape() != Shape{n, n, 5}) throw TensorError("attention_map: s must be [N,N,5]");

    const Tensor& lv = l.value();
    Tensor omega({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < 5; ++c) acc += lv.at(i, c) * s.at(i, j, c) * lv.at(j, c);
            omega.at(i, j) = acc;
        }
    }
    Tensor s_saved = s;
    return make_op("attention_map", std::move(omega), {l}, [n, s_saved](Node& node) {
        const Tensor& lv = node.inputs[0]->value;
        Tensor gl({n, 5});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double go = node.grad.at(i, j);
                if (go == 0.0) continue;
                for (std::size_t c = 0; c < 5; ++c) {
                    gl.at(i, c) += go * s_saved.at(i, j, c) * lv.at(j, c);
                    gl.at(j, c) += go * s_saved.at(i, j, c) * lv.at(i, c);
                }
            }
        }
        node.inputs[0]->accumulate(gl);
    });
}

Var relation_aggregate(const Var& omega, const Var& o_i, AggregateOver over) {
    const std::size_t n = o_i.shape().at(0);
    if (omega.shape() != Shape{n, n}) throw TensorError("relation_aggregate: omega must be [N,N]");
    if (over == AggregateOver::others) {
        return matmul(omega, o_i);
    }
    return mul_axis0(o_i, sum(omega, 1));
}

void init_isr_params(ParamStore& ps, const IsrConfig& cfg) {
    cfg.validate();
    ps.add("isr.w_p", {cfg.d, 5}, InitScheme::uniform_fan_in, cfg.d);
    for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
        const std::string p = "isr.enc.layer" + std::to_string(layer);
        ps.add(p + ".ln1_g", {cfg.d}, InitScheme::ones);
        ps.add(p + ".ln1_b", {cfg.d}, InitScheme::zeros);
        add_attention_params(ps, p + ".attn", cfg.d);
        ps.add(p + ".ln2_g", {cfg.d}, InitScheme::ones);
        ps.add(p + ".ln2_b", {cfg.d}, InitScheme::zeros);
        const std::size_t ff = cfg.d * cfg.ff_mult;
        ps.add(p + ".ff.w1", {cfg.d, ff}, InitScheme::uniform_fan_in, cfg.d);
        ps.add(p + ".ff.b1", {ff}, InitScheme::zeros);
        ps.add(p + ".ff.w2", {ff, cfg.d}, InitScheme::uniform_fan_in, ff);
        ps.add(p + ".ff.b2", {cfg.d}, InitScheme::zeros);
    }
    for (std::size_t h = 0; h < cfg.n_scene_tokens; ++h) {
        const std::string p = "isr.scene_mlp.head" + std::to_string(h);
        ps.add(p + ".w1", {cfg.d, cfg.d}, InitScheme::uniform_fan_in, cfg.d);
        ps.add(p + ".b1", {cfg.d}, InitScheme::zeros);
        ps.add(p + ".w2", {cfg.d, cfg.d}, InitScheme::uniform_fan_in, cfg.d);
        ps.add(p + ".b2", {cfg.d}, InitScheme::zeros);
    }
}

Var scene_project(ParamStore& ps, const IsrConfig& cfg, const Var& f) {
    const Shape& s = f.shape();
    if (s.size() != 2 || s[1] != cfg.d) throw TensorError("scene_project: input must be [N,D]");
    const std::size_t n = s[0];

    Var x = reshape(f, {1, n, cfg.d});
    for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
        const std::string p = "isr.enc.layer" + std::to_string(layer);
        Var normed = layer_norm(x, ps.var(p + ".ln1_g"), ps.var(p + ".ln1_b"));
        AttentionParams attn = attention_vars(ps, p + ".attn");
        x = add(x, multi_head_attention(normed, normed, normed, attn, cfg.heads));
        Var normed2 = layer_norm(x, ps.var(p + ".ln2_g"), ps.var(p + ".ln2_b"));
        Var h = gelu(add(matmul(normed2, ps.var(p + ".ff.w1")), ps.var(p + ".ff.b1")));
        x = add(x, add(matmul(h, ps.var(p + ".ff.w2")), ps.var(p + ".ff.b2")));
    }
    Var pooled = max_pool(x, 1);  // [1, D]

    std::vector<Var> heads_out;
    heads_out.reserve(cfg.n_scene_tokens);
    for (std::size_t h = 0; h < cfg.n_scene_tokens; ++h) {
        const std::string p = "isr.scene_mlp.head" + std::to_string(h);
        Var hidden = gelu(add(matmul(pooled, ps.var(p + ".w1")), ps.var(p + ".b1")));
        heads_out.push_back(add(matmul(hidden, ps.var(p + ".w2")), ps.var(p + ".b2")));
    }
    return concat(heads_out, 0);  // [n_scene_tokens, D]
}

IsrOutput isr_forward(ParamStore& ps, const IsrConfig& cfg, const Var& o_i, const Tensor& centroids) {
    cfg.validate();
    const Shape& s = o_i.shape();
    if (s.size() != 2 || s[1] != cfg.d) throw TensorError("isr_forward: tokens must be [N,D]");
    if (centroids.shape() != Shape{s[0], 3}) throw TensorError("isr_forward: centroids must be [N,3]");

    IsrOutput out;
    out.geometry = pair_geometry(centroids);
    out.spatial = spatial_features(out.geometry, cfg.mode);
    const Tensor pe = position_embed(centroids, cfg.d, cfg.pe_base);

    Var l = spatial_conditioned_weights(pe, o_i, ps.var("isr.w_p"));
    out.omega = attention_map(l, out.spatial);
    Var f = relation_aggregate(out.omega, o_i, cfg.aggregate_over);
    out.scene_tokens = scene_project(ps, cfg, f);
    out.instance_tokens = o_i;
    return out;
}

}  // namespace scenetok
