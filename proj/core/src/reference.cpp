#include "scenetok/reference.hpp"

#include <algorithm>
#include <cmath>

namespace scenetok::ref {

std::optional<std::array<double, 3>> project_point(double fx, double fy, double cx, double cy,
                                                   const std::array<double, 16>& pose, const Vec3& p,
                                                   double z_near) {
    double cam[3];
    for (int r = 0; r < 3; ++r) {
        cam[r] = pose[r * 4 + 0] * p[0] + pose[r * 4 + 1] * p[1] + pose[r * 4 + 2] * p[2] +
                 pose[r * 4 + 3];
    }
    if (cam[2] <= z_near) return std::nullopt;
    return std::array<double, 3>{fx * cam[0] / cam[2] + cx, fy * cam[1] / cam[2] + cy, cam[2]};
}

std::size_t count_visible(const CameraFrame& frame, const Scene& scene, int instance_id,
                          double delta_occ) {
    const InstanceProposal& inst = scene.instance(instance_id);
    std::size_t count = 0;
    for (std::size_t pi = 0; pi < scene.points.size(); ++pi) {
        if (!inst.mask[pi]) continue;
        auto proj = project_point(frame.fx, frame.fy, frame.cx, frame.cy, frame.pose,
                                  scene.points[pi].position, 1e-4);
        if (!proj) continue;
        const long u = std::lround((*proj)[0]);
        const long v = std::lround((*proj)[1]);
        if (u < 0 || v < 0 || u >= static_cast<long>(frame.width) ||
            v >= static_cast<long>(frame.height)) {
            continue;
        }
        const double buf = frame.depth[static_cast<std::size_t>(v) * frame.width +
                                       static_cast<std::size_t>(u)];
        if (buf == 0.0 || std::abs((*proj)[2] - buf) <= delta_occ) ++count;
    }
    return count;
}

std::vector<int> top_k_frames(const std::vector<std::pair<int, std::size_t>>& count_by_frame,
                              std::size_t k) {
    std::vector<std::pair<int, std::size_t>> pool = count_by_frame;
    std::vector<int> out;
    while (out.size() < k) {
        std::size_t best = pool.size();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].second == 0) continue;
            if (best == pool.size() || pool[i].second > pool[best].second ||
                (pool[i].second == pool[best].second && pool[i].first < pool[best].first)) {
                best = i;
            }
        }
        if (best == pool.size()) break;
        out.push_back(pool[best].first);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& wq,
                 const Tensor& bq, const Tensor& wk, const Tensor& bk, const Tensor& wv,
                 const Tensor& bv, const Tensor& wo, const Tensor& bo, std::size_t heads,
                 const Tensor* key_valid) {
    const std::size_t b = q.dim(0), lq = q.dim(1), d = q.dim(2), lk = k.dim(1);
    const std::size_t dh = d / heads;

    auto linear = [d](const Tensor& x, const Tensor& w, const Tensor& bias) {
        const std::size_t rows = x.size() / d;
        std::vector<double> out(rows * d);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < d; ++o) {
                double acc = bias.data()[o];
                for (std::size_t i = 0; i < d; ++i) acc += x.data()[r * d + i] * w.at(i, o);
                out[r * d + o] = acc;
            }
        }
        return out;
    };

    const std::vector<double> qp = linear(q, wq, bq);
    const std::vector<double> kp = linear(k, wk, bk);
    const std::vector<double> vp = linear(v, wv, bv);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<double> heads_out(b * lq * d, 0.0);
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < lq; ++i) {
                std::vector<double> logits(lk);
                for (std::size_t j = 0; j < lk; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        dot += qp[(bi * lq + i) * d + h * dh + c] *
                               kp[(bi * lk + j) * d + h * dh + c];
                    }
                    logits[j] = dot * inv_scale;
                    if (key_valid && key_valid->at(bi, j) == 0.0) logits[j] += -1e9;
                }
                const double mx = *std::max_element(logits.begin(), logits.end());
                double denom = 0.0;
                for (double& lg : logits) {
                    lg = std::exp(lg - mx);
                    denom += lg;
                }
                for (std::size_t j = 0; j < lk; ++j) {
                    const double w = logits[j] / denom;
                    for (std::size_t c = 0; c < dh; ++c) {
                        heads_out[(bi * lq + i) * d + h * dh + c] +=
                            w * vp[(bi * lk + j) * d + h * dh + c];
                    }
                }
            }
        }
    }

    Tensor out({b, lq, d});
    for (std::size_t r = 0; r < b * lq; ++r) {
        for (std::size_t o = 0; o < d; ++o) {
            double acc = bo.data()[o];
            for (std::size_t i = 0; i < d; ++i) acc += heads_out[r * d + i] * wo.at(i, o);
            out.data()[r * d + o] = acc;
        }
    }
    return out;
}

PairStats pair_stats(const Tensor& centroids) {
    const std::size_t n = centroids.dim(0);
    PairStats ps;
    ps.dist.assign(n * n, 0.0);
    ps.theta_h.assign(n * n, 0.0);
    ps.theta_v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = centroids.at(j, 0) - centroids.at(i, 0);
            const double dy = centroids.at(j, 1) - centroids.at(i, 1);
            const double dz = centroids.at(j, 2) - centroids.at(i, 2);
            const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
            ps.dist[i * n + j] = d;
            if (d < 1e-9) continue;
            ps.theta_h[i * n + j] = std::atan2(dy, dx);
            double ratio = dz / d;
            if (ratio > 1.0) ratio = 1.0;
            if (ratio < -1.0) ratio = -1.0;
            ps.theta_v[i * n + j] = std::asin(ratio);
        }
    }
    return ps;
}

Tensor bilinear_scores(const Tensor& l, const Tensor& s) {
    const std::size_t n = l.dim(0);
    Tensor omega({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < 5; ++c) acc += l.at(i, c) * s.at(i, j, c) * l.at(j, c);
            omega.at(i, j) = acc;
        }
    }
    return omega;
}

Tensor relation_aggregate(const Tensor& omega, const Tensor& tokens, bool over_others) {
    const std::size_t n = tokens.dim(0), d = tokens.dim(1);
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        if (over_others) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t c = 0; c < d; ++c) out.at(i, c) += omega.at(i, j) * tokens.at(j, c);
            }
        } else {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += omega.at(i, j);
            for (std::size_t c = 0; c < d; ++c) out.at(i, c) = row * tokens.at(i, c);
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out.at(i, j) = std::exp(x.at(i, j) - mx);
            denom += out.at(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= denom;
    }
    return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double dlt = x.at(i, j) - mean;
            var += dlt * dlt;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            out.at(i, j) = (x.at(i, j) - mean) * inv * gamma.data()[j] + beta.data()[j];
        }
    }
    return out;
}

double gelu_scalar(double x) {
    const double kC = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

}  // namespace scenetok::ref
