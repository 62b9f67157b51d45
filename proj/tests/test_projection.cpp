#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "scenetok/pipeline.hpp"
#include "scenetok/projection.hpp"
#include "scenetok/reference.hpp"
#include "scenetok/rng.hpp"

using namespace scenetok;

namespace {

CameraFrame identity_frame(double fx, double cx, int size) {
    CameraFrame f;
    f.id = 0;
    f.fx = f.fy = fx;
    f.cx = f.cy = cx;
    f.pose = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    f.width = f.height = size;
    f.rgb.assign(static_cast<std::size_t>(size) * size * 3, 0.2);
    f.depth.assign(static_cast<std::size_t>(size) * size, 0.0);
    return f;
}

Scene one_point_scene(const Vec3& p) {
    Scene s;
    s.points.push_back({p, {0.5, 0.5, 0.5}});
    s.frames.push_back(identity_frame(10, 5, 11));
    InstanceProposal inst;
    inst.id = 0;
    inst.mask = {1};
    s.instances.push_back(std::move(inst));
    return s;
}

// Embedders with predictable outputs for checking the lift averaging.
class ConstantEmbedder final : public ImageEmbedder {
public:
    explicit ConstantEmbedder(std::vector<double> e) : e_(std::move(e)) {}
    std::size_t dim() const override { return e_.size(); }
    std::vector<double> embed(const CameraFrame&, const Crop&) override { return e_; }

private:
    std::vector<double> e_;
};

class LevelOneHotEmbedder final : public ImageEmbedder {
public:
    explicit LevelOneHotEmbedder(std::size_t dim) : dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed(const CameraFrame&, const Crop& crop) override {
        std::vector<double> e(dim_, 0.0);
        e.at(static_cast<std::size_t>(crop.level)) = 1.0;
        return e;
    }

private:
    std::size_t dim_;
};

}  // namespace

TEST_CASE("pinhole projection hand values") {
    const CameraFrame f = identity_frame(100, 50, 101);
    const auto a = project_point(f, {0, 0, 2});
    REQUIRE(a.has_value());
    CHECK(a->u == 50.0);
    CHECK(a->v == 50.0);
    CHECK(a->z == 2.0);

    const auto b = project_point(f, {1, 0, 2});
    REQUIRE(b.has_value());
    CHECK(b->u == 100.0);
    CHECK(b->v == 50.0);

    CHECK_FALSE(project_point(f, {0, 0, 0}).has_value());     // on the camera plane
    CHECK_FALSE(project_point(f, {0, 0, -2}).has_value());    // behind
    CHECK_FALSE(project_point(f, {0, 0, kZNear}).has_value());  // at the near plane
}

TEST_CASE("projection agrees with the longhand oracle") {
    SynthConfig cfg;
    cfg.seed = 21;
    const Scene scene = synth_scene(cfg);
    for (const CameraFrame& f : scene.frames) {
        for (std::size_t i = 0; i < scene.points.size(); i += 5) {
            const auto fast = project_point(f, scene.points[i].position);
            const auto slow =
                ref::project_point(f.fx, f.fy, f.cx, f.cy, f.pose, scene.points[i].position, kZNear);
            REQUIRE(fast.has_value() == slow.has_value());
            if (fast) {
                CHECK(std::abs(fast->u - (*slow)[0]) <= 1e-12);
                CHECK(std::abs(fast->v - (*slow)[1]) <= 1e-12);
                CHECK(std::abs(fast->z - (*slow)[2]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("visibility against the depth buffer") {
    SUBCASE("no depth measurement counts as visible") {
        const Scene s = one_point_scene({0, 0, 2});
        const VisibleEntry e = visible_points(s.frames[0], s, 0, 0.05);
        CHECK(e.visible_count == 1);
        CHECK(e.pixels[0].u == 5);
        CHECK(e.pixels[0].v == 5);
        CHECK(e.depths[0] == 2.0);
    }
    SUBCASE("point behind the camera is invisible") {
        const Scene s = one_point_scene({0, 0, -2});
        CHECK(visible_points(s.frames[0], s, 0, 0.05).visible_count == 0);
    }
    SUBCASE("projection outside the image is invisible") {
        const Scene s = one_point_scene({10, 0, 2});  // u = 55 in an 11-wide image
        CHECK(visible_points(s.frames[0], s, 0, 0.05).visible_count == 0);
    }
    SUBCASE("occluding surface hides the point; delta_occ loosens it") {
        Scene s = one_point_scene({0, 0, 2});
        s.frames[0].depth[5 * 11 + 5] = 1.0;  // wall a meter in front
        CHECK(visible_points(s.frames[0], s, 0, 0.05).visible_count == 0);
        CHECK(visible_points(s.frames[0], s, 0, 1.5).visible_count == 1);
        CHECK(ref::count_visible(s.frames[0], s, 0, 0.05) == 0);
        CHECK(ref::count_visible(s.frames[0], s, 0, 1.5) == 1);
    }
    SUBCASE("count is monotone in delta_occ on a full scene") {
        SynthConfig cfg;
        cfg.seed = 5;
        const Scene scene = synth_scene(cfg);
        for (const auto& inst : scene.instances) {
            std::size_t prev = 0;
            for (double d : {0.0, 0.01, 0.05, 0.2, 1.0}) {
                std::size_t total = 0;
                for (const CameraFrame& f : scene.frames) {
                    total += visible_points(f, scene, inst.id, d).visible_count;
                }
                CHECK(total >= prev);
                prev = total;
            }
        }
    }
}

TEST_CASE("top-k selection orders by count then frame id") {
    VisibilityReport rep;
    rep.instance_id = 0;
    for (auto [id, count] : {std::pair<int, std::size_t>{2, 7}, {0, 7}, {1, 3}}) {
        VisibleEntry e;
        e.frame_id = id;
        e.visible_count = count;
        rep.entries.push_back(std::move(e));
    }
    const ViewSelection sel = select_top_k_views(rep, 2);
    CHECK(sel.status == SelectionStatus::ok);
    REQUIRE(sel.frame_ids.size() == 2);
    CHECK(sel.frame_ids[0] == 0);  // ties break toward the lower frame id
    CHECK(sel.frame_ids[1] == 2);

    // matches the scan-based oracle
    const auto oracle = ref::top_k_frames({{2, 7}, {0, 7}, {1, 3}}, 2);
    CHECK(sel.frame_ids == oracle);

    SUBCASE("K larger than the frame count returns what exists") {
        CHECK(select_top_k_views(rep, 10).frame_ids == std::vector<int>{0, 2, 1});
    }
    SUBCASE("zero-count frames are never selected") {
        rep.entries[2].visible_count = 0;
        CHECK(select_top_k_views(rep, 10).frame_ids == std::vector<int>{0, 2});
    }
    SUBCASE("no visible frame anywhere means unobserved") {
        for (auto& e : rep.entries) e.visible_count = 0;
        const ViewSelection empty = select_top_k_views(rep, 3);
        CHECK(empty.status == SelectionStatus::unobserved);
        CHECK(empty.frame_ids.empty());
    }
    SUBCASE("K of zero is a caller error") {
        CHECK_THROWS_AS(select_top_k_views(rep, 0), InvariantError);
    }
}

TEST_CASE("selection matches the oracle on randomized count tables") {
    rng::SplitMix sm(977);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n_frames = 1 + sm.next_below(8);
        VisibilityReport rep;
        std::vector<std::pair<int, std::size_t>> table;
        for (std::size_t f = 0; f < n_frames; ++f) {
            VisibleEntry e;
            e.frame_id = static_cast<int>(f);
            e.visible_count = sm.next_below(5);  // small range forces ties
            table.emplace_back(e.frame_id, e.visible_count);
            rep.entries.push_back(std::move(e));
        }
        const std::size_t k = 1 + sm.next_below(6);
        CHECK(select_top_k_views(rep, k).frame_ids == ref::top_k_frames(table, k));
    }
}

TEST_CASE("prompt sampling") {
    VisibleEntry entry;
    entry.frame_id = 3;
    for (int i = 0; i < 10; ++i) entry.pixels.push_back({i, 0});
    entry.depths.assign(10, 1.0);
    entry.visible_count = 10;

    SUBCASE("same seed reproduces, different seed varies") {
        const PromptSample a = sample_prompt_points(entry, 1, 5, 42);
        const PromptSample b = sample_prompt_points(entry, 1, 5, 42);
        REQUIRE(a.pixels.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(a.pixels[i].u == b.pixels[i].u);
            CHECK(a.pixels[i].v == b.pixels[i].v);
        }
        bool any_diff = false;
        for (std::uint64_t s = 43; s < 48 && !any_diff; ++s) {
            const PromptSample c = sample_prompt_points(entry, 1, 5, s);
            for (std::size_t i = 0; i < 5; ++i) any_diff = any_diff || c.pixels[i].u != a.pixels[i].u;
        }
        CHECK(any_diff);
    }
    SUBCASE("samples are distinct pixels") {
        const PromptSample s = sample_prompt_points(entry, 1, 8, 7);
        std::set<int> seen;
        for (const Pixel& p : s.pixels) CHECK(seen.insert(p.u).second);
    }
    SUBCASE("asking for more than available returns all, once each") {
        const PromptSample s = sample_prompt_points(entry, 1, 50, 7);
        CHECK(s.pixels.size() == 10);
        std::set<int> seen;
        for (const Pixel& p : s.pixels) seen.insert(p.u);
        CHECK(seen.size() == 10);
    }
    SUBCASE("first draw is uniform across seeds (3-sigma band)") {
        // 10k seeds, p = 1/10 per pixel: sigma = sqrt(10000 * 0.1 * 0.9) = 30
        std::vector<int> tally(10, 0);
        for (std::uint64_t seed = 0; seed < 10000; ++seed) {
            ++tally[static_cast<std::size_t>(sample_prompt_points(entry, 1, 1, seed).pixels[0].u)];
        }
        for (int c : tally) CHECK(std::abs(c - 1000) <= 90);
    }
    SUBCASE("empty entry is an error") {
        VisibleEntry none;
        none.frame_id = 0;
        CHECK_THROWS_AS(sample_prompt_points(none, 1, 5, 0), InvariantError);
    }
}

TEST_CASE("multi-level crops") {
    const CameraFrame f = identity_frame(10, 50, 100);

    SUBCASE("widths grow as 1 + l*rho about a fixed center") {
        const auto crops = multi_level_crops(f, {45, 45, 55, 55}, 3, 0.5);
        REQUIRE(crops.size() == 3);
        CHECK(crops[0].width() == 10.0);
        CHECK(crops[1].width() == 15.0);
        CHECK(crops[2].width() == 20.0);
        CHECK(crops[1].u_min == 42.5);
        CHECK(crops[1].u_max == 57.5);
        CHECK(crops[2].v_min == 40.0);
        CHECK(crops[2].v_max == 60.0);
        for (const Crop& c : crops) CHECK(c.frame_id == f.id);
    }
    SUBCASE("one level is the input box") {
        const auto crops = multi_level_crops(f, {10, 12, 20, 30}, 1, 0.5);
        REQUIRE(crops.size() == 1);
        CHECK(crops[0].u_min == 10.0);
        CHECK(crops[0].v_min == 12.0);
        CHECK(crops[0].u_max == 20.0);
        CHECK(crops[0].v_max == 30.0);
    }
    SUBCASE("levels nest") {
        const auto crops = multi_level_crops(f, {30, 20, 42, 36}, 4, 0.7);
        for (std::size_t l = 1; l < crops.size(); ++l) {
            CHECK(crops[l].u_min <= crops[l - 1].u_min);
            CHECK(crops[l].v_min <= crops[l - 1].v_min);
            CHECK(crops[l].u_max >= crops[l - 1].u_max);
            CHECK(crops[l].v_max >= crops[l - 1].v_max);
        }
    }
    SUBCASE("expansion clamps to the image") {
        const auto crops = multi_level_crops(f, {0, 0, 10, 10}, 3, 1.0);
        CHECK(crops[1].u_min == 0.0);   // 5 - 5*2 clamps
        CHECK(crops[1].u_max == 15.0);  // 5 + 5*2
        CHECK(crops[2].u_min == 0.0);
        CHECK(crops[2].v_min == 0.0);
        CHECK(crops[2].u_max == 20.0);  // 5 + 5*3
    }
    SUBCASE("bad inputs throw") {
        CHECK_THROWS_AS(multi_level_crops(f, {20, 20, 20, 30}, 3, 0.5), InvariantError);  // zero width
        CHECK_THROWS_AS(multi_level_crops(f, {30, 30, 20, 40}, 3, 0.5), InvariantError);  // inverted
        CHECK_THROWS_AS(multi_level_crops(f, {90, 90, 110, 95}, 3, 0.5), InvariantError);  // off image
        CHECK_THROWS_AS(multi_level_crops(f, {10, 10, 20, 20}, 0, 0.5), InvariantError);   // L = 0
    }
}

TEST_CASE("lifting fills slots from selected views") {
    SynthConfig scfg;
    scfg.seed = 33;
    scfg.n_instances = 4;
    scfg.n_frames = 5;
    const Scene scene = synth_scene(scfg);

    LiftConfig lcfg;
    lcfg.k_views = 2;
    lcfg.levels = 3;
    lcfg.k_sample = 4;
    std::vector<ViewSelection> selections;
    for (const auto& inst : scene.instances) {
        selections.push_back(select_top_k_views(scene, inst.id, lcfg.k_views, lcfg.delta_occ));
    }
    auto segmenter = make_oracle_segmenter();

    SUBCASE("constant embedder passes through unchanged") {
        ConstantEmbedder emb({1.0, -2.0, 0.5});
        const LiftedFeatures lifted = lift_instance_features(scene, selections, *segmenter, emb, lcfg);
        CHECK(lifted.features.shape() == Shape{2, 4, 3});
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t i = 0; i < 4; ++i) {
                if (lifted.valid[k][i]) {
                    CHECK(lifted.features.at(k, i, 0) == doctest::Approx(1.0).epsilon(1e-15));
                    CHECK(lifted.features.at(k, i, 1) == doctest::Approx(-2.0).epsilon(1e-15));
                    CHECK(lifted.slot_frame[k][i] == selections[i].frame_ids[k]);
                } else {
                    CHECK(lifted.features.at(k, i, 0) == 0.0);
                    CHECK(lifted.slot_frame[k][i] == -1);
                }
            }
        }
    }
    SUBCASE("level-indexed embedder shows the crop average") {
        LevelOneHotEmbedder emb(8);
        const LiftedFeatures lifted = lift_instance_features(scene, selections, *segmenter, emb, lcfg);
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t i = 0; i < 4; ++i) {
                if (!lifted.valid[k][i]) continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    CHECK(lifted.features.at(k, i, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
                }
                for (std::size_t c = 3; c < 8; ++c) CHECK(lifted.features.at(k, i, c) == 0.0);
            }
        }
    }
    SUBCASE("validity bookkeeping is consistent") {
        auto emb = make_hash_embedder(16);
        const LiftedFeatures lifted = lift_instance_features(scene, selections, *segmenter, *emb, lcfg);
        std::size_t expected = 0;
        for (std::size_t i = 0; i < selections.size(); ++i) {
            expected += std::min<std::size_t>(selections[i].frame_ids.size(), lcfg.k_views);
            for (std::size_t k = 0; k < lcfg.k_views; ++k) {
                CHECK(static_cast<bool>(lifted.valid[k][i]) == (k < selections[i].frame_ids.size()));
            }
        }
        CHECK(lifted.valid_count() == expected);
        const Tensor vt = lifted.validity_tensor();
        CHECK(vt.shape() == Shape{2, 4});
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t i = 0; i < 4; ++i) CHECK(vt.at(k, i) == (lifted.valid[k][i] ? 1.0 : 0.0));
        }
    }
}
