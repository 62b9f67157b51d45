#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "scenetok/pipeline.hpp"
#include "scenetok/scene.hpp"

using namespace scenetok;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / (std::string("scenetok_test_") + name);
}

// Smallest scene that passes validate(): one 2x2 frame, two points, one instance.
Scene tiny_scene() {
    Scene s;
    s.points.push_back({{0, 0, 2}, {0.5, 0.5, 0.5}});
    s.points.push_back({{1, 0, 2}, {0.25, 0.75, 1.0}});
    CameraFrame f;
    f.id = 0;
    f.fx = f.fy = 10;
    f.cx = f.cy = 1;
    f.pose = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    f.width = f.height = 2;
    f.rgb.assign(2 * 2 * 3, 0.1);
    f.depth.assign(2 * 2, 1.0);
    s.frames.push_back(std::move(f));
    InstanceProposal inst;
    inst.id = 7;
    inst.mask = {1, 1};
    s.instances.push_back(std::move(inst));
    return s;
}

std::string load_error(const std::string& body) {
    const fs::path p = temp_file("bad.json");
    std::ofstream(p) << body;
    try {
        load_scene(p);
    } catch (const ParseError& e) {
        std::remove(p.string().c_str());
        return e.what();
    }
    std::remove(p.string().c_str());
    return "";
}

}  // namespace

TEST_CASE("synthetic scene round-trips through save/load") {
    SynthConfig cfg;
    cfg.seed = 11;
    cfg.n_instances = 3;
    cfg.n_frames = 4;
    cfg.points_per_instance = 20;
    const Scene a = synth_scene(cfg);
    const fs::path p = temp_file("roundtrip.json");
    save_scene(a, p);
    const Scene b = load_scene(p);
    std::remove(p.string().c_str());

    REQUIRE(b.points.size() == a.points.size());
    REQUIRE(b.frames.size() == a.frames.size());
    REQUIRE(b.instances.size() == a.instances.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(b.points[i].position == a.points[i].position);
        CHECK(b.points[i].color == a.points[i].color);
    }
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(b.frames[i].id == a.frames[i].id);
        CHECK(b.frames[i].fx == a.frames[i].fx);
        CHECK(b.frames[i].pose == a.frames[i].pose);
        CHECK(b.frames[i].rgb == a.frames[i].rgb);
        CHECK(b.frames[i].depth == a.frames[i].depth);
    }
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        CHECK(b.instances[i].id == a.instances[i].id);
        CHECK(b.instances[i].mask == a.instances[i].mask);
        // centroid is derived on load, not stored
        for (int c = 0; c < 3; ++c) {
            CHECK(b.instances[i].centroid[c] == doctest::Approx(a.instances[i].centroid[c]).epsilon(1e-15));
        }
    }
}

TEST_CASE("validate rejects broken scenes") {
    SUBCASE("non-orthonormal rotation") {
        Scene s = tiny_scene();
        s.frames[0].pose[0] = 2.0;
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
    SUBCASE("reflection (det = -1)") {
        Scene s = tiny_scene();
        s.frames[0].pose = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1};
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
    SUBCASE("point color outside [0,1]") {
        Scene s = tiny_scene();
        s.points[0].color[1] = 1.5;
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
    SUBCASE("duplicate instance ids") {
        Scene s = tiny_scene();
        s.instances.push_back(s.instances[0]);
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
    SUBCASE("empty instance mask") {
        Scene s = tiny_scene();
        s.instances[0].mask = {0, 0};
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
    SUBCASE("mask length mismatch") {
        Scene s = tiny_scene();
        s.instances[0].mask = {1};
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
    SUBCASE("negative depth") {
        Scene s = tiny_scene();
        s.frames[0].depth[0] = -0.5;
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
    SUBCASE("no instances") {
        Scene s = tiny_scene();
        s.instances.clear();
        CHECK_THROWS_AS(s.validate(), InvariantError);
    }
}

TEST_CASE("save refuses non-finite geometry") {
    Scene s = tiny_scene();
    s.points[1].position[2] = std::nan("");
    CHECK_THROWS_AS(save_scene(s, temp_file("nan.json")), InvariantError);
}

TEST_CASE("loader reports the offending field") {
    const std::string msg = load_error(
        R"({"version":1,"points":[],"frames":[{"id":0}],"instances":[]})");
    CHECK(msg.find("frames[0]") != std::string::npos);
    CHECK(msg.find("'fx'") != std::string::npos);
}

TEST_CASE("loader rejects unknown versions and junk") {
    CHECK(load_error(R"({"version":2,"points":[],"frames":[],"instances":[]})").find("version") !=
          std::string::npos);
    CHECK(load_error(R"({"points":[]})").find("version") != std::string::npos);
    CHECK_FALSE(load_error("{not json").empty());
    CHECK(load_error(R"({"version":1,"instances":[{"id":0,"mask":[2]}]})").find("0 or 1") !=
          std::string::npos);
}

TEST_CASE("centroid moves with a rigid translation of the points") {
    Scene s = tiny_scene();
    const Vec3 before = instance_centroid(s, 7);
    const Vec3 t{1.5, -2.0, 0.25};
    for (Point& p : s.points) p.position = p.position + t;
    const Vec3 after = instance_centroid(s, 7);
    for (int c = 0; c < 3; ++c) CHECK(after[c] == doctest::Approx(before[c] + t[c]).epsilon(1e-15));
}

TEST_CASE("instance and frame lookup by id") {
    const Scene s = tiny_scene();
    CHECK(s.instance(7).id == 7);
    CHECK_THROWS_AS(s.instance(99), InvariantError);
    CHECK(s.frame(0).id == 0);
    CHECK_THROWS_AS(s.frame(5), InvariantError);
}
