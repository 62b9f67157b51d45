#include "scenetok/scene.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace scenetok {

using nlohmann::json;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    if (n == 0.0) throw InvariantError("cannot normalize zero vector");
    return {a[0] / n, a[1] / n, a[2] / n};
}

Vec3 CameraFrame::to_camera(const Vec3& p) const {
    Vec3 out;
    for (int r = 0; r < 3; ++r) {
        out[r] = pose[r * 4 + 0] * p[0] + pose[r * 4 + 1] * p[1] + pose[r * 4 + 2] * p[2] + pose[r * 4 + 3];
    }
    return out;
}

std::size_t InstanceProposal::point_count() const {
    std::size_t n = 0;
    for (std::uint8_t m : mask) n += (m != 0);
    return n;
}

const InstanceProposal& Scene::instance(int id) const {
    for (const auto& inst : instances) {
        if (inst.id == id) return inst;
    }
    throw InvariantError("unknown instance id " + std::to_string(id));
}

const CameraFrame& Scene::frame(int id) const {
    for (const auto& f : frames) {
        if (f.id == id) return f;
    }
    throw InvariantError("unknown frame id " + std::to_string(id));
}

namespace {

bool finite3(const Vec3& v) {
    return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

void validate_rotation(const CameraFrame& f, int index) {
    // top-left 3x3 block must be orthonormal with det +1 (tolerance 1e-6)
    const auto& m = f.pose;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double v = 0.0;
            for (int k = 0; k < 3; ++k) v += m[r * 4 + k] * m[c * 4 + k];
            const double expect = (r == c) ? 1.0 : 0.0;
            if (std::abs(v - expect) > 1e-6) {
                throw InvariantError("frames[" + std::to_string(index) +
                                     "]: pose rotation block is not orthonormal");
            }
        }
    }
    const double det = m[0] * (m[5] * m[10] - m[6] * m[9]) - m[1] * (m[4] * m[10] - m[6] * m[8]) +
                       m[2] * (m[4] * m[9] - m[5] * m[8]);
    if (std::abs(det - 1.0) > 1e-6) {
        throw InvariantError("frames[" + std::to_string(index) + "]: pose rotation determinant is not +1");
    }
    if (std::abs(m[12]) > 0 || std::abs(m[13]) > 0 || std::abs(m[14]) > 0 || m[15] != 1.0) {
        throw InvariantError("frames[" + std::to_string(index) + "]: pose bottom row must be [0,0,0,1]");
    }
}

}  // namespace

void Scene::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point& p = points[i];
        if (!finite3(p.position)) {
            throw InvariantError("points[" + std::to_string(i) + "]: position is not finite");
        }
        for (int c = 0; c < 3; ++c) {
            if (!(p.color[c] >= 0.0 && p.color[c] <= 1.0)) {
                throw InvariantError("points[" + std::to_string(i) + "]: color component outside [0,1]");
            }
        }
    }
    std::set<int> frame_ids;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const CameraFrame& f = frames[i];
        if (!(f.fx > 0.0) || !(f.fy > 0.0)) {
            throw InvariantError("frames[" + std::to_string(i) + "]: fx and fy must be positive");
        }
        if (f.width <= 0 || f.height <= 0) {
            throw InvariantError("frames[" + std::to_string(i) + "]: width and height must be positive");
        }
        if (!frame_ids.insert(f.id).second) {
            throw InvariantError("frames[" + std::to_string(i) + "]: duplicate frame id " + std::to_string(f.id));
        }
        validate_rotation(f, static_cast<int>(i));
        const std::size_t px = static_cast<std::size_t>(f.width) * f.height;
        if (f.rgb.size() != px * 3) {
            throw InvariantError("frames[" + std::to_string(i) + "]: rgb length != width*height*3");
        }
        if (f.depth.size() != px) {
            throw InvariantError("frames[" + std::to_string(i) + "]: depth length != width*height");
        }
        for (double d : f.depth) {
            if (!(d >= 0.0) || !std::isfinite(d)) {
                throw InvariantError("frames[" + std::to_string(i) + "]: depth must be finite and nonnegative");
            }
        }
        for (double v : f.rgb) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw InvariantError("frames[" + std::to_string(i) + "]: rgb values must lie in [0,1]");
            }
        }
    }
    if (instances.empty()) throw InvariantError("scene must contain at least one instance");
    std::set<int> ids;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const InstanceProposal& inst = instances[i];
        if (!ids.insert(inst.id).second) {
            throw InvariantError("instances[" + std::to_string(i) + "]: duplicate instance id " +
                                 std::to_string(inst.id));
        }
        if (inst.mask.size() != points.size()) {
            throw InvariantError("instances[" + std::to_string(i) + "]: mask length " +
                                 std::to_string(inst.mask.size()) + " != point count " +
                                 std::to_string(points.size()));
        }
        if (inst.point_count() == 0) {
            throw InvariantError("instances[" + std::to_string(i) + "]: mask has no points");
        }
    }
}

Vec3 instance_centroid(const Scene& scene, int instance_id) {
    const InstanceProposal& inst = scene.instance(instance_id);
    Vec3 sum{0, 0, 0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < inst.mask.size(); ++i) {
        if (inst.mask[i]) {
            sum = sum + scene.points[i].position;
            ++n;
        }
    }
    if (n == 0) throw InvariantError("instance " + std::to_string(instance_id) + " has an empty mask");
    return (1.0 / static_cast<double>(n)) * sum;
}

namespace {

template <typename T>
T field(const json& j, const std::string& context, const char* key) {
    if (!j.contains(key)) throw ParseError(context + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(context + ": field '" + key + "': " + e.what());
    }
}

Vec3 vec3_field(const json& j, const std::string& context, const char* key) {
    auto v = field<std::vector<double>>(j, context, key);
    if (v.size() != 3) throw ParseError(context + ": field '" + key + "' must have 3 entries");
    return {v[0], v[1], v[2]};
}

}  // namespace

Scene load_scene(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open scene file: " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != 1) {
        throw ParseError(path.string() + ": missing or unsupported 'version' (expected 1)");
    }

    Scene scene;
    std::size_t idx = 0;
    for (const json& pj : j.value("points", json::array())) {
        const std::string ctx = "points[" + std::to_string(idx++) + "]";
        Point p;
        p.position = vec3_field(pj, ctx, "p");
        p.color = vec3_field(pj, ctx, "c");
        scene.points.push_back(p);
    }
    idx = 0;
    for (const json& fj : j.value("frames", json::array())) {
        const std::string ctx = "frames[" + std::to_string(idx++) + "]";
        CameraFrame f;
        f.id = field<int>(fj, ctx, "id");
        f.fx = field<double>(fj, ctx, "fx");
        f.fy = field<double>(fj, ctx, "fy");
        f.cx = field<double>(fj, ctx, "cx");
        f.cy = field<double>(fj, ctx, "cy");
        auto pose = field<std::vector<double>>(fj, ctx, "pose");
        if (pose.size() != 16) throw ParseError(ctx + ": pose must have 16 row-major entries");
        std::copy(pose.begin(), pose.end(), f.pose.begin());
        f.width = field<int>(fj, ctx, "width");
        f.height = field<int>(fj, ctx, "height");
        f.rgb = field<std::vector<double>>(fj, ctx, "rgb");
        f.depth = field<std::vector<double>>(fj, ctx, "depth");
        scene.frames.push_back(std::move(f));
    }
    idx = 0;
    for (const json& ij : j.value("instances", json::array())) {
        const std::string ctx = "instances[" + std::to_string(idx++) + "]";
        InstanceProposal inst;
        inst.id = field<int>(ij, ctx, "id");
        auto mask = field<std::vector<int>>(ij, ctx, "mask");
        inst.mask.reserve(mask.size());
        for (int m : mask) {
            if (m != 0 && m != 1) throw ParseError(ctx + ": mask entries must be 0 or 1");
            inst.mask.push_back(static_cast<std::uint8_t>(m));
        }
        scene.instances.push_back(std::move(inst));
    }

    scene.validate();
    for (InstanceProposal& inst : scene.instances) inst.centroid = instance_centroid(scene, inst.id);
    return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
    scene.validate();  // never write a scene the loader would reject
    json j;
    j["version"] = 1;
    json points = json::array();
    for (const Point& p : scene.points) {
        points.push_back({{"p", {p.position[0], p.position[1], p.position[2]}},
                          {"c", {p.color[0], p.color[1], p.color[2]}}});
    }
    j["points"] = std::move(points);
    json frames = json::array();
    for (const CameraFrame& f : scene.frames) {
        json fj;
        fj["id"] = f.id;
        fj["fx"] = f.fx;
        fj["fy"] = f.fy;
        fj["cx"] = f.cx;
        fj["cy"] = f.cy;
        fj["pose"] = std::vector<double>(f.pose.begin(), f.pose.end());
        fj["width"] = f.width;
        fj["height"] = f.height;
        fj["rgb"] = f.rgb;
        fj["depth"] = f.depth;
        frames.push_back(std::move(fj));
    }
    j["frames"] = std::move(frames);
    json instances = json::array();
    for (const InstanceProposal& inst : scene.instances) {
        json ij;
        ij["id"] = inst.id;
        std::vector<int> mask(inst.mask.begin(), inst.mask.end());
        ij["mask"] = std::move(mask);
        instances.push_back(std::move(ij));
    }
    j["instances"] = std::move(instances);

    std::ofstream os(path);
    if (!os) throw ParseError("cannot open for write: " + path.string());
    os << j.dump(1, '\t') << '\n';
    if (!os) throw ParseError("write failed: " + path.string());
}

}  // namespace scenetok
