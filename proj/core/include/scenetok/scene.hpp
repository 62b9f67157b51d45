#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenetok {

using Vec3 = std::array<double, 3>;

/// Malformed scene file (syntax or missing/ill-typed fields).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid file whose content violates a data-model invariant.
/// The message names the first failed invariant.
class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

struct Point {
    Vec3 position{0, 0, 0};  // meters, world frame
    Vec3 color{0, 0, 0};     // rgb in [0,1]
};

/// Posed pinhole RGB-D frame. `pose` maps world to camera, row-major 4x4
/// rigid transform; depth 0 means "no measurement".
struct CameraFrame {
    int id = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;  // pixels
    std::array<double, 16> pose{};           // world-to-camera, row-major
    int width = 0, height = 0;
    std::vector<double> rgb;    // H*W*3 row-major [v][u][c], values in [0,1]
    std::vector<double> depth;  // H*W meters, 0 = invalid

    double depth_at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
    double rgb_at(int u, int v, int c) const {
        return rgb[(static_cast<std::size_t>(v) * width + u) * 3 + c];
    }

    /// Applies the rigid transform: returns the point in camera coordinates.
    Vec3 to_camera(const Vec3& p_world) const;
};

struct InstanceProposal {
    int id = 0;
    std::vector<std::uint8_t> mask;  // one flag per scene point
    Vec3 centroid{0, 0, 0};          // mean of masked point positions

    std::size_t point_count() const;
};

struct Scene {
    std::vector<Point> points;
    std::vector<CameraFrame> frames;
    std::vector<InstanceProposal> instances;

    const InstanceProposal& instance(int id) const;
    const CameraFrame& frame(int id) const;

    /// Throws InvariantError naming the first violated invariant.
    void validate() const;
};

struct Crop {
    int frame_id = 0;
    int level = 0;
    double u_min = 0, v_min = 0, u_max = 0, v_max = 0;  // pixel coords, clamped to image

    double width() const { return u_max - u_min; }
    double height() const { return v_max - v_min; }
};

/// Arithmetic mean of the masked point positions.
Vec3 instance_centroid(const Scene& scene, int instance_id);

Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path);

// Vec3 helpers shared across the geometry code.
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);

}  // namespace scenetok
