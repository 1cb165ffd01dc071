#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "retarget/error.hpp"
#include "retarget/file_io.hpp"
#include "retarget/geom.hpp"

namespace retarget {

inline constexpr int kSkeletonJoints = 22;

enum class Limb : int { left_arm = 0, right_arm = 1, left_leg = 2, right_leg = 3 };
inline constexpr std::array<Limb, 4> kLimbs{Limb::left_arm, Limb::right_arm, Limb::left_leg,
                                            Limb::right_leg};

inline constexpr bool is_arm(Limb l) { return l == Limb::left_arm || l == Limb::right_arm; }

inline const char* limb_name(Limb l) {
    switch (l) {
        case Limb::left_arm: return "left_arm";
        case Limb::right_arm: return "right_arm";
        case Limb::left_leg: return "left_leg";
        case Limb::right_leg: return "right_leg";
    }
    return "?";
}

// Indices of the keypoints used for retargeting within a 22-joint frame.
// Defaults follow the HumanML3D (SMPL body) ordering:
//   0 pelvis, 1 l_hip, 2 r_hip, 3 spine1, 4 l_knee, 5 r_knee, 6 spine2,
//   7 l_ankle, 8 r_ankle, 9 spine3, 10 l_foot, 11 r_foot, 12 neck,
//   13 l_collar, 14 r_collar, 15 head, 16 l_shoulder, 17 r_shoulder,
//   18 l_elbow, 19 r_elbow, 20 l_wrist, 21 r_wrist
// The foot keypoint is the toe, so leg direction is ankle -> toe.
struct JointLayout {
    std::string name = "humanml3d";
    int root = 0;
    int left_hip = 1, right_hip = 2;
    int left_knee = 4, right_knee = 5;
    int left_ankle = 7, right_ankle = 8;
    int left_foot = 10, right_foot = 11;
    int left_shoulder = 16, right_shoulder = 17;
    int left_elbow = 18, right_elbow = 19;
    int left_wrist = 20, right_wrist = 21;

    static JointLayout humanml3d() { return {}; }

    // proximal, middle, distal, and direction-end keypoints of a limb.
    // Arms: shoulder, elbow, wrist, wrist. Legs: hip, knee, ankle, foot.
    struct Chain {
        int proximal, middle, distal, tip;
    };
    Chain chain(Limb l) const {
        switch (l) {
            case Limb::left_arm: return {left_shoulder, left_elbow, left_wrist, left_wrist};
            case Limb::right_arm: return {right_shoulder, right_elbow, right_wrist, right_wrist};
            case Limb::left_leg: return {left_hip, left_knee, left_ankle, left_foot};
            case Limb::right_leg: return {right_hip, right_knee, right_ankle, right_foot};
        }
        return {};
    }

    void validate() const {
        for (int i : {root, left_hip, right_hip, left_knee, right_knee, left_ankle, right_ankle,
                      left_foot, right_foot, left_shoulder, right_shoulder, left_elbow,
                      right_elbow, left_wrist, right_wrist}) {
            if (i < 0 || i >= kSkeletonJoints) {
                throw ConfigError("joint layout '" + name + "': index " + std::to_string(i) +
                                  " outside [0, 22)");
            }
        }
    }
};

// Layout from config: either a name ("humanml3d") or an object with a "name"
// and any subset of index overrides.
inline JointLayout joint_layout_from_json(const nlohmann::json& j) {
    JointLayout layout;
    if (j.is_string()) {
        if (j.get<std::string>() != "humanml3d") {
            throw ConfigError("unknown joint layout '" + j.get<std::string>() + "'");
        }
        return layout;
    }
    if (!j.is_object()) throw ConfigError("joint_layout must be a name or an object");
    layout.name = j.value("name", std::string("custom"));
    auto read = [&](const char* key, int& field) {
        if (j.contains(key)) field = j.at(key).get<int>();
    };
    read("root", layout.root);
    read("left_hip", layout.left_hip);
    read("right_hip", layout.right_hip);
    read("left_knee", layout.left_knee);
    read("right_knee", layout.right_knee);
    read("left_ankle", layout.left_ankle);
    read("right_ankle", layout.right_ankle);
    read("left_foot", layout.left_foot);
    read("right_foot", layout.right_foot);
    read("left_shoulder", layout.left_shoulder);
    read("right_shoulder", layout.right_shoulder);
    read("left_elbow", layout.left_elbow);
    read("right_elbow", layout.right_elbow);
    read("left_wrist", layout.left_wrist);
    read("right_wrist", layout.right_wrist);
    layout.validate();
    return layout;
}

// Signed axis permutation from the source dataset convention to the robot
// convention (x forward, y left, z up). `axes[i]` names the source axis that
// becomes robot axis i, e.g. {"z", "x", "y"} for y-up data facing +z.
struct AxisRemap {
    std::array<std::string, 3> axes{"z", "x", "y"};
    Mat3 matrix = Mat3{{0, 0, 1, 1, 0, 0, 0, 1, 0}};

    static AxisRemap from_axes(const std::array<std::string, 3>& axes) {
        AxisRemap r;
        r.axes = axes;
        r.matrix = Mat3{};
        std::array<bool, 3> used{};
        for (int i = 0; i < 3; ++i) {
            std::string a = axes[static_cast<std::size_t>(i)];
            double sign = 1.0;
            if (!a.empty() && (a[0] == '-' || a[0] == '+')) {
                sign = a[0] == '-' ? -1.0 : 1.0;
                a = a.substr(1);
            }
            if (a != "x" && a != "y" && a != "z") {
                throw ConfigError("axis_remap: bad axis '" + axes[static_cast<std::size_t>(i)] + "'");
            }
            const int src = a[0] - 'x';
            if (used[static_cast<std::size_t>(src)]) {
                throw ConfigError("axis_remap: source axis '" + a + "' used twice");
            }
            used[static_cast<std::size_t>(src)] = true;
            r.matrix(i, src) = sign;
        }
        return r;
    }

    static AxisRemap y_up() { return from_axes({"z", "x", "y"}); }
    static AxisRemap identity() { return from_axes({"x", "y", "z"}); }

    Vec3 to_robot(const Vec3& v) const { return matrix * v; }
    // Exact inverse: the matrix is a signed permutation.
    Vec3 to_source(const Vec3& v) const { return transpose(matrix) * v; }
};

struct SkeletonFrame {
    std::array<Vec3, kSkeletonJoints> joints{};

    const Vec3& operator[](int i) const { return joints[static_cast<std::size_t>(i)]; }
    Vec3& operator[](int i) { return joints[static_cast<std::size_t>(i)]; }
};

struct MotionSequence {
    std::vector<SkeletonFrame> frames;
    double fps = 20.0;
    std::string label;
    std::string joint_layout = "humanml3d";
};

// Per-frame finiteness and limb-segment checks; `where` prefixes messages.
inline void validate_frame(const SkeletonFrame& f, const JointLayout& layout, const std::string& where) {
    for (int i = 0; i < kSkeletonJoints; ++i) {
        if (!is_finite(f[i])) {
            throw ParseError(where + ": joint " + std::to_string(i) + " is not finite");
        }
    }
    for (Limb l : kLimbs) {
        const auto c = layout.chain(l);
        if (!(norm(f[c.middle] - f[c.proximal]) > 0.0) || !(norm(f[c.distal] - f[c.middle]) > 0.0)) {
            throw ParseError(where + ": zero-length segment on " + limb_name(l));
        }
    }
}

namespace detail {

// Maps a byte offset in a line-oriented motion file to the frame it falls in,
// assuming one frame per line after the line holding the "frames" key.
inline int frame_of_offset(const std::string& text, std::size_t offset) {
    const std::size_t key = text.find("\"frames\"");
    if (key == std::string::npos || offset < key) return -1;
    int line = 0;
    const std::size_t end = std::min(offset, text.size());
    std::size_t pos = text.find('\n', key);
    while (pos != std::string::npos && pos < end) {
        ++line;
        pos = text.find('\n', pos + 1);
    }
    return line - 1;
}

}  // namespace detail

inline MotionSequence parse_motion(const std::string& text, const AxisRemap& remap = AxisRemap::y_up(),
                                   const JointLayout& layout = JointLayout::humanml3d()) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const int frame = detail::frame_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
        std::string msg = "motion file is not valid JSON";
        if (frame >= 0) msg += " at frame " + std::to_string(frame);
        throw ParseError(msg + " (" + e.what() + ")");
    }
    if (!doc.is_object()) throw ParseError("motion file: top level must be an object");

    MotionSequence seq;
    try {
        seq.fps = doc.at("fps").get<double>();
        seq.joint_layout = doc.value("joint_layout", std::string("humanml3d"));
        seq.label = doc.value("label", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("motion file header: ") + e.what());
    }
    if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) throw ParseError("motion file: fps must be > 0");
    if (seq.joint_layout != layout.name) {
        throw ParseError("motion file declares layout '" + seq.joint_layout + "' but '" + layout.name +
                         "' is configured");
    }
    if (!doc.contains("frames") || !doc["frames"].is_array()) {
        throw ParseError("motion file: missing \"frames\" array");
    }
    const auto& frames = doc["frames"];
    if (frames.empty()) throw ParseError("motion file: no frames");

    seq.frames.reserve(frames.size());
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
        const std::string where = "frame " + std::to_string(fi);
        const auto& jf = frames[fi];
        if (!jf.is_array()) throw ParseError(where + ": expected an array of joints");
        if (jf.size() != kSkeletonJoints) {
            throw ParseError(where + ": has " + std::to_string(jf.size()) + " joints, expected 22");
        }
        SkeletonFrame f;
        for (int ji = 0; ji < kSkeletonJoints; ++ji) {
            const auto& p = jf[static_cast<std::size_t>(ji)];
            if (!p.is_array() || p.size() != 3) {
                throw ParseError(where + ": joint " + std::to_string(ji) + " must be [x, y, z]");
            }
            Vec3 v;
            for (int k = 0; k < 3; ++k) {
                const auto& c = p[static_cast<std::size_t>(k)];
                // NaN/Inf serialize as null in JSON
                if (!c.is_number()) {
                    throw ParseError(where + ": joint " + std::to_string(ji) + " is not finite");
                }
                v[k] = c.get<double>();
            }
            f[ji] = remap.to_robot(v);
        }
        validate_frame(f, layout, where);
        seq.frames.push_back(f);
    }
    return seq;
}

inline MotionSequence load_motion(const std::filesystem::path& path, const AxisRemap& remap = AxisRemap::y_up(),
                                  const JointLayout& layout = JointLayout::humanml3d()) {
    return parse_motion(read_file(path), remap, layout);
}

// Inverse of parse_motion: coordinates go back to the source convention, one
// frame per line.
inline std::string serialize_motion(const MotionSequence& seq, const AxisRemap& remap = AxisRemap::y_up()) {
    std::ostringstream out;
    out << "{\"fps\": " << nlohmann::json(seq.fps).dump() << ", \"joint_layout\": "
        << nlohmann::json(seq.joint_layout).dump() << ", \"label\": " << nlohmann::json(seq.label).dump()
        << ",\n\"frames\": [\n";
    for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
        nlohmann::json jf = nlohmann::json::array();
        for (const Vec3& p : seq.frames[fi].joints) {
            const Vec3 s = remap.to_source(p);
            jf.push_back({s.x, s.y, s.z});
        }
        out << jf.dump() << (fi + 1 < seq.frames.size() ? ",\n" : "\n");
    }
    out << "]}\n";
    return out.str();
}

inline void save_motion(const MotionSequence& seq, const std::filesystem::path& path,
                        const AxisRemap& remap = AxisRemap::y_up()) {
    write_file_atomic(path, serialize_motion(seq, remap));
}

// ---------------------------------------------------------------------------
// Root frame
// ---------------------------------------------------------------------------

// Counters for inputs that hit the identity branch of rotation_between.
struct Diagnostics {
    std::size_t degenerate_root_frames = 0;
    std::size_t degenerate_limb_rotations = 0;
};

// Heading of a frame: (root -> right hip) x (root -> left hip), projected onto
// the horizontal plane and normalized.
inline Vec3 root_forward(const SkeletonFrame& f, const JointLayout& layout = JointLayout::humanml3d()) {
    const Vec3 to_right = f[layout.right_hip] - f[layout.root];
    const Vec3 to_left = f[layout.left_hip] - f[layout.root];
    Vec3 fwd = cross(to_right, to_left);
    if (norm(fwd) < 1e-9) {
        throw DegenerateFrameError("root forward: root and hips are collinear");
    }
    fwd.z = 0.0;
    const double n = norm(fwd);
    if (n < 1e-9) {
        throw DegenerateFrameError("root forward: heading is vertical");
    }
    return fwd / n;
}

// `rotation` maps the first frame's forward vector onto the current one.
// `heading` is the yaw that takes the first frame's forward vector onto +x,
// so to_root() expresses current-frame vectors in a basis whose x axis is the
// first frame's heading.
struct RootFrame {
    Mat3 rotation = Mat3::identity();
    Mat3 heading = Mat3::identity();
    bool degenerate = false;

    static RootFrame identity() { return {}; }

    Vec3 to_root(const Vec3& world) const { return heading * (transpose(rotation) * world); }
};

inline RootFrame root_frame(const SkeletonFrame& first, const SkeletonFrame& current,
                            const JointLayout& layout = JointLayout::humanml3d(),
                            Diagnostics* diag = nullptr) {
    const Vec3 f0 = root_forward(first, layout);
    const Vec3 f = root_forward(current, layout);
    const VectorRotation vr = rotation_between_checked(f0, f);
    RootFrame rf;
    rf.rotation = vr.rotation;
    rf.heading = rot_z(-std::atan2(f0.y, f0.x));
    // Near-parallel headings legitimately take the identity branch; only the
    // antiparallel side is a wrong answer worth counting.
    rf.degenerate = vr.degenerate && dot(f0, f) < 0.0;
    if (rf.degenerate && diag) ++diag->degenerate_root_frames;
    return rf;
}

struct LimbVectors {
    Vec3 position;   // chain vector: shoulder -> wrist or hip -> ankle
    Vec3 direction;  // distal direction: elbow -> wrist or ankle -> foot
    double length = 0.0;  // proximal + distal segment length
};

inline std::array<LimbVectors, 4> limb_vectors(const SkeletonFrame& f, const RootFrame& rf,
                                               const JointLayout& layout = JointLayout::humanml3d()) {
    std::array<LimbVectors, 4> out;
    for (Limb l : kLimbs) {
        const auto c = layout.chain(l);
        const double upper = norm(f[c.middle] - f[c.proximal]);
        const double lower = norm(f[c.distal] - f[c.middle]);
        const Vec3 dir = f[c.tip] - (is_arm(l) ? f[c.middle] : f[c.distal]);
        if (!(upper > 1e-12) || !(lower > 1e-12) || !(norm(dir) > 1e-12)) {
            throw DegenerateFrameError(std::string("zero-length segment on ") + limb_name(l));
        }
        auto& lv = out[static_cast<std::size_t>(l)];
        lv.position = rf.to_root(f[c.distal] - f[c.proximal]);
        lv.direction = rf.to_root(dir);
        lv.length = upper + lower;
    }
    return out;
}

}  // namespace retarget
