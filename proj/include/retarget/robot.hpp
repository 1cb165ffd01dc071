#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "retarget/error.hpp"
#include "retarget/file_io.hpp"
#include "retarget/geom.hpp"
#include "retarget/skeleton.hpp"

namespace retarget {

inline constexpr int kRobotJoints = 22;
inline constexpr int kCommandDims = 21;

using JointVector = std::array<double, kRobotJoints>;
using CommandVector = std::array<double, kCommandDims>;

enum class ActuatorClass : int { head = 0, arm = 1, leg_pitch = 2, leg_roll = 3, leg_yaw_pitch = 4 };
inline constexpr int kActuatorClasses = 5;

inline const char* actuator_class_name(ActuatorClass c) {
    switch (c) {
        case ActuatorClass::head: return "head";
        case ActuatorClass::arm: return "arm";
        case ActuatorClass::leg_pitch: return "leg_pitch";
        case ActuatorClass::leg_roll: return "leg_roll";
        case ActuatorClass::leg_yaw_pitch: return "leg_yaw_pitch";
    }
    return "?";
}

inline ActuatorClass actuator_class_from_name(const std::string& s) {
    for (int i = 0; i < kActuatorClasses; ++i) {
        const auto c = static_cast<ActuatorClass>(i);
        if (s == actuator_class_name(c)) return c;
    }
    throw ConfigError("unknown actuator_class '" + s + "'");
}

enum class Side : int { left = 0, right = 1 };
enum class Keypoint : int { shoulder = 0, elbow, wrist, hip, knee, ankle, foot };
inline constexpr int kKeypointsPerSide = 7;
inline constexpr int kKeypoints = 2 * kKeypointsPerSide;

inline const char* keypoint_name(Keypoint k) {
    static constexpr std::array<const char*, kKeypointsPerSide> names{
        "shoulder", "elbow", "wrist", "hip", "knee", "ankle", "foot"};
    return names[static_cast<std::size_t>(k)];
}

inline constexpr int keypoint_index(Side s, Keypoint k) {
    return static_cast<int>(s) * kKeypointsPerSide + static_cast<int>(k);
}

inline constexpr Side limb_side(Limb l) {
    return (l == Limb::left_arm || l == Limb::left_leg) ? Side::left : Side::right;
}

// Keypoints of a limb: proximal, middle, distal, and the end of the
// direction vector (which starts at middle for arms and distal for legs).
struct LimbKeypoints {
    int proximal, middle, distal, tip, direction_base;
};

inline constexpr LimbKeypoints limb_keypoints(Limb l) {
    const Side s = limb_side(l);
    if (is_arm(l)) {
        const int sh = keypoint_index(s, Keypoint::shoulder);
        const int el = keypoint_index(s, Keypoint::elbow);
        const int wr = keypoint_index(s, Keypoint::wrist);
        return {sh, el, wr, wr, el};
    }
    const int hp = keypoint_index(s, Keypoint::hip);
    const int kn = keypoint_index(s, Keypoint::knee);
    const int an = keypoint_index(s, Keypoint::ankle);
    const int ft = keypoint_index(s, Keypoint::foot);
    return {hp, kn, an, ft, an};
}

struct JointSpec {
    std::string name;
    int parent = -1;  // -1: torso root
    Vec3 origin;      // offset from the parent joint frame, meters
    Vec3 axis;        // unit, in the parent frame
    double q_min = 0.0;
    double q_max = 0.0;
    ActuatorClass actuator = ActuatorClass::arm;
};

struct KeypointBinding {
    int joint = -1;  // frame the keypoint is rigidly attached to
    Vec3 offset;     // in that joint's frame
};

struct RobotModel {
    std::string name;
    std::vector<JointSpec> joints;  // parents precede children
    std::array<KeypointBinding, kKeypoints> keypoints{};
    std::array<int, kCommandDims> command_order{};
    int mirror_source = -1;  // commanded HipYawPitch
    int mirror_target = -1;  // the coupled one, copied from mirror_source
    Vec3 default_arm_dir{1, 0, 0};
    Vec3 default_foot_dir{1, 0, 0};
    std::array<double, 4> limb_length{};  // per Limb, from the zero pose

    // Bit i set when joint i moves the given joint's frame.
    std::array<std::uint32_t, kRobotJoints> ancestors{};

    double arm_length() const { return limb_length[static_cast<std::size_t>(Limb::left_arm)]; }
    double leg_length() const { return limb_length[static_cast<std::size_t>(Limb::left_leg)]; }

    int joint_index(const std::string& n) const {
        for (std::size_t i = 0; i < joints.size(); ++i) {
            if (joints[i].name == n) return static_cast<int>(i);
        }
        return -1;
    }

    const JointSpec& command_joint(int k) const {
        return joints[static_cast<std::size_t>(command_order[static_cast<std::size_t>(k)])];
    }

    CommandVector command_min() const {
        CommandVector v{};
        for (int k = 0; k < kCommandDims; ++k) v[static_cast<std::size_t>(k)] = command_joint(k).q_min;
        return v;
    }
    CommandVector command_max() const {
        CommandVector v{};
        for (int k = 0; k < kCommandDims; ++k) v[static_cast<std::size_t>(k)] = command_joint(k).q_max;
        return v;
    }
};

struct FkResult {
    std::array<Vec3, kKeypoints> keypoints{};
    // Per joint frame: origin, orientation after the joint rotation, and the
    // joint axis in the root frame.
    std::array<Vec3, kRobotJoints> origin{};
    std::array<Mat3, kRobotJoints> rotation{};
    std::array<Vec3, kRobotJoints> axis{};

    const Vec3& at(Side s, Keypoint k) const {
        return keypoints[static_cast<std::size_t>(keypoint_index(s, k))];
    }
};

// d[k][j] = d(keypoint k) / d(q_j), root frame.
struct KeypointJacobian {
    std::array<std::array<Vec3, kRobotJoints>, kKeypoints> d{};
};

namespace detail {

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be a 3-vector");
    Vec3 v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    if (!is_finite(v)) throw ConfigError(what + " must be finite");
    return v;
}

inline FkResult fk_unchecked(const JointVector& q, const RobotModel& model) {
    FkResult r;
    for (std::size_t i = 0; i < model.joints.size(); ++i) {
        const JointSpec& j = model.joints[i];
        Vec3 p_parent;
        Mat3 r_parent = Mat3::identity();
        if (j.parent >= 0) {
            p_parent = r.origin[static_cast<std::size_t>(j.parent)];
            r_parent = r.rotation[static_cast<std::size_t>(j.parent)];
        }
        r.origin[i] = p_parent + r_parent * j.origin;
        r.axis[i] = r_parent * j.axis;
        r.rotation[i] = r_parent * axis_angle_matrix(j.axis, q[i]);
    }
    for (int k = 0; k < kKeypoints; ++k) {
        const auto& b = model.keypoints[static_cast<std::size_t>(k)];
        const auto bj = static_cast<std::size_t>(b.joint);
        r.keypoints[static_cast<std::size_t>(k)] = r.origin[bj] + r.rotation[bj] * b.offset;
    }
    return r;
}

}  // namespace detail

// Throws ConfigError on any structural problem. Populates derived fields
// (ancestors, limb lengths).
inline void finalize_robot(RobotModel& m) {
    if (static_cast<int>(m.joints.size()) != kRobotJoints) {
        throw ConfigError("robot config: expected 22 joints, found " + std::to_string(m.joints.size()));
    }
    for (std::size_t i = 0; i < m.joints.size(); ++i) {
        JointSpec& j = m.joints[i];
        if (j.parent >= static_cast<int>(i)) {
            throw ConfigError("robot config: joint '" + j.name + "' listed before its parent");
        }
        if (!(j.q_min < j.q_max)) {
            throw ConfigError("robot config: joint '" + j.name + "' needs q_min < q_max");
        }
        const double an = norm(j.axis);
        if (std::abs(an - 1.0) > 1e-6) {
            throw ConfigError("robot config: joint '" + j.name + "' axis is not unit length");
        }
        j.axis = j.axis / an;
        m.ancestors[i] = (j.parent >= 0 ? m.ancestors[static_cast<std::size_t>(j.parent)] : 0u) |
                         (1u << i);
    }

    if (m.mirror_source < 0 || m.mirror_target < 0) {
        throw ConfigError("robot config: HipYawPitch mirror joints are missing");
    }
    std::array<int, kRobotJoints> seen{};
    for (int idx : m.command_order) {
        if (idx < 0 || idx >= kRobotJoints) throw ConfigError("robot config: bad command_order entry");
        if (++seen[static_cast<std::size_t>(idx)] > 1) {
            throw ConfigError("robot config: joint '" + m.joints[static_cast<std::size_t>(idx)].name +
                              "' appears twice in command_order");
        }
    }
    if (seen[static_cast<std::size_t>(m.mirror_target)] != 0) {
        throw ConfigError("robot config: mirrored joint must not be commanded directly");
    }
    if (seen[static_cast<std::size_t>(m.mirror_source)] != 1) {
        throw ConfigError("robot config: mirror source must be commanded");
    }

    for (int k = 0; k < kKeypoints; ++k) {
        const int j = m.keypoints[static_cast<std::size_t>(k)].joint;
        if (j < 0 || j >= kRobotJoints) {
            throw ConfigError(std::string("robot config: keypoint '") +
                              keypoint_name(static_cast<Keypoint>(k % kKeypointsPerSide)) + "' is unbound");
        }
    }
    if (!(norm(m.default_arm_dir) > 0.0) || !(norm(m.default_foot_dir) > 0.0)) {
        throw ConfigError("robot config: default limb directions must be non-zero");
    }

    const FkResult zero = detail::fk_unchecked(JointVector{}, m);
    for (Limb l : kLimbs) {
        const LimbKeypoints lk = limb_keypoints(l);
        const double upper = norm(zero.keypoints[static_cast<std::size_t>(lk.middle)] -
                                  zero.keypoints[static_cast<std::size_t>(lk.proximal)]);
        const double lower = norm(zero.keypoints[static_cast<std::size_t>(lk.distal)] -
                                  zero.keypoints[static_cast<std::size_t>(lk.middle)]);
        const double dir = norm(zero.keypoints[static_cast<std::size_t>(lk.tip)] -
                                zero.keypoints[static_cast<std::size_t>(lk.direction_base)]);
        if (!(upper > 1e-9) || !(lower > 1e-9) || !(dir > 1e-9)) {
            throw ConfigError(std::string("robot config: zero-length segment on ") + limb_name(l));
        }
        m.limb_length[static_cast<std::size_t>(l)] = upper + lower;
    }
}

inline RobotModel parse_robot(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("robot config is not valid JSON: ") + e.what());
    }
    RobotModel m;
    try {
        m.name = doc.value("name", std::string("robot"));
        std::map<std::string, int> index;
        for (const auto& jj : doc.at("joints")) {
            JointSpec j;
            j.name = jj.at("name").get<std::string>();
            if (index.count(j.name)) throw ConfigError("robot config: duplicate joint '" + j.name + "'");
            const std::string parent = jj.value("parent", std::string("torso"));
            if (parent != "torso") {
                const auto it = index.find(parent);
                if (it == index.end()) {
                    throw ConfigError("robot config: joint '" + j.name + "' has unknown parent '" + parent + "'");
                }
                j.parent = it->second;
            }
            j.origin = detail::vec3_from_json(jj.at("origin_offset_m"), j.name + ".origin_offset_m");
            j.axis = detail::vec3_from_json(jj.at("axis"), j.name + ".axis");
            j.q_min = jj.at("q_min").get<double>();
            j.q_max = jj.at("q_max").get<double>();
            j.actuator = actuator_class_from_name(jj.at("actuator_class").get<std::string>());
            index[j.name] = static_cast<int>(m.joints.size());
            m.joints.push_back(j);
        }
        auto lookup = [&](const std::string& n) {
            const auto it = index.find(n);
            if (it == index.end()) throw ConfigError("robot config: unknown joint '" + n + "'");
            return it->second;
        };

        const auto& kps = doc.at("keypoints");
        for (Side s : {Side::left, Side::right}) {
            const auto& side = kps.at(s == Side::left ? "left" : "right");
            for (int k = 0; k < kKeypointsPerSide; ++k) {
                const auto& b = side.at(keypoint_name(static_cast<Keypoint>(k)));
                KeypointBinding kb;
                kb.joint = lookup(b.at("link").get<std::string>());
                if (b.contains("offset_m")) kb.offset = detail::vec3_from_json(b["offset_m"], "keypoint offset");
                m.keypoints[static_cast<std::size_t>(keypoint_index(s, static_cast<Keypoint>(k)))] = kb;
            }
        }

        const auto& order = doc.at("command_order");
        if (!order.is_array() || order.size() != kCommandDims) {
            throw ConfigError("robot config: command_order needs exactly 21 entries");
        }
        for (std::size_t k = 0; k < order.size(); ++k) m.command_order[k] = lookup(order[k].get<std::string>());

        const auto& mirror = doc.at("mirror");
        const auto src = index.find(mirror.at("source").get<std::string>());
        const auto dst = index.find(mirror.at("target").get<std::string>());
        m.mirror_source = src == index.end() ? -1 : src->second;
        m.mirror_target = dst == index.end() ? -1 : dst->second;

        if (doc.contains("default_arm_dir")) m.default_arm_dir = detail::vec3_from_json(doc["default_arm_dir"], "default_arm_dir");
        if (doc.contains("default_foot_dir")) m.default_foot_dir = detail::vec3_from_json(doc["default_foot_dir"], "default_foot_dir");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("robot config: ") + e.what());
    }
    finalize_robot(m);
    return m;
}

inline RobotModel load_robot(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
    return parse_robot(text);
}

// ---------------------------------------------------------------------------
// Commands and kinematics
// ---------------------------------------------------------------------------

// Slack on limit checks so values produced as q_min + s * (q_max - q_min)
// are not rejected over a rounding ulp.
inline constexpr double kLimitSlack = 1e-9;

inline void check_limits(const JointVector& q, const RobotModel& model) {
    for (std::size_t i = 0; i < q.size(); ++i) {
        const JointSpec& j = model.joints[i];
        if (!std::isfinite(q[i]) || q[i] < j.q_min - kLimitSlack || q[i] > j.q_max + kLimitSlack) {
            throw ValidationError("joint '" + j.name + "' = " + std::to_string(q[i]) + " outside [" +
                                  std::to_string(j.q_min) + ", " + std::to_string(j.q_max) + "]");
        }
    }
}

// Scatters a 21-entry command into the full joint map; the coupled
// HipYawPitch takes the commanded value of its partner.
inline JointVector expand_command_unchecked(const CommandVector& cmd, const RobotModel& model) {
    JointVector q{};
    for (int k = 0; k < kCommandDims; ++k) {
        q[static_cast<std::size_t>(model.command_order[static_cast<std::size_t>(k)])] = cmd[static_cast<std::size_t>(k)];
    }
    q[static_cast<std::size_t>(model.mirror_target)] = q[static_cast<std::size_t>(model.mirror_source)];
    return q;
}

inline JointVector expand_command(const CommandVector& cmd, const RobotModel& model) {
    JointVector q = expand_command_unchecked(cmd, model);
    check_limits(q, model);
    return q;
}

// Transpose of expand_command: a gradient over all 22 joints folded onto
// the 21 commanded ones.
inline CommandVector fold_gradient(const JointVector& g, const RobotModel& model) {
    CommandVector out{};
    for (int k = 0; k < kCommandDims; ++k) {
        const int j = model.command_order[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(k)] = g[static_cast<std::size_t>(j)];
        if (j == model.mirror_source) out[static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(model.mirror_target)];
    }
    return out;
}

inline FkResult fk(const JointVector& q, const RobotModel& model) {
    check_limits(q, model);
    return detail::fk_unchecked(q, model);
}

// Revolute-joint Jacobian: column j of keypoint x is axis_j x (x - origin_j)
// when joint j moves x's link, zero otherwise.
inline KeypointJacobian fk_jacobian(const FkResult& r, const RobotModel& model) {
    KeypointJacobian jac;
    for (int k = 0; k < kKeypoints; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const std::uint32_t chain = model.ancestors[static_cast<std::size_t>(model.keypoints[ku].joint)];
        const Vec3& x = r.keypoints[ku];
        for (std::size_t j = 0; j < kRobotJoints; ++j) {
            if (chain & (1u << j)) jac.d[ku][j] = cross(r.axis[j], x - r.origin[j]);
        }
    }
    return jac;
}

inline KeypointJacobian fk_jacobian(const JointVector& q, const RobotModel& model) {
    return fk_jacobian(fk(q, model), model);
}

}  // namespace retarget
