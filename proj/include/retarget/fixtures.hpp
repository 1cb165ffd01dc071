#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "retarget/geom.hpp"
#include "retarget/robot.hpp"
#include "retarget/skeleton.hpp"

// Synthetic human motion built from robot poses. A skeleton whose limb
// keypoints are a uniformly scaled copy of the robot's FK keypoints has the
// same descriptors as the robot pose, so retargeting it has a known optimum.
namespace retarget::fixtures {

// Places the 22 HumanML3D keypoints: limb joints from FK scaled by `scale`,
// torso/head joints on a plausible spine, then yaw about z and translation.
inline SkeletonFrame human_frame_from_robot(const JointVector& q, const RobotModel& model, double scale = 3.5,
                                            double yaw = 0.0, const Vec3& offset = {}) {
    const FkResult r = fk(q, model);
    const JointLayout L = JointLayout::humanml3d();
    SkeletonFrame f;
    auto kp = [&](Side s, Keypoint k) { return r.at(s, k) * scale; };

    f[L.left_shoulder] = kp(Side::left, Keypoint::shoulder);
    f[L.right_shoulder] = kp(Side::right, Keypoint::shoulder);
    f[L.left_elbow] = kp(Side::left, Keypoint::elbow);
    f[L.right_elbow] = kp(Side::right, Keypoint::elbow);
    f[L.left_wrist] = kp(Side::left, Keypoint::wrist);
    f[L.right_wrist] = kp(Side::right, Keypoint::wrist);
    f[L.left_hip] = kp(Side::left, Keypoint::hip);
    f[L.right_hip] = kp(Side::right, Keypoint::hip);
    f[L.left_knee] = kp(Side::left, Keypoint::knee);
    f[L.right_knee] = kp(Side::right, Keypoint::knee);
    f[L.left_ankle] = kp(Side::left, Keypoint::ankle);
    f[L.right_ankle] = kp(Side::right, Keypoint::ankle);
    f[L.left_foot] = kp(Side::left, Keypoint::foot);
    f[L.right_foot] = kp(Side::right, Keypoint::foot);

    // pelvis sits above the hip line so the hip cross product points forward
    const Vec3 hip_mid = (f[L.left_hip] + f[L.right_hip]) * 0.5;
    const Vec3 sh_mid = (f[L.left_shoulder] + f[L.right_shoulder]) * 0.5;
    const double torso = sh_mid.z - hip_mid.z;
    f[L.root] = hip_mid + Vec3{0, 0, 0.2 * torso};
    f[3] = hip_mid + Vec3{0, 0, 0.4 * torso};   // spine1
    f[6] = hip_mid + Vec3{0, 0, 0.6 * torso};   // spine2
    f[9] = hip_mid + Vec3{0, 0, 0.8 * torso};   // spine3
    f[12] = sh_mid + Vec3{0, 0, 0.15 * torso};  // neck
    f[13] = sh_mid * 0.5 + f[L.left_shoulder] * 0.5;   // left collar
    f[14] = sh_mid * 0.5 + f[L.right_shoulder] * 0.5;  // right collar
    f[15] = sh_mid + Vec3{0, 0, 0.45 * torso};  // head

    const Mat3 rz = rot_z(yaw);
    for (auto& p : f.joints) p = rz * p + offset;
    return f;
}

// Commanded joint trajectory of a right-hand wave: the right arm is raised
// with the forearm swinging; the left arm hangs; knees slightly bent.
inline CommandVector wave_command(const RobotModel& model, double t) {
    JointVector q{};
    auto set = [&](const char* name, double v) { q[static_cast<std::size_t>(model.joint_index(name))] = v; };
    const double phase = 2.0 * std::numbers::pi * 1.25 * t;
    set("RShoulderPitch", -1.1 + 0.1 * std::sin(0.5 * phase));
    set("RShoulderRoll", -0.35);
    set("RElbowYaw", 1.2);
    set("RElbowRoll", 0.75 + 0.45 * std::sin(phase));
    set("RWristYaw", 0.0);
    set("LShoulderPitch", 1.35);
    set("LShoulderRoll", 0.15);
    set("LElbowYaw", -0.6);
    set("LElbowRoll", -0.35);
    set("LHipYawPitch", -0.05);
    set("LHipRoll", 0.05);
    set("LHipPitch", -0.25);
    set("LKneePitch", 0.5);
    set("LAnklePitch", -0.25);
    set("LAnkleRoll", -0.05);
    set("RHipRoll", -0.05);
    set("RHipPitch", -0.25);
    set("RKneePitch", 0.5);
    set("RAnklePitch", -0.25);
    set("RAnkleRoll", 0.05);
    CommandVector c{};
    for (int k = 0; k < kCommandDims; ++k) {
        c[static_cast<std::size_t>(k)] = q[static_cast<std::size_t>(model.command_order[static_cast<std::size_t>(k)])];
    }
    return c;
}

inline MotionSequence wave_motion(const RobotModel& model, int frames = 40, double fps = 20.0) {
    MotionSequence seq;
    seq.fps = fps;
    seq.label = "a person waves the right hand";
    for (int i = 0; i < frames; ++i) {
        const JointVector q = expand_command(wave_command(model, i / fps), model);
        seq.frames.push_back(human_frame_from_robot(q, model, 3.5, 0.0, {0.2, -0.1, 0.9}));
    }
    return seq;
}

}  // namespace retarget::fixtures
