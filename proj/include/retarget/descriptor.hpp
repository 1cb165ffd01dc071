#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

#include "retarget/error.hpp"
#include "retarget/geom.hpp"
#include "retarget/robot.hpp"
#include "retarget/skeleton.hpp"

namespace retarget {

inline constexpr int kLimbFeatures = 7;  // qw qx qy qz dx dy dz
inline constexpr int kDescriptorDims = 4 * kLimbFeatures;

using DescriptorVector = std::array<double, kDescriptorDims>;

struct LimbDescriptor {
    Vec3 norm_pos;                  // chain vector / limb length
    Quat rot = Quat::identity();    // default distal direction -> observed
};

// Limbs in fixed order: left arm, right arm, left leg, right leg.
struct PoseDescriptor {
    std::array<LimbDescriptor, 4> limbs{};

    LimbDescriptor& operator[](Limb l) { return limbs[static_cast<std::size_t>(l)]; }
    const LimbDescriptor& operator[](Limb l) const { return limbs[static_cast<std::size_t>(l)]; }
};

// Rest directions of the distal segments, in the robot frame.
struct DefaultDirections {
    Vec3 arm{1, 0, 0};
    Vec3 foot{1, 0, 0};

    static DefaultDirections of(const RobotModel& m) { return {m.default_arm_dir, m.default_foot_dir}; }

    const Vec3& operator()(Limb l) const { return is_arm(l) ? arm : foot; }
};

// Quaternion of the rotation taking `rest` onto `observed`. Antiparallel (and
// near-parallel) pairs take the identity branch; antiparallel ones are counted.
inline Quat limb_rotation(const Vec3& rest, const Vec3& observed, Diagnostics* diag = nullptr) {
    if (!(norm(observed) > 1e-12)) {
        throw DegenerateFrameError("limb direction vector has zero length");
    }
    const VectorRotation vr = rotation_between_checked(rest, observed);
    if (vr.degenerate && dot(rest, observed) < 0.0 && diag) ++diag->degenerate_limb_rotations;
    return mat_to_quat(vr.rotation);
}

inline PoseDescriptor human_descriptor(const SkeletonFrame& frame, const RootFrame& rf,
                                       const JointLayout& layout = JointLayout::humanml3d(),
                                       const DefaultDirections& rest = {}, Diagnostics* diag = nullptr) {
    const auto lv = limb_vectors(frame, rf, layout);
    PoseDescriptor pd;
    for (Limb l : kLimbs) {
        const auto& v = lv[static_cast<std::size_t>(l)];
        pd[l].norm_pos = v.position / v.length;
        pd[l].rot = limb_rotation(rest(l), v.direction, diag);
    }
    return pd;
}

// Descriptors for every frame of a sequence, rooted at its first frame.
inline std::vector<PoseDescriptor> human_descriptors(const MotionSequence& seq,
                                                     const JointLayout& layout = JointLayout::humanml3d(),
                                                     const DefaultDirections& rest = {},
                                                     Diagnostics* diag = nullptr) {
    std::vector<PoseDescriptor> out;
    out.reserve(seq.frames.size());
    for (const auto& f : seq.frames) {
        out.push_back(human_descriptor(f, root_frame(seq.frames.front(), f, layout, diag), layout, rest, diag));
    }
    return out;
}

inline PoseDescriptor robot_descriptor(const FkResult& fkr, const RobotModel& model, Diagnostics* diag = nullptr) {
    const DefaultDirections rest = DefaultDirections::of(model);
    PoseDescriptor pd;
    for (Limb l : kLimbs) {
        const LimbKeypoints k = limb_keypoints(l);
        const auto& kp = fkr.keypoints;
        pd[l].norm_pos = (kp[static_cast<std::size_t>(k.distal)] - kp[static_cast<std::size_t>(k.proximal)]) /
                         model.limb_length[static_cast<std::size_t>(l)];
        pd[l].rot = limb_rotation(rest(l), kp[static_cast<std::size_t>(k.tip)] - kp[static_cast<std::size_t>(k.direction_base)],
                                  diag);
    }
    return pd;
}

inline DescriptorVector flatten(const PoseDescriptor& pd) {
    DescriptorVector v{};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& d = pd.limbs[i];
        double* o = v.data() + i * kLimbFeatures;
        o[0] = d.rot.w;
        o[1] = d.rot.x;
        o[2] = d.rot.y;
        o[3] = d.rot.z;
        o[4] = d.norm_pos.x;
        o[5] = d.norm_pos.y;
        o[6] = d.norm_pos.z;
    }
    return v;
}

// Finite entries and unit quaternions (within 1e-6).
inline void validate_descriptor(const DescriptorVector& t) {
    for (std::size_t i = 0; i < kDescriptorDims; ++i) {
        if (!std::isfinite(t[i])) throw ValidationError("descriptor entry " + std::to_string(i) + " is not finite");
    }
    for (Limb l : kLimbs) {
        const std::size_t o = static_cast<std::size_t>(l) * kLimbFeatures;
        if (!is_unit(Quat{t[o], t[o + 1], t[o + 2], t[o + 3]}, 1e-6)) {
            throw ValidationError(std::string("descriptor: ") + limb_name(l) + " quaternion is not unit length");
        }
    }
}

inline PoseDescriptor unflatten(std::span<const double> v) {
    if (v.size() != kDescriptorDims) {
        throw ValidationError("descriptor vector has " + std::to_string(v.size()) + " entries, expected 28");
    }
    PoseDescriptor pd;
    for (std::size_t i = 0; i < 4; ++i) {
        const double* o = v.data() + i * kLimbFeatures;
        pd.limbs[i].rot = {o[0], o[1], o[2], o[3]};
        pd.limbs[i].norm_pos = {o[4], o[5], o[6]};
    }
    return pd;
}

// ---------------------------------------------------------------------------
// Derivatives
// ---------------------------------------------------------------------------

// 4x3 Jacobian of limb_rotation(rest, d) w.r.t. d, row-major (quat component,
// direction component). Uses the half-way form q = normalize(1 + a.u, a x u),
// which equals the Rodrigues route off the identity branch; zero on it.
inline std::array<double, 12> limb_rotation_jacobian(const Vec3& rest, const Vec3& d) {
    std::array<double, 12> jac{};
    const VectorRotation vr = rotation_between_checked(rest, d);
    if (vr.degenerate) return jac;

    const Vec3 a = normalized(rest);
    const double dn = norm(d);
    const Vec3 u = d / dn;
    const Vec3 axu = cross(a, u);
    const std::array<double, 4> r{1.0 + dot(a, u), axu.x, axu.y, axu.z};
    const double rn = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3]);
    std::array<double, 4> q{};
    for (std::size_t i = 0; i < 4; ++i) q[i] = r[i] / rn;

    // dr/du: first row a^T, then the skew matrix of a
    const Mat3 ka = skew(a);
    std::array<double, 12> dr_du{};
    for (int c = 0; c < 3; ++c) {
        dr_du[static_cast<std::size_t>(c)] = a[c];
        for (int row = 0; row < 3; ++row) dr_du[static_cast<std::size_t>((row + 1) * 3 + c)] = ka(row, c);
    }
    // dq/du = (I - q q^T) / |r| * dr/du
    std::array<double, 12> dq_du{};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                s += ((i == k ? 1.0 : 0.0) - q[i] * q[k]) * dr_du[k * 3 + c];
            }
            dq_du[i * 3 + c] = s / rn;
        }
    }
    // du/dd = (I - u u^T) / |d|
    for (std::size_t i = 0; i < 4; ++i) {
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                s += dq_du[i * 3 + static_cast<std::size_t>(k)] * ((k == c ? 1.0 : 0.0) - u[k] * u[c]);
            }
            jac[i * 3 + static_cast<std::size_t>(c)] = s / dn;
        }
    }
    return jac;
}

// d(flatten(robot_descriptor)) / dq over all 22 joints.
using DescriptorJacobian = std::array<JointVector, kDescriptorDims>;

struct RobotDescriptorEval {
    FkResult fk;
    PoseDescriptor descriptor;
    DescriptorJacobian jacobian{};
};

inline RobotDescriptorEval robot_descriptor_with_jacobian(const JointVector& q, const RobotModel& model) {
    RobotDescriptorEval ev;
    ev.fk = detail::fk_unchecked(q, model);
    ev.descriptor = robot_descriptor(ev.fk, model);
    const KeypointJacobian kj = fk_jacobian(ev.fk, model);
    const DefaultDirections rest = DefaultDirections::of(model);

    for (Limb l : kLimbs) {
        const auto li = static_cast<std::size_t>(l);
        const LimbKeypoints k = limb_keypoints(l);
        const auto& kp = ev.fk.keypoints;
        const Vec3 dir = kp[static_cast<std::size_t>(k.tip)] - kp[static_cast<std::size_t>(k.direction_base)];
        const auto dq_dd = limb_rotation_jacobian(rest(l), dir);
        const double inv_len = 1.0 / model.limb_length[li];
        const auto& j_distal = kj.d[static_cast<std::size_t>(k.distal)];
        const auto& j_prox = kj.d[static_cast<std::size_t>(k.proximal)];
        const auto& j_tip = kj.d[static_cast<std::size_t>(k.tip)];
        const auto& j_base = kj.d[static_cast<std::size_t>(k.direction_base)];
        for (std::size_t j = 0; j < kRobotJoints; ++j) {
            const Vec3 dpos = (j_distal[j] - j_prox[j]) * inv_len;
            const Vec3 ddir = j_tip[j] - j_base[j];
            for (std::size_t c = 0; c < 4; ++c) {
                ev.jacobian[li * kLimbFeatures + c][j] =
                    dq_dd[c * 3 + 0] * ddir.x + dq_dd[c * 3 + 1] * ddir.y + dq_dd[c * 3 + 2] * ddir.z;
            }
            ev.jacobian[li * kLimbFeatures + 4][j] = dpos.x;
            ev.jacobian[li * kLimbFeatures + 5][j] = dpos.y;
            ev.jacobian[li * kLimbFeatures + 6][j] = dpos.z;
        }
    }
    return ev;
}

}  // namespace retarget
