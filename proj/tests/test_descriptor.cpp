#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "retarget/descriptor.hpp"
#include "retarget/fixtures.hpp"
#include "test_support.hpp"

namespace retarget {
namespace {

using testing::max_abs_diff;
using testing::nao;
using testing::random_command;

constexpr double kPi = std::numbers::pi;

SkeletonFrame base_frame() { return fixtures::human_frame_from_robot(JointVector{}, nao()); }

SkeletonFrame with_left_arm(const Vec3& elbow_off, const Vec3& wrist_off) {
    SkeletonFrame f = base_frame();
    const JointLayout L;
    f[L.left_elbow] = f[L.left_shoulder] + elbow_off;
    f[L.left_wrist] = f[L.left_shoulder] + wrist_off;
    return f;
}

// Independent route to the shortest-arc quaternion: normalize(1 + a.b, a x b).
Quat halfway_quat(const Vec3& from, const Vec3& to) {
    const Vec3 a = normalized(from), b = normalized(to);
    const Vec3 c = cross(a, b);
    return normalized(Quat{1.0 + dot(a, b), c.x, c.y, c.z});
}

double quat_diff(const Quat& a, const Quat& b) {
    return std::max({std::abs(a.w - b.w), std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
}

TEST(HumanDescriptor, StraightArmForward) {
    const PoseDescriptor pd = human_descriptor(with_left_arm({0.3, 0, 0}, {0.55, 0, 0}), RootFrame::identity());
    EXPECT_LT(max_abs_diff(pd[Limb::left_arm].norm_pos, {1, 0, 0}), 1e-15);
    EXPECT_EQ(pd[Limb::left_arm].rot, Quat::identity());
}

TEST(HumanDescriptor, HangingArm) {
    // [1,0,0] -> [0,0,-1]: axis x cross -z = +y, angle pi/2
    const PoseDescriptor pd = human_descriptor(with_left_arm({0, 0, -0.3}, {0, 0, -0.55}), RootFrame::identity());
    EXPECT_LT(max_abs_diff(pd[Limb::left_arm].norm_pos, {0, 0, -1}), 1e-15);
    const double h = std::numbers::sqrt2 / 2;
    EXPECT_LT(quat_diff(pd[Limb::left_arm].rot, {h, 0, h, 0}), 1e-15);
    EXPECT_LT(max_abs_diff(quat_rotate(pd[Limb::left_arm].rot, {1, 0, 0}), {0, 0, -1}), 1e-15);
}

TEST(HumanDescriptor, FoldedArm) {
    const PoseDescriptor pd = human_descriptor(with_left_arm({0.3, 0, 0}, {0.05, 0, 0}), RootFrame::identity());
    EXPECT_NEAR(norm(pd[Limb::left_arm].norm_pos), 0.05 / 0.55, 1e-15);
}

TEST(HumanDescriptor, AntiparallelForearmCountsDiagnostic) {
    Diagnostics diag;
    const PoseDescriptor pd = human_descriptor(with_left_arm({0.3, 0, 0}, {0.05, 0, 0}), RootFrame::identity(),
                                               JointLayout::humanml3d(), {}, &diag);
    EXPECT_EQ(pd[Limb::left_arm].rot, Quat::identity());
    EXPECT_EQ(diag.degenerate_limb_rotations, 1u);
}

TEST(HumanDescriptor, ScaleInvariance) {
    Rng rng(31);
    const RobotModel& m = nao();
    for (int i = 0; i < 50; ++i) {
        SkeletonFrame f = fixtures::human_frame_from_robot(expand_command(random_command(rng, m), m), m, 3.2,
                                                           rng.uniform(-3, 3), testing::random_vec(rng));
        for (auto& p : f.joints) p += testing::random_vec(rng, 0.02);
        const SkeletonFrame first = fixtures::human_frame_from_robot(JointVector{}, m, 3.2, rng.uniform(-3, 3));
        const DescriptorVector ref = flatten(human_descriptor(f, root_frame(first, f)));
        for (double s : {0.5, 1.0, 2.0, 10.0}) {
            SkeletonFrame fs = f, f0 = first;
            for (auto& p : fs.joints) p *= s;
            for (auto& p : f0.joints) p *= s;
            const DescriptorVector got = flatten(human_descriptor(fs, root_frame(f0, fs)));
            for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], ref[k], 1e-9) << "s=" << s;
        }
    }
}

TEST(HumanDescriptor, UnitCanonicalQuaternions) {
    Rng rng(32);
    const RobotModel& m = nao();
    for (int i = 0; i < 200; ++i) {
        SkeletonFrame f = fixtures::human_frame_from_robot(expand_command(random_command(rng, m), m), m);
        for (auto& p : f.joints) p += testing::random_vec(rng, 0.05);
        const PoseDescriptor pd = human_descriptor(f, RootFrame::identity());
        for (const auto& l : pd.limbs) {
            EXPECT_TRUE(is_unit(l.rot));
            EXPECT_GE(l.rot.w, 0.0);
            EXPECT_LE(norm(l.norm_pos), 1.0 + 1e-6);
        }
    }
}

TEST(LimbRotation, AgreesWithHalfwayQuaternion) {
    Rng rng(33);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 a = testing::random_vec(rng), b = testing::random_vec(rng);
        const VectorRotation vr = rotation_between_checked(a, b);
        if (vr.degenerate) continue;
        EXPECT_LT(quat_diff(limb_rotation(a, b), halfway_quat(a, b)), 1e-12);
    }
}

TEST(LimbRotation, JacobianMatchesCentralDifferences) {
    Rng rng(34);
    const double h = 1e-6;
    for (int i = 0; i < 200; ++i) {
        const Vec3 rest = testing::random_unit(rng);
        const Vec3 d = testing::random_vec(rng, 2.0);
        if (rotation_between_checked(rest, d).degenerate || norm(cross(normalized(rest), normalized(d))) < 0.05) {
            continue;
        }
        const auto jac = limb_rotation_jacobian(rest, d);
        for (int c = 0; c < 3; ++c) {
            Vec3 dp = d, dm = d;
            dp[c] += h;
            dm[c] -= h;
            const Quat qp = limb_rotation(rest, dp), qm = limb_rotation(rest, dm);
            const double fd[4] = {(qp.w - qm.w) / (2 * h), (qp.x - qm.x) / (2 * h), (qp.y - qm.y) / (2 * h),
                                  (qp.z - qm.z) / (2 * h)};
            for (std::size_t r = 0; r < 4; ++r) {
                EXPECT_LT(testing::rel_error(jac[r * 3 + static_cast<std::size_t>(c)], fd[r]), 1e-6);
            }
        }
    }
}

TEST(RobotDescriptor, ZeroPoseArmIsIdentity) {
    const PoseDescriptor pd = robot_descriptor(fk(JointVector{}, nao()), nao());
    EXPECT_EQ(pd[Limb::left_arm].rot, Quat::identity());
    EXPECT_EQ(pd[Limb::right_arm].rot, Quat::identity());
    EXPECT_EQ(pd[Limb::left_leg].rot, Quat::identity());
}

TEST(RobotDescriptor, ShoulderRollRotatesNormPosition) {
    const RobotModel& m = nao();
    const Vec3 p0 = robot_descriptor(fk(JointVector{}, m), m)[Limb::left_arm].norm_pos;
    for (double phi : {-0.3, 0.2, 0.7, 1.3}) {
        JointVector q{};
        q[static_cast<std::size_t>(m.joint_index("LShoulderRoll"))] = phi;
        const Vec3 p = robot_descriptor(fk(q, m), m)[Limb::left_arm].norm_pos;
        EXPECT_LT(max_abs_diff(p, rot_z(phi) * p0), 1e-12) << phi;
    }
}

TEST(RobotDescriptor, NormPositionBounded) {
    Rng rng(35);
    const RobotModel& m = nao();
    for (int i = 0; i < 1000; ++i) {
        const PoseDescriptor pd = robot_descriptor(fk(expand_command(random_command(rng, m), m), m), m);
        for (const auto& l : pd.limbs) EXPECT_LE(norm(l.norm_pos), 1.0 + 1e-6);
    }
}

// Robot keypoints scaled into a human skeleton give the same descriptor.
TEST(RobotDescriptor, MatchesScaledHumanCopy) {
    Rng rng(36);
    const RobotModel& m = nao();
    for (int i = 0; i < 50; ++i) {
        const JointVector q = expand_command(random_command(rng, m), m);
        const DescriptorVector r = flatten(robot_descriptor(fk(q, m), m));
        const SkeletonFrame f = fixtures::human_frame_from_robot(q, m, 3.7);
        const DescriptorVector h = flatten(human_descriptor(f, root_frame(f, f)));
        for (std::size_t k = 0; k < r.size(); ++k) EXPECT_NEAR(h[k], r[k], 1e-12);
    }
}

TEST(RobotDescriptor, JacobianMatchesCentralDifferences) {
    Rng rng(37);
    const RobotModel& m = nao();
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        const JointVector q = expand_command(random_command(rng, m, 0.01), m);
        const RobotDescriptorEval ev = robot_descriptor_with_jacobian(q, m);
        for (std::size_t j = 0; j < kRobotJoints; ++j) {
            JointVector qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const DescriptorVector fp = flatten(robot_descriptor(fk(qp, m), m));
            const DescriptorVector fm = flatten(robot_descriptor(fk(qm, m), m));
            for (std::size_t f = 0; f < kDescriptorDims; ++f) {
                EXPECT_LT(testing::rel_error(ev.jacobian[f][j], (fp[f] - fm[f]) / (2 * h)), 1e-5)
                    << "feature " << f << " joint " << m.joints[j].name;
            }
        }
    }
}

TEST(Flatten, Layout) {
    const DescriptorVector v = flatten(PoseDescriptor{});
    for (std::size_t l = 0; l < 4; ++l) {
        EXPECT_EQ(v[l * 7], 1.0);
        for (std::size_t c = 1; c < 7; ++c) EXPECT_EQ(v[l * 7 + c], 0.0);
    }
    const std::vector<double> short_vec(27, 0.0);
    EXPECT_THROW(unflatten(short_vec), ValidationError);
}

TEST(Flatten, RoundTrip) {
    Rng rng(38);
    for (int i = 0; i < 20; ++i) {
        PoseDescriptor pd;
        for (auto& l : pd.limbs) {
            l.rot = testing::random_quat(rng);
            l.norm_pos = testing::random_vec(rng);
        }
        const DescriptorVector v = flatten(pd);
        EXPECT_EQ(flatten(unflatten(v)), v);
    }
}

}  // namespace
}  // namespace retarget
