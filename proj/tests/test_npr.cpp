#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "retarget/npr.hpp"
#include "test_support.hpp"

namespace retarget {
namespace {

using testing::nao;
using testing::random_command;
using testing::random_quat;
using testing::rel_error;

constexpr double kPi = std::numbers::pi;
const Quat kQuarterZ{std::numbers::sqrt2 / 2, 0, 0, std::numbers::sqrt2 / 2};

DescriptorVector descriptor_of(const CommandVector& c) {
    return flatten(robot_descriptor(fk(expand_command(c, nao()), nao()), nao()));
}

TEST(QuatLoss, Examples) {
    EXPECT_EQ(quat_loss(kQuarterZ, kQuarterZ), 0.0);
    EXPECT_NEAR(quat_loss(Quat::identity(), kQuarterZ), kPi / 2, 1e-12);
    EXPECT_NEAR(quat_loss(kQuarterZ, -kQuarterZ), 0.0, 1e-7);
}

TEST(QuatLoss, RejectsNonUnit) {
    EXPECT_THROW(quat_loss({1.1, 0, 0, 0}, Quat::identity()), ValidationError);
    EXPECT_THROW(quat_loss(Quat::identity(), {0, 0, 0, 0}), ValidationError);
}

TEST(QuatLoss, SymmetricAndLeftInvariant) {
    Rng rng(41);
    for (int i = 0; i < 1000; ++i) {
        const Quat a = random_quat(rng), b = random_quat(rng), g = random_quat(rng);
        const double ab = quat_loss(a, b);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, kPi + 1e-12);
        EXPECT_NEAR(ab, quat_loss(b, a), 1e-12);
        EXPECT_NEAR(ab, quat_loss(quat_mul(g, a), quat_mul(g, b)), 1e-6);
    }
}

TEST(TransLoss, Examples) {
    EXPECT_EQ(trans_loss({1, 2, 3}, {1, 2, 3}), 0.0);
    EXPECT_DOUBLE_EQ(trans_loss({0, 0, 0}, {1, 1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(trans_loss({0, 0, 0}, {3, 0, 0}), 3.0);
}

TEST(NprLoss, Examples) {
    const NprWeights w{0.7, 1.3, 0.162, 0.203};
    PoseDescriptor target;
    EXPECT_EQ(npr_loss(target, target, w), 0.0);

    const double delta = 0.2;
    PoseDescriptor pos_off = target;
    pos_off[Limb::left_arm].norm_pos.x += delta;
    // w_trans * l_arm * mean(left MSE, right MSE) = 0.7 * 0.162 * (delta^2 / 3) / 2
    EXPECT_NEAR(npr_loss(target, pos_off, w), 0.7 * 0.162 * (delta * delta / 3.0) / 2.0, 1e-15);

    PoseDescriptor rot_off = target;
    rot_off[Limb::left_arm].rot = kQuarterZ;
    EXPECT_NEAR(npr_loss(target, rot_off, w), 1.3 * (kPi / 2) / 4.0, 1e-12);
}

TEST(NprLoss, WeightsIsolateTerms) {
    Rng rng(42);
    const RobotModel& m = nao();
    for (int i = 0; i < 50; ++i) {
        const PoseDescriptor a = unflatten(descriptor_of(random_command(rng, m)));
        const PoseDescriptor b = unflatten(descriptor_of(random_command(rng, m)));
        const NprBreakdown full = npr_breakdown(a, b, NprWeights::for_robot(m));
        EXPECT_NEAR(npr_loss(a, b, NprWeights::for_robot(m, 1.0, 0.0)), full.trans_total, 1e-15);
        EXPECT_NEAR(npr_loss(a, b, NprWeights::for_robot(m, 0.0, 1.0)), full.quat, 1e-15);
        EXPECT_GE(full.total, 0.0);
    }
}

TEST(NprWeights, Validation) {
    EXPECT_NO_THROW(NprWeights::for_robot(nao()).validate());
    EXPECT_THROW((NprWeights{0, 0, 1, 1}.validate()), ConfigError);
    EXPECT_THROW((NprWeights{-1, 1, 1, 1}.validate()), ConfigError);
    EXPECT_THROW((NprWeights{1, 1, 0, 1}.validate()), ConfigError);
}

TEST(NprLoss, DescriptorGradientPathAgreesWithLoss) {
    Rng rng(43);
    const RobotModel& m = nao();
    const NprWeights w = NprWeights::for_robot(m, 0.8, 1.7);
    for (int i = 0; i < 100; ++i) {
        const DescriptorVector t = descriptor_of(random_command(rng, m));
        const CommandVector c = random_command(rng, m);
        const double direct = npr_loss(unflatten(t), unflatten(descriptor_of(c)), w);
        EXPECT_NEAR(npr_loss_and_grad(t, c, m, w).loss, direct, 1e-12);
        EXPECT_NEAR(npr_loss_at(t, c, m, w), direct, 1e-12);
    }
}

TEST(NprGrad, ZeroAtTarget) {
    Rng rng(44);
    const RobotModel& m = nao();
    for (int i = 0; i < 20; ++i) {
        const CommandVector c = random_command(rng, m);
        const LossGrad lg = npr_loss_and_grad(descriptor_of(c), c, m, NprWeights::for_robot(m));
        EXPECT_EQ(lg.loss, 0.0);
        for (double g : lg.grad) EXPECT_NEAR(g, 0.0, 1e-8);
    }
}

TEST(NprGrad, MatchesCentralDifferences) {
    Rng rng(45);
    const RobotModel& m = nao();
    const NprWeights w = NprWeights::for_robot(m, 1.0, 1.0);
    const double h = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const DescriptorVector t = descriptor_of(random_command(rng, m));
        const CommandVector c = random_command(rng, m, 0.01);
        const LossGrad lg = npr_loss_and_grad(t, c, m, w);
        for (std::size_t k = 0; k < kCommandDims; ++k) {
            CommandVector cp = c, cm = c;
            cp[k] += h;
            cm[k] -= h;
            const double fd = (npr_loss_at(t, cp, m, w) - npr_loss_at(t, cm, m, w)) / (2 * h);
            EXPECT_LT(rel_error(lg.grad[k], fd), 1e-5) << "trial " << trial << " joint " << k;
            ++checked;
        }
    }
    EXPECT_EQ(checked, 100 * kCommandDims);
}

TEST(NprGrad, NoProjectionAtLimits) {
    const RobotModel& m = nao();
    CommandVector c{};
    c[0] = m.command_joint(0).q_max;  // LShoulderPitch at its upper stop
    Rng rng(46);
    const DescriptorVector t = descriptor_of(random_command(rng, m));
    const LossGrad lg = npr_loss_and_grad(t, c, m, NprWeights::for_robot(m));
    const double h = 1e-6;
    CommandVector cm = c;
    cm[0] -= h;
    // one-sided difference from inside; the gradient is reported unmodified
    const double fd = (npr_loss_at(t, c, m, NprWeights::for_robot(m)) - npr_loss_at(t, cm, m, NprWeights::for_robot(m))) / h;
    EXPECT_NEAR(lg.grad[0], fd, 1e-4 * std::max(1.0, std::abs(fd)));
}

TEST(NprGrad, SmallStepAlongNegativeGradientDescends) {
    Rng rng(47);
    const RobotModel& m = nao();
    const NprWeights w = NprWeights::for_robot(m);
    for (int i = 0; i < 100; ++i) {
        const DescriptorVector t = descriptor_of(random_command(rng, m));
        const CommandVector c = random_command(rng, m, 0.05);
        const LossGrad lg = npr_loss_and_grad(t, c, m, w);
        double gn = 0.0;
        for (double g : lg.grad) gn += g * g;
        ASSERT_GT(gn, 0.0);
        CommandVector step = c;
        const double eta = 1e-4 / std::sqrt(gn);
        for (std::size_t k = 0; k < kCommandDims; ++k) step[k] -= eta * lg.grad[k];
        EXPECT_LT(npr_loss_at(t, step, m, w), lg.loss);
    }
}

}  // namespace
}  // namespace retarget
