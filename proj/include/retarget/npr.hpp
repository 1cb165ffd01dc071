#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "retarget/descriptor.hpp"
#include "retarget/error.hpp"
#include "retarget/geom.hpp"
#include "retarget/robot.hpp"

namespace retarget {

// Loss weights. l_arm / l_leg scale the per-limb translational terms and are
// the robot's limb lengths in meters.
struct NprWeights {
    double w_trans = 1.0;
    double w_quat = 1.0;
    double l_arm = 1.0;
    double l_leg = 1.0;

    static NprWeights for_robot(const RobotModel& m, double w_trans = 1.0, double w_quat = 1.0) {
        return {w_trans, w_quat, m.arm_length(), m.leg_length()};
    }

    // Config-level check. The loss functions themselves accept any weights.
    void validate() const {
        if (!(w_trans >= 0.0) || !(w_quat >= 0.0)) throw ConfigError("npr weights must be >= 0");
        if (w_trans == 0.0 && w_quat == 0.0) throw ConfigError("npr weights: w_trans and w_quat are both zero");
        if (!(l_arm > 0.0) || !(l_leg > 0.0)) throw ConfigError("npr weights: limb lengths must be > 0");
    }
};

namespace detail {

inline void require_unit(const Quat& q, const char* which) {
    if (!is_unit(q, 1e-6)) {
        throw ValidationError(std::string("quat_loss: ") + which + " quaternion is not unit length");
    }
}

// Real part of target * pred^-1 for unit quaternions is their 4D dot product.
inline double relative_w(const Quat& target, const Quat& pred) { return dot(target, pred); }

}  // namespace detail

// Geodesic angle between two orientations, in [0, pi]. |w| folds the double
// cover so q and -q are the same orientation.
inline double quat_loss(const Quat& target, const Quat& pred) {
    detail::require_unit(target, "target");
    detail::require_unit(pred, "predicted");
    const Quat e = quat_mul(target, quat_inv(pred));
    return 2.0 * std::acos(std::clamp(std::abs(e.w), 0.0, 1.0));
}

inline double trans_loss(const Vec3& target, const Vec3& pred) {
    const Vec3 d = pred - target;
    return dot(d, d) / 3.0;
}

struct NprBreakdown {
    double trans_total = 0.0;  // l_arm * mean(arm MSE) + l_leg * mean(leg MSE)
    double quat = 0.0;         // mean of the four geodesic angles
    double total = 0.0;
};

inline NprBreakdown npr_breakdown(const PoseDescriptor& target, const PoseDescriptor& pred, const NprWeights& w) {
    NprBreakdown b;
    double arms = 0.0, legs = 0.0, quats = 0.0;
    for (Limb l : kLimbs) {
        const double t = trans_loss(target[l].norm_pos, pred[l].norm_pos);
        (is_arm(l) ? arms : legs) += t;
        quats += quat_loss(target[l].rot, pred[l].rot);
    }
    b.trans_total = w.l_arm * (arms / 2.0) + w.l_leg * (legs / 2.0);
    b.quat = quats / 4.0;
    b.total = w.w_trans * b.trans_total + w.w_quat * b.quat;
    return b;
}

inline double npr_loss(const PoseDescriptor& target, const PoseDescriptor& pred, const NprWeights& w) {
    return npr_breakdown(target, pred, w).total;
}

// Rotational penalty per limb: the geodesic angle itself, or its square. The
// square is smooth at zero error and serves as a descent surrogate.
enum class RotationPenalty { geodesic, squared_geodesic };

// Bit per Limb (in kLimbs order) selecting the terms that enter the loss.
inline constexpr unsigned kAllLimbs = 0xF;

// Loss and its gradient w.r.t. the flattened predicted descriptor. Unit-norm
// checks are skipped; callers feed descriptors built by this library. The
// arccos derivative is singular at |w| = 1 and is taken as 0 there.
inline double npr_loss_descriptor_grad(const DescriptorVector& target, const DescriptorVector& pred,
                                       const NprWeights& w, DescriptorVector& grad,
                                       RotationPenalty penalty = RotationPenalty::geodesic,
                                       unsigned limb_mask = kAllLimbs) {
    grad.fill(0.0);
    double arms = 0.0, legs = 0.0, quats = 0.0;
    for (Limb l : kLimbs) {
        if (!(limb_mask & (1u << static_cast<unsigned>(l)))) continue;
        const std::size_t o = static_cast<std::size_t>(l) * kLimbFeatures;
        const double coef_t = w.w_trans * (is_arm(l) ? w.l_arm : w.l_leg) / 2.0;
        double mse = 0.0;
        for (std::size_t c = 4; c < 7; ++c) {
            const double d = pred[o + c] - target[o + c];
            mse += d * d;
            grad[o + c] = coef_t * 2.0 * d / 3.0;
        }
        (is_arm(l) ? arms : legs) += mse / 3.0;

        double wd = 0.0;
        for (std::size_t c = 0; c < 4; ++c) wd += target[o + c] * pred[o + c];
        const double aw = std::min(std::abs(wd), 1.0);
        const double angle = 2.0 * std::acos(aw);
        const double sign = wd < 0.0 ? -1.0 : 1.0;
        double dl_dw = 0.0;
        if (penalty == RotationPenalty::geodesic) {
            quats += angle;
            if (aw < 1.0) dl_dw = -2.0 / std::sqrt(1.0 - aw * aw) * sign;
        } else {
            quats += angle * angle;
            // d(angle^2)/d|w| -> -8 as |w| -> 1
            dl_dw = (aw < 1.0 ? -4.0 * angle / std::sqrt(1.0 - aw * aw) : -8.0) * sign;
        }
        if (dl_dw != 0.0) {
            const double coef_q = w.w_quat / 4.0;
            for (std::size_t c = 0; c < 4; ++c) grad[o + c] = coef_q * dl_dw * target[o + c];
        }
    }
    return w.w_trans * (w.l_arm * (arms / 2.0) + w.l_leg * (legs / 2.0)) + w.w_quat * (quats / 4.0);
}

struct LossGrad {
    double loss = 0.0;
    CommandVector grad{};
};

// NPR loss of the robot pose reached by `cmd` against `target`, with the
// gradient w.r.t. the 21 commanded joints (chain rule through FK and the
// descriptor). No projection onto the limits happens here.
inline LossGrad npr_loss_and_grad(const DescriptorVector& target, const CommandVector& cmd, const RobotModel& model,
                                  const NprWeights& w, RotationPenalty penalty = RotationPenalty::geodesic,
                                  unsigned limb_mask = kAllLimbs) {
    const JointVector q = expand_command_unchecked(cmd, model);
    const RobotDescriptorEval ev = robot_descriptor_with_jacobian(q, model);
    DescriptorVector dl{};
    LossGrad out;
    out.loss = npr_loss_descriptor_grad(target, flatten(ev.descriptor), w, dl, penalty, limb_mask);
    JointVector g{};
    for (std::size_t f = 0; f < kDescriptorDims; ++f) {
        if (dl[f] == 0.0) continue;
        for (std::size_t j = 0; j < kRobotJoints; ++j) g[j] += dl[f] * ev.jacobian[f][j];
    }
    out.grad = fold_gradient(g, model);
    return out;
}

inline double npr_loss_at(const DescriptorVector& target, const CommandVector& cmd, const RobotModel& model,
                          const NprWeights& w, RotationPenalty penalty = RotationPenalty::geodesic,
                          unsigned limb_mask = kAllLimbs) {
    const JointVector q = expand_command_unchecked(cmd, model);
    const PoseDescriptor pred = robot_descriptor(detail::fk_unchecked(q, model), model);
    DescriptorVector unused{};
    return npr_loss_descriptor_grad(target, flatten(pred), w, unused, penalty, limb_mask);
}

}  // namespace retarget
