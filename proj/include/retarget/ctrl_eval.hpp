#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "retarget/error.hpp"
#include "retarget/geom.hpp"
#include "retarget/random.hpp"
#include "retarget/robot.hpp"

namespace retarget {

// ---------------------------------------------------------------------------
// Actuators
// ---------------------------------------------------------------------------

struct ActuatorGains {
    double max_torque = 0.0;  // N·m
    double max_speed = 0.0;   // rad/s
    double kp = 0.0;
    double kd = 0.0;
};

struct ActuatorParams {
    // Indexed by ActuatorClass.
    std::array<ActuatorGains, kActuatorClasses> by_class{{
        {10.0, 7.0, 150.0, 5.0},  // head
        {10.0, 7.0, 150.0, 5.0},  // arm
        {20.0, 6.4, 200.0, 5.0},  // leg_pitch
        {20.0, 4.0, 150.0, 5.0},  // leg_roll
        {30.0, 4.0, 200.0, 5.0},  // leg_yaw_pitch
    }};

    const ActuatorGains& operator[](ActuatorClass c) const { return by_class[static_cast<std::size_t>(c)]; }
    ActuatorGains& operator[](ActuatorClass c) { return by_class[static_cast<std::size_t>(c)]; }

    void validate() const {
        for (int i = 0; i < kActuatorClasses; ++i) {
            const ActuatorGains& g = by_class[static_cast<std::size_t>(i)];
            for (double v : {g.max_torque, g.max_speed, g.kp, g.kd}) {
                if (!(v > 0.0) || !std::isfinite(v)) {
                    throw ConfigError(std::string("actuator class '") +
                                      actuator_class_name(static_cast<ActuatorClass>(i)) +
                                      "' needs positive finite gains and limits");
                }
            }
        }
    }
};

// tau = Kp (q_cmd - q) + Kd (qd_cmd - qd) + tau0, clamped to +-max_torque.
inline double pd_torque(double q_cmd, double q, double qd_cmd, double qd, const ActuatorGains& g, double tau0 = 0.0) {
    const double tau = g.kp * (q_cmd - q) + g.kd * (qd_cmd - qd) + tau0;
    return std::clamp(tau, -g.max_torque, g.max_torque);
}

// ---------------------------------------------------------------------------
// Plant
// ---------------------------------------------------------------------------

// Per-joint inertia defaults for the decoupled plant, kg·m².
struct PlantConfig {
    double arm_inertia = 0.01;  // arms and head
    double leg_inertia = 0.05;

    void validate() const {
        if (!(arm_inertia > 0.0) || !(leg_inertia > 0.0) || !std::isfinite(arm_inertia) ||
            !std::isfinite(leg_inertia)) {
            throw ConfigError("plant inertias must be positive and finite");
        }
    }

    double inertia_of(ActuatorClass c) const {
        return (c == ActuatorClass::head || c == ActuatorClass::arm) ? arm_inertia : leg_inertia;
    }
};

// One entry per commanded actuator (the coupled HipYawPitch is one motor).
struct JointState {
    std::vector<double> q;
    std::vector<double> qd;
    std::vector<double> inertia;
};

// Static description of the actuated joints: class, limits, gains.
struct ActuatedJoints {
    std::vector<ActuatorGains> gains;
    std::vector<double> q_min, q_max, inertia;
    std::vector<std::size_t> ankles;  // indices into the command vector

    std::size_t size() const { return gains.size(); }
};

inline ActuatedJoints actuated_joints(const RobotModel& model, const ActuatorParams& act = {},
                                      const PlantConfig& plant = {}) {
    act.validate();
    plant.validate();
    ActuatedJoints a;
    std::vector<int> ankle_joints;
    for (Side s : {Side::left, Side::right}) {
        for (Keypoint k : {Keypoint::ankle, Keypoint::foot}) {
            ankle_joints.push_back(model.keypoints[static_cast<std::size_t>(keypoint_index(s, k))].joint);
        }
    }
    for (int k = 0; k < kCommandDims; ++k) {
        const JointSpec& j = model.command_joint(k);
        a.gains.push_back(act[j.actuator]);
        a.q_min.push_back(j.q_min);
        a.q_max.push_back(j.q_max);
        a.inertia.push_back(plant.inertia_of(j.actuator));
        const int idx = model.command_order[static_cast<std::size_t>(k)];
        if (std::find(ankle_joints.begin(), ankle_joints.end(), idx) != ankle_joints.end()) {
            a.ankles.push_back(static_cast<std::size_t>(k));
        }
    }
    return a;
}

inline JointState initial_state(const ActuatedJoints& joints, const std::vector<double>& q0) {
    if (q0.size() != joints.size()) {
        throw ValidationError("initial state has " + std::to_string(q0.size()) + " joints, expected " +
                              std::to_string(joints.size()));
    }
    return {q0, std::vector<double>(q0.size(), 0.0), joints.inertia};
}

inline std::vector<double> pd_torque(const std::vector<double>& q_cmd, const JointState& s,
                                     const ActuatedJoints& joints, double tau0 = 0.0) {
    if (q_cmd.size() != s.q.size() || s.q.size() != joints.size()) {
        throw ValidationError("pd_torque: dimension mismatch");
    }
    std::vector<double> tau(s.q.size());
    for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = pd_torque(q_cmd[i], s.q[i], 0.0, s.qd[i], joints.gains[i], tau0);
    return tau;
}

// Semi-implicit Euler on qdd = tau / inertia with speed and position stops.
inline JointState step_dynamics(const JointState& s, const std::vector<double>& tau, double dt,
                                const ActuatedJoints& joints) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ValidationError("step_dynamics: dt must be positive");
    }
    const std::size_t n = s.q.size();
    if (s.qd.size() != n || s.inertia.size() != n || tau.size() != n || joints.size() != n) {
        throw ValidationError("step_dynamics: dimension mismatch");
    }
    JointState out = s;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(s.inertia[i] > 0.0)) throw ValidationError("step_dynamics: inertia must be positive");
        const double vmax = joints.gains[i].max_speed;
        double qd = std::clamp(s.qd[i] + tau[i] / s.inertia[i] * dt, -vmax, vmax);
        double q = s.q[i] + qd * dt;
        if (q <= joints.q_min[i]) {
            q = joints.q_min[i];
            qd = std::max(qd, 0.0);
        } else if (q >= joints.q_max[i]) {
            q = joints.q_max[i];
            qd = std::min(qd, 0.0);
        }
        if (!std::isfinite(q) || !std::isfinite(qd)) {
            throw NumericError("step_dynamics: non-finite state at joint " + std::to_string(i));
        }
        out.q[i] = q;
        out.qd[i] = qd;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Orientation signals
// ---------------------------------------------------------------------------

// World gravity direction [0,0,-1] expressed in the base frame.
inline Vec3 projected_gravity(const Quat& orientation) {
    if (!is_unit(orientation, 1e-6)) {
        throw ValidationError("projected_gravity: orientation is not a unit quaternion");
    }
    return quat_rotate(quat_inv(orientation), {0.0, 0.0, -1.0});
}

struct RollPitch {
    double roll = 0.0;
    double pitch = 0.0;
};

// Z-Y-X (yaw, pitch, roll) extraction.
inline RollPitch roll_pitch(const Quat& q) {
    const double roll = std::atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y));
    const double pitch = std::asin(std::clamp(2.0 * (q.w * q.y - q.z * q.x), -1.0, 1.0));
    return {roll, pitch};
}

enum class Termination { running, fell, timeout };

inline const char* termination_name(Termination t) {
    switch (t) {
        case Termination::running: return "running";
        case Termination::fell: return "fell";
        case Termination::timeout: return "timeout";
    }
    return "?";
}

inline constexpr double kFallAngle = 60.0 * std::numbers::pi / 180.0;

// A fall wins over a timeout reached on the same step.
inline Termination check_termination(const Quat& orientation, double elapsed, double episode_length) {
    if (!is_unit(orientation, 1e-6)) {
        throw ValidationError("check_termination: orientation is not a unit quaternion");
    }
    const RollPitch rp = roll_pitch(orientation);
    if (std::abs(rp.roll) > kFallAngle || std::abs(rp.pitch) > kFallAngle) return Termination::fell;
    if (elapsed >= episode_length) return Termination::timeout;
    return Termination::running;
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

inline constexpr int kRewardTerms = 9;

struct RewardWeights {
    double dof_torque = -8.0e-4;
    double ankle_torque = -2.0e-3;
    double dof_acc = -2.5e-7;
    double action_rate = -2.0e-2;
    double action = -6.5e-4;
    double torso_flat = -1.2;
    double feet_flat = 0.3;
    double undesired_contacts = -1.0;
    double dof_target = 10.0;

    std::array<double, kRewardTerms> as_array() const {
        return {dof_torque, ankle_torque, dof_acc, action_rate, action, torso_flat, feet_flat, undesired_contacts,
                dof_target};
    }
};

inline constexpr std::array<const char*, kRewardTerms> kRewardTermNames{
    "dof_torque", "ankle_torque", "dof_acc", "action_rate", "action",
    "torso_flat", "feet_flat",    "undesired_contacts",     "dof_target"};

inline constexpr double kFeetFlatScale = 3.046e-4;
inline constexpr double kContactForceThreshold = 10.0;  // N
inline constexpr double kDofTargetScale = 5.0;

struct RewardInputs {
    std::vector<double> q, q_target, qdd, tau;  // per actuated joint
    std::vector<double> action, action_prev;
    std::vector<std::size_t> ankles;            // indices into tau
    Vec3 gravity{0.0, 0.0, -1.0};               // base-frame projected gravity
    std::vector<Vec3> foot_gravity;             // per foot, foot frame
    std::vector<double> contact_forces;         // N, on undesired bodies
};

struct RewardBreakdown {
    std::array<double, kRewardTerms> raw{};       // unweighted term values
    std::array<double, kRewardTerms> weighted{};  // weight * raw
    double total = 0.0;                           // sum of weighted, in term order
};

inline RewardBreakdown reward(const RewardInputs& in, const RewardWeights& w = {}) {
    const std::size_t n = in.q.size();
    if (in.q_target.size() != n || in.qdd.size() != n || in.tau.size() != n) {
        throw ValidationError("reward: joint vectors differ in length");
    }
    if (in.action.size() != in.action_prev.size()) {
        throw ValidationError("reward: action and previous action differ in length");
    }
    for (std::size_t a : in.ankles) {
        if (a >= n) throw ValidationError("reward: ankle index out of range");
    }

    RewardBreakdown r;
    auto& t = r.raw;
    for (std::size_t i = 0; i < n; ++i) {
        t[0] += in.tau[i] * in.tau[i];
        t[2] += in.qdd[i] * in.qdd[i];
    }
    for (std::size_t a : in.ankles) t[1] += in.tau[a] * in.tau[a];
    for (std::size_t i = 0; i < in.action.size(); ++i) {
        t[3] += std::abs(in.action[i] - in.action_prev[i]);
        t[4] += std::abs(in.action[i]);
    }
    t[5] = in.gravity.x * in.gravity.x + in.gravity.y * in.gravity.y;
    for (const Vec3& g : in.foot_gravity) t[6] += std::exp(-(g.x * g.x + g.y * g.y) / kFeetFlatScale);
    for (double f : in.contact_forces) t[7] += f > kContactForceThreshold ? 1.0 : 0.0;
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) dev += std::abs(in.q[i] - in.q_target[i]);
    t[8] = std::exp(-dev / kDofTargetScale);

    const auto wa = w.as_array();
    for (std::size_t i = 0; i < kRewardTerms; ++i) {
        r.weighted[i] = wa[i] * t[i];
        r.total += r.weighted[i];
    }
    return r;
}

// ---------------------------------------------------------------------------
// Domain randomization
// ---------------------------------------------------------------------------

struct UniformRange {
    double lo = 0.0;
    double hi = 0.0;

    double midpoint() const { return 0.5 * (lo + hi); }
};

struct RandomizationRanges {
    UniformRange static_friction{0.3, 1.1};
    UniformRange dynamic_friction{0.2, 0.7};
    UniformRange base_mass_add{0.0, 0.2};  // kg
    UniformRange hand_mass_add{0.0, 0.1};  // kg
    UniformRange push_interval{4.0, 6.0};  // s
    double push_speed = 0.2;               // m/s, planar

    void validate() const {
        const std::pair<const char*, UniformRange> all[] = {{"static_friction", static_friction},
                                                           {"dynamic_friction", dynamic_friction},
                                                           {"base_mass_add", base_mass_add},
                                                           {"hand_mass_add", hand_mass_add},
                                                           {"push_interval", push_interval}};
        for (const auto& [name, r] : all) {
            if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
                throw ConfigError(std::string("randomization range '") + name + "' needs finite lo <= hi");
            }
        }
        if (!(push_interval.lo > 0.0)) throw ConfigError("push_interval must be positive");
        if (!(push_speed >= 0.0) || !std::isfinite(push_speed)) throw ConfigError("push_speed must be >= 0");
    }
};

struct PushEvent {
    double time = 0.0;  // s from episode start
    double vx = 0.0;    // m/s
    double vy = 0.0;
};

struct RandomizationSample {
    double static_friction = 0.0;
    double dynamic_friction = 0.0;
    double base_mass_add = 0.0;
    double hand_mass_add = 0.0;
    std::vector<PushEvent> pushes;
};

// Push times accumulate intervals drawn from push_interval until the horizon;
// each push has a uniformly random planar direction.
inline RandomizationSample sample_randomization(const RandomizationRanges& r, Rng& rng, double horizon = 10.0) {
    r.validate();
    RandomizationSample s;
    s.static_friction = rng.uniform(r.static_friction.lo, r.static_friction.hi);
    s.dynamic_friction = rng.uniform(r.dynamic_friction.lo, r.dynamic_friction.hi);
    s.base_mass_add = rng.uniform(r.base_mass_add.lo, r.base_mass_add.hi);
    s.hand_mass_add = rng.uniform(r.hand_mass_add.lo, r.hand_mass_add.hi);
    for (double t = rng.uniform(r.push_interval.lo, r.push_interval.hi); t < horizon;
         t += rng.uniform(r.push_interval.lo, r.push_interval.hi)) {
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        s.pushes.push_back({t, r.push_speed * std::cos(a), r.push_speed * std::sin(a)});
    }
    return s;
}

inline RandomizationSample sample_randomization(const RandomizationRanges& r, std::uint64_t seed,
                                                double horizon = 10.0) {
    Rng rng(seed);
    return sample_randomization(r, rng, horizon);
}

// ---------------------------------------------------------------------------
// Episode evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
    double dt = 1e-3;              // plant step, s
    double episode_length = 10.0;  // s
    double tau0 = 0.0;
    ActuatorParams actuators;
    PlantConfig plant;
    RewardWeights weights;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
        if (!(episode_length > 0.0)) throw ConfigError("episode_length must be positive");
        if (!std::isfinite(tau0)) throw ConfigError("tau0 must be finite");
        actuators.validate();
        plant.validate();
    }
};

// Measured state at the end of each command frame.
struct FrameTrace {
    double time = 0.0;
    CommandVector reference{};
    CommandVector measured{};
    RewardBreakdown reward;
    double endpoint_error = 0.0;  // mean over the four limb tips, m
};

struct EpisodeReport {
    std::array<double, kCommandDims> rmse{};  // per commanded joint, rad
    std::array<double, kRewardTerms> reward_sums{};
    double reward_total = 0.0;
    double endpoint_error_mean = 0.0;  // over frames and limb tips, m
    double endpoint_error_std = 0.0;
    Termination termination = Termination::running;
    int frames_run = 0;
    double elapsed = 0.0;
    std::vector<FrameTrace> trace;
};

namespace detail {

inline std::array<Vec3, 4> limb_tips(const CommandVector& c, const RobotModel& model) {
    const FkResult r = fk(expand_command_unchecked(c, model), model);
    std::array<Vec3, 4> tips{};
    for (std::size_t l = 0; l < 4; ++l) {
        tips[l] = r.keypoints[static_cast<std::size_t>(limb_keypoints(static_cast<Limb>(l)).tip)];
    }
    return tips;
}

// Gravity in each foot frame, given base-frame gravity.
inline std::vector<Vec3> foot_gravity(const CommandVector& c, const RobotModel& model, const Vec3& g_base) {
    const FkResult r = fk(expand_command_unchecked(c, model), model);
    std::vector<Vec3> out;
    for (Side s : {Side::left, Side::right}) {
        const int j = model.keypoints[static_cast<std::size_t>(keypoint_index(s, Keypoint::foot))].joint;
        out.push_back(transpose(r.rotation[static_cast<std::size_t>(j)]) * g_base);
    }
    return out;
}

}  // namespace detail

// Holds each command for 1/fps seconds under PD control on the fixed-base
// plant, starting at rest in the first commanded pose. Rewards are sampled
// once per command frame; qdd is the mean acceleration over the frame.
// Orientations, if given (one per frame), drive torso_flat and termination.
inline EpisodeReport evaluate_commands(const std::vector<CommandVector>& commands, double fps,
                                       const RobotModel& model, const EvalConfig& cfg = {},
                                       const std::vector<Quat>& orientations = {}) {
    cfg.validate();
    if (commands.empty()) throw ValidationError("evaluate_commands: no command frames");
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("evaluate_commands: fps must be positive");
    if (!orientations.empty() && orientations.size() != commands.size()) {
        throw ValidationError("evaluate_commands: " + std::to_string(orientations.size()) + " orientations for " +
                              std::to_string(commands.size()) + " frames");
    }
    const long steps_per_frame = std::lround(1.0 / (fps * cfg.dt));
    if (steps_per_frame < 1) throw ValidationError("evaluate_commands: frame shorter than one plant step");
    for (std::size_t f = 0; f < commands.size(); ++f) {
        try {
            (void)expand_command(commands[f], model);
        } catch (const Error& e) {
            throw ValidationError("frame " + std::to_string(f) + ": " + e.what());
        }
    }

    const ActuatedJoints joints = actuated_joints(model, cfg.actuators, cfg.plant);
    const auto as_vec = [](const CommandVector& c) { return std::vector<double>(c.begin(), c.end()); };
    JointState state = initial_state(joints, as_vec(commands.front()));
    std::vector<double> prev_action = as_vec(commands.front());
    const double frame_dt = static_cast<double>(steps_per_frame) * cfg.dt;

    EpisodeReport rep;
    std::array<double, kCommandDims> sq_err{};
    double ep_sum = 0.0, ep_sq = 0.0;
    long ep_count = 0;
    for (std::size_t f = 0; f < commands.size(); ++f) {
        const std::vector<double> cmd = as_vec(commands[f]);
        const std::vector<double> qd_start = state.qd;
        std::vector<double> tau;
        for (long s = 0; s < steps_per_frame; ++s) {
            tau = pd_torque(cmd, state, joints, cfg.tau0);
            state = step_dynamics(state, tau, cfg.dt, joints);
        }
        rep.elapsed = static_cast<double>(f + 1) * frame_dt;
        ++rep.frames_run;

        FrameTrace tr;
        tr.time = rep.elapsed;
        tr.reference = commands[f];
        std::copy(state.q.begin(), state.q.end(), tr.measured.begin());

        const Quat base = orientations.empty() ? Quat::identity() : orientations[f];
        RewardInputs in;
        in.q = state.q;
        in.q_target = cmd;
        in.tau = tau;
        in.qdd.resize(state.qd.size());
        for (std::size_t i = 0; i < state.qd.size(); ++i) in.qdd[i] = (state.qd[i] - qd_start[i]) / frame_dt;
        in.action = cmd;
        in.action_prev = prev_action;
        in.ankles = joints.ankles;
        in.gravity = projected_gravity(base);
        in.foot_gravity = detail::foot_gravity(tr.measured, model, in.gravity);
        tr.reward = reward(in, cfg.weights);
        for (std::size_t t = 0; t < kRewardTerms; ++t) rep.reward_sums[t] += tr.reward.weighted[t];
        rep.reward_total += tr.reward.total;
        prev_action = cmd;

        for (std::size_t k = 0; k < kCommandDims; ++k) {
            const double e = tr.measured[k] - tr.reference[k];
            sq_err[k] += e * e;
        }
        const auto ref_tips = detail::limb_tips(tr.reference, model);
        const auto got_tips = detail::limb_tips(tr.measured, model);
        double frame_ep = 0.0;
        for (std::size_t l = 0; l < 4; ++l) {
            const double e = norm(got_tips[l] - ref_tips[l]);
            frame_ep += e;
            ep_sum += e;
            ep_sq += e * e;
            ++ep_count;
        }
        tr.endpoint_error = frame_ep / 4.0;
        rep.trace.push_back(tr);

        rep.termination = check_termination(base, rep.elapsed, cfg.episode_length);
        if (rep.termination != Termination::running) break;
    }

    for (std::size_t k = 0; k < kCommandDims; ++k) rep.rmse[k] = std::sqrt(sq_err[k] / rep.frames_run);
    rep.endpoint_error_mean = ep_sum / static_cast<double>(ep_count);
    const double var = ep_sq / static_cast<double>(ep_count) - rep.endpoint_error_mean * rep.endpoint_error_mean;
    rep.endpoint_error_std = std::sqrt(std::max(0.0, var));
    return rep;
}

}  // namespace retarget
