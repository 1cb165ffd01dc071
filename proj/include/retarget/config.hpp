#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "retarget/asn.hpp"
#include "retarget/ctrl_eval.hpp"
#include "retarget/error.hpp"
#include "retarget/file_io.hpp"
#include "retarget/ik_oracle.hpp"
#include "retarget/npr.hpp"
#include "retarget/robot.hpp"
#include "retarget/skeleton.hpp"

namespace retarget {

struct DatasetConfig {
    std::size_t size = 2000;
    double synthetic_fraction = 0.5;
};

// One file configures the whole pipeline. Relative paths resolve against the
// directory holding the config file.
struct AppConfig {
    std::filesystem::path robot_path;
    JointLayout layout = JointLayout::humanml3d();
    AxisRemap axis_remap = AxisRemap::y_up();
    double w_trans = 1.0;  // limb-length weights come from the robot
    double w_quat = 1.0;
    SolverConfig solver;
    TrainConfig train;
    DatasetConfig dataset;
    EvalConfig eval;
    RandomizationRanges randomization;
    std::uint64_t seed = 1;

    NprWeights npr_weights(const RobotModel& model) const { return NprWeights::for_robot(model, w_trans, w_quat); }

    void validate() const {
        if (!std::filesystem::exists(robot_path)) {
            throw ConfigError("robot file '" + robot_path.string() + "' does not exist");
        }
        layout.validate();
        NprWeights{w_trans, w_quat, 1.0, 1.0}.validate();
        solver.validate();
        train.validate();
        if (dataset.size < 2) throw ConfigError("dataset.size must be >= 2");
        if (!(dataset.synthetic_fraction >= 0.0 && dataset.synthetic_fraction <= 1.0)) {
            throw ConfigError("dataset.synthetic_fraction must be in [0, 1]");
        }
        eval.validate();
        randomization.validate();
    }
};

namespace detail {

using nlohmann::json;

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& item : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; })) {
            throw ConfigError("unknown key '" + item.key() + "' in " + where);
        }
    }
}

template <class T>
void read(const json& j, const std::string& where, const char* key, T& field) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

inline void read_range(const json& j, const std::string& where, const char* key, UniformRange& r) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ConfigError(where + "." + key + " must be [lo, hi]");
    }
    r = {v[0].get<double>(), v[1].get<double>()};
}

inline void read_solver(const json& j, SolverConfig& s) {
    const std::string w = "solver";
    allow_keys(j, w, {"max_iters", "restarts", "seed", "grad_tol", "loss_tol", "warm_start", "armijo_c",
                      "initial_step", "init_margin"});
    read(j, w, "max_iters", s.max_iters);
    read(j, w, "restarts", s.restarts);
    read(j, w, "seed", s.seed);
    read(j, w, "grad_tol", s.grad_tol);
    read(j, w, "loss_tol", s.loss_tol);
    read(j, w, "warm_start", s.warm_start);
    read(j, w, "armijo_c", s.armijo_c);
    read(j, w, "initial_step", s.initial_step);
    read(j, w, "init_margin", s.init_margin);
}

inline void read_train(const json& j, TrainConfig& t, DatasetConfig& d) {
    const std::string w = "train";
    allow_keys(j, w, {"epochs", "batch_size", "learning_rate", "momentum", "bn_momentum", "seed", "init_scale",
                      "final_lr_fraction", "dataset_size", "synthetic_fraction"});
    read(j, w, "epochs", t.epochs);
    read(j, w, "batch_size", t.batch_size);
    read(j, w, "learning_rate", t.learning_rate);
    read(j, w, "momentum", t.momentum);
    read(j, w, "bn_momentum", t.bn_momentum);
    read(j, w, "seed", t.seed);
    read(j, w, "init_scale", t.init_scale);
    read(j, w, "final_lr_fraction", t.final_lr_fraction);
    read(j, w, "dataset_size", d.size);
    read(j, w, "synthetic_fraction", d.synthetic_fraction);
}

inline void read_ctrl(const json& j, EvalConfig& e, RandomizationRanges& r) {
    const std::string w = "ctrl";
    allow_keys(j, w, {"dt", "episode_length", "tau0", "arm_inertia", "leg_inertia", "actuators", "rewards",
                      "randomization"});
    read(j, w, "dt", e.dt);
    read(j, w, "episode_length", e.episode_length);
    read(j, w, "tau0", e.tau0);
    read(j, w, "arm_inertia", e.plant.arm_inertia);
    read(j, w, "leg_inertia", e.plant.leg_inertia);
    if (j.contains("actuators")) {
        const json& ja = j.at("actuators");
        allow_keys(ja, "ctrl.actuators", {"head", "arm", "leg_pitch", "leg_roll", "leg_yaw_pitch"});
        for (const auto& item : ja.items()) {
            const std::string where = "ctrl.actuators." + item.key();
            ActuatorGains& g = e.actuators[actuator_class_from_name(item.key())];
            allow_keys(item.value(), where, {"max_torque", "max_speed", "kp", "kd"});
            read(item.value(), where, "max_torque", g.max_torque);
            read(item.value(), where, "max_speed", g.max_speed);
            read(item.value(), where, "kp", g.kp);
            read(item.value(), where, "kd", g.kd);
        }
    }
    if (j.contains("rewards")) {
        const json& jr = j.at("rewards");
        const std::string where = "ctrl.rewards";
        allow_keys(jr, where, {"dof_torque", "ankle_torque", "dof_acc", "action_rate", "action", "torso_flat",
                               "feet_flat", "undesired_contacts", "dof_target"});
        RewardWeights& rw = e.weights;
        read(jr, where, "dof_torque", rw.dof_torque);
        read(jr, where, "ankle_torque", rw.ankle_torque);
        read(jr, where, "dof_acc", rw.dof_acc);
        read(jr, where, "action_rate", rw.action_rate);
        read(jr, where, "action", rw.action);
        read(jr, where, "torso_flat", rw.torso_flat);
        read(jr, where, "feet_flat", rw.feet_flat);
        read(jr, where, "undesired_contacts", rw.undesired_contacts);
        read(jr, where, "dof_target", rw.dof_target);
    }
    if (j.contains("randomization")) {
        const json& jd = j.at("randomization");
        const std::string where = "ctrl.randomization";
        allow_keys(jd, where, {"static_friction", "dynamic_friction", "base_mass_add", "hand_mass_add",
                               "push_interval", "push_speed"});
        read_range(jd, where, "static_friction", r.static_friction);
        read_range(jd, where, "dynamic_friction", r.dynamic_friction);
        read_range(jd, where, "base_mass_add", r.base_mass_add);
        read_range(jd, where, "hand_mass_add", r.hand_mass_add);
        read_range(jd, where, "push_interval", r.push_interval);
        read(jd, where, "push_speed", r.push_speed);
    }
}

}  // namespace detail

inline AppConfig default_app_config() {
    AppConfig c;
    c.robot_path = std::filesystem::path(RETARGET_DATA_DIR) / "nao_like.json";
    return c;
}

// `base_dir` anchors relative paths inside the document.
inline AppConfig parse_app_config(const std::string& text, const std::filesystem::path& base_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON (") + e.what() + ")");
    }
    AppConfig c = default_app_config();
    const std::string w = "config";
    detail::allow_keys(j, w, {"robot", "joint_layout", "axis_remap", "seed", "npr", "solver", "train", "ctrl"});
    if (j.contains("robot")) {
        std::string p;
        detail::read(j, w, "robot", p);
        c.robot_path = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base_dir / p;
    }
    if (j.contains("joint_layout")) c.layout = joint_layout_from_json(j.at("joint_layout"));
    if (j.contains("axis_remap")) {
        std::array<std::string, 3> axes;
        detail::read(j, w, "axis_remap", axes);
        c.axis_remap = AxisRemap::from_axes(axes);
    }
    detail::read(j, w, "seed", c.seed);
    if (j.contains("npr")) {
        detail::allow_keys(j.at("npr"), "npr", {"w_trans", "w_quat"});
        detail::read(j.at("npr"), "npr", "w_trans", c.w_trans);
        detail::read(j.at("npr"), "npr", "w_quat", c.w_quat);
    }
    if (j.contains("solver")) detail::read_solver(j.at("solver"), c.solver);
    if (j.contains("train")) detail::read_train(j.at("train"), c.train, c.dataset);
    if (j.contains("ctrl")) detail::read_ctrl(j.at("ctrl"), c.eval, c.randomization);
    c.validate();
    return c;
}

inline AppConfig load_app_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
    return parse_app_config(text, path.parent_path());
}

}  // namespace retarget
