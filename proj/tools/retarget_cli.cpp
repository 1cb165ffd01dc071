// retarget: command-line driver for the retargeting pipeline.
//
//   retarget retarget  <motion.json> -o cmds.json [--solver oracle|asn] [--params p.bin]
//   retarget train     [data.desc|motion.json ...] -o params.bin
//   retarget eval      <cmds.json> [-o report.txt]
//   retarget randomize --count N [-o samples.txt]
//   retarget inspect
//
// Common: --config <file> (default: bundled), --seed <n>.
// Exit codes: 0 ok, 1 usage, 2 input data, 3 numeric or convergence failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "retarget/asn.hpp"
#include "retarget/config.hpp"
#include "retarget/ctrl_eval.hpp"
#include "retarget/descriptor.hpp"
#include "retarget/file_io.hpp"
#include "retarget/ik_oracle.hpp"
#include "retarget/io.hpp"
#include "retarget/npr.hpp"
#include "retarget/robot.hpp"
#include "retarget/skeleton.hpp"

namespace fs = std::filesystem;
using namespace retarget;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kNumeric = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
};

struct Context {
    AppConfig cfg;
    RobotModel model;
};

Context load_context(const Common& c) {
    Context ctx;
    ctx.cfg = c.config.empty() ? default_app_config() : load_app_config(c.config);
    if (c.seed) {
        ctx.cfg.seed = *c.seed;
        ctx.cfg.solver.seed = *c.seed;
        ctx.cfg.train.seed = *c.seed;
    }
    ctx.cfg.validate();
    ctx.model = load_robot(ctx.cfg.robot_path);
    return ctx;
}

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// "cmds.json" -> "cmds.loss.csv"
fs::path sibling(const fs::path& out, const std::string& suffix) {
    fs::path p = out;
    p.replace_extension();
    p += suffix;
    return p;
}

// ---------------------------------------------------------------------------

struct RetargetArgs {
    std::string motion;
    std::string out;
    std::string solver = "oracle";
    std::string params;
};

int cmd_retarget(const Common& common, const RetargetArgs& a) {
    if (a.solver == "asn" && a.params.empty()) throw UsageError("--solver asn needs --params");
    const Context ctx = load_context(common);
    const NprWeights w = ctx.cfg.npr_weights(ctx.model);
    const MotionSequence seq = load_motion(a.motion, ctx.cfg.axis_remap, ctx.cfg.layout);

    Diagnostics diag;
    std::vector<DescriptorVector> targets;
    for (const PoseDescriptor& pd : human_descriptors(seq, ctx.cfg.layout, DefaultDirections::of(ctx.model), &diag)) {
        targets.push_back(flatten(pd));
    }

    const std::size_t n = targets.size();
    std::vector<std::optional<CommandVector>> q(n);
    std::vector<double> loss(n, std::nan(""));
    std::vector<int> iterations(n, 0);
    std::vector<bool> converged(n, false);
    std::vector<std::string> errors;

    if (a.solver == "oracle") {
        const auto frames = solve_sequence(targets, ctx.model, w, ctx.cfg.solver);
        for (std::size_t i = 0; i < n; ++i) {
            if (!frames[i].ok()) {
                errors.push_back(frames[i].error);
                continue;
            }
            q[i] = frames[i].report->q;
            loss[i] = frames[i].report->final_loss;
            iterations[i] = frames[i].report->iterations;
            converged[i] = frames[i].report->converged;
        }
    } else {
        const MlpParams p = load_params(a.params);
        const LimitSquash squash(ctx.model);
        for (std::size_t i = 0; i < n; ++i) {
            try {
                q[i] = infer(p, targets[i], squash);
                loss[i] = npr_loss_at(targets[i], *q[i], ctx.model, w);
                converged[i] = true;
            } catch (const Error& e) {
                q[i].reset();
                errors.push_back("frame " + std::to_string(i) + ": " + e.what());
            }
        }
    }

    std::string trace = "frame,loss,converged,iterations\n";
    for (std::size_t i = 0; i < n; ++i) {
        trace += std::to_string(i) + "," + (std::isfinite(loss[i]) ? fmt(loss[i], 17) : "nan") + "," +
                 (converged[i] ? "1" : "0") + "," + std::to_string(iterations[i]) + "\n";
    }
    const fs::path trace_path = sibling(a.out, ".loss.csv");
    write_file_atomic(trace_path, trace);

    std::size_t n_conv = 0;
    double sum = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (converged[i]) ++n_conv;
        if (std::isfinite(loss[i])) {
            sum += loss[i];
            worst = std::max(worst, loss[i]);
        }
    }
    if (diag.degenerate_limb_rotations || diag.degenerate_root_frames) {
        std::fprintf(stderr, "warning: %zu degenerate limb rotations, %zu degenerate root frames\n",
                     diag.degenerate_limb_rotations, diag.degenerate_root_frames);
    }
    if (!errors.empty()) {
        for (const auto& e : errors) std::fprintf(stderr, "error: %s\n", e.c_str());
        std::fprintf(stderr, "%zu of %zu frames failed; no command file written (trace: %s)\n", errors.size(), n,
                     trace_path.string().c_str());
        return kNumeric;
    }

    CommandFile cf;
    cf.robot = ctx.model.name;
    cf.fps = seq.fps;
    for (std::size_t i = 0; i < n; ++i) cf.frames.push_back(*q[i]);
    cf.loss = loss;
    save_commands(a.out, cf, ctx.model);
    std::printf("solver %s\nframes %zu\nconverged %zu\nmean_loss %s\nmax_loss %s\ncommands %s\ntrace %s\n",
                a.solver.c_str(), n, n_conv, fmt(sum / static_cast<double>(n), 9).c_str(), fmt(worst, 9).c_str(),
                a.out.c_str(), trace_path.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::vector<std::string> inputs;
    std::string out;
};

int cmd_train(const Common& common, const TrainArgs& a) {
    const Context ctx = load_context(common);
    const NprWeights w = ctx.cfg.npr_weights(ctx.model);

    // Descriptor files are used as-is; motion files feed the synthetic mix.
    std::vector<std::string> inputs = a.inputs;
    if (inputs.empty()) inputs.push_back((fs::path(RETARGET_DATA_DIR) / "reachable_2000.desc").string());
    std::vector<DescriptorVector> fixed, motion;
    for (const auto& path : inputs) {
        if (fs::path(path).extension() == ".desc") {
            const auto ds = load_descriptors(path);
            fixed.insert(fixed.end(), ds.begin(), ds.end());
        } else {
            const MotionSequence seq = load_motion(path, ctx.cfg.axis_remap, ctx.cfg.layout);
            for (const auto& pd : human_descriptors(seq, ctx.cfg.layout, DefaultDirections::of(ctx.model))) {
                motion.push_back(flatten(pd));
            }
        }
    }
    std::vector<DescriptorVector> data = fixed;
    if (!motion.empty()) {
        Rng rng(ctx.cfg.seed);
        const auto mixed =
            build_dataset(motion, ctx.cfg.dataset.size, ctx.cfg.dataset.synthetic_fraction, ctx.model, rng);
        data.insert(data.end(), mixed.begin(), mixed.end());
    }
    if (data.size() < static_cast<std::size_t>(ctx.cfg.train.batch_size)) {
        throw ValidationError("dataset has " + std::to_string(data.size()) + " samples, fewer than batch_size " +
                              std::to_string(ctx.cfg.train.batch_size));
    }

    const TrainResult r = train(data, ctx.model, w, ctx.cfg.train);
    const TrainReport& rep = r.report;

    std::string csv = "epoch,train_loss,val_loss,learning_rate\n";
    for (std::size_t e = 0; e < rep.train_loss.size(); ++e) {
        csv += std::to_string(e + 1) + "," + fmt(rep.train_loss[e], 17) + "," +
               (e < rep.val_loss.size() ? fmt(rep.val_loss[e], 17) : "nan") + "," +
               fmt(ctx.cfg.train.learning_rate_at(static_cast<int>(e)), 17) + "\n";
    }
    const fs::path csv_path = sibling(a.out, ".loss.csv");
    write_file_atomic(csv_path, csv);

    std::ostringstream report;
    report << "samples " << data.size() << "\nepochs_run " << rep.train_loss.size() << "\ninitial_train_loss "
           << fmt(rep.initial_train_loss, 9) << "\nfinal_train_loss "
           << (rep.train_loss.empty() ? "nan" : fmt(rep.train_loss.back(), 9)) << "\nfinal_val_loss "
           << (rep.val_loss.empty() ? "nan" : fmt(rep.val_loss.back(), 9)) << "\ndiverged "
           << (rep.diverged ? "yes" : "no") << "\n";
    if (!rep.message.empty()) report << "message " << rep.message << "\n";
    const fs::path report_path = sibling(a.out, ".report.txt");

    if (rep.diverged) {
        write_file_atomic(report_path, report.str());
        std::fprintf(stderr, "training diverged: %s (report: %s)\n", rep.message.c_str(),
                     report_path.string().c_str());
        return kNumeric;
    }
    save_params(a.out, r.params);
    char sum[32];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(rep.checksum));
    report << "checksum " << sum << "\nparams " << a.out << "\nloss_csv " << csv_path.string() << "\n";
    write_file_atomic(report_path, report.str());
    std::fputs(report.str().c_str(), stdout);
    return kOk;
}

// ---------------------------------------------------------------------------

std::string format_sample(const RandomizationSample& s) {
    std::string line = "static_friction=" + fmt(s.static_friction) + " dynamic_friction=" + fmt(s.dynamic_friction) +
                       " base_mass_add=" + fmt(s.base_mass_add) + " hand_mass_add=" + fmt(s.hand_mass_add) +
                       " pushes=";
    if (s.pushes.empty()) line += "none";
    for (std::size_t i = 0; i < s.pushes.size(); ++i) {
        const PushEvent& p = s.pushes[i];
        line += (i ? ";" : "") + fmt(p.time) + "s@" + fmt(p.vx) + "," + fmt(p.vy);
    }
    return line;
}

struct EvalArgs {
    std::string commands;
    std::string out;
};

int cmd_eval(const Common& common, const EvalArgs& a) {
    const Context ctx = load_context(common);
    const CommandFile cf = load_commands(a.commands, ctx.model);
    const EpisodeReport rep = evaluate_commands(cf.frames, cf.fps, ctx.model, ctx.cfg.eval, cf.orientation);
    const RandomizationSample sample =
        sample_randomization(ctx.cfg.randomization, ctx.cfg.seed, ctx.cfg.eval.episode_length);

    std::ostringstream r;
    r << "robot " << ctx.model.name << "\nframes " << rep.frames_run << " / " << cf.frames.size() << "\nelapsed_s "
      << fmt(rep.elapsed) << "\ntermination " << termination_name(rep.termination) << "\nendpoint_error_mean_m "
      << fmt(rep.endpoint_error_mean, 9) << "\nendpoint_error_std_m " << fmt(rep.endpoint_error_std, 9)
      << "\nreward_total " << fmt(rep.reward_total, 9) << "\n";
    for (int t = 0; t < kRewardTerms; ++t) {
        r << "reward " << kRewardTermNames[static_cast<std::size_t>(t)] << " "
          << fmt(rep.reward_sums[static_cast<std::size_t>(t)], 9) << "\n";
    }
    for (int k = 0; k < kCommandDims; ++k) {
        r << "rmse_rad " << ctx.model.command_joint(k).name << " " << fmt(rep.rmse[static_cast<std::size_t>(k)], 9)
          << "\n";
    }
    r << "randomization seed=" << ctx.cfg.seed << " " << format_sample(sample) << "\n";

    // Trace: time, then reference and measured per joint, then weighted
    // reward terms, then the frame's mean endpoint error.
    std::string csv = "time";
    for (int k = 0; k < kCommandDims; ++k) csv += ",ref_" + ctx.model.command_joint(k).name;
    for (int k = 0; k < kCommandDims; ++k) csv += ",meas_" + ctx.model.command_joint(k).name;
    for (const char* t : kRewardTermNames) csv += std::string(",r_") + t;
    csv += ",reward_total,endpoint_error_m\n";
    for (const FrameTrace& f : rep.trace) {
        csv += fmt(f.time, 17);
        for (double v : f.reference) csv += "," + fmt(v, 17);
        for (double v : f.measured) csv += "," + fmt(v, 17);
        for (double v : f.reward.weighted) csv += "," + fmt(v, 17);
        csv += "," + fmt(f.reward.total, 17) + "," + fmt(f.endpoint_error, 17) + "\n";
    }

    if (a.out.empty()) {
        std::fputs(r.str().c_str(), stdout);
    } else {
        const fs::path trace_path = sibling(a.out, ".trace.csv");
        write_file_atomic(trace_path, csv);
        write_file_atomic(a.out, r.str());
        std::fputs(r.str().c_str(), stdout);
        std::printf("report %s\ntrace %s\n", a.out.c_str(), trace_path.string().c_str());
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct RandomizeArgs {
    int count = 0;
    std::string out;
};

int cmd_randomize(const Common& common, const RandomizeArgs& a) {
    if (a.count < 1) throw UsageError("--count must be >= 1");
    const Context ctx = load_context(common);
    Rng rng(ctx.cfg.seed);
    std::string text;
    for (int i = 0; i < a.count; ++i) {
        text += "sample=" + std::to_string(i) + " " +
                format_sample(sample_randomization(ctx.cfg.randomization, rng, ctx.cfg.eval.episode_length)) + "\n";
    }
    if (!a.out.empty()) write_file_atomic(a.out, text);
    std::fputs(text.c_str(), stdout);
    return kOk;
}

// ---------------------------------------------------------------------------

int cmd_inspect(const Common& common) {
    const Context ctx = load_context(common);
    const RobotModel& m = ctx.model;
    std::printf("robot %s: %zu joints, %d commands, arm length %.4f m, leg length %.4f m\n", m.name.c_str(),
                m.joints.size(), kCommandDims, m.arm_length(), m.leg_length());
    std::printf("%-3s %-4s %-16s %-16s %-22s %9s %9s %-14s %6s %6s %6s %4s\n", "idx", "cmd", "name", "parent", "axis",
                "q_min", "q_max", "actuator", "tau", "speed", "kp", "kd");
    for (std::size_t i = 0; i < m.joints.size(); ++i) {
        const JointSpec& j = m.joints[i];
        int cmd = -1;
        for (int k = 0; k < kCommandDims; ++k) {
            if (m.command_order[static_cast<std::size_t>(k)] == static_cast<int>(i)) cmd = k;
        }
        std::string cmd_s = cmd >= 0 ? std::to_string(cmd) : "=" + std::to_string(m.mirror_source);
        const std::string parent = j.parent < 0 ? "torso" : m.joints[static_cast<std::size_t>(j.parent)].name;
        const std::string axis = "(" + fmt(j.axis.x, 3) + "," + fmt(j.axis.y, 3) + "," + fmt(j.axis.z, 3) + ")";
        const ActuatorGains& g = ctx.cfg.eval.actuators[j.actuator];
        std::printf("%-3zu %-4s %-16s %-16s %-22s %9.4f %9.4f %-14s %6.1f %6.1f %6.1f %4.1f\n", i, cmd_s.c_str(),
                    j.name.c_str(), parent.c_str(), axis.c_str(), j.q_min, j.q_max, actuator_class_name(j.actuator),
                    g.max_torque, g.max_speed, g.kp, g.kd);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Humanoid motion retargeting: oracle IK, angle signal network, PD evaluation"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Pipeline config (JSON); default: bundled")
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Overrides every seed in the config");
    };

    RetargetArgs ra;
    auto* retarget = app.add_subcommand("retarget", "Retarget a motion file to robot joint commands");
    retarget->add_option("motion", ra.motion, "Motion file (JSON, 22 keypoints per frame)")->required();
    retarget->add_option("-o,--out", ra.out, "Command file to write; the loss trace goes to <out>.loss.csv")
        ->required();
    retarget->add_option("--solver", ra.solver, "oracle or asn")->check(CLI::IsMember({"oracle", "asn"}));
    retarget->add_option("--params", ra.params, "Network parameters (asn solver)");
    add_common(retarget);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train the angle signal network");
    train_cmd->add_option("inputs", ta.inputs, "Descriptor (.desc) or motion files; default: bundled dataset");
    train_cmd->add_option("-o,--out", ta.out, "Parameter file to write")->required();
    add_common(train_cmd);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Simulate PD tracking of a command file and score it");
    eval->add_option("commands", ea.commands, "Command file")->required();
    eval->add_option("-o,--out", ea.out, "Report file; the per-frame trace goes to <out>.trace.csv");
    add_common(eval);

    RandomizeArgs za;
    auto* randomize = app.add_subcommand("randomize", "Sample domain-randomization parameter sets");
    randomize->add_option("--count", za.count, "Number of samples")->required();
    randomize->add_option("-o,--out", za.out, "Also write the samples to this file");
    add_common(randomize);

    auto* inspect = app.add_subcommand("inspect", "Print the robot model and actuator table");
    add_common(inspect);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*retarget) return cmd_retarget(common, ra);
        if (*train_cmd) return cmd_train(common, ta);
        if (*eval) return cmd_eval(common, ea);
        if (*randomize) return cmd_randomize(common, za);
        if (*inspect) return cmd_inspect(common);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kUsage;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kNumeric;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInput;
    }
    return kUsage;
}
