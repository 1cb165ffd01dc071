#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "retarget/descriptor.hpp"
#include "retarget/error.hpp"
#include "retarget/npr.hpp"
#include "retarget/random.hpp"
#include "retarget/robot.hpp"

namespace retarget {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// q = q_min + sigmoid(raw) * (q_max - q_min), elementwise over the command.
struct LimitSquash {
    CommandVector lo{};
    CommandVector hi{};
    CommandVector range{};

    explicit LimitSquash(const RobotModel& m) : lo(m.command_min()), hi(m.command_max()) {
        for (std::size_t k = 0; k < kCommandDims; ++k) range[k] = hi[k] - lo[k];
    }

    // Strictly inside the limits even where the sigmoid rounds to 0 or 1.
    CommandVector apply(const CommandVector& raw) const {
        CommandVector q{};
        for (std::size_t k = 0; k < kCommandDims; ++k) {
            q[k] = std::clamp(lo[k] + sigmoid(raw[k]) * range[k], std::nextafter(lo[k], hi[k]),
                              std::nextafter(hi[k], lo[k]));
        }
        return q;
    }

    // dq/draw = sigmoid' * range
    CommandVector slope(const CommandVector& raw) const {
        CommandVector d{};
        for (std::size_t k = 0; k < kCommandDims; ++k) {
            const double s = sigmoid(raw[k]);
            d[k] = s * (1.0 - s) * range[k];
        }
        return d;
    }

    // Inverse with q first clipped `margin` (fraction of the range) inside the
    // limits, so the raw value stays finite.
    CommandVector invert(const CommandVector& q, double margin = 0.01) const {
        CommandVector raw{};
        for (std::size_t k = 0; k < kCommandDims; ++k) {
            const double s = std::clamp((q[k] - lo[k]) / range[k], margin, 1.0 - margin);
            raw[k] = std::log(s / (1.0 - s));
        }
        return raw;
    }
};

struct SolverConfig {
    int max_iters = 500;       // per start
    int restarts = 8;          // starts in total, including the first
    std::uint64_t seed = 1;
    double grad_tol = 1e-7;    // infinity norm, raw space
    double loss_tol = 1e-8;
    bool warm_start = true;
    double armijo_c = 1e-4;
    double initial_step = 1.0;
    double init_margin = 0.01;

    void validate() const {
        if (max_iters < 1 || restarts < 1) throw ConfigError("solver: max_iters and restarts must be >= 1");
        if (!(grad_tol > 0.0) || !(loss_tol >= 0.0)) throw ConfigError("solver: tolerances must be positive");
        if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("solver: armijo_c must be in (0, 1)");
        if (!(initial_step > 0.0)) throw ConfigError("solver: initial_step must be > 0");
        if (!(init_margin > 0.0 && init_margin < 0.5)) throw ConfigError("solver: init_margin must be in (0, 0.5)");
    }
};

struct SolveReport {
    CommandVector q{};
    CommandVector raw{};  // unconstrained variables behind q
    double final_loss = std::numeric_limits<double>::infinity();
    int iterations = 0;   // summed over the winning start of each limb group
    bool converged = false;
    int restarts_used = 0;
};

namespace detail {

struct DescentResult {
    CommandVector raw{};
    double loss = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline constexpr int kStallWindow = 25;
inline constexpr double kStallTol = 1e-12;

inline double inf_norm(const CommandVector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Gradient descent in raw space with Armijo backtracking (halving). The first
// trial step of each line search is a Barzilai-Borwein step, alternating
// s.s / s.y and s.y / y.y, when the curvature estimate s.y is positive; else
// double the last accepted step.
// Convergence also covers stationary points the gradient test cannot see (the
// loss has kinks): a line search that fails above step 1e-20, or less than
// kStallTol improvement over kStallWindow iterations.
inline DescentResult descend(const DescriptorVector& target, CommandVector raw, const RobotModel& model,
                             const NprWeights& w, const SolverConfig& cfg, const LimitSquash& squash,
                             RotationPenalty penalty, int max_iters, unsigned limb_mask = kAllLimbs) {
    auto eval = [&](const CommandVector& z, CommandVector* grad) {
        const CommandVector q = squash.apply(z);
        if (!grad) return npr_loss_at(target, q, model, w, penalty, limb_mask);
        const LossGrad lg = npr_loss_and_grad(target, q, model, w, penalty, limb_mask);
        const CommandVector slope = squash.slope(z);
        for (std::size_t k = 0; k < kCommandDims; ++k) (*grad)[k] = lg.grad[k] * slope[k];
        return lg.loss;
    };

    DescentResult r;
    CommandVector g{};
    double loss = eval(raw, &g);
    double step = cfg.initial_step;
    std::vector<double> history;
    for (r.iterations = 0;; ++r.iterations) {
        if (!std::isfinite(loss)) {
            throw SolverError("solver: non-finite loss at iteration " + std::to_string(r.iterations));
        }
        history.push_back(loss);
        const bool stalled = history.size() > kStallWindow &&
                             history[history.size() - 1 - kStallWindow] - loss <= kStallTol * std::max(1.0, loss);
        if (loss < cfg.loss_tol || inf_norm(g) < cfg.grad_tol || stalled) {
            r.converged = true;
            break;
        }
        if (r.iterations >= max_iters) break;

        double g2 = 0.0;
        for (double x : g) g2 += x * x;
        bool accepted = false;
        CommandVector trial{};
        double trial_loss = 0.0;
        while (step > 1e-20) {
            for (std::size_t k = 0; k < kCommandDims; ++k) trial[k] = raw[k] - step * g[k];
            trial_loss = eval(trial, nullptr);
            if (trial_loss <= loss - cfg.armijo_c * step * g2) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            r.converged = true;
            break;
        }
        CommandVector g_new{};
        const double new_loss = eval(trial, &g_new);
        double ss = 0.0, sy = 0.0, yy = 0.0;
        for (std::size_t k = 0; k < kCommandDims; ++k) {
            const double s = trial[k] - raw[k];
            const double y = g_new[k] - g[k];
            ss += s * s;
            sy += s * y;
            yy += y * y;
        }
        if (sy > 0.0) {
            step = std::min(r.iterations % 2 ? sy / yy : ss / sy, 1e6);
        } else {
            step *= 2.0;
        }
        raw = trial;
        g = g_new;
        loss = new_loss;
    }
    r.raw = raw;
    r.loss = loss;
    return r;
}

// Extra weight on the translational terms during the smooth pass. The NPR
// weights leave those terms an order of magnitude flatter than the rotations,
// which slows descent along them; the zero set is unchanged.
inline constexpr double kSurrogateTransScale = 10.0;

// The geodesic term has a cone-shaped kink at zero error, where plain gradient
// descent zig-zags and stalls. A first pass on the squared angle (smooth there,
// same zero set) gets close; a second pass polishes the actual loss. The smooth
// pass gets 80% of the iteration budget. For unreachable targets the smooth
// optimum can be worse than the start, so the start wins ties.
inline DescentResult descend_two_phase(const DescriptorVector& target, const CommandVector& raw,
                                       const RobotModel& model, const NprWeights& w, const SolverConfig& cfg,
                                       const LimitSquash& squash, unsigned limb_mask = kAllLimbs) {
    const int smooth_iters = std::max(1, cfg.max_iters * 4 / 5);
    NprWeights ws = w;
    ws.w_trans *= kSurrogateTransScale;
    const DescentResult a =
        descend(target, raw, model, ws, cfg, squash, RotationPenalty::squared_geodesic, smooth_iters, limb_mask);
    DescentResult b = descend(target, a.raw, model, w, cfg, squash, RotationPenalty::geodesic,
                              std::max(1, cfg.max_iters - a.iterations), limb_mask);
    b.iterations += a.iterations;
    const double start_loss = npr_loss_at(target, squash.apply(raw), model, w, RotationPenalty::geodesic, limb_mask);
    if (start_loss <= b.loss) {
        b.raw = raw;
        b.loss = start_loss;
    }
    return b;
}

// Limbs and the commands that move them, grouped so that no command moves
// limbs in two groups. The loss is a sum over limbs, so groups are independent
// subproblems (for the NAO-like model: left arm, right arm, both legs joined
// by the shared HipYawPitch).
struct LimbGroup {
    unsigned limbs = 0;
    std::vector<std::size_t> commands;
};

inline std::vector<LimbGroup> limb_groups(const RobotModel& model) {
    std::array<std::uint32_t, 4> moves{};  // joints moving each limb
    for (Limb l : kLimbs) {
        const LimbKeypoints k = limb_keypoints(l);
        for (int kp : {k.proximal, k.distal, k.tip, k.direction_base}) {
            const auto ki = static_cast<std::size_t>(kp);
            moves[static_cast<std::size_t>(l)] |= model.ancestors[static_cast<std::size_t>(model.keypoints[ki].joint)];
        }
    }
    auto command_bits = [&](std::size_t k) {
        std::uint32_t bits = 1u << model.command_order[k];
        if (model.command_order[k] == model.mirror_source && model.mirror_target >= 0) bits |= 1u << model.mirror_target;
        return bits;
    };
    std::array<unsigned, kCommandDims> touches{};
    for (std::size_t k = 0; k < kCommandDims; ++k) {
        for (Limb l : kLimbs) {
            if (moves[static_cast<std::size_t>(l)] & command_bits(k)) touches[k] |= 1u << static_cast<unsigned>(l);
        }
    }
    // merge limbs sharing a command until stable
    std::array<unsigned, 4> group{};
    for (unsigned l = 0; l < 4; ++l) group[l] = 1u << l;
    for (bool changed = true; changed;) {
        changed = false;
        for (unsigned t : touches) {
            for (unsigned l = 0; l < 4; ++l) {
                if ((t & (1u << l)) && (group[l] | t) != group[l]) {
                    group[l] |= t;
                    changed = true;
                }
            }
            for (unsigned l = 0; l < 4; ++l) {
                for (unsigned m = 0; m < 4; ++m) {
                    if ((group[l] & group[m]) && group[l] != (group[l] | group[m])) {
                        group[l] |= group[m];
                        changed = true;
                    }
                }
            }
        }
    }
    std::vector<LimbGroup> out;
    for (unsigned l = 0; l < 4; ++l) {
        if (std::any_of(out.begin(), out.end(), [&](const LimbGroup& g) { return g.limbs == group[l]; })) continue;
        LimbGroup g{group[l], {}};
        for (std::size_t k = 0; k < kCommandDims; ++k) {
            if (touches[k] & g.limbs) g.commands.push_back(k);
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace detail

// Multi-start minimization of the NPR loss over joint commands, run per
// independent limb group. Start 0 is `warm` (raw variables) when given, else
// the zero pose; the rest are uniform in the limits from cfg.seed. Each group
// keeps its best start (ties keep the lower index) and stops once its loss is
// below loss_tol. Commands that move no limb stay at start 0.
inline SolveReport solve(const DescriptorVector& target, const RobotModel& model, const NprWeights& w,
                         const SolverConfig& cfg = {}, const CommandVector* warm = nullptr) {
    cfg.validate();
    validate_descriptor(target);
    const LimitSquash squash(model);
    const std::vector<detail::LimbGroup> groups = detail::limb_groups(model);
    Rng rng(cfg.seed);
    const CommandVector lo = model.command_min(), hi = model.command_max();

    struct GroupBest {
        double loss = std::numeric_limits<double>::infinity();
        int iterations = 0;
        bool converged = false;
        bool done = false;
    };
    std::vector<GroupBest> gb(groups.size());
    SolveReport best;
    best.raw = warm ? *warm : squash.invert(CommandVector{}, cfg.init_margin);

    for (int start = 0; start < cfg.restarts; ++start) {
        CommandVector raw = best.raw;
        if (start > 0) {
            CommandVector q0{};
            for (std::size_t k = 0; k < kCommandDims; ++k) q0[k] = rng.uniform(lo[k], hi[k]);
            raw = squash.invert(q0, cfg.init_margin);
        }
        bool all_done = true;
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            if (gb[gi].done) continue;
            const detail::LimbGroup& g = groups[gi];
            CommandVector init = best.raw;
            for (std::size_t k : g.commands) init[k] = raw[k];
            const detail::DescentResult d = detail::descend_two_phase(target, init, model, w, cfg, squash, g.limbs);
            if (d.loss < gb[gi].loss) {
                for (std::size_t k : g.commands) best.raw[k] = d.raw[k];
                gb[gi].loss = d.loss;
                gb[gi].iterations = d.iterations;
                gb[gi].converged = d.converged;
            }
            gb[gi].done = gb[gi].loss < cfg.loss_tol;
            all_done = all_done && gb[gi].done;
        }
        best.restarts_used = start + 1;
        if (all_done) break;
    }
    best.converged = true;
    for (const GroupBest& b : gb) {
        best.iterations += b.iterations;
        best.converged = best.converged && b.converged;
    }
    best.q = squash.apply(best.raw);
    best.final_loss = npr_loss_at(target, best.q, model, w);
    if (!std::isfinite(best.final_loss)) throw SolverError("solver: non-finite final loss");
    check_limits(expand_command_unchecked(best.q, model), model);
    return best;
}

inline SolveReport solve(const PoseDescriptor& target, const RobotModel& model, const NprWeights& w,
                         const SolverConfig& cfg = {}) {
    return solve(flatten(target), model, w, cfg);
}

struct FrameSolve {
    std::optional<SolveReport> report;
    std::string error;  // set when the frame failed

    bool ok() const { return report.has_value(); }
};

// Solves frames in order. With warm_start, each frame's first start is the
// previous successful frame's solution. A failing frame records its error and
// the sequence continues.
inline std::vector<FrameSolve> solve_sequence(const std::vector<DescriptorVector>& targets, const RobotModel& model,
                                              const NprWeights& w, const SolverConfig& cfg = {}) {
    if (targets.empty()) throw ValidationError("solve_sequence: no targets");
    cfg.validate();
    std::vector<FrameSolve> out;
    out.reserve(targets.size());
    std::optional<CommandVector> prev;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        FrameSolve fs;
        try {
            fs.report = solve(targets[i], model, w, cfg, (cfg.warm_start && prev) ? &*prev : nullptr);
            prev = fs.report->raw;
        } catch (const Error& e) {
            fs.error = "frame " + std::to_string(i) + ": " + e.what();
        }
        out.push_back(std::move(fs));
    }
    return out;
}

}  // namespace retarget
