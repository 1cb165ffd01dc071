#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "retarget/descriptor.hpp"
#include "retarget/error.hpp"
#include "retarget/file_io.hpp"
#include "retarget/ik_oracle.hpp"
#include "retarget/npr.hpp"
#include "retarget/parallel.hpp"
#include "retarget/random.hpp"
#include "retarget/robot.hpp"

// Angle signal network: 28 -> 128 -> BN -> ReLU -> 128 -> BN -> ReLU -> 21,
// then q = q_min + sigmoid(raw) * (q_max - q_min). Trained self-supervised on
// the NPR loss through forward kinematics.
namespace retarget {

inline constexpr double kBnEps = 1e-5;

enum class Mode { train, infer };

struct MlpParams {
    static constexpr std::size_t kIn = kDescriptorDims;
    static constexpr std::size_t kHidden = 128;
    static constexpr std::size_t kOut = kCommandDims;

    // Offsets of the trainable blocks inside `theta`.
    static constexpr std::size_t kW1 = 0;
    static constexpr std::size_t kB1 = kW1 + kHidden * kIn;
    static constexpr std::size_t kGamma1 = kB1 + kHidden;
    static constexpr std::size_t kBeta1 = kGamma1 + kHidden;
    static constexpr std::size_t kW2 = kBeta1 + kHidden;
    static constexpr std::size_t kB2 = kW2 + kHidden * kHidden;
    static constexpr std::size_t kGamma2 = kB2 + kHidden;
    static constexpr std::size_t kBeta2 = kGamma2 + kHidden;
    static constexpr std::size_t kW3 = kBeta2 + kHidden;
    static constexpr std::size_t kB3 = kW3 + kOut * kHidden;
    static constexpr std::size_t kCount = kB3 + kOut;

    // Weight matrices are row-major (output, input).
    std::vector<double> theta = std::vector<double>(kCount, 0.0);
    std::array<std::vector<double>, 2> running_mean{std::vector<double>(kHidden, 0.0),
                                                     std::vector<double>(kHidden, 0.0)};
    std::array<std::vector<double>, 2> running_var{std::vector<double>(kHidden, 1.0),
                                                    std::vector<double>(kHidden, 1.0)};

    // Weights and biases uniform in +-scale / sqrt(fan_in); gamma 1, beta 0.
    static MlpParams init(Rng& rng, double scale = 1.0) {
        MlpParams p;
        auto fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
            const double b = scale / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < n; ++i) p.theta[off + i] = rng.uniform(-b, b);
        };
        fill(kW1, kHidden * kIn, kIn);
        fill(kB1, kHidden, kIn);
        fill(kW2, kHidden * kHidden, kHidden);
        fill(kB2, kHidden, kHidden);
        fill(kW3, kOut * kHidden, kHidden);
        fill(kB3, kOut, kHidden);
        for (std::size_t i = 0; i < kHidden; ++i) {
            p.theta[kGamma1 + i] = 1.0;
            p.theta[kGamma2 + i] = 1.0;
        }
        return p;
    }

    void validate() const {
        if (theta.size() != kCount) throw ValidationError("asn params: wrong parameter count");
        for (double v : theta) {
            if (!std::isfinite(v)) throw ValidationError("asn params: non-finite parameter");
        }
        for (int l = 0; l < 2; ++l) {
            const auto li = static_cast<std::size_t>(l);
            if (running_mean[li].size() != kHidden || running_var[li].size() != kHidden) {
                throw ValidationError("asn params: wrong batch-norm statistics size");
            }
            for (std::size_t i = 0; i < kHidden; ++i) {
                if (!std::isfinite(running_mean[li][i]) || !(running_var[li][i] >= kBnEps) ||
                    !std::isfinite(running_var[li][i])) {
                    throw ValidationError("asn params: invalid running statistics in layer " + std::to_string(l + 1));
                }
            }
        }
    }
};

namespace detail {

struct HiddenLayer {
    std::size_t w, b, gamma, beta, in;
};

inline constexpr std::array<HiddenLayer, 2> kHiddenLayers{{
    {MlpParams::kW1, MlpParams::kB1, MlpParams::kGamma1, MlpParams::kBeta1, MlpParams::kIn},
    {MlpParams::kW2, MlpParams::kB2, MlpParams::kGamma2, MlpParams::kBeta2, MlpParams::kHidden},
}};

// out[b][o] = bias[o] + sum_i w[o][i] * x[b][i]
inline void linear(const double* w, const double* bias, const double* x, std::size_t batch, std::size_t in,
                   std::size_t out, double* y) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x + b * in;
        double* yb = y + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = w + o * in;
            double s = bias[o];
            for (std::size_t i = 0; i < in; ++i) s += wo[i] * xb[i];
            yb[o] = s;
        }
    }
}

inline void require_finite(const std::vector<double>& v, int layer) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("asn forward: non-finite activation in layer " + std::to_string(layer));
    }
}

}  // namespace detail

// Activations kept for the backward pass. Row-major (sample, unit).
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<double> x;
    std::array<std::vector<double>, 2> xhat, pre_relu, act;
    std::array<std::vector<double>, 2> mean, var, inv_std;  // per unit
    std::vector<double> raw;
    std::vector<CommandVector> q;
};

// Batched forward pass. Train mode normalizes with batch statistics and needs
// at least two samples; infer mode uses the running statistics.
inline std::vector<CommandVector> forward(const MlpParams& p, std::span<const DescriptorVector> xs, Mode mode,
                                          const LimitSquash& squash, ForwardCache* cache = nullptr) {
    constexpr std::size_t H = MlpParams::kHidden, I = MlpParams::kIn, O = MlpParams::kOut;
    const std::size_t B = xs.size();
    if (B == 0) throw ValidationError("asn forward: empty batch");
    if (mode == Mode::train && B < 2) throw ValidationError("asn forward: train mode needs a batch of at least 2");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.batch = B;
    c.x.resize(B * I);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < I; ++i) {
            if (!std::isfinite(xs[b][i])) throw ValidationError("asn forward: non-finite input");
            c.x[b * I + i] = xs[b][i];
        }
    }

    const double* input = c.x.data();
    for (std::size_t l = 0; l < 2; ++l) {
        const detail::HiddenLayer& L = detail::kHiddenLayers[l];
        std::vector<double> z(B * H);
        detail::linear(&p.theta[L.w], &p.theta[L.b], input, B, L.in, H, z.data());
        c.mean[l].assign(H, 0.0);
        c.var[l].assign(H, 0.0);
        if (mode == Mode::train) {
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t h = 0; h < H; ++h) c.mean[l][h] += z[b * H + h];
            }
            for (double& m : c.mean[l]) m /= static_cast<double>(B);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t h = 0; h < H; ++h) {
                    const double d = z[b * H + h] - c.mean[l][h];
                    c.var[l][h] += d * d;
                }
            }
            for (double& v : c.var[l]) v /= static_cast<double>(B);
        } else {
            c.mean[l] = p.running_mean[l];
            c.var[l] = p.running_var[l];
        }
        c.inv_std[l].resize(H);
        for (std::size_t h = 0; h < H; ++h) c.inv_std[l][h] = 1.0 / std::sqrt(c.var[l][h] + kBnEps);

        c.xhat[l].resize(B * H);
        c.pre_relu[l].resize(B * H);
        c.act[l].resize(B * H);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t h = 0; h < H; ++h) {
                const std::size_t k = b * H + h;
                c.xhat[l][k] = (z[k] - c.mean[l][h]) * c.inv_std[l][h];
                c.pre_relu[l][k] = p.theta[L.gamma + h] * c.xhat[l][k] + p.theta[L.beta + h];
                c.act[l][k] = std::max(0.0, c.pre_relu[l][k]);
            }
        }
        detail::require_finite(c.pre_relu[l], static_cast<int>(l) + 1);
        input = c.act[l].data();
    }

    c.raw.resize(B * O);
    detail::linear(&p.theta[MlpParams::kW3], &p.theta[MlpParams::kB3], input, B, H, O, c.raw.data());
    detail::require_finite(c.raw, 3);
    c.q.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
        CommandVector r{};
        std::copy_n(c.raw.begin() + static_cast<std::ptrdiff_t>(b * O), O, r.begin());
        c.q[b] = squash.apply(r);
    }
    return c.q;
}

// Single-sample inference (running statistics).
inline CommandVector infer(const MlpParams& p, const DescriptorVector& x, const LimitSquash& squash) {
    return forward(p, std::span<const DescriptorVector>(&x, 1), Mode::infer, squash).front();
}

// Gradient of the loss w.r.t. theta given dL/draw (rows per sample), through
// the batch-statistics path of batch norm.
inline std::vector<double> backward(const MlpParams& p, const ForwardCache& c, const std::vector<double>& d_raw) {
    constexpr std::size_t H = MlpParams::kHidden, O = MlpParams::kOut;
    const std::size_t B = c.batch;
    const double inv_b = 1.0 / static_cast<double>(B);
    std::vector<double> g(MlpParams::kCount, 0.0);

    // output layer
    std::vector<double> d_act(B * H, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        const double* a = &c.act[1][b * H];
        for (std::size_t o = 0; o < O; ++o) {
            const double d = d_raw[b * O + o];
            if (d == 0.0) continue;
            g[MlpParams::kB3 + o] += d;
            double* gw = &g[MlpParams::kW3 + o * H];
            const double* w = &p.theta[MlpParams::kW3 + o * H];
            double* da = &d_act[b * H];
            for (std::size_t h = 0; h < H; ++h) {
                gw[h] += d * a[h];
                da[h] += d * w[h];
            }
        }
    }

    for (std::size_t li = 2; li-- > 0;) {
        const detail::HiddenLayer& L = detail::kHiddenLayers[li];
        // ReLU, then batch norm
        std::vector<double> d_xhat(B * H);
        std::vector<double> sum_dxhat(H, 0.0), sum_dxhat_xhat(H, 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t h = 0; h < H; ++h) {
                const std::size_t k = b * H + h;
                const double dy = c.pre_relu[li][k] > 0.0 ? d_act[k] : 0.0;
                g[L.gamma + h] += dy * c.xhat[li][k];
                g[L.beta + h] += dy;
                d_xhat[k] = dy * p.theta[L.gamma + h];
                sum_dxhat[h] += d_xhat[k];
                sum_dxhat_xhat[h] += d_xhat[k] * c.xhat[li][k];
            }
        }
        std::vector<double> d_z(B * H);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t h = 0; h < H; ++h) {
                const std::size_t k = b * H + h;
                d_z[k] = c.inv_std[li][h] * (d_xhat[k] - inv_b * sum_dxhat[h] - c.xhat[li][k] * inv_b * sum_dxhat_xhat[h]);
            }
        }
        // linear
        const double* input = li == 0 ? c.x.data() : c.act[0].data();
        const std::size_t in = L.in;
        if (li == 1) d_act.assign(B * H, 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            const double* xb = input + b * in;
            for (std::size_t h = 0; h < H; ++h) {
                const double d = d_z[b * H + h];
                g[L.b + h] += d;
                double* gw = &g[L.w + h * in];
                for (std::size_t i = 0; i < in; ++i) gw[i] += d * xb[i];
                if (li == 1) {
                    const double* w = &p.theta[L.w + h * in];
                    double* da = &d_act[b * H];
                    for (std::size_t i = 0; i < in; ++i) da[i] += d * w[i];
                }
            }
        }
    }
    return g;
}

struct BatchResult {
    double loss = 0.0;                 // mean NPR loss over the batch
    std::vector<double> sample_loss;
    std::vector<double> grad;          // d loss / d theta, empty unless requested
    std::vector<double> d_raw;         // d loss / d raw outputs, per sample
};

// Mean NPR loss of a train-mode batch and, optionally, its parameter gradient.
inline BatchResult evaluate_batch(const MlpParams& p, std::span<const DescriptorVector> targets, const RobotModel& model,
                                  const NprWeights& w, const LimitSquash& squash, bool with_grad,
                                  ForwardCache* cache_out = nullptr) {
    constexpr std::size_t O = MlpParams::kOut;
    ForwardCache local;
    ForwardCache& c = cache_out ? *cache_out : local;
    const std::vector<CommandVector> q = forward(p, targets, Mode::train, squash, &c);
    const std::size_t B = targets.size();

    BatchResult r;
    r.sample_loss.resize(B);
    std::vector<CommandVector> dq(B);
    parallel_for(B, [&](std::size_t b) {
        const LossGrad lg = npr_loss_and_grad(targets[b], q[b], model, w);
        r.sample_loss[b] = lg.loss;
        dq[b] = lg.grad;
    });
    for (double l : r.sample_loss) r.loss += l;
    r.loss /= static_cast<double>(B);

    r.d_raw.resize(B * O);
    for (std::size_t b = 0; b < B; ++b) {
        CommandVector raw{};
        std::copy_n(c.raw.begin() + static_cast<std::ptrdiff_t>(b * O), O, raw.begin());
        const CommandVector slope = squash.slope(raw);
        for (std::size_t k = 0; k < O; ++k) r.d_raw[b * O + k] = dq[b][k] * slope[k] / static_cast<double>(B);
    }
    if (with_grad) r.grad = backward(p, c, r.d_raw);
    return r;
}

// Mean NPR loss of infer-mode predictions.
inline double evaluate_infer(const MlpParams& p, std::span<const DescriptorVector> targets, const RobotModel& model,
                             const NprWeights& w) {
    if (targets.empty()) throw ValidationError("asn evaluate: empty set");
    const LimitSquash squash(model);
    const std::vector<CommandVector> q = forward(p, targets, Mode::infer, squash);
    std::vector<double> loss(targets.size());
    parallel_for(targets.size(), [&](std::size_t i) { loss[i] = npr_loss_at(targets[i], q[i], model, w); });
    return std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(loss.size());
}

// Running statistics from a train-mode cache: r = (1 - m) r + m * batch, the
// variance taken unbiased and floored at kBnEps.
inline void update_running_stats(MlpParams& p, const ForwardCache& c, double momentum) {
    const double unbias = static_cast<double>(c.batch) / static_cast<double>(c.batch - 1);
    for (std::size_t l = 0; l < 2; ++l) {
        for (std::size_t h = 0; h < MlpParams::kHidden; ++h) {
            p.running_mean[l][h] = (1.0 - momentum) * p.running_mean[l][h] + momentum * c.mean[l][h];
            const double v = (1.0 - momentum) * p.running_var[l][h] + momentum * c.var[l][h] * unbias;
            p.running_var[l][h] = std::max(v, kBnEps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double bn_momentum = 0.1;
    std::uint64_t seed = 1;
    double init_scale = 1.0;
    // Cosine decay from learning_rate to learning_rate * final_lr_fraction
    // over the epochs; 1 keeps the rate constant.
    double final_lr_fraction = 1.0;

    double learning_rate_at(int epoch) const {
        if (epochs <= 1 || final_lr_fraction == 1.0) return learning_rate;
        const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
        const double f = final_lr_fraction + (1.0 - final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
        return learning_rate * f;
    }

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 for batch norm");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
        if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("train: bn_momentum must be in (0, 1]");
        if (!(init_scale > 0.0) || !std::isfinite(init_scale)) throw ConfigError("train: init_scale must be > 0");
        if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
            throw ConfigError("train: final_lr_fraction must be in (0, 1]");
        }
    }
};

inline constexpr double kDivergenceLoss = 1e6;

struct TrainReport {
    double initial_train_loss = 0.0;   // before the first update, same batching as epoch 1
    std::vector<double> train_loss;    // per epoch, mean over the epoch's batches
    std::vector<double> val_loss;      // per epoch, infer mode
    std::uint64_t checksum = 0;        // of the final serialized params
    bool diverged = false;
    std::string message;
};

struct TrainResult {
    MlpParams params;
    TrainReport report;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::vector<std::vector<std::size_t>> batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        if (end - i < 2) break;  // a single leftover sample has no batch statistics
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

}  // namespace detail

inline std::string serialize_params(const MlpParams& p);

// Minibatch SGD with momentum (v = mu v + g; theta -= lr v) on the mean NPR
// loss. Shuffling and initialization come from cfg.seed. Validation loss is
// computed on `val`, or on the training set when `val` is empty. Divergence
// stops training with the report flagged and the last finite parameters.
inline TrainResult train(const std::vector<DescriptorVector>& data, const RobotModel& model, const NprWeights& w,
                         const TrainConfig& cfg, const std::vector<DescriptorVector>& val = {}) {
    cfg.validate();
    w.validate();
    if (data.empty()) throw ValidationError("train: empty dataset");
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    if (data.size() < bs) {
        throw ValidationError("train: dataset has " + std::to_string(data.size()) + " samples, fewer than batch_size " +
                              std::to_string(bs));
    }
    for (const auto& d : data) validate_descriptor(d);
    for (const auto& d : val) validate_descriptor(d);

    const LimitSquash squash(model);
    Rng rng(cfg.seed);
    TrainResult out;
    MlpParams& p = out.params;
    p = MlpParams::init(rng, cfg.init_scale);
    TrainReport& rep = out.report;
    const std::vector<DescriptorVector>& val_set = val.empty() ? data : val;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<DescriptorVector> b;
        b.reserve(idx.size());
        for (std::size_t i : idx) b.push_back(data[i]);
        return b;
    };

    {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& idx : detail::batches(order, bs)) {
            sum += evaluate_batch(p, gather(idx), model, w, squash, false).loss * static_cast<double>(idx.size());
            n += idx.size();
        }
        rep.initial_train_loss = sum / static_cast<double>(n);
    }

    std::vector<double> velocity(MlpParams::kCount, 0.0);
    for (int epoch = 0; epoch < cfg.epochs && !rep.diverged; ++epoch) {
        shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.learning_rate_at(epoch);
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& idx : detail::batches(order, bs)) {
            ForwardCache cache;
            BatchResult br;
            try {
                br = evaluate_batch(p, gather(idx), model, w, squash, true, &cache);
            } catch (const NumericError& e) {
                rep.diverged = true;
                rep.message = "epoch " + std::to_string(epoch + 1) + ": " + e.what();
                break;
            }
            if (!std::isfinite(br.loss) || br.loss > kDivergenceLoss) {
                rep.diverged = true;
                rep.message = "epoch " + std::to_string(epoch + 1) + ": loss diverged (" + std::to_string(br.loss) + ")";
                break;
            }
            for (std::size_t k = 0; k < MlpParams::kCount; ++k) {
                velocity[k] = cfg.momentum * velocity[k] + br.grad[k];
                p.theta[k] -= lr * velocity[k];
            }
            update_running_stats(p, cache, cfg.bn_momentum);
            sum += br.loss * static_cast<double>(idx.size());
            n += idx.size();
        }
        if (rep.diverged) break;
        rep.train_loss.push_back(sum / static_cast<double>(n));
        rep.val_loss.push_back(evaluate_infer(p, val_set, model, w));
    }
    rep.checksum = detail::fnv1a(serialize_params(p));
    return out;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

// `count` descriptors: round(count * synthetic_fraction) from FK of uniform
// random in-limit commands, the rest drawn from `motion` (cycled in a shuffled
// order). With no motion descriptors every sample is synthetic. Shuffled.
inline std::vector<DescriptorVector> build_dataset(const std::vector<DescriptorVector>& motion, std::size_t count,
                                                   double synthetic_fraction, const RobotModel& model, Rng& rng) {
    if (!(synthetic_fraction >= 0.0 && synthetic_fraction <= 1.0)) {
        throw ConfigError("dataset: synthetic_fraction must be in [0, 1]");
    }
    std::size_t n_syn = static_cast<std::size_t>(std::llround(static_cast<double>(count) * synthetic_fraction));
    if (motion.empty()) n_syn = count;
    std::vector<DescriptorVector> out;
    out.reserve(count);
    const CommandVector lo = model.command_min(), hi = model.command_max();
    for (std::size_t i = 0; i < n_syn; ++i) {
        CommandVector c{};
        for (std::size_t k = 0; k < kCommandDims; ++k) c[k] = rng.uniform(lo[k], hi[k]);
        out.push_back(flatten(robot_descriptor(fk(expand_command(c, model), model), model)));
    }
    if (n_syn < count) {
        std::vector<std::size_t> idx(motion.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; out.size() < count; ++i) out.push_back(motion[idx[i % idx.size()]]);
    }
    shuffle(out.begin(), out.end(), rng);
    return out;
}

// ---------------------------------------------------------------------------
// Parameter files
// ---------------------------------------------------------------------------
//
// Little-endian binary:
//   8 bytes   magic "RTASNPRM"
//   uint32    version (1)
//   uint32    input, hidden, output sizes (28, 128, 21)
//   uint64    theta count
//   float64[] theta, in the block order of MlpParams
//   float64[] running mean 1, running var 1, running mean 2, running var 2 (hidden each)
//   uint64    FNV-1a hash of all preceding bytes

inline constexpr std::uint32_t kParamsVersion = 1;
inline constexpr char kParamsMagic[8] = {'R', 'T', 'A', 'S', 'N', 'P', 'R', 'M'};

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

namespace detail {

template <class T>
void put(std::string& s, const T& v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    s.append(buf, sizeof(T));
}

struct Reader {
    const std::string& s;
    std::size_t pos = 0;

    template <class T>
    T get(const char* what) {
        if (s.size() - pos < sizeof(T)) throw ParseError(std::string("params file truncated while reading ") + what);
        T v;
        std::memcpy(&v, s.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
};

}  // namespace detail

inline std::string serialize_params(const MlpParams& p) {
    std::string s(kParamsMagic, sizeof(kParamsMagic));
    detail::put(s, kParamsVersion);
    detail::put(s, static_cast<std::uint32_t>(MlpParams::kIn));
    detail::put(s, static_cast<std::uint32_t>(MlpParams::kHidden));
    detail::put(s, static_cast<std::uint32_t>(MlpParams::kOut));
    detail::put(s, static_cast<std::uint64_t>(p.theta.size()));
    for (double v : p.theta) detail::put(s, v);
    for (std::size_t l = 0; l < 2; ++l) {
        for (double v : p.running_mean[l]) detail::put(s, v);
        for (double v : p.running_var[l]) detail::put(s, v);
    }
    detail::put(s, detail::fnv1a(s));
    return s;
}

inline MlpParams deserialize_params(const std::string& s) {
    if (s.size() < sizeof(kParamsMagic) || std::memcmp(s.data(), kParamsMagic, sizeof(kParamsMagic)) != 0) {
        throw ParseError("params file: bad magic (not an angle signal network file)");
    }
    detail::Reader r{s, sizeof(kParamsMagic)};
    const auto version = r.get<std::uint32_t>("version");
    if (version != kParamsVersion) {
        throw ParseError("params file version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kParamsVersion) + ")");
    }
    const auto in = r.get<std::uint32_t>("input size");
    const auto hidden = r.get<std::uint32_t>("hidden size");
    const auto outd = r.get<std::uint32_t>("output size");
    const auto count = r.get<std::uint64_t>("parameter count");
    if (in != MlpParams::kIn || hidden != MlpParams::kHidden || outd != MlpParams::kOut || count != MlpParams::kCount) {
        throw ParseError("params file: layer shape " + std::to_string(in) + "-" + std::to_string(hidden) + "-" +
                         std::to_string(outd) + " does not match 28-128-21");
    }
    MlpParams p;
    for (double& v : p.theta) v = r.get<double>("parameters");
    for (std::size_t l = 0; l < 2; ++l) {
        for (double& v : p.running_mean[l]) v = r.get<double>("running mean");
        for (double& v : p.running_var[l]) v = r.get<double>("running variance");
    }
    const std::size_t body = r.pos;
    const auto hash = r.get<std::uint64_t>("checksum");
    if (r.pos != s.size()) throw ParseError("params file: trailing bytes after checksum");
    if (hash != detail::fnv1a(s.substr(0, body))) throw ParseError("params file: checksum mismatch");
    try {
        p.validate();
    } catch (const ValidationError& e) {
        throw ParseError(std::string("params file: ") + e.what());
    }
    return p;
}

inline void save_params(const std::string& path, const MlpParams& p) { write_file_atomic(path, serialize_params(p)); }

inline MlpParams load_params(const std::string& path) { return deserialize_params(read_file(path)); }

}  // namespace retarget
