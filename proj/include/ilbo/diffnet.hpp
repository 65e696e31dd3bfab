#pragma once

// Feed-forward network engine: dense trunk with optional layer normalization,
// optional state/action encoder, linear or box-bounded output head, exact
// reverse-mode gradients, Adam, soft target updates and finite-difference
// certification.
//
// Flat parameter layout (NetParams::values), layer by layer in order:
//   [encoder state dense] [encoder action dense] trunk hidden... output
// and for each dense layer:
//   W (out x in, row-major) | b (out) | gain (out), shift (out)  <- LN only
// Layer normalization applies to every trunk hidden layer, between the dense
// map and the rectifier. Encoder layers are dense + rectifier, never normed.

#include "ilbo/types.hpp"

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ilbo {

inline constexpr double kLayerNormEpsilon = 1e-5;
/// Bounded heads map onto (lo, hi) scaled by this, so saturation stays interior.
inline constexpr double kBoundedShrink = 1.0 - 1e-9;

struct OutputActivation {
    enum class Kind { linear, bounded };
    Kind kind = Kind::linear;
    Vec lo;
    Vec hi;

    static OutputActivation linear() { return {}; }
    static OutputActivation bounded(Vec lo, Vec hi) {
        return {Kind::bounded, std::move(lo), std::move(hi)};
    }
    bool operator==(const OutputActivation& o) const {
        if (kind != o.kind) return false;
        if (kind == Kind::linear) return true;
        return lo.size() == o.lo.size() && hi.size() == o.hi.size() && lo == o.lo && hi == o.hi;
    }
};

/// Input split into a state block (first state_dim columns) and an action
/// block (the rest), each mapped through its own dense layer + rectifier.
struct Encoder {
    std::size_t state_dim = 0;
    std::size_t state_width = 32;
    std::size_t action_width = 32;
    bool operator==(const Encoder&) const = default;
};

struct NetSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_layers;
    std::size_t output_dim = 0;
    OutputActivation output;
    bool use_layer_norm = false;
    std::optional<Encoder> encoder;

    bool operator==(const NetSpec&) const = default;

    void validate() const {
        if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("NetSpec: zero input/output dimension");
        for (auto h : hidden_layers)
            if (h == 0) throw std::invalid_argument("NetSpec: zero-width hidden layer");
        if (output.kind == OutputActivation::Kind::bounded) {
            const auto n = static_cast<Eigen::Index>(output_dim);
            if (output.lo.size() != n || output.hi.size() != n)
                throw std::invalid_argument("NetSpec: bounded output needs lo/hi of output_dim");
            if (!(output.lo.array() < output.hi.array()).all())
                throw std::invalid_argument("NetSpec: bounded output needs lo < hi");
        }
        if (encoder) {
            if (encoder->state_dim == 0 || encoder->state_dim >= input_dim)
                throw std::invalid_argument("NetSpec: encoder state block must leave a non-empty action block");
            if (encoder->state_width == 0 || encoder->action_width == 0)
                throw std::invalid_argument("NetSpec: zero encoder width");
        }
    }
};

/// Where one dense layer lives in the flat parameter vector.
struct DenseLayout {
    std::size_t in = 0, out = 0;
    std::size_t weight = 0, bias = 0;
    std::size_t gain = 0, shift = 0;  // valid only when normed
    bool normed = false;
    bool rectified = true;
};

struct NetLayout {
    std::optional<DenseLayout> enc_state, enc_action;
    std::vector<DenseLayout> trunk;  // hidden layers
    DenseLayout head;
    std::size_t count = 0;
};

inline NetLayout make_layout(const NetSpec& spec) {
    spec.validate();
    NetLayout lay;
    std::size_t off = 0;
    auto dense = [&](std::size_t in, std::size_t out, bool normed, bool rectified) {
        DenseLayout d;
        d.in = in;
        d.out = out;
        d.weight = off;
        off += in * out;
        d.bias = off;
        off += out;
        d.normed = normed;
        d.rectified = rectified;
        if (normed) {
            d.gain = off;
            off += out;
            d.shift = off;
            off += out;
        }
        return d;
    };
    std::size_t width = spec.input_dim;
    if (spec.encoder) {
        const auto& e = *spec.encoder;
        lay.enc_state = dense(e.state_dim, e.state_width, false, true);
        lay.enc_action = dense(spec.input_dim - e.state_dim, e.action_width, false, true);
        width = e.state_width + e.action_width;
    }
    for (auto h : spec.hidden_layers) {
        lay.trunk.push_back(dense(width, h, spec.use_layer_norm, true));
        width = h;
    }
    lay.head = dense(width, spec.output_dim, false, false);
    lay.count = off;
    return lay;
}

inline std::size_t parameter_count(const NetSpec& spec) { return make_layout(spec).count; }

struct NetParams {
    NetSpec spec;
    Vec values;

    bool operator==(const NetParams& o) const {
        return spec == o.spec && values.size() == o.values.size() && values == o.values;
    }
};

/// Activations recorded by net_forward; only valid for the (params, batch) pair.
struct ForwardCache {
    struct Layer {
        Mat input;    // B x in
        Mat pre;      // B x out, dense pre-activation
        Mat xhat;     // B x out, normalized pre-activation (normed layers)
        Vec inv_std;  // B, 1/sqrt(var + eps) per sample (normed layers)
        Vec mean;     // B
        Vec var;      // B
        Mat post;     // B x out, layer output
    };
    std::optional<Layer> enc_state, enc_action;
    std::vector<Layer> trunk;
    Layer head;
    Mat outputs;
    std::size_t param_count = 0;
    Eigen::Index batch = 0;
};

struct ForwardResult {
    Mat outputs;
    ForwardCache cache;
};

struct BackwardResult {
    Vec param_grad;
    Mat input_grad;
};

namespace detail {

inline Eigen::Map<const RowMat> weights(const Vec& v, const DenseLayout& d) {
    return {v.data() + d.weight, static_cast<Eigen::Index>(d.out), static_cast<Eigen::Index>(d.in)};
}

inline ForwardCache::Layer dense_forward(const Vec& v, const DenseLayout& d, Mat input) {
    ForwardCache::Layer L;
    const auto out = static_cast<Eigen::Index>(d.out);
    L.pre.noalias() = input * weights(v, d).transpose();
    L.pre.rowwise() += v.segment(static_cast<Eigen::Index>(d.bias), out).transpose();
    Mat y;
    if (d.normed) {
        const Eigen::Index B = L.pre.rows();
        L.mean = L.pre.rowwise().mean();
        L.xhat = L.pre.colwise() - L.mean;
        L.var = L.xhat.array().square().rowwise().mean();
        L.inv_std = (L.var.array() + kLayerNormEpsilon).rsqrt();
        for (Eigen::Index r = 0; r < B; ++r) L.xhat.row(r) *= L.inv_std(r);
        auto gain = v.segment(static_cast<Eigen::Index>(d.gain), out);
        auto shift = v.segment(static_cast<Eigen::Index>(d.shift), out);
        y = (L.xhat.array().rowwise() * gain.transpose().array()).rowwise() + shift.transpose().array();
    } else {
        y = L.pre;
    }
    L.post = d.rectified ? Mat(y.cwiseMax(0.0)) : y;
    L.input = std::move(input);
    return L;
}

/// Backprop through one dense layer given dL/d(post); accumulates parameter
/// gradients into g and returns dL/d(input).
inline Mat dense_backward(const Vec& v, const DenseLayout& d, const ForwardCache::Layer& L, Mat dpost, Vec& g) {
    const auto out = static_cast<Eigen::Index>(d.out);
    if (d.rectified) dpost.array() *= (L.post.array() > 0.0).cast<double>();
    Mat dpre;
    if (d.normed) {
        auto gain = v.segment(static_cast<Eigen::Index>(d.gain), out);
        g.segment(static_cast<Eigen::Index>(d.gain), out) += (dpost.array() * L.xhat.array()).colwise().sum().transpose().matrix();
        g.segment(static_cast<Eigen::Index>(d.shift), out) += dpost.colwise().sum().transpose();
        Mat dxhat = dpost.array().rowwise() * gain.transpose().array();
        Vec m1 = dxhat.rowwise().mean();
        Vec m2 = (dxhat.array() * L.xhat.array()).rowwise().mean();
        dpre = dxhat;
        for (Eigen::Index r = 0; r < dpre.rows(); ++r)
            dpre.row(r) = L.inv_std(r) * (dxhat.row(r).array() - m1(r) - L.xhat.row(r).array() * m2(r)).matrix();
    } else {
        dpre = std::move(dpost);
    }
    Eigen::Map<RowMat> gw(g.data() + d.weight, out, static_cast<Eigen::Index>(d.in));
    gw.noalias() += dpre.transpose() * L.input;
    g.segment(static_cast<Eigen::Index>(d.bias), out) += dpre.colwise().sum().transpose();
    return dpre * weights(v, d);
}

}  // namespace detail

/// Fan-in/fan-out scaled uniform weights, zero biases, unit gains, zero shifts.
inline NetParams net_init(const NetSpec& spec, std::uint64_t seed) {
    const NetLayout lay = make_layout(spec);
    NetParams p{spec, Vec::Zero(static_cast<Eigen::Index>(lay.count))};
    Rng rng = make_rng(seed, 0x1a7);
    auto fill = [&](const DenseLayout& d) {
        const double limit = std::sqrt(6.0 / static_cast<double>(d.in + d.out));
        std::uniform_real_distribution<double> U(-limit, limit);
        for (std::size_t k = 0; k < d.in * d.out; ++k) p.values(static_cast<Eigen::Index>(d.weight + k)) = U(rng);
        if (d.normed) p.values.segment(static_cast<Eigen::Index>(d.gain), static_cast<Eigen::Index>(d.out)).setOnes();
    };
    if (lay.enc_state) fill(*lay.enc_state);
    if (lay.enc_action) fill(*lay.enc_action);
    for (const auto& d : lay.trunk) fill(d);
    fill(lay.head);
    return p;
}

inline ForwardResult net_forward(const NetParams& params, const Mat& batch) {
    const NetLayout lay = make_layout(params.spec);
    const auto& spec = params.spec;
    if (static_cast<std::size_t>(params.values.size()) != lay.count)
        throw std::invalid_argument("net_forward: parameter vector does not match spec layout");
    if (batch.cols() != static_cast<Eigen::Index>(spec.input_dim))
        throw std::invalid_argument("net_forward: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                                    std::to_string(spec.input_dim));
    const Vec& v = params.values;
    ForwardCache c;
    c.param_count = lay.count;
    c.batch = batch.rows();
    Mat h;
    if (spec.encoder) {
        const auto sd = static_cast<Eigen::Index>(spec.encoder->state_dim);
        c.enc_state = detail::dense_forward(v, *lay.enc_state, batch.leftCols(sd));
        c.enc_action = detail::dense_forward(v, *lay.enc_action, batch.rightCols(batch.cols() - sd));
        h.resize(batch.rows(), c.enc_state->post.cols() + c.enc_action->post.cols());
        h << c.enc_state->post, c.enc_action->post;
    } else {
        h = batch;
    }
    for (const auto& d : lay.trunk) {
        c.trunk.push_back(detail::dense_forward(v, d, std::move(h)));
        h = c.trunk.back().post;
    }
    c.head = detail::dense_forward(v, lay.head, std::move(h));
    Mat out = c.head.post;
    if (spec.output.kind == OutputActivation::Kind::bounded) {
        const Vec mid = 0.5 * (spec.output.lo + spec.output.hi);
        const Vec half = 0.5 * kBoundedShrink * (spec.output.hi - spec.output.lo);
        out = (out.array().tanh().rowwise() * half.transpose().array()).rowwise() + mid.transpose().array();
    }
    c.outputs = out;
    return {std::move(out), std::move(c)};
}

inline Mat net_predict(const NetParams& params, const Mat& batch) { return net_forward(params, batch).outputs; }

inline BackwardResult net_backward(const NetParams& params, const ForwardCache& cache, const Mat& output_grad) {
    const NetLayout lay = make_layout(params.spec);
    const auto& spec = params.spec;
    if (cache.param_count != lay.count || static_cast<std::size_t>(params.values.size()) != lay.count ||
        cache.trunk.size() != lay.trunk.size() || cache.enc_state.has_value() != lay.enc_state.has_value())
        throw std::invalid_argument("net_backward: cache was produced by a different network");
    if (output_grad.rows() != cache.batch || output_grad.cols() != static_cast<Eigen::Index>(spec.output_dim) ||
        cache.outputs.rows() != cache.batch)
        throw std::invalid_argument("net_backward: output gradient shape does not match cached forward pass");
    const Vec& v = params.values;
    BackwardResult r;
    r.param_grad = Vec::Zero(static_cast<Eigen::Index>(lay.count));
    Mat d = output_grad;
    if (spec.output.kind == OutputActivation::Kind::bounded) {
        const Vec half = 0.5 * kBoundedShrink * (spec.output.hi - spec.output.lo);
        Mat t = cache.head.post.array().tanh();
        d = (d.array() * (1.0 - t.array().square())).rowwise() * half.transpose().array();
    }
    d = detail::dense_backward(v, lay.head, cache.head, std::move(d), r.param_grad);
    for (std::size_t i = lay.trunk.size(); i-- > 0;)
        d = detail::dense_backward(v, lay.trunk[i], cache.trunk[i], std::move(d), r.param_grad);
    if (spec.encoder) {
        const auto sw = static_cast<Eigen::Index>(spec.encoder->state_width);
        Mat ds = detail::dense_backward(v, *lay.enc_state, *cache.enc_state, d.leftCols(sw), r.param_grad);
        Mat da = detail::dense_backward(v, *lay.enc_action, *cache.enc_action, d.rightCols(d.cols() - sw), r.param_grad);
        r.input_grad.resize(d.rows(), static_cast<Eigen::Index>(spec.input_dim));
        r.input_grad << ds, da;
    } else {
        r.input_grad = std::move(d);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Optimizer and target tracking

struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(Eigen::Index n) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

/// One bias-corrected Adam descent step on params (minimizes). Throws on a
/// non-finite or mis-sized gradient, leaving params and state untouched.
inline void adam_step(AdamState& state, NetParams& params, const Vec& grad, double lr) {
    if (grad.size() != params.values.size() || state.m.size() != params.values.size())
        throw std::invalid_argument("adam_step: gradient/moment size mismatch");
    if (!grad.allFinite()) throw std::domain_error("adam_step: non-finite gradient");
    state.step += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.values.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.epsilon);
}

/// target <- tau * online + (1 - tau) * target
inline NetParams soft_update(NetParams target, const NetParams& online, double tau) {
    if (!(target.spec == online.spec) || target.values.size() != online.values.size())
        throw std::invalid_argument("soft_update: target and online networks differ in spec");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau outside [0, 1]");
    if (tau == 1.0) {
        target.values = online.values;
    } else if (tau != 0.0) {
        target.values = tau * online.values + (1.0 - tau) * target.values;
    }
    return target;
}

// ---------------------------------------------------------------------------
// Finite-difference certification

struct GradCheckOptions {
    double eps = 1e-6;
    /// Check only this many seed-chosen coordinates (all when unset).
    std::optional<std::size_t> subset;
    std::uint64_t seed = 0;
    /// Denominator floor: relative error degrades to absolute error below it.
    double abs_floor = 1e-6;
};

/// Max over checked coordinates of |fd - analytic| / max(|fd|, |analytic|, abs_floor),
/// using central differences.
inline double grad_check(const std::function<double(const Vec&)>& f, const Vec& point, const Vec& analytic,
                         const GradCheckOptions& opt = {}) {
    if (analytic.size() != point.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(point.size()));
    for (Eigen::Index i = 0; i < point.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    if (opt.subset && *opt.subset < coords.size()) {
        Rng rng = make_rng(opt.seed, 0x9c);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(*opt.subset);
    }
    Vec x = point;
    double worst = 0.0;
    for (auto i : coords) {
        const double x0 = x(i);
        x(i) = x0 + opt.eps;
        const double fp = f(x);
        x(i) = x0 - opt.eps;
        const double fm = f(x);
        x(i) = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::domain_error("grad_check: function returned a non-finite value");
        const double fd = (fp - fm) / (2.0 * opt.eps);
        const double denom = std::max({std::abs(fd), std::abs(analytic(i)), opt.abs_floor});
        worst = std::max(worst, std::abs(fd - analytic(i)) / denom);
    }
    return worst;
}

}  // namespace ilbo
