#pragma once

// Backprop vs central finite differences on randomly chosen activation units.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "camforge/error.hpp"
#include "camforge/nn.hpp"
#include "camforge/splitmix64.hpp"

namespace camforge::gradcheck {

struct Probe {
    int layer = 0;
    std::size_t unit = 0;  // flat index into the layer activation
    double backprop = 0;
    double finite_difference = 0;
    double rel_error = 0;  // |bp - fd| / max(1e-8, |fd|)
};

struct Report {
    std::size_t class_index = 0;
    nn::ScoreMode mode = nn::ScoreMode::pre_softmax;
    double step = 0;
    double tolerance = 0;
    std::vector<Probe> probes;
    /// Candidates rejected because the +/- step crossed a ReLU or max-pool
    /// switch, where the derivative does not exist.
    std::size_t kink_skips = 0;
    double max_rel_error = 0;
    bool passed = false;
};

struct Options {
    std::size_t probe_count = 100;
    std::uint64_t seed = 42;
    double step = 1e-3;  // scaled by max(1, |a|)
    double tolerance = 1e-4;
    bool include_input = false;
};

inline double score_of(const nn::ForwardTrace<double>& t, const nn::ScoreSpec& s) {
    return s.mode == nn::ScoreMode::pre_softmax ? t.pre_softmax[s.class_index] : t.post_softmax[s.class_index];
}

inline double relative_error(double backprop, double fd) {
    return std::abs(backprop - fd) / std::max(1e-8, std::abs(fd));
}

/// Samples `probe_count` (layer, unit) pairs uniformly over the spatial
/// layers (and optionally the image), skipping points within one step of a
/// kink, and compares backprop with the central difference.
inline Report check(const nn::Model<double>& model, const Tensor<double>& image, const nn::ScoreSpec& score,
                    const Options& opt = {}) {
    const auto trace = nn::forward(model, image);
    if (score.class_index >= trace.class_count()) throw InvalidArgument("class index out of range");
    std::vector<int> layers = nn::spatial_layers(model);
    if (opt.include_input) layers.insert(layers.begin(), nn::kInputLayer);

    std::map<int, Tensor<double>> grads;
    std::map<int, std::vector<std::vector<std::size_t>>> patterns;
    for (int l : layers) {
        grads[l] = nn::backward_from_output(model, trace, nn::score_gradient(trace, score), l);
        patterns[l] = nn::activation_pattern(model, trace, l);
    }

    Report rep;
    rep.class_index = score.class_index;
    rep.mode = score.mode;
    rep.step = opt.step;
    rep.tolerance = opt.tolerance;
    SplitMix64 rng(opt.seed);
    const std::size_t max_attempts = 100 * std::max<std::size_t>(opt.probe_count, 1);
    for (std::size_t attempt = 0; rep.probes.size() < opt.probe_count; ++attempt) {
        if (attempt >= max_attempts)
            throw CheckError("could not find " + std::to_string(opt.probe_count) + " differentiable probe units");
        const int layer = layers[rng.below(layers.size())];
        const auto& base = trace.at(layer);
        const std::size_t unit = rng.below(base.size());
        const double h = opt.step * std::max(1.0, std::abs(base[unit]));

        Tensor<double> plus = base, minus = base;
        plus[unit] += h;
        minus[unit] -= h;
        const auto tp = nn::forward_from(model, layer, plus);
        const auto tm = nn::forward_from(model, layer, minus);
        if (nn::activation_pattern(model, tp, layer) != patterns[layer] ||
            nn::activation_pattern(model, tm, layer) != patterns[layer]) {
            ++rep.kink_skips;
            continue;
        }
        Probe p;
        p.layer = layer;
        p.unit = unit;
        p.backprop = grads[layer][unit];
        p.finite_difference = (score_of(tp, score) - score_of(tm, score)) / (2 * h);
        p.rel_error = relative_error(p.backprop, p.finite_difference);
        if (!std::isfinite(p.rel_error))
            throw CheckError("non-finite gradient at layer " + std::to_string(layer) + " unit " + std::to_string(unit));
        rep.max_rel_error = std::max(rep.max_rel_error, p.rel_error);
        rep.probes.push_back(p);
    }
    rep.passed = rep.max_rel_error < opt.tolerance;
    return rep;
}

}  // namespace camforge::gradcheck
