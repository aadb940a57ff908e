#pragma once

// Numerical audit of the Grad-CAM++ alpha derivation.
//
// All checks treat a layer's activations A as free variables and a scalar
// field Y(A) with an analytic gradient. Higher derivatives come from central
// differences of that gradient:
//   d2Y/dA_p dA_q ~ (dY/dA_q(A + h e_p) - dY/dA_q(A - h e_p)) / 2h
//   d3Y/dA_p^3    ~ (dY/dA_p(A + h e_p) - 2 dY/dA_p(A) + dY/dA_p(A - h e_p)) / h^2
// so one probe row costs two gradient evaluations.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "camforge/cam.hpp"
#include "camforge/error.hpp"
#include "camforge/nn.hpp"
#include "camforge/splitmix64.hpp"
#include "camforge/tensor.hpp"

namespace camforge::derivcheck {

using Field = Tensor<double>;

template <typename F>
concept ScalarField = requires(const F& f, const Field& a) {
    { f.value(a) } -> std::convertible_to<double>;
    { f.gradient(a) } -> std::convertible_to<Field>;
};

/// Y = exp(S^c) as a function of the activations at `layer`.
class ExpScoreHead {
public:
    ExpScoreHead(const nn::Model<double>& model, int layer, std::size_t class_index)
        : model_(&model), layer_(layer), class_(class_index) {
        if (layer < 0 || layer >= static_cast<int>(model.layer_count()))
            throw ShapeError("head layer out of range");
        if (class_index >= model.class_count()) throw InvalidArgument("class index out of range");
    }

    double score(const Field& a) const { return nn::forward_from(*model_, layer_, a).pre_softmax[class_]; }

    Field score_gradient(const Field& a) const {
        const auto trace = nn::forward_from(*model_, layer_, a);
        return nn::backward_to_layer(*model_, trace, {class_, nn::ScoreMode::pre_softmax}, layer_);
    }

    double value(const Field& a) const { return std::exp(score(a)); }

    Field gradient(const Field& a) const {
        const auto trace = nn::forward_from(*model_, layer_, a);
        const double y = std::exp(trace.pre_softmax[class_]);
        return scale(nn::backward_to_layer(*model_, trace, {class_, nn::ScoreMode::pre_softmax}, layer_), y);
    }

    int layer() const { return layer_; }
    std::size_t class_index() const { return class_; }

private:
    const nn::Model<double>* model_;
    int layer_;
    std::size_t class_;
};

/// Y = sum coeffs * A + offset.
struct LinearField {
    Field coeffs;
    double offset = 0.0;

    double value(const Field& a) const {
        double v = offset;
        for (std::size_t i = 0; i < a.size(); ++i) v += coeffs[i] * a[i];
        return v;
    }
    Field gradient(const Field&) const { return coeffs; }
};

/// Y + sum lambdas * A + constant.
template <ScalarField F>
struct ShiftedField {
    F base;
    Field lambdas;
    double constant = 0.0;

    double value(const Field& a) const {
        double v = base.value(a) + constant;
        for (std::size_t i = 0; i < a.size(); ++i) v += lambdas[i] * a[i];
        return v;
    }
    Field gradient(const Field& a) const { return add(base.gradient(a), lambdas); }
};

struct StepOptions {
    double first_order = 1e-4;   // relative step for derivatives of function values
    double higher_order = 1e-3;  // relative step for second/third derivatives
};

inline double step_for(double rel, double a) { return rel * std::max(1.0, std::abs(a)); }

inline cam::UnitIndex unit_of(const Field& a, std::size_t flat) {
    const std::size_t plane = a.dim(1) * a.dim(2);
    return {flat / plane, (flat % plane) / a.dim(2), flat % a.dim(2)};
}

inline std::vector<double> map_sums(const Field& a) { return cam::detail::map_sums(a); }

/// `count` distinct flat unit indices drawn from SplitMix64(seed).
inline std::vector<std::size_t> probe_units(const Field& a, std::size_t count, std::uint64_t seed) {
    if (count > a.size()) throw InvalidArgument("more probes than units");
    SplitMix64 rng(seed);
    std::vector<std::size_t> out;
    std::vector<bool> taken(a.size(), false);
    while (out.size() < count) {
        const std::size_t u = rng.below(a.size());
        if (!taken[u]) {
            taken[u] = true;
            out.push_back(u);
        }
    }
    return out;
}

/// Seeded constant alphas, uniform in [0,1), shaped like `a`.
inline Field random_alphas(const Field& a, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Field out(a.shape());
    for (auto& v : out.data()) v = rng.uniform();
    return out;
}

template <ScalarField F>
Field gradient_row_difference(const F& field, const Field& a, std::size_t p, double h) {
    Field plus = a, minus = a;
    plus[p] += h;
    minus[p] -= h;
    Field d = add(field.gradient(plus), scale(field.gradient(minus), -1.0));
    return scale(d, 1.0 / (2 * h));
}

// ---------------------------------------------------------------------------
// Corrected derivative identity

struct IdentityCheckResult {
    cam::UnitIndex unit;
    double lhs = 0;            // dF/dA_p by central difference
    double rhs_corrected = 0;  // with the cross-derivative summation
    double rhs_diagonal_only = 0;  // diagonal second derivative only
    double rel_residual_corrected = 0;
    double rel_residual_diagonal_only = 0;
    double tolerance = 0;
};

inline double rel_residual(double lhs, double rhs) {
    return std::abs(lhs - rhs) / std::max(1e-8, std::abs(lhs));
}

/// F(A) = sum_l (sum_ab alpha^l_ab dY/dA^l_ab)(sum_uv A^l_uv) with constant
/// alphas (no ReLU).
template <ScalarField F>
double pooled_reconstruction(const F& field, const Field& a, const Field& alphas) {
    const Field g = field.gradient(a);
    const auto meta = FeatureMapMeta::of(a);
    const auto sums = map_sums(a);
    double total = 0;
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        double w = 0;
        for (std::size_t u = 0; u < meta.size(); ++u) w += alphas[k * meta.size() + u] * g[k * meta.size() + u];
        total += w * sums[k];
    }
    return total;
}

/// Compares dF/dA^k_ij (central difference of F) against
///   sum_ab alpha^k_ab dY/dA^k_ab + sum_l S_l sum_ab alpha^l_ab d2Y/dA^k_ij dA^l_ab
/// and against the form lacking the cross terms,
///   sum_ab alpha^k_ab dY/dA^k_ab + S_k alpha^k_ij d2Y/(dA^k_ij)^2,
/// where S_l = sum_uv A^l_uv.
template <ScalarField F>
std::vector<IdentityCheckResult> check_corrected_derivative(const F& field, const Field& a, const Field& alphas,
                                                            const std::vector<std::size_t>& probes,
                                                            double tolerance = 1e-5, StepOptions steps = {}) {
    const auto meta = FeatureMapMeta::of(a);
    if (alphas.shape() != a.shape()) throw ShapeError("alphas must be shaped like the activations");
    const auto sums = map_sums(a);
    const Field g = field.gradient(a);
    std::vector<IdentityCheckResult> out;
    for (std::size_t p : probes) {
        if (p >= a.size()) throw InvalidArgument("probe unit out of range");
        const std::size_t k = p / meta.size();
        IdentityCheckResult r;
        r.unit = unit_of(a, p);
        r.tolerance = tolerance;

        const double h1 = step_for(steps.first_order, a[p]);
        Field plus = a, minus = a;
        plus[p] += h1;
        minus[p] -= h1;
        r.lhs = (pooled_reconstruction(field, plus, alphas) - pooled_reconstruction(field, minus, alphas)) / (2 * h1);

        const Field hess_row = gradient_row_difference(field, a, p, step_for(steps.higher_order, a[p]));
        double first = 0;
        for (std::size_t u = 0; u < meta.size(); ++u) first += alphas[k * meta.size() + u] * g[k * meta.size() + u];
        double cross = 0;
        for (std::size_t l = 0; l < meta.map_count; ++l) {
            double inner = 0;
            for (std::size_t u = 0; u < meta.size(); ++u)
                inner += alphas[l * meta.size() + u] * hess_row[l * meta.size() + u];
            cross += sums[l] * inner;
        }
        r.rhs_corrected = first + cross;
        r.rhs_diagonal_only = first + sums[k] * alphas[p] * hess_row[p];
        r.rel_residual_corrected = rel_residual(r.lhs, r.rhs_corrected);
        r.rel_residual_diagonal_only = rel_residual(r.lhs, r.rhs_diagonal_only);
        if (!std::isfinite(r.lhs) || !std::isfinite(r.rhs_corrected) || !std::isfinite(r.rhs_diagonal_only))
            throw CheckError("non-finite intermediate at probe (k=" + std::to_string(r.unit.k) +
                             ", i=" + std::to_string(r.unit.i) + ", j=" + std::to_string(r.unit.j) + ")");
        out.push_back(r);
    }
    return out;
}

template <typename T>
std::vector<IdentityCheckResult> check_corrected_derivative(const nn::Model<double>& model, const Tensor<T>& image,
                                                            int layer, std::size_t class_index,
                                                            const Field& alphas,
                                                            const std::vector<std::size_t>& probes,
                                                            double tolerance = 1e-5) {
    const auto trace = nn::forward(model, image.template cast<double>());
    return check_corrected_derivative(ExpScoreHead(model, layer, class_index), trace.at(layer), alphas, probes,
                                      tolerance);
}

// ---------------------------------------------------------------------------
// Underdetermination: the beta family

struct BetaFamily {
    Field betas;
    Field coefficients;  // C^k_ab = dY/dA^k_ab * S_k (ReLU'd gradient when requested)
    Field alphas;        // beta * Y / sum(C beta)
    double normalizer = 0;  // sum(C beta)
    double y = 0;
    double rel_residual = 0;  // |sum(C alpha) - Y| / |Y|
};

inline constexpr double kBetaAdmissibility = 1e-9;

template <ScalarField F>
Field beta_coefficients(const F& field, const Field& a, bool use_relu) {
    const auto meta = FeatureMapMeta::of(a);
    const auto sums = map_sums(a);
    Field c = field.gradient(a);
    for (std::size_t u = 0; u < c.size(); ++u) {
        if (use_relu) c[u] = std::max(c[u], 0.0);
        c[u] *= sums[u / meta.size()];
    }
    return c;
}

inline double dot(const Field& x, const Field& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

template <ScalarField F>
BetaFamily beta_family_from_betas(const F& field, const Field& a, Field betas, bool use_relu = false) {
    if (betas.shape() != a.shape()) throw ShapeError("betas must be shaped like the activations");
    BetaFamily fam;
    fam.coefficients = beta_coefficients(field, a, use_relu);
    fam.normalizer = dot(fam.coefficients, betas);
    if (!(std::abs(fam.normalizer) > kBetaAdmissibility))
        throw InvalidArgument("inadmissible betas: |sum C beta| <= 1e-9");
    fam.y = field.value(a);
    fam.alphas = scale(betas, fam.y / fam.normalizer);
    fam.betas = std::move(betas);
    fam.rel_residual = std::abs(dot(fam.coefficients, fam.alphas) - fam.y) / std::abs(fam.y);
    return fam;
}

/// Random betas uniform in [-1,1] from SplitMix64(seed), redrawn while
/// |sum C beta| <= 1e-9; gives up after 100 draws.
template <ScalarField F>
BetaFamily construct_beta_family(const F& field, const Field& a, std::uint64_t seed, bool use_relu = false) {
    const Field c = beta_coefficients(field, a, use_relu);
    SplitMix64 rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Field betas(a.shape());
        for (auto& v : betas.data()) v = rng.uniform(-1.0, 1.0);
        if (std::abs(dot(c, betas)) > kBetaAdmissibility) return beta_family_from_betas(field, a, std::move(betas), use_relu);
    }
    throw CheckError("100 consecutive inadmissible beta draws; coefficients are degenerate");
}

// ---------------------------------------------------------------------------
// Residual of the pooled-score equation

enum class AlphaSource { stable, cubic, beta_family };

inline const char* to_string(AlphaSource s) {
    switch (s) {
        case AlphaSource::stable: return "stable";
        case AlphaSource::cubic: return "cubic";
        case AlphaSource::beta_family: return "betaFamily";
    }
    return "?";
}

struct ResidualReport {
    std::string source;
    double log_y = 0;  // S^c
    double y = 0;      // exp(S^c); +inf on overflow
    double reconstruction = 0;
    double abs_residual = 0;
    double rel_residual = 0;
    bool overflow = false;
};

/// Residual of Y = sum_k w_k S_k with w_k = sum_ab alpha_ab dY/dA_ab (ReLU'd
/// when requested) for explicit alphas.
template <ScalarField F>
ResidualReport pooled_residual_for_alphas(const F& field, const Field& a, const Field& alphas, bool use_relu = false) {
    const auto meta = FeatureMapMeta::of(a);
    const auto sums = map_sums(a);
    const Field g = field.gradient(a);
    ResidualReport r;
    r.source = "explicit";
    r.y = field.value(a);
    r.log_y = std::log(r.y);
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        double w = 0;
        for (std::size_t u = 0; u < meta.size(); ++u) {
            const double gu = g[k * meta.size() + u];
            w += alphas[k * meta.size() + u] * (use_relu ? std::max(gu, 0.0) : gu);
        }
        r.reconstruction += w * sums[k];
    }
    r.abs_residual = std::abs(r.reconstruction - r.y);
    r.rel_residual = r.abs_residual / std::abs(r.y);
    return r;
}

/// Same residual with Y = exp(S^c), evaluated relative to Y so that it stays
/// finite when exp(S^c) overflows: every alpha source makes
/// reconstruction / Y depend only on dS/dA and the activations.
inline ResidualReport pooled_residual(const ExpScoreHead& head, const Field& a, AlphaSource source,
                                   std::uint64_t seed = 0, bool use_relu = false, double lambda = 1.0) {
    const auto meta = FeatureMapMeta::of(a);
    const auto sums = map_sums(a);
    const Field gs = head.score_gradient(a);
    Field gw = gs;  // gradient factor in w_k, divided by Y (Y > 0 so ReLU commutes)
    if (use_relu)
        for (auto& v : gw.data()) v = std::max(v, 0.0);

    Field alphas_over;  // alpha, divided by Y for the beta family
    switch (source) {
        case AlphaSource::stable: alphas_over = cam::alpha_stable(gs, a, lambda).values; break;
        case AlphaSource::cubic: alphas_over = cam::alpha_cubic(gs, a, lambda).values; break;
        case AlphaSource::beta_family: {
            // C / Y = gw * S_k; alpha / Y = beta / sum(C beta).
            LinearField unit_scale{gw, 0.0};
            const Field c = beta_coefficients(unit_scale, a, false);
            SplitMix64 rng(seed);
            bool ok = false;
            for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                Field betas(a.shape());
                for (auto& v : betas.data()) v = rng.uniform(-1.0, 1.0);
                const double norm = dot(c, betas);
                if (std::abs(norm) > kBetaAdmissibility) {
                    alphas_over = scale(betas, 1.0 / norm);
                    ok = true;
                }
            }
            if (!ok) throw CheckError("100 consecutive inadmissible beta draws");
            break;
        }
    }

    double ratio = 0;  // reconstruction / Y
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        double w = 0;
        for (std::size_t u = 0; u < meta.size(); ++u) w += alphas_over[k * meta.size() + u] * gw[k * meta.size() + u];
        ratio += w * sums[k];
    }

    ResidualReport r;
    r.source = to_string(source);
    r.log_y = head.score(a);
    r.rel_residual = std::abs(ratio - 1.0);
    r.overflow = r.log_y > std::log(std::numeric_limits<double>::max());
    if (r.overflow) {
        r.y = std::numeric_limits<double>::infinity();
        r.reconstruction = ratio > 0 ? r.y : ratio < 0 ? -r.y : 0.0;
        r.abs_residual = std::numeric_limits<double>::infinity();
    } else {
        r.y = std::exp(r.log_y);
        r.reconstruction = ratio * r.y;
        r.abs_residual = std::abs(r.reconstruction - r.y);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Linearity-shift invariance of the high-order alpha formula

/// alpha_p = Y''_pp / (2 Y''_pp + S_k Y'''_ppp) with derivatives from
/// central differences of the gradient; zero where Y''_pp == 0.
template <ScalarField F>
Field high_order_alphas(const F& field, const Field& a, StepOptions steps = {}) {
    const auto meta = FeatureMapMeta::of(a);
    const auto sums = map_sums(a);
    const Field g = field.gradient(a);
    Field out(a.shape());
    for (std::size_t p = 0; p < a.size(); ++p) {
        const double h = step_for(steps.higher_order, a[p]);
        Field plus = a, minus = a;
        plus[p] += h;
        minus[p] -= h;
        const double gp = field.gradient(plus)[p];
        const double gm = field.gradient(minus)[p];
        const double d2 = (gp - gm) / (2 * h);
        const double d3 = (gp - 2 * g[p] + gm) / (h * h);
        out[p] = d2 == 0.0 ? 0.0 : d2 / (2 * d2 + sums[p / meta.size()] * d3);
    }
    return out;
}

struct LinearityShiftResult {
    Field alphas_base;
    Field alphas_shifted;
    double max_abs_alpha_change = 0;
    double tolerance = 0;
    // Both sides of Y = sum_k w_k S_k (no ReLU), before and after the shift.
    double y_base = 0, y_shifted = 0;
    double reconstruction_base = 0, reconstruction_shifted = 0;
};

/// Replaces Y by Y + sum lambda A + C (lambda uniform in [-1,1], C uniform in
/// [-1,1], both from SplitMix64(seed)) and recomputes the high-order alphas.
template <ScalarField F>
LinearityShiftResult linearity_shift_check(const F& field, const Field& a, std::uint64_t seed,
                                           double tolerance = 1e-4, StepOptions steps = {}) {
    SplitMix64 rng(seed);
    Field lambdas(a.shape());
    for (auto& v : lambdas.data()) v = rng.uniform(-1.0, 1.0);
    const double constant = rng.uniform(-1.0, 1.0);
    const ShiftedField<F> shifted{field, lambdas, constant};

    LinearityShiftResult r;
    r.tolerance = tolerance;
    r.alphas_base = high_order_alphas(field, a, steps);
    r.alphas_shifted = high_order_alphas(shifted, a, steps);
    for (std::size_t p = 0; p < a.size(); ++p)
        r.max_abs_alpha_change = std::max(r.max_abs_alpha_change, std::abs(r.alphas_base[p] - r.alphas_shifted[p]));
    r.y_base = field.value(a);
    r.y_shifted = shifted.value(a);
    r.reconstruction_base = pooled_reconstruction(field, a, r.alphas_base);
    r.reconstruction_shifted = pooled_reconstruction(shifted, a, r.alphas_shifted);
    return r;
}

// ---------------------------------------------------------------------------
// Lambda sweep

struct LambdaSummary {
    double lambda = 1;
    double min_nonzero = 0, max_nonzero = 0, mean_nonzero = 0;
    std::size_t nonzero_count = 0;
    std::size_t zero_gradient_count = 0;
    /// Elementwise max |alpha(lambda_prev) - alpha(lambda)|; NaN for the first entry.
    double max_abs_diff_from_previous = std::numeric_limits<double>::quiet_NaN();
    Field alphas;
};

inline std::vector<LambdaSummary> lambda_sweep(const Field& pre_softmax_grads, const Field& a,
                                               const std::vector<double>& lambdas) {
    std::vector<LambdaSummary> out;
    for (double lam : lambdas) {
        if (!(lam > 0.0)) throw InvalidArgument("lambda values must be positive");
        const auto field = cam::alpha_stable(pre_softmax_grads, a, lam);
        LambdaSummary s;
        s.lambda = lam;
        s.min_nonzero = field.min_nonzero;
        s.max_nonzero = field.max_nonzero;
        s.nonzero_count = field.nonzero_count;
        s.zero_gradient_count = field.zero_gradient_count;
        double total = 0;
        for (double v : field.values.data())
            if (v != 0.0) total += v;
        s.mean_nonzero = field.nonzero_count ? total / static_cast<double>(field.nonzero_count)
                                             : std::numeric_limits<double>::quiet_NaN();
        s.alphas = field.values;
        if (!out.empty()) {
            double d = 0;
            for (std::size_t u = 0; u < a.size(); ++u) d = std::max(d, std::abs(out.back().alphas[u] - s.alphas[u]));
            s.max_abs_diff_from_previous = d;
        }
        out.push_back(std::move(s));
    }
    return out;
}

template <typename T>
std::vector<LambdaSummary> lambda_sweep(const nn::Model<double>& model, const Tensor<T>& image, int layer,
                                        std::size_t class_index, const std::vector<double>& lambdas) {
    const auto trace = nn::forward(model, image.template cast<double>());
    const auto grads = nn::backward_to_layer(model, trace, {class_index, nn::ScoreMode::pre_softmax}, layer);
    return lambda_sweep(grads, trace.at(layer), lambdas);
}

}  // namespace camforge::derivcheck
