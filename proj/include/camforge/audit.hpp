#pragma once

// The full derivation audit behind `camforge check-derivation`, rendered as a
// JSON report with one entry per check.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "camforge/derivcheck.hpp"
#include "camforge/nn.hpp"
#include "camforge/report_io.hpp"

namespace camforge::audit {

struct Options {
    std::uint64_t seed = 42;
    std::optional<int> layer;  // default: last spatial layer
    std::size_t probes = 8;
    std::size_t beta_families = 100;
    std::vector<double> lambdas{0.5, 1.0, 2.0, 4.0};
    double identity_tolerance = 1e-5;
    double beta_tolerance = 1e-9;
    double shift_tolerance = 1e-4;
    // Largest layer on which finite-difference third derivatives are trusted.
    std::size_t shift_max_units = 18;
};

struct Check {
    std::string name;
    bool passed = false;
    std::string details;  // JSON object
    bool enforced = true;  // non-enforced checks are reported but do not fail the audit
};

struct Report {
    std::uint64_t seed = 0;
    int layer = 0;
    std::size_t class_index = 0;
    std::vector<Check> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (c.enforced && !c.passed) return false;
        return true;
    }
};

inline Report run(const nn::Model<double>& model, const Options& opt) {
    using report_io::Object;
    Report rep;
    rep.seed = opt.seed;
    rep.layer = opt.layer ? *opt.layer : nn::last_spatial_layer(model);
    const auto image = nn::synthetic_image<double>(model.input_shape, opt.seed);
    const auto trace = nn::forward(model, image);
    rep.class_index = nn::argmax(trace.post_softmax);
    const derivcheck::ExpScoreHead head(model, rep.layer, rep.class_index);
    const auto& acts = trace.at(rep.layer);
    if (acts.rank() != 3) throw ShapeError("audit layer must be a spatial feature layer");

    // Corrected derivative identity vs the diagonal-only form.
    {
        const auto probes = derivcheck::probe_units(acts, std::min(opt.probes, acts.size()), opt.seed);
        const auto alphas = derivcheck::random_alphas(acts, opt.seed + 1);
        const auto results = derivcheck::check_corrected_derivative(head, acts, alphas, probes, opt.identity_tolerance);
        std::size_t larger = 0;
        double worst = 0;
        std::vector<std::string> rows;
        for (const auto& r : results) {
            worst = std::max(worst, r.rel_residual_corrected);
            if (r.rel_residual_diagonal_only > r.rel_residual_corrected) ++larger;
            rows.push_back(Object()
                               .integer("k", static_cast<long long>(r.unit.k))
                               .integer("i", static_cast<long long>(r.unit.i))
                               .integer("j", static_cast<long long>(r.unit.j))
                               .num("lhs", r.lhs)
                               .num("rhsCorrected", r.rhs_corrected)
                               .num("rhsDiagonalOnly", r.rhs_diagonal_only)
                               .num("relResidualCorrected", r.rel_residual_corrected)
                               .num("relResidualDiagonalOnly", r.rel_residual_diagonal_only)
                               .dump(8));
        }
        rep.checks.push_back({"correctedDerivative", worst < opt.identity_tolerance,
                              Object()
                                  .num("tolerance", opt.identity_tolerance)
                                  .num("maxRelResidualCorrected", worst)
                                  .raw("probes", report_io::array(rows, 6))
                                  .dump(4)});
        rep.checks.push_back({"diagonalOnlyFormDiverges", 2 * larger >= results.size(),
                              Object()
                                  .integer("probesWithLargerResidual", static_cast<long long>(larger))
                                  .integer("probeCount", static_cast<long long>(results.size()))
                                  .dump(4)});
    }

    // Non-uniqueness of the alphas.
    {
        double worst = 0;
        bool all_distinct = true;
        std::optional<derivcheck::Field> first;
        for (std::size_t s = 0; s < opt.beta_families; ++s) {
            const auto fam = derivcheck::construct_beta_family(head, acts, opt.seed + 1000 + s);
            worst = std::max(worst, fam.rel_residual);
            if (!first) {
                first = fam.alphas;
            } else if (*first == fam.alphas) {
                all_distinct = false;
            }
        }
        rep.checks.push_back({"betaFamilyUnderdetermination", worst < opt.beta_tolerance && all_distinct,
                              Object()
                                  .integer("families", static_cast<long long>(opt.beta_families))
                                  .num("tolerance", opt.beta_tolerance)
                                  .num("maxRelResidual", worst)
                                  .boolean("distinctFromFirst", all_distinct)
                                  .dump(4)});
    }

    // Pooled-score residual per alpha source.
    {
        std::vector<std::string> rows;
        double stable_res = 0, beta_res = 0;
        for (auto src : {derivcheck::AlphaSource::stable, derivcheck::AlphaSource::cubic,
                         derivcheck::AlphaSource::beta_family}) {
            const auto r = derivcheck::pooled_residual(head, acts, src, opt.seed);
            if (src == derivcheck::AlphaSource::stable) stable_res = r.rel_residual;
            if (src == derivcheck::AlphaSource::beta_family) beta_res = r.rel_residual;
            rows.push_back(Object()
                               .str("source", r.source)
                               .num("logY", r.log_y)
                               .num("y", r.y)
                               .num("reconstruction", r.reconstruction)
                               .num("absResidual", r.abs_residual)
                               .num("relResidual", r.rel_residual)
                               .boolean("overflow", r.overflow)
                               .dump(8));
        }
        rep.checks.push_back({"pooledScoreResidual", beta_res < opt.beta_tolerance && stable_res > beta_res,
                              Object().raw("sources", report_io::array(rows, 6)).dump(4)});
    }

    // High-order alphas ignore added linear terms.
    {
        const auto r = derivcheck::linearity_shift_check(head, acts, opt.seed + 7, opt.shift_tolerance);
        const bool sides_change = r.y_base != r.y_shifted && r.reconstruction_base != r.reconstruction_shifted;
        const bool enforced = acts.size() <= opt.shift_max_units;
        rep.checks.push_back({"linearityShiftInvariance", r.max_abs_alpha_change < opt.shift_tolerance && sides_change,
                              Object()
                                  .integer("unitCount", static_cast<long long>(acts.size()))
                                  .integer("maxEnforcedUnitCount", static_cast<long long>(opt.shift_max_units))
                                  .num("tolerance", opt.shift_tolerance)
                                  .num("maxAbsAlphaChange", r.max_abs_alpha_change)
                                  .num("yBase", r.y_base)
                                  .num("yShifted", r.y_shifted)
                                  .num("reconstructionBase", r.reconstruction_base)
                                  .num("reconstructionShifted", r.reconstruction_shifted)
                                  .dump(4),
                              enforced});
    }

    // Alphas depend on lambda.
    {
        const auto grads = head.score_gradient(acts);
        const auto sweep = derivcheck::lambda_sweep(grads, acts, opt.lambdas);
        bool generic = false;  // any unit with g * sum(A) != 0
        const auto sums = derivcheck::map_sums(acts);
        const std::size_t plane = acts.dim(1) * acts.dim(2);
        for (std::size_t u = 0; u < acts.size(); ++u)
            if (grads[u] * sums[u / plane] != 0.0) generic = true;
        bool differs = true;
        std::vector<std::string> rows;
        for (const auto& s : sweep) {
            if (!std::isnan(s.max_abs_diff_from_previous) && generic && !(s.max_abs_diff_from_previous > 0))
                differs = false;
            rows.push_back(Object()
                               .num("lambda", s.lambda)
                               .num("minNonzero", s.min_nonzero)
                               .num("maxNonzero", s.max_nonzero)
                               .num("meanNonzero", s.mean_nonzero)
                               .integer("nonzeroCount", static_cast<long long>(s.nonzero_count))
                               .num("maxAbsDiffFromPrevious", s.max_abs_diff_from_previous)
                               .dump(8));
        }
        rep.checks.push_back({"lambdaSensitivity", differs, Object().raw("sweep", report_io::array(rows, 6)).dump(4)});
    }
    return rep;
}

inline std::string to_json(const Report& rep) {
    using report_io::Object;
    std::vector<std::string> checks;
    for (const auto& c : rep.checks)
        checks.push_back(Object()
                             .str("name", c.name)
                             .boolean("passed", c.passed)
                             .boolean("enforced", c.enforced)
                             .raw("details", c.details)
                             .dump(2));
    return Object()
               .raw("seed", std::to_string(rep.seed))
               .integer("layer", rep.layer)
               .integer("classIndex", static_cast<long long>(rep.class_index))
               .boolean("passed", rep.passed())
               .raw("checks", report_io::array(checks, 2))
               .dump() +
           "\n";
}

}  // namespace camforge::audit
