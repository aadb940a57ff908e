#pragma once

// `camforge` command-line front end. Exit codes: 0 success, 1 usage error,
// 2 I/O or format error, 3 audit failure.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "camforge/camforge.hpp"

namespace camforge::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kCheckFailed = 3 };

struct AttributionFlags {
    std::string model;
    std::string image;
    std::optional<int> layer;
    std::string class_name = "argmax";
    std::string method = "gradcam";
    std::string score = "pre";
    double lambda = 1.0;
    double alpha_eps = 0.0;
    std::string out;
    std::string overlay;
    std::string explanation;
    int precision = 32;
};

inline nn::ScoreMode parse_score_mode(const std::string& s) {
    if (s == "pre") return nn::ScoreMode::pre_softmax;
    if (s == "post") return nn::ScoreMode::post_softmax;
    throw InvalidArgument("--score must be 'pre' or 'post'");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

inline std::size_t resolve_class(const std::string& name, const std::vector<double>& post_softmax) {
    if (name == "argmax") return nn::argmax(post_softmax);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(name, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != name.size() || name.empty()) throw InvalidArgument("--class must be an index or 'argmax'");
    if (v >= post_softmax.size()) throw InvalidArgument("--class " + name + " out of range");
    return v;
}

template <typename T>
int run_attribution(const AttributionFlags& f, bool explain, std::ostream& out) {
    const auto model = camf::load_model(f.model).cast<T>();
    const auto image = netpbm::read_image(f.image);
    if (image.pixels.shape() != model.input_shape)
        throw InvalidArgument("image shape " + shape_string(image.pixels.shape()) + " does not match model input " +
                              shape_string(model.input_shape));
    const auto trace = nn::forward(model, image.pixels.cast<T>());
    std::vector<double> probs(trace.post_softmax.begin(), trace.post_softmax.end());

    cam::AttributionRequest req;
    req.method = cam::method_from_string(f.method);
    req.layer = f.layer ? *f.layer : nn::last_spatial_layer(model);
    req.score = {resolve_class(f.class_name, probs), parse_score_mode(f.score)};
    req.lambda = f.lambda;
    req.alpha_epsilon = f.alpha_eps;

    const auto attribution = cam::attribute(model, trace, req);
    const auto [heat, expl] = postproc::explain(attribution.heatmap, image);
    netpbm::write_heatmap(heat, f.out);
    if (!f.overlay.empty()) netpbm::write_image(postproc::overlay(heat, image), f.overlay);

    out << "class " << req.score.class_index << " score " << report_io::csv_number(probs[req.score.class_index])
        << " layer " << req.layer << " method " << cam::to_string(req.method) << "\n";
    out << "heatmap " << heat.values.dim(1) << "x" << heat.values.dim(0) << (heat.degenerate ? " (degenerate)" : "")
        << " -> " << f.out << "\n";
    if (attribution.alphas) {
        const auto& a = *attribution.alphas;
        out << "alphas nonzero " << a.nonzero_count << " zero-gradient " << a.zero_gradient_count << " min "
            << report_io::csv_number(static_cast<double>(a.min_nonzero)) << " max "
            << report_io::csv_number(static_cast<double>(a.max_nonzero)) << " clamped " << a.clamped_count
            << " non-finite " << a.non_finite_units.size() << "\n";
    }
    if (explain) {
        netpbm::write_image({expl.values, "explanation"}, f.explanation);
        const auto refed = nn::forward(model, expl.values.template cast<T>());
        out << "explanation -> " << f.explanation << "\n";
        out << "explanation score " << report_io::csv_number(static_cast<double>(refed.post_softmax[req.score.class_index]))
            << "\n";
    }
    return kOk;
}

template <typename T>
int run_evaluate(const std::string& model_path, const std::string& dataset, const std::string& methods_csv,
                 double confidence, const std::string& score, std::optional<int> layer, double lambda,
                 double alpha_eps, const std::string& report_path, std::ostream& out, std::ostream& err) {
    const auto model = camf::load_model(model_path).cast<T>();
    const int l = layer ? *layer : nn::last_spatial_layer(model);
    const auto mode = parse_score_mode(score);
    std::vector<eval::MethodSpec> methods;
    for (const auto& name : split_list(methods_csv)) methods.push_back(eval::method_spec(name, l, mode, lambda, alpha_eps));
    if (methods.size() < 2) throw InvalidArgument("--methods needs at least two methods");
    const auto format = eval::report_format_for(report_path);

    const auto result = eval::evaluate_dataset(model, dataset, methods, {confidence, worker_count()});
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    eval::EvalReport report;
    report.score_mode = score;
    report.confidence = confidence;
    report.methods = result.methods;
    report.pairs = eval::all_pairs(result, confidence);
    report.records = result.records;
    report.below_confidence = result.below_confidence;
    report.skipped = result.warnings.size();
    eval::write_report(report, report_path, format);
    out << "records " << report.records.size() << " below-confidence " << report.below_confidence << " skipped "
        << report.skipped << "\n";
    for (const auto& p : report.pairs)
        out << p.method_prime << " vs " << p.method_base << ": relative performance "
            << report_io::csv_number(p.relative_performance) << " log mean " << report_io::csv_number(p.log_mean)
            << " log std " << report_io::csv_number(p.log_std) << "\n";
    return kOk;
}

/// Runs the CLI on `args` (program name excluded).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"camforge: Grad-CAM, Grad-CAM+ and Grad-CAM++ attribution toolkit"};
    app.require_subcommand(1);

    // gen-model
    std::uint64_t seed = 42;
    std::string arch = "tiny", out_path;
    auto* gen = app.add_subcommand("gen-model", "Write a seeded toy model as a CAMF file");
    gen->add_option("--seed", seed, "SplitMix64 seed");
    gen->add_option("--arch", arch, "tiny | small | probe")->check(CLI::IsMember({"tiny", "small", "probe"}));
    gen->add_option("--out", out_path, "Output .camf path")->required();

    // gen-dataset
    std::string model_path, dataset;
    std::size_t count = 64;
    auto* gends = app.add_subcommand("gen-dataset", "Write seeded synthetic images and an index.csv");
    gends->add_option("--model", model_path, "CAMF model (input shape)")->required();
    gends->add_option("--count", count, "Number of images");
    gends->add_option("--seed", seed, "SplitMix64 seed");
    gends->add_option("--out", out_path, "Output directory")->required();

    // attribute / explain
    AttributionFlags af;
    auto add_attr_flags = [&](CLI::App* sub, bool explain) {
        sub->add_option("--model", af.model, "CAMF model")->required();
        sub->add_option("--image", af.image, "PGM/PPM image")->required();
        sub->add_option("--layer", af.layer, "Feature layer index (default: last spatial layer)");
        sub->add_option("--class", af.class_name, "Class index or 'argmax'");
        sub->add_option("--method", af.method, "gradcam | gradcam-plus | gradcam-pp")
            ->check(CLI::IsMember({"gradcam", "gradcam-plus", "gradcam-pp"}));
        sub->add_option("--score", af.score, "pre | post")->check(CLI::IsMember({"pre", "post"}));
        sub->add_option("--lambda", af.lambda, "Grad-CAM++ lambda");
        sub->add_option("--alpha-eps", af.alpha_eps, "Zero alphas whose |denominator| is below this");
        sub->add_option("--out", af.out, "Heatmap PGM")->required();
        sub->add_option("--overlay", af.overlay, "Colormap overlay PPM");
        sub->add_option("--precision", af.precision, "32 | 64")->check(CLI::IsMember({32, 64}));
        if (explain) sub->add_option("--explanation", af.explanation, "Explanation map PGM/PPM")->required();
    };
    auto* attr = app.add_subcommand("attribute", "Compute a normalized, upsampled heatmap");
    add_attr_flags(attr, false);
    auto* expl = app.add_subcommand("explain", "Heatmap plus explanation map and its re-fed score");
    add_attr_flags(expl, true);

    // evaluate
    std::string methods = "gradcam,gradcam-plus,gradcam-pp", score = "pre", report;
    double confidence = 0.5, lambda = 1.0, alpha_eps = 0.0;
    std::optional<int> layer;
    int precision = 32;
    auto* evaluate = app.add_subcommand("evaluate", "Relative performance of every method pair over a dataset");
    evaluate->add_option("--model", model_path, "CAMF model")->required();
    evaluate->add_option("--dataset", dataset, "Directory with index.csv")->required();
    evaluate->add_option("--methods", methods, "Comma-separated methods (gradcam-pp-const forces alphas to 1/2)");
    evaluate->add_option("--confidence", confidence, "Keep images whose base score exceeds this");
    evaluate->add_option("--score", score, "pre | post")->check(CLI::IsMember({"pre", "post"}));
    evaluate->add_option("--layer", layer, "Feature layer index");
    evaluate->add_option("--lambda", lambda, "Grad-CAM++ lambda");
    evaluate->add_option("--alpha-eps", alpha_eps, "Grad-CAM++ alpha epsilon");
    evaluate->add_option("--report", report, "Report path (.json or .csv)")->required();
    evaluate->add_option("--precision", precision, "32 | 64")->check(CLI::IsMember({32, 64}));

    // alpha-stats
    auto* astats = app.add_subcommand("alpha-stats", "Grad-CAM++ alpha distribution over a dataset");
    astats->add_option("--model", model_path, "CAMF model")->required();
    astats->add_option("--dataset", dataset, "Directory with index.csv")->required();
    astats->add_option("--layer", layer, "Feature layer index");
    astats->add_option("--lambda", lambda, "Grad-CAM++ lambda");
    astats->add_option("--out", out_path, "Stats path (.json or .csv)")->required();

    // check-grad
    double tol = 1e-4;
    std::size_t probes = 100;
    auto* cgrad = app.add_subcommand("check-grad", "Backprop vs central finite differences");
    cgrad->add_option("--model", model_path, "CAMF model")->required();
    cgrad->add_option("--tol", tol, "Max relative error");
    cgrad->add_option("--seed", seed, "Image and probe seed");
    cgrad->add_option("--probes", probes, "Number of probe units");
    cgrad->add_option("--score", score, "pre | post")->check(CLI::IsMember({"pre", "post"}));

    // check-derivation
    auto* cderiv = app.add_subcommand("check-derivation", "Numerical audit of the Grad-CAM++ derivation");
    cderiv->add_option("--model", model_path, "CAMF model")->required();
    cderiv->add_option("--seed", seed, "Audit seed");
    cderiv->add_option("--layer", layer, "Feature layer index");
    std::size_t identity_probes = 8;
    cderiv->add_option("--probes", identity_probes, "Identity probes");
    cderiv->add_option("--out", out_path, "Audit JSON path")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (gen->parsed()) {
            const auto model = nn::generate_toy_model(seed, arch);
            camf::save_model(model, out_path);
            out << "wrote " << arch << " model (seed " << seed << ") to " << out_path << "\n";
            return kOk;
        }
        if (gends->parsed()) {
            const auto model = camf::load_model(model_path);
            eval::write_synthetic_dataset(out_path, model.input_shape, count, seed);
            out << "wrote " << count << " images to " << out_path << "\n";
            return kOk;
        }
        if (attr->parsed() || expl->parsed()) {
            const bool ex = expl->parsed();
            return af.precision == 64 ? run_attribution<double>(af, ex, out) : run_attribution<float>(af, ex, out);
        }
        if (evaluate->parsed()) {
            return precision == 64 ? run_evaluate<double>(model_path, dataset, methods, confidence, score, layer, lambda,
                                                          alpha_eps, report, out, err)
                                   : run_evaluate<float>(model_path, dataset, methods, confidence, score, layer, lambda,
                                                         alpha_eps, report, out, err);
        }
        if (astats->parsed()) {
            const auto model = camf::load_model(model_path).cast<double>();
            const auto format = eval::report_format_for(out_path);
            const int l = layer ? *layer : nn::last_spatial_layer(model);
            const auto stats = eval::alpha_statistics(model, std::filesystem::path(dataset), l, lambda, 0.0, worker_count());
            eval::write_report(stats, out_path, format);
            out << "images " << stats.image_count << " nonzero alphas " << stats.nonzero_count << " zero "
                << stats.zero_count << " median " << report_io::csv_number(stats.alpha.median) << " raw min "
                << report_io::csv_number(stats.raw_min) << " raw max " << report_io::csv_number(stats.raw_max) << "\n";
            return kOk;
        }
        if (cgrad->parsed()) {
            const auto model = camf::load_model(model_path).cast<double>();
            const auto image = nn::synthetic_image<double>(model.input_shape, seed);
            const auto trace = nn::forward(model, image);
            gradcheck::Options opt;
            opt.probe_count = probes;
            opt.seed = seed;
            opt.tolerance = tol;
            const auto rep = gradcheck::check(model, image, {nn::argmax(trace.post_softmax), parse_score_mode(score)}, opt);
            out << "probes " << rep.probes.size() << " kink-skips " << rep.kink_skips << " max relative error "
                << report_io::csv_number(rep.max_rel_error) << " tolerance " << report_io::csv_number(tol) << " -> "
                << (rep.passed ? "PASS" : "FAIL") << "\n";
            return rep.passed ? kOk : kCheckFailed;
        }
        if (cderiv->parsed()) {
            const auto model = camf::load_model(model_path).cast<double>();
            audit::Options opt;
            opt.seed = seed;
            opt.layer = layer;
            opt.probes = identity_probes;
            const auto rep = audit::run(model, opt);
            eval::detail::write_text(out_path, audit::to_json(rep));
            for (const auto& c : rep.checks)
                out << (c.passed ? "PASS " : "FAIL ") << c.name << (c.enforced ? "" : " (informational)") << "\n";
            return rep.passed() ? kOk : kCheckFailed;
        }
    } catch (const CheckError& e) {
        err << "check failed: " << e.what() << "\n";
        return kCheckFailed;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    }
    return kUsage;
}

}  // namespace camforge::cli
