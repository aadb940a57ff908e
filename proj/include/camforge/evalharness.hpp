#pragma once

// Dataset evaluation: explanation-map scores per method, geometric-mean
// relative performance between methods, and Grad-CAM++ alpha statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camforge/cam.hpp"
#include "camforge/error.hpp"
#include "camforge/netpbm.hpp"
#include "camforge/nn.hpp"
#include "camforge/parallel.hpp"
#include "camforge/postproc.hpp"
#include "camforge/report_io.hpp"

namespace camforge::eval {

inline constexpr double kScoreFloor = 1e-12;
inline constexpr std::size_t kTanhBins = 64;
inline constexpr double kTukeyFactor = 1.5;

// ---------------------------------------------------------------------------
// Dataset

struct DatasetEntry {
    std::string filename;
    std::optional<std::size_t> label;
};

/// Reads `dir/index.csv`: one `filename,label` or `filename` row per image,
/// optional header row starting with "filename".
inline std::vector<DatasetEntry> read_index(const std::filesystem::path& dir) {
    const auto path = dir / "index.csv";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset index '" + path.string() + "'");
    std::vector<DatasetEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        DatasetEntry e;
        e.filename = line.substr(0, comma);
        if (line_no == 1 && e.filename == "filename") continue;
        if (comma != std::string::npos) {
            const std::string label = line.substr(comma + 1);
            if (!label.empty()) {
                try {
                    std::size_t used = 0;
                    const unsigned long v = std::stoul(label, &used);
                    if (used != label.size()) throw std::invalid_argument(label);
                    e.label = v;
                } catch (const std::exception&) {
                    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + label + "'");
                }
            }
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

/// Writes `count` seeded synthetic images plus an index without labels.
inline void write_synthetic_dataset(const std::filesystem::path& dir, const Shape& image_shape,
                                    std::size_t count, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.csv");
    if (!index) throw IoError("cannot write dataset index in '" + dir.string() + "'");
    index << "filename\n";
    SplitMix64 seeds(seed);
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%04zu.%s", i, image_shape[0] == 1 ? "pgm" : "ppm");
        netpbm::write_image({nn::synthetic_image<double>(image_shape, seeds.next()), name}, dir / name);
        index << name << "\n";
    }
}

// ---------------------------------------------------------------------------
// Per-image evaluation

struct MethodSpec {
    std::string name;
    cam::AttributionRequest request;  // score.class_index is set per image
};

/// Method by CLI name; "gradcam-pp-const" is Grad-CAM++ with every nonzero
/// alpha forced to 1/2.
inline MethodSpec method_spec(const std::string& name, int layer, nn::ScoreMode mode, double lambda = 1.0,
                              double alpha_epsilon = 0.0) {
    MethodSpec m;
    m.name = name;
    m.request.layer = layer;
    m.request.score.mode = mode;
    m.request.lambda = lambda;
    m.request.alpha_epsilon = alpha_epsilon;
    if (name == "gradcam-pp-const") {
        m.request.method = cam::Method::gradcam_pp;
        m.request.constant_alpha = 0.5;
    } else {
        m.request.method = cam::method_from_string(name);
    }
    return m;
}

struct EvalRecord {
    std::string image_id;
    std::size_t class_index = 0;
    double base_score = 0;                   // post-softmax on the original image
    std::map<std::string, double> outputs;   // post-softmax on each explanation map
    std::map<std::string, bool> degenerate;  // heatmap was constant
};

struct EvalOptions {
    double confidence = 0.5;
    unsigned workers = 1;
};

struct LabeledImage {
    std::string id;
    postproc::Image image;
    std::optional<std::size_t> label;
};

struct EvalResult {
    std::vector<std::string> methods;
    std::vector<EvalRecord> records;  // sorted by image_id
    std::size_t below_confidence = 0;
    std::vector<std::string> warnings;  // unreadable images etc.
};

/// Scores one image. Returns nullopt when the base score for the class does
/// not exceed `confidence`.
template <typename T>
std::optional<EvalRecord> evaluate_image(const nn::Model<T>& model, const LabeledImage& item,
                                         const std::vector<MethodSpec>& methods, double confidence) {
    const Tensor<T> input = item.image.pixels.template cast<T>();
    const auto trace = nn::forward(model, input);
    EvalRecord rec;
    rec.image_id = item.id;
    rec.class_index = item.label ? *item.label : nn::argmax(trace.post_softmax);
    if (rec.class_index >= trace.class_count())
        throw InvalidArgument("label " + std::to_string(rec.class_index) + " of '" + item.id + "' out of range");
    rec.base_score = static_cast<double>(trace.post_softmax[rec.class_index]);
    if (!(rec.base_score > confidence)) return std::nullopt;
    for (const auto& m : methods) {
        auto req = m.request;
        req.score.class_index = rec.class_index;
        const auto attribution = cam::attribute(model, trace, req);
        const auto [heat, expl] = postproc::explain(attribution.heatmap, item.image);
        const auto out = nn::forward(model, expl.values.template cast<T>());
        rec.outputs[m.name] = static_cast<double>(out.post_softmax[rec.class_index]);
        rec.degenerate[m.name] = heat.degenerate;
    }
    return rec;
}

template <typename T>
EvalResult evaluate_images(const nn::Model<T>& model, const std::vector<LabeledImage>& images,
                           const std::vector<MethodSpec>& methods, const EvalOptions& options) {
    if (methods.empty()) throw InvalidArgument("no attribution methods given");
    EvalResult result;
    for (const auto& m : methods) result.methods.push_back(m.name);
    std::vector<std::optional<EvalRecord>> slots(images.size());
    parallel_for(images.size(), options.workers,
                 [&](std::size_t i) { slots[i] = evaluate_image(model, images[i], methods, options.confidence); });
    for (auto& s : slots) {
        if (s)
            result.records.push_back(std::move(*s));
        else
            ++result.below_confidence;
    }
    if (result.records.empty())
        throw InvalidArgument("no image has a base score above confidence " + report_io::csv_number(options.confidence));
    std::sort(result.records.begin(), result.records.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.image_id < b.image_id; });
    return result;
}

/// Loads the dataset in `dir` and evaluates it. Unreadable or mis-shaped
/// images are skipped and reported in `warnings`.
template <typename T>
EvalResult evaluate_dataset(const nn::Model<T>& model, const std::filesystem::path& dir,
                            const std::vector<MethodSpec>& methods, const EvalOptions& options) {
    std::vector<LabeledImage> images;
    std::vector<std::string> warnings;
    for (const auto& e : read_index(dir)) {
        try {
            auto img = netpbm::read_image(dir / e.filename);
            if (img.pixels.shape() != model.input_shape)
                throw ShapeError("image shape " + shape_string(img.pixels.shape()) + " does not match model input " +
                                 shape_string(model.input_shape));
            images.push_back({e.filename, std::move(img), e.label});
        } catch (const Error& err) {
            warnings.push_back("skipping '" + e.filename + "': " + err.what());
        }
    }
    auto result = evaluate_images(model, images, methods, options);
    result.warnings = std::move(warnings);
    return result;
}

// ---------------------------------------------------------------------------
// Relative performance

struct RelPerfReport {
    std::string method_prime;  // M'
    std::string method_base;   // M
    double relative_performance = 1.0;
    double log_mean = 0.0;
    double log_std = 0.0;  // population standard deviation
    std::size_t sample_count = 0;
    double confidence_threshold = 0.0;
};

inline double floored_log(double score) { return std::log(std::max(score, kScoreFloor)); }

/// Geometric mean of O'/O over the records, computed as exp(mean log ratio).
/// Summation runs over records sorted by image id.
inline RelPerfReport relative_performance(std::vector<EvalRecord> records, const std::string& prime,
                                          const std::string& base, double confidence = 0.0) {
    if (records.empty()) throw InvalidArgument("relative performance of an empty record set");
    std::sort(records.begin(), records.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.image_id < b.image_id; });
    std::vector<double> logs;
    logs.reserve(records.size());
    for (const auto& r : records) {
        const auto p = r.outputs.find(prime);
        const auto b = r.outputs.find(base);
        if (p == r.outputs.end() || b == r.outputs.end())
            throw InvalidArgument("record '" + r.image_id + "' lacks output for " +
                                  (p == r.outputs.end() ? prime : base));
        logs.push_back(floored_log(p->second) - floored_log(b->second));
    }
    const double n = static_cast<double>(logs.size());
    double total = 0;
    for (double v : logs) total += v;
    const double mean = total / n;
    double sq = 0;
    for (double v : logs) sq += (v - mean) * (v - mean);
    return {prime, base, std::exp(mean), mean, std::sqrt(sq / n), logs.size(), confidence};
}

/// Every ordered pair (methods[j] vs methods[i]) with i < j.
inline std::vector<RelPerfReport> all_pairs(const EvalResult& result, double confidence) {
    std::vector<RelPerfReport> out;
    for (std::size_t i = 0; i < result.methods.size(); ++i)
        for (std::size_t j = i + 1; j < result.methods.size(); ++j)
            out.push_back(relative_performance(result.records, result.methods[j], result.methods[i], confidence));
    return out;
}

struct EvalReport {
    std::string score_mode;  // "pre" or "post"
    double confidence = 0.0;
    std::vector<std::string> methods;
    std::vector<RelPerfReport> pairs;
    std::vector<EvalRecord> records;
    std::size_t below_confidence = 0;
    std::size_t skipped = 0;
};

// ---------------------------------------------------------------------------
// Alpha statistics

struct Quartiles {
    bool valid = false;  // false when no finite values remained
    double q1 = 0, median = 0, q3 = 0;
    std::size_t retained = 0;  // values inside the Tukey fences
    std::size_t outliers = 0;
};

struct AlphaStats {
    std::size_t image_count = 0;
    std::size_t unit_count = 0;
    std::size_t zero_count = 0;
    std::size_t nonzero_count = 0;
    std::size_t non_finite_count = 0;
    double raw_min = std::numeric_limits<double>::quiet_NaN();  // nonzero alphas, outliers kept
    double raw_max = std::numeric_limits<double>::quiet_NaN();
    Quartiles alpha;  // nonzero finite alphas after outlier removal
    std::vector<std::size_t> tanh_histogram = std::vector<std::size_t>(kTanhBins, 0);
    // Distribution of g * sum(A) over nonzero-gradient units.
    Quartiles term;
    double term_min = std::numeric_limits<double>::quiet_NaN();
    double term_max = std::numeric_limits<double>::quiet_NaN();
};

/// Linear-interpolation quantile of sorted data (position q * (n - 1)).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return f == 0.0 ? sorted[lo] : sorted[lo] + f * (sorted[hi] - sorted[lo]);
}

/// Quartiles after removing values outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR].
/// Non-finite inputs are ignored.
inline Quartiles tukey_quartiles(std::vector<double> values) {
    std::erase_if(values, [](double v) { return !std::isfinite(v); });
    Quartiles q;
    if (values.empty()) return q;
    std::sort(values.begin(), values.end());
    const double q1 = quantile_sorted(values, 0.25), q3 = quantile_sorted(values, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - kTukeyFactor * iqr, hi = q3 + kTukeyFactor * iqr;
    std::vector<double> kept;
    for (double v : values)
        if (v >= lo && v <= hi) kept.push_back(v);
    q.valid = true;
    q.retained = kept.size();
    q.outliers = values.size() - kept.size();
    q.q1 = quantile_sorted(kept, 0.25);
    q.median = quantile_sorted(kept, 0.5);
    q.q3 = quantile_sorted(kept, 0.75);
    return q;
}

inline std::size_t tanh_bin(double alpha) {
    const double t = std::tanh(alpha - 0.5);
    const double pos = (t + 1.0) / 2.0 * static_cast<double>(kTanhBins);
    return std::min(static_cast<std::size_t>(std::max(pos, 0.0)), kTanhBins - 1);
}

/// Statistics from all alpha values (zeros included) and the denominator
/// terms g * sum(A) of the nonzero-gradient units.
inline AlphaStats summarize_alphas(const std::vector<double>& alphas, const std::vector<double>& terms) {
    AlphaStats s;
    s.unit_count = alphas.size();
    std::vector<double> nonzero;
    for (double a : alphas) {
        if (a == 0.0) {
            ++s.zero_count;
            continue;
        }
        nonzero.push_back(a);
        if (!std::isfinite(a)) ++s.non_finite_count;
        if (std::isnan(s.raw_min) || a < s.raw_min) s.raw_min = a;
        if (std::isnan(s.raw_max) || a > s.raw_max) s.raw_max = a;
        if (!std::isnan(a)) ++s.tanh_histogram[tanh_bin(a)];
    }
    s.nonzero_count = nonzero.size();
    s.alpha = tukey_quartiles(std::move(nonzero));
    for (double t : terms) {
        if (std::isnan(s.term_min) || t < s.term_min) s.term_min = t;
        if (std::isnan(s.term_max) || t > s.term_max) s.term_max = t;
    }
    s.term = tukey_quartiles(terms);
    return s;
}

/// Grad-CAM++ alphas (pre-softmax gradients, stable form) for every image at
/// `layer`, aggregated. Class is the label when present, else the argmax.
template <typename T>
AlphaStats alpha_statistics(const nn::Model<T>& model, const std::vector<LabeledImage>& images, int layer,
                            double lambda = 1.0, double alpha_epsilon = 0.0, unsigned workers = 1) {
    std::vector<std::vector<double>> alpha_parts(images.size()), term_parts(images.size());
    parallel_for(images.size(), workers, [&](std::size_t n) {
        const auto trace = nn::forward(model, images[n].image.pixels.template cast<T>());
        const std::size_t c = images[n].label ? *images[n].label : nn::argmax(trace.post_softmax);
        const auto grads = nn::backward_to_layer(model, trace, {c, nn::ScoreMode::pre_softmax}, layer);
        const auto& acts = trace.at(layer);
        const auto field = cam::alpha_stable(grads, acts, lambda, alpha_epsilon);
        const auto sums = cam::detail::map_sums(acts);
        const std::size_t plane = acts.dim(1) * acts.dim(2);
        for (std::size_t u = 0; u < field.values.size(); ++u) {
            alpha_parts[n].push_back(static_cast<double>(field.values[u]));
            if (grads[u] != T{0})
                term_parts[n].push_back(static_cast<double>(grads[u]) * static_cast<double>(sums[u / plane]));
        }
    });
    std::vector<double> alphas, terms;
    for (std::size_t n = 0; n < images.size(); ++n) {
        alphas.insert(alphas.end(), alpha_parts[n].begin(), alpha_parts[n].end());
        terms.insert(terms.end(), term_parts[n].begin(), term_parts[n].end());
    }
    auto stats = summarize_alphas(alphas, terms);
    stats.image_count = images.size();
    return stats;
}

template <typename T>
AlphaStats alpha_statistics(const nn::Model<T>& model, const std::filesystem::path& dir, int layer,
                            double lambda = 1.0, double alpha_epsilon = 0.0, unsigned workers = 1) {
    std::vector<LabeledImage> images;
    for (const auto& e : read_index(dir))
        images.push_back({e.filename, netpbm::read_image(dir / e.filename), e.label});
    return alpha_statistics(model, images, layer, lambda, alpha_epsilon, workers);
}

// ---------------------------------------------------------------------------
// Report files

enum class ReportFormat { json, csv };

inline ReportFormat report_format_from_string(const std::string& name) {
    if (name == "json") return ReportFormat::json;
    if (name == "csv") return ReportFormat::csv;
    throw InvalidArgument("unknown report format '" + name + "'");
}

/// Format from the file extension (.json / .csv).
inline ReportFormat report_format_for(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    return report_format_from_string(ext.empty() ? std::string{} : ext.substr(1));
}

inline const char* kPairCsvHeader =
    "method_prime,method_base,relative_performance,log_mean,log_std,sample_count,confidence_threshold";

inline std::string pair_json(const RelPerfReport& r, int indent) {
    using report_io::Object;
    return Object()
        .str("methodPrime", r.method_prime)
        .str("methodBase", r.method_base)
        .num("relativePerformance", r.relative_performance)
        .num("logMean", r.log_mean)
        .num("logStd", r.log_std)
        .integer("sampleCount", static_cast<long long>(r.sample_count))
        .num("confidenceThreshold", r.confidence_threshold)
        .dump(indent);
}

inline std::string to_json(const EvalReport& report) {
    using report_io::Object;
    std::vector<std::string> methods, pairs, records;
    for (const auto& m : report.methods) methods.push_back(report_io::quoted(m));
    for (const auto& p : report.pairs) pairs.push_back(pair_json(p, 4));
    for (const auto& r : report.records) {
        Object outputs, degenerate;
        for (const auto& m : report.methods) {
            outputs.num(m, r.outputs.at(m));
            degenerate.boolean(m, r.degenerate.at(m));
        }
        records.push_back(Object()
                              .str("imageId", r.image_id)
                              .integer("classIndex", static_cast<long long>(r.class_index))
                              .num("baseScore", r.base_score)
                              .raw("outputs", outputs.dump(6))
                              .raw("degenerate", degenerate.dump(6))
                              .dump(4));
    }
    return Object()
               .str("scoreMode", report.score_mode)
               .num("confidence", report.confidence)
               .raw("methods", report_io::inline_array(methods))
               .integer("recordCount", static_cast<long long>(report.records.size()))
               .integer("belowConfidence", static_cast<long long>(report.below_confidence))
               .integer("skipped", static_cast<long long>(report.skipped))
               .raw("pairs", report_io::array(pairs, 2))
               .raw("records", report_io::array(records, 2))
               .dump() +
           "\n";
}

inline std::string to_csv(const EvalReport& report) {
    std::string out = std::string(kPairCsvHeader) + "\n";
    for (const auto& r : report.pairs) {
        out += r.method_prime + "," + r.method_base + "," + report_io::csv_number(r.relative_performance) + "," +
               report_io::csv_number(r.log_mean) + "," + report_io::csv_number(r.log_std) + "," +
               std::to_string(r.sample_count) + "," + report_io::csv_number(r.confidence_threshold) + "\n";
    }
    return out;
}

inline std::string quartiles_json(const Quartiles& q, double raw_min, double raw_max, int indent) {
    return report_io::Object()
        .boolean("valid", q.valid)
        .num("q1", q.q1)
        .num("median", q.median)
        .num("q3", q.q3)
        .integer("retained", static_cast<long long>(q.retained))
        .integer("outliers", static_cast<long long>(q.outliers))
        .num("rawMin", raw_min)
        .num("rawMax", raw_max)
        .dump(indent);
}

inline std::string to_json(const AlphaStats& s) {
    std::vector<std::string> counts;
    for (auto c : s.tanh_histogram) counts.push_back(std::to_string(c));
    const auto hist = report_io::Object()
                          .integer("bins", static_cast<long long>(kTanhBins))
                          .num("lo", -1.0)
                          .num("hi", 1.0)
                          .raw("counts", report_io::inline_array(counts))
                          .dump(2);
    return report_io::Object()
               .integer("imageCount", static_cast<long long>(s.image_count))
               .integer("unitCount", static_cast<long long>(s.unit_count))
               .integer("zeroCount", static_cast<long long>(s.zero_count))
               .integer("nonzeroCount", static_cast<long long>(s.nonzero_count))
               .integer("nonFiniteCount", static_cast<long long>(s.non_finite_count))
               .raw("alpha", quartiles_json(s.alpha, s.raw_min, s.raw_max, 2))
               .raw("tanhHistogram", hist)
               .raw("denominatorTerm", quartiles_json(s.term, s.term_min, s.term_max, 2))
               .dump() +
           "\n";
}

inline std::string to_csv(const AlphaStats& s) {
    using report_io::csv_number;
    std::ostringstream os;
    os << "metric,value\n";
    os << "image_count," << s.image_count << "\n";
    os << "unit_count," << s.unit_count << "\n";
    os << "zero_count," << s.zero_count << "\n";
    os << "nonzero_count," << s.nonzero_count << "\n";
    os << "non_finite_count," << s.non_finite_count << "\n";
    os << "alpha_valid," << (s.alpha.valid ? 1 : 0) << "\n";
    os << "alpha_q1," << csv_number(s.alpha.q1) << "\n";
    os << "alpha_median," << csv_number(s.alpha.median) << "\n";
    os << "alpha_q3," << csv_number(s.alpha.q3) << "\n";
    os << "alpha_outliers," << s.alpha.outliers << "\n";
    os << "alpha_raw_min," << csv_number(s.raw_min) << "\n";
    os << "alpha_raw_max," << csv_number(s.raw_max) << "\n";
    os << "term_valid," << (s.term.valid ? 1 : 0) << "\n";
    os << "term_q1," << csv_number(s.term.q1) << "\n";
    os << "term_median," << csv_number(s.term.median) << "\n";
    os << "term_q3," << csv_number(s.term.q3) << "\n";
    os << "term_outliers," << s.term.outliers << "\n";
    os << "term_raw_min," << csv_number(s.term_min) << "\n";
    os << "term_raw_max," << csv_number(s.term_max) << "\n";
    for (std::size_t b = 0; b < kTanhBins; ++b) os << "tanh_bin_" << b << "," << s.tanh_histogram[b] << "\n";
    return os.str();
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
    detail::write_text(path, format == ReportFormat::json ? to_json(report) : to_csv(report));
}

inline void write_report(const AlphaStats& stats, const std::filesystem::path& path, ReportFormat format) {
    detail::write_text(path, format == ReportFormat::json ? to_json(stats) : to_csv(stats));
}

/// Reads a JSON number written by the report writers, including the string
/// spellings of non-finite values.
inline double json_number(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
        if (s == "Infinity") return std::numeric_limits<double>::infinity();
        if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
        throw FormatError("expected a number, got \"" + s + "\"");
    }
    return j.get<double>();
}

inline std::vector<RelPerfReport> read_pairs_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const auto j = nlohmann::json::parse(in);
    std::vector<RelPerfReport> out;
    for (const auto& p : j.at("pairs")) {
        out.push_back({p.at("methodPrime").get<std::string>(), p.at("methodBase").get<std::string>(),
                       json_number(p.at("relativePerformance")), json_number(p.at("logMean")),
                       json_number(p.at("logStd")), p.at("sampleCount").get<std::size_t>(),
                       json_number(p.at("confidenceThreshold"))});
    }
    return out;
}

}  // namespace camforge::eval
