#pragma once

// Command-line frontend: measure, evaluate, agree, loss, batch.
// run_cli() is the whole program minus process setup, so tests drive it
// in-process.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "glioburden/agreement.hpp"
#include "glioburden/error.hpp"
#include "glioburden/loss.hpp"
#include "glioburden/metrics.hpp"
#include "glioburden/nifti.hpp"
#include "glioburden/postprocess.hpp"
#include "glioburden/rano.hpp"
#include "glioburden/report.hpp"
#include "glioburden/volume.hpp"

namespace glioburden::cli {

inline constexpr const char* kConfigEnv = "GLIOBURDEN_CONFIG";
inline constexpr int kExitPartial = 5;

namespace fs = std::filesystem;

struct RunConfig {
    LabelSemantics labels;
    RanoParams rano;
    std::vector<RanoAlgorithm> algorithms{RanoAlgorithm::Diameters, RanoAlgorithm::Product};
    std::optional<PruneMode> postprocess;
    int postprocess_connectivity = 26;
    unsigned threads = 1;
    ReportFormat format = ReportFormat::Json;
    std::string out;

    Json to_json() const {
        Json algs = Json::array();
        for (auto a : algorithms) algs.push_back(algorithm_name(a));
        return Json{{"labels", {{"et", labels.et}, {"ed", labels.ed}, {"cavity", labels.cavity}}},
                    {"rano",
                     {{"min_diameter_mm", rano.min_diameter_mm},
                      {"angle_tolerance_deg", rano.angle_tolerance_deg},
                      {"max_lesions", rano.max_lesions},
                      {"inscription_step_mm", rano.inscription_step_mm ? Json(*rano.inscription_step_mm) : Json()},
                      {"connectivity", rano.connectivity},
                      {"inplane_connectivity", rano.inplane_connectivity}}},
                    {"algorithms", algs},
                    {"postprocess", postprocess ? std::string(prune_mode_name(*postprocess)) : "none"},
                    {"postprocess_connectivity", postprocess_connectivity},
                    {"threads", threads},
                    {"format", format == ReportFormat::Json ? "json" : "csv"},
                    {"out", out}};
    }
};

inline std::vector<RanoAlgorithm> parse_algorithms(std::string_view s) {
    if (s == "both") return {RanoAlgorithm::Diameters, RanoAlgorithm::Product};
    return {parse_algorithm(s)};
}

inline std::optional<PruneMode> parse_postprocess(std::string_view s) {
    if (s == "none") return std::nullopt;
    return parse_prune_mode(s);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Usage, "bad " + what + " '" + s + "'");
}

/// "et=4,ed=2,cavity=1"; classes not named keep their current value.
inline LabelSemantics parse_labels(std::string_view spec, LabelSemantics base = {}) {
    for (const auto& item : split(spec, ',')) {
        const auto kv = split(item, '=');
        if (kv.size() != 2) throw Error(ErrorKind::Usage, "--labels expects class=value pairs, got '" + item + "'");
        const int v = parse_int(kv[1], "label value");
        if (v < 1 || v > 255) throw Error(ErrorKind::Usage, "label values must lie in 1..255");
        ClassName c;
        try {
            c = parse_class(kv[0]);
        } catch (const Error&) {
            throw Error(ErrorKind::Usage, "unknown class '" + kv[0] + "' in --labels");
        }
        (c == ClassName::ET ? base.et : c == ClassName::ED ? base.ed : base.cavity) = static_cast<std::uint8_t>(v);
    }
    if (!base.valid()) throw Error(ErrorKind::Usage, "label values must be distinct and non-zero");
    return base;
}

/// "et=3,ed=2"; unnamed classes have no reported confidence.
inline ConfidenceLevels parse_confidence(std::string_view spec) {
    ConfidenceLevels out;
    if (spec.empty()) return out;
    for (const auto& item : split(spec, ',')) {
        const auto kv = split(item, '=');
        if (kv.size() != 2) throw Error(ErrorKind::Usage, "confidence expects class=level pairs, got '" + item + "'");
        const int level = parse_int(kv[1], "confidence level");
        alpha(level);  // range check
        out[parse_class(kv[0])] = level;
    }
    return out;
}

/// Overlays a JSON config document (same shape as RunConfig::to_json, every
/// key optional) onto `cfg`.
inline void apply_config(RunConfig& cfg, const Json& j) {
    static const std::set<std::string> top = {"labels", "rano", "algorithms", "postprocess",
                                              "postprocess_connectivity", "threads", "format", "out"};
    static const std::set<std::string> rano_keys = {"min_diameter_mm", "angle_tolerance_deg", "max_lesions",
                                                    "inscription_step_mm", "connectivity", "inplane_connectivity"};
    if (!j.is_object()) throw format_error("config must be a JSON object");
    try {
        for (const auto& [k, v] : j.items())
            if (!top.count(k)) throw format_error("unknown config key '" + k + "'");
        if (j.contains("labels")) {
            const auto& l = j["labels"];
            auto& s = cfg.labels;
            if (l.contains("et")) s.et = l["et"].get<std::uint8_t>();
            if (l.contains("ed")) s.ed = l["ed"].get<std::uint8_t>();
            if (l.contains("cavity")) s.cavity = l["cavity"].get<std::uint8_t>();
            if (!s.valid()) throw validation_error("config labels must be distinct and non-zero");
        }
        if (j.contains("rano")) {
            const auto& r = j["rano"];
            for (const auto& [k, v] : r.items())
                if (!rano_keys.count(k)) throw format_error("unknown config key 'rano." + k + "'");
            auto& p = cfg.rano;
            if (r.contains("min_diameter_mm")) p.min_diameter_mm = r["min_diameter_mm"].get<double>();
            if (r.contains("angle_tolerance_deg")) p.angle_tolerance_deg = r["angle_tolerance_deg"].get<double>();
            if (r.contains("max_lesions")) p.max_lesions = r["max_lesions"].get<std::size_t>();
            if (r.contains("inscription_step_mm")) {
                if (r["inscription_step_mm"].is_null()) p.inscription_step_mm.reset();
                else p.inscription_step_mm = r["inscription_step_mm"].get<double>();
            }
            if (r.contains("connectivity")) p.connectivity = r["connectivity"].get<int>();
            if (r.contains("inplane_connectivity")) p.inplane_connectivity = r["inplane_connectivity"].get<int>();
        }
        if (j.contains("algorithms")) {
            cfg.algorithms.clear();
            for (const auto& a : j["algorithms"]) cfg.algorithms.push_back(parse_algorithm(a.get<std::string>()));
        }
        if (j.contains("postprocess")) cfg.postprocess = parse_postprocess(j["postprocess"].get<std::string>());
        if (j.contains("postprocess_connectivity"))
            cfg.postprocess_connectivity = j["postprocess_connectivity"].get<int>();
        if (j.contains("threads")) cfg.threads = j["threads"].get<unsigned>();
        if (j.contains("format")) cfg.format = parse_format(j["format"].get<std::string>());
        if (j.contains("out")) cfg.out = j["out"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("config: ") + e.what());
    }
}

inline Json load_json_file(const fs::path& p) {
    const auto text = read_text(p);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw format_error("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Stage helpers shared by the single-case commands and batch.

class Stopwatch {
public:
    double lap_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - t_).count();
        t_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point t_ = std::chrono::steady_clock::now();
};

inline LabelVolume load_segmentation(const fs::path& path, const RunConfig& cfg, Provenance& prov) {
    Stopwatch sw;
    auto v = nifti::read_label_volume(path, cfg.labels, &prov.warnings);
    prov.timings_ms.emplace_back("read", sw.lap_ms());
    if (cfg.postprocess) {
        v = prune_unsupported_et(v, cfg.postprocess_connectivity, *cfg.postprocess);
        prov.timings_ms.emplace_back("postprocess", sw.lap_ms());
    }
    return v;
}

inline MeasurementReport measure_volume(const LabelVolume& v, const RunConfig& cfg, const std::string& patient_id,
                                        Provenance& prov, unsigned rano_threads) {
    Stopwatch sw;
    MeasurementReport r;
    r.patient_id = patient_id;
    r.spacing = v.spacing;
    for (auto c : kAllClasses) r.volumes_mm3[static_cast<std::size_t>(c)] = volume_mm3(class_mask(v, c));
    prov.timings_ms.emplace_back("volumes", sw.lap_ms());
    auto params = cfg.rano;
    params.threads = std::max(1u, rano_threads);
    const auto et = class_mask(v, ClassName::ET);
    for (auto a : cfg.algorithms) {
        r.rano.push_back(rano(et, params, a));
        prov.timings_ms.emplace_back("rano_" + std::string(algorithm_name(a)), sw.lap_ms());
    }
    return r;
}

inline MetricReport evaluate_volumes(const LabelVolume& pred, const LabelVolume& gt,
                                     const std::vector<ClassName>& classes, const std::string& patient_id,
                                     Provenance& prov) {
    Stopwatch sw;
    if (pred.dims != gt.dims) throw validation_error("prediction and ground truth dims differ");
    auto r = evaluate(pred, gt, classes);
    r.patient_id = patient_id;
    prov.timings_ms.emplace_back("metrics", sw.lap_ms());
    return r;
}

inline LossReport loss_for(const std::array<fs::path, 3>& prob_paths, const LabelVolume& gt,
                           const ConfidenceLevels& conf, const std::string& patient_id, Provenance& prov) {
    Stopwatch sw;
    const auto pv = nifti::read_probability_volume(prob_paths);
    prov.timings_ms.emplace_back("read_probabilities", sw.lap_ms());
    LossReport r{patient_id, conf, confidence_weighted_loss(pv, gt, conf, false)};
    prov.timings_ms.emplace_back("loss", sw.lap_ms());
    return r;
}

/// Renders, times the rendering as the "write" stage, then writes to `out`
/// (or `stdout_sink` when `out` is empty).
template <typename Report>
void emit(const Report& r, const RunConfig& cfg, Provenance prov, const std::string& out, std::ostream& stdout_sink) {
    prov.run_config = cfg.to_json();
    Stopwatch sw;
    (void)render_report(r, cfg.format, prov);
    prov.timings_ms.emplace_back("write", sw.lap_ms());
    const auto text = render_report(r, cfg.format, prov);
    if (out.empty()) stdout_sink << text;
    else write_text(out, text);
}

// ---------------------------------------------------------------------------
// agree

inline RatingsMatrix read_ratings(const fs::path& path) {
    const auto rows = parse_csv(read_text(path));
    if (rows.empty()) throw format_error("ratings CSV '" + path.string() + "' has no header");
    const auto& header = rows[0];
    if (header.size() < 3) throw format_error("ratings CSV needs a subject column and at least 2 rater columns");
    const std::size_t k = header.size() - 1;
    std::vector<double> values;
    std::vector<std::string> subjects;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != header.size())
            throw format_error("ratings CSV row " + std::to_string(i + 1) + " has " + std::to_string(row.size()) +
                               " fields, expected " + std::to_string(header.size()));
        subjects.push_back(row[0]);
        for (std::size_t j = 1; j < row.size(); ++j) {
            if (row[j].empty())
                throw validation_error("missing rating for subject '" + row[0] + "' (missing data is rejected)");
            char* end = nullptr;
            const double v = std::strtod(row[j].c_str(), &end);
            if (end != row[j].c_str() + row[j].size())
                throw format_error("non-numeric rating '" + row[j] + "' in row " + std::to_string(i + 1));
            values.push_back(v);
        }
    }
    return RatingsMatrix(subjects.size(), k, std::move(values), {header.begin() + 1, header.end()}, subjects);
}

struct AgreeOptions {
    std::string ratings;
    std::string stat = "all";
    std::string columns;
    std::string aggregate;
    std::string weights;
};

inline AgreementReport run_agree(const AgreeOptions& o) {
    const auto m = read_ratings(o.ratings);
    AgreementReport r;
    r.stat = o.stat;
    r.subjects = m.subjects();
    r.raters = m.raters();
    const bool all = o.stat == "all";
    if (!all && o.stat != "icc" && o.stat != "spearman" && o.stat != "bland_altman")
        throw Error(ErrorKind::Usage, "--stat must be icc, spearman, bland_altman or all");

    if (all || o.stat == "icc") r.icc = icc_2_1(m);
    if (all || o.stat == "spearman" || o.stat == "bland_altman") {
        std::size_t xi = 0, yi = 1;
        if (!o.columns.empty()) {
            const auto cols = split(o.columns, ',');
            if (cols.size() != 2 && !(cols.size() == 1 && !o.aggregate.empty()))
                throw Error(ErrorKind::Usage, "--columns expects two rater ids");
            xi = m.rater_index(cols[0]);
            if (cols.size() == 2) yi = m.rater_index(cols[1]);
        }
        std::vector<double> x = m.column(xi), y;
        if (!o.aggregate.empty()) {
            std::vector<std::size_t> rest;
            for (std::size_t j = 0; j < m.raters(); ++j)
                if (j != xi) rest.push_back(j);
            std::vector<double> w;
            if (!o.weights.empty())
                for (const auto& s : split(o.weights, ',')) w.push_back(std::strtod(s.c_str(), nullptr));
            y = aggregate_ratings(m, parse_aggregate(o.aggregate), w, rest);
            r.compared = {m.rater_ids()[xi], o.aggregate + "(others)"};
        } else {
            y = m.column(yi);
            r.compared = {m.rater_ids()[xi], m.rater_ids()[yi]};
        }
        if (all || o.stat == "spearman") r.spearman_rho = spearman(x, y);
        if (all || o.stat == "bland_altman") r.bland_altman = bland_altman(x, y);
    }
    return r;
}

// ---------------------------------------------------------------------------
// batch

struct ManifestRow {
    std::string patient_id;
    fs::path seg;
    std::optional<fs::path> gt;
    std::optional<std::array<fs::path, 3>> prob;
    ConfidenceLevels confidence;
};

inline std::vector<ManifestRow> read_manifest(const fs::path& path) {
    const auto rows = parse_csv(read_text(path));
    if (rows.empty()) return {};
    const auto& header = rows[0];
    std::map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;
    if (!col.count("patient_id") || !col.count("seg_path"))
        throw format_error("manifest needs patient_id and seg_path columns");
    const bool has_prob = col.count("prob_et") || col.count("prob_ed") || col.count("prob_cavity");
    if (has_prob && !(col.count("prob_et") && col.count("prob_ed") && col.count("prob_cavity")))
        throw format_error("manifest probability columns must be prob_et, prob_ed and prob_cavity together");

    const auto base = path.parent_path();
    auto resolve = [&](const std::string& s) { return fs::path(s).is_absolute() ? fs::path(s) : base / s; };
    std::vector<ManifestRow> out;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != header.size())
            throw format_error("manifest row " + std::to_string(i + 1) + " has the wrong number of fields");
        auto get = [&](const char* name) -> std::string { return col.count(name) ? row[col[name]] : std::string(); };
        ManifestRow m;
        m.patient_id = get("patient_id");
        if (m.patient_id.empty() || m.patient_id.find_first_of("/\\") != std::string::npos || m.patient_id == "." ||
            m.patient_id == "..")
            throw format_error("manifest row " + std::to_string(i + 1) + ": bad patient_id '" + m.patient_id + "'");
        if (!seen.insert(m.patient_id).second) throw format_error("duplicate patient_id '" + m.patient_id + "'");
        if (get("seg_path").empty()) throw format_error("manifest row " + std::to_string(i + 1) + ": empty seg_path");
        m.seg = resolve(get("seg_path"));
        if (!get("gt_path").empty()) m.gt = resolve(get("gt_path"));
        if (has_prob && !get("prob_et").empty())
            m.prob = std::array<fs::path, 3>{resolve(get("prob_et")), resolve(get("prob_ed")),
                                             resolve(get("prob_cavity"))};
        for (auto c : kAllClasses) {
            const auto v = get(("conf_" + std::string(class_key(c))).c_str());
            if (!v.empty()) {
                try {
                    const int level = parse_int(v, "confidence");
                    alpha(level);
                    m.confidence[c] = level;
                } catch (const Error&) {
                    throw format_error("manifest row " + std::to_string(i + 1) + ": bad confidence '" + v + "'");
                }
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

struct RowResult {
    std::string patient_id;
    bool ok = false;
    std::string error;
    // (kind, class, metric) -> value, already rounded as in the written report
    std::vector<std::tuple<std::string, std::string, std::string, double>> values;
};

inline RowResult process_row(const ManifestRow& row, const RunConfig& cfg, const fs::path& out_dir) {
    RowResult res;
    res.patient_id = row.patient_id;
    const auto ext = std::string(format_extension(cfg.format));
    try {
        Provenance prov;
        const auto seg = load_segmentation(row.seg, cfg, prov);
        std::optional<LabelVolume> gt;
        if (row.gt) gt = nifti::read_label_volume(*row.gt, cfg.labels, &prov.warnings);
        if (row.prob && !gt) throw validation_error("probability maps given without gt_path");

        const auto m = measure_volume(seg, cfg, row.patient_id, prov, 1);
        std::optional<MetricReport> metrics;
        std::optional<LossReport> loss;
        Provenance mprov, lprov;
        if (gt) metrics = evaluate_volumes(seg, *gt, {kAllClasses.begin(), kAllClasses.end()}, row.patient_id, mprov);
        if (row.prob) loss = loss_for(*row.prob, *gt, row.confidence, row.patient_id, lprov);

        // Everything computed; only now touch the output directory.
        std::ostringstream sink;
        emit(m, cfg, prov, (out_dir / (row.patient_id + ".measure" + ext)).string(), sink);
        for (auto c : kAllClasses)
            res.values.emplace_back("measure", class_key(c), "volume_mm3", round6(m.volumes_mm3[static_cast<std::size_t>(c)]));
        for (const auto& rm : m.rano)
            res.values.emplace_back("measure", "et", "rano_" + std::string(algorithm_name(rm.algorithm)) + "_sum_mm2",
                                    round6(rm.sum_product_mm2));
        if (metrics) {
            emit(*metrics, cfg, mprov, (out_dir / (row.patient_id + ".evaluate" + ext)).string(), sink);
            for (const auto& [c, cm] : metrics->classes) {
                auto has = [&](const char* f) {
                    return std::find(cm.flags.begin(), cm.flags.end(), f) != cm.flags.end();
                };
                const std::string k(class_key(c));
                if (!has("overlap_both_empty")) {
                    res.values.emplace_back("evaluate", k, "dice", round6(cm.dice));
                    res.values.emplace_back("evaluate", k, "iou", round6(cm.iou));
                }
                if (std::isfinite(cm.h95_mm) && !has("h95_both_empty"))
                    res.values.emplace_back("evaluate", k, "h95_mm", round6(cm.h95_mm));
                if (!has("sensitivity_undefined"))
                    res.values.emplace_back("evaluate", k, "sensitivity", round6(cm.sensitivity));
                if (!has("specificity_undefined"))
                    res.values.emplace_back("evaluate", k, "specificity", round6(cm.specificity));
            }
        }
        if (loss) {
            emit(*loss, cfg, lprov, (out_dir / (row.patient_id + ".loss" + ext)).string(), sink);
            for (auto c : kAllClasses)
                res.values.emplace_back("loss", class_key(c), "loss_weighted", round6(loss->loss.of(c).weighted));
            res.values.emplace_back("loss", "all", "loss_total", round6(loss->loss.total));
        }
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.values.clear();
        res.error = e.what();
    }
    return res;
}

inline std::string batch_summary(const std::vector<RowResult>& results) {
    std::string out = csv_line({"kind", "patient_id", "class", "metric", "n", "mean", "median", "q25", "q75", "error"});
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
    for (const auto& r : results)
        for (const auto& [kind, cls, metric, v] : r.values) groups[{kind, metric, cls}].push_back(v);
    for (auto& [key, vals] : groups) {
        const auto& [kind, metric, cls] = key;
        std::sort(vals.begin(), vals.end());
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        out += csv_line({kind, "", cls, metric, std::to_string(vals.size()), format_number(mean),
                         format_number(percentile_sorted(vals, 0.5)), format_number(percentile_sorted(vals, 0.25)),
                         format_number(percentile_sorted(vals, 0.75)), ""});
    }
    for (const auto& r : results)
        if (!r.ok) out += csv_line({"failure", r.patient_id, "", "", "", "", "", "", "", r.error});
    return out;
}

inline int run_batch(const fs::path& manifest, const RunConfig& cfg, std::ostream& err) {
    const auto rows = read_manifest(manifest);
    const fs::path out_dir = cfg.out.empty() ? fs::path("glioburden_out") : fs::path(cfg.out);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create output directory '" + out_dir.string() + "'");

    std::vector<RowResult> results(rows.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < rows.size();) results[i] = process_row(rows[i], cfg, out_dir);
    };
    const auto workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(rows.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
        worker();
    }
    write_text(out_dir / "summary.csv", batch_summary(results));
    std::size_t failed = 0;
    for (const auto& r : results)
        if (!r.ok) {
            ++failed;
            err << "glioburden: " << r.patient_id << ": " << r.error << "\n";
        }
    if (failed) err << "glioburden: " << failed << " of " << rows.size() << " rows failed\n";
    return failed ? kExitPartial : 0;
}

// ---------------------------------------------------------------------------

inline int exit_code(const Error& e) { return static_cast<int>(e.kind()); }

/// Whole CLI. args[0] is the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tumor burden measurement and segmentation evaluation", "glioburden"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "glioburden 1.0.0");

    std::optional<std::string> labels_opt, format_opt, out_opt, config_opt;
    std::optional<unsigned> threads_opt;
    app.add_option("--labels", labels_opt, "Label values, e.g. et=4,ed=2,cavity=1")->group("Global");
    app.add_option("--threads", threads_opt, "Worker threads")->group("Global")->check(CLI::Range(1u, 1024u));
    app.add_option("--format", format_opt, "Report format: json|csv")->group("Global");
    app.add_option("--out", out_opt, "Report file (batch: output directory)")->group("Global");
    app.add_option("--config", config_opt, std::string("JSON config file (default: $") + kConfigEnv + ")")
        ->group("Global");

    // RANO flags shared by measure and batch
    std::optional<std::string> algorithm_opt, postprocess_opt;
    std::optional<double> min_diam_opt, tol_opt, step_opt;
    std::optional<std::size_t> max_lesions_opt;
    std::optional<int> conn_opt, inplane_opt;
    auto add_rano_flags = [&](CLI::App* sub) {
        sub->add_option("--algorithm", algorithm_opt, "diameters|product|both");
        sub->add_option("--postprocess", postprocess_opt, "none|component|voxel");
        sub->add_option("--min-diameter", min_diam_opt, "Minimum diameter (mm)");
        sub->add_option("--angle-tolerance", tol_opt, "Perpendicularity tolerance (deg)");
        sub->add_option("--max-lesions", max_lesions_opt, "Lesions summed");
        sub->add_option("--inscription-step", step_opt, "Inscription sampling step (mm)");
        sub->add_option("--connectivity", conn_opt, "3D lesion connectivity 6|18|26");
        sub->add_option("--inplane-connectivity", inplane_opt, "Slice region connectivity 4|8");
    };

    std::string seg, pred, gt, patient_id, classes = "et,ed,cavity", manifest, confidence;
    std::array<std::string, 3> prob;
    AgreeOptions agree;

    auto* measure = app.add_subcommand("measure", "Volumes and RANO for one segmentation");
    measure->add_option("seg,--seg", seg, "Segmentation NIfTI")->required();
    measure->add_option("--patient-id", patient_id, "Identifier written into the report");
    add_rano_flags(measure);

    auto* eval = app.add_subcommand("evaluate", "Overlap and distance metrics against ground truth");
    eval->add_option("--pred", pred, "Predicted segmentation")->required();
    eval->add_option("--gt", gt, "Ground-truth segmentation")->required();
    eval->add_option("--classes", classes, "Classes to evaluate");
    eval->add_option("--patient-id", patient_id, "Identifier written into the report");
    eval->add_option("--postprocess", postprocess_opt, "none|component|voxel (applied to --pred)");

    auto* agr = app.add_subcommand("agree", "Inter-rater agreement over a ratings CSV");
    agr->add_option("ratings,--ratings", agree.ratings, "CSV: subject column then one column per rater")->required();
    agr->add_option("--stat", agree.stat, "icc|spearman|bland_altman|all");
    agr->add_option("--columns", agree.columns, "Rater ids compared by spearman/bland_altman");
    agr->add_option("--aggregate", agree.aggregate, "Compare against average|weighted_average|median|min|max of the other raters");
    agr->add_option("--weights", agree.weights, "Weights for weighted_average");

    auto* loss = app.add_subcommand("loss", "Confidence-weighted loss of probability maps");
    loss->add_option("--prob-et", prob[0], "ET probability NIfTI")->required();
    loss->add_option("--prob-ed", prob[1], "ED probability NIfTI")->required();
    loss->add_option("--prob-cavity", prob[2], "Cavity probability NIfTI")->required();
    loss->add_option("--gt", gt, "Ground-truth segmentation")->required();
    loss->add_option("--confidence", confidence, "Per-class confidence, e.g. et=3,ed=2");
    loss->add_option("--patient-id", patient_id, "Identifier written into the report");

    auto* batch = app.add_subcommand("batch", "Process a manifest CSV");
    batch->add_option("manifest,--manifest", manifest, "Manifest CSV")->required();
    add_rano_flags(batch);

    for (auto* sub : {measure, eval, agr, loss, batch}) sub->fallthrough();

    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return static_cast<int>(ErrorKind::Usage);
    }

    try {
        RunConfig cfg;
        std::string config_path = config_opt.value_or("");
        if (config_path.empty())
            if (const char* env = std::getenv(kConfigEnv)) config_path = env;
        if (!config_path.empty()) apply_config(cfg, load_json_file(config_path));

        if (labels_opt) cfg.labels = parse_labels(*labels_opt, cfg.labels);
        if (threads_opt) cfg.threads = *threads_opt;
        if (format_opt) cfg.format = parse_format(*format_opt);
        if (out_opt) cfg.out = *out_opt;
        if (algorithm_opt) cfg.algorithms = parse_algorithms(*algorithm_opt);
        if (postprocess_opt) cfg.postprocess = parse_postprocess(*postprocess_opt);
        if (min_diam_opt) cfg.rano.min_diameter_mm = *min_diam_opt;
        if (tol_opt) cfg.rano.angle_tolerance_deg = *tol_opt;
        if (max_lesions_opt) cfg.rano.max_lesions = *max_lesions_opt;
        if (step_opt) cfg.rano.inscription_step_mm = *step_opt;
        if (conn_opt) cfg.rano.connectivity = *conn_opt;
        if (inplane_opt) cfg.rano.inplane_connectivity = *inplane_opt;
        try {
            cfg.rano.validate();
            neighbourhood(cfg.postprocess_connectivity);
        } catch (const Error& e) {
            throw Error(ErrorKind::Usage, e.what());
        }
        if (cfg.threads == 0) throw Error(ErrorKind::Usage, "threads must be positive");

        if (*measure) {
            Provenance prov;
            const auto v = load_segmentation(seg, cfg, prov);
            const auto id = patient_id.empty() ? fs::path(seg).filename().string() : patient_id;
            const auto r = measure_volume(v, cfg, id, prov, cfg.threads);
            for (const auto& w : prov.warnings) err << "glioburden: warning: " << w << "\n";
            emit(r, cfg, prov, cfg.out, out);
        } else if (*eval) {
            std::vector<ClassName> cls;
            for (const auto& c : split(classes, ',')) cls.push_back(parse_class(c));
            Provenance prov;
            const auto p = load_segmentation(pred, cfg, prov);
            const auto g = nifti::read_label_volume(gt, cfg.labels, &prov.warnings);
            const auto id = patient_id.empty() ? fs::path(pred).filename().string() : patient_id;
            const auto r = evaluate_volumes(p, g, cls, id, prov);
            for (const auto& w : prov.warnings) err << "glioburden: warning: " << w << "\n";
            emit(r, cfg, prov, cfg.out, out);
        } else if (*agr) {
            Provenance prov;
            Stopwatch sw;
            const auto r = run_agree(agree);
            prov.timings_ms.emplace_back("agreement", sw.lap_ms());
            emit(r, cfg, prov, cfg.out, out);
        } else if (*loss) {
            const auto conf = parse_confidence(confidence);
            Provenance prov;
            Stopwatch sw;
            const auto g = nifti::read_label_volume(gt, cfg.labels, &prov.warnings);
            prov.timings_ms.emplace_back("read", sw.lap_ms());
            const auto r = loss_for({prob[0], prob[1], prob[2]}, g, conf,
                                    patient_id.empty() ? fs::path(gt).filename().string() : patient_id, prov);
            emit(r, cfg, prov, cfg.out, out);
        } else if (*batch) {
            return run_batch(manifest, cfg, err);
        }
        return 0;
    } catch (const Error& e) {
        err << "glioburden: error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const fs::filesystem_error& e) {
        err << "glioburden: error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Io);
    } catch (const std::exception& e) {
        err << "glioburden: error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Validation);
    }
}

}  // namespace glioburden::cli
