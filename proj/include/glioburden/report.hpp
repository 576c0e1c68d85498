#pragma once

// Report documents (JSON and CSV). Reals are written with 6 significant
// digits; non-finite reals become null (JSON) or an empty field (CSV) and the
// owning record carries a flag saying why.

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "glioburden/agreement.hpp"
#include "glioburden/error.hpp"
#include "glioburden/loss.hpp"
#include "glioburden/metrics.hpp"
#include "glioburden/rano.hpp"
#include "glioburden/volume.hpp"

namespace glioburden {

using Json = nlohmann::ordered_json;

enum class ReportFormat { Json, Csv };

inline ReportFormat parse_format(std::string_view s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    throw Error(ErrorKind::Usage, "unknown format '" + std::string(s) + "' (json|csv)");
}

inline std::string_view format_extension(ReportFormat f) { return f == ReportFormat::Json ? ".json" : ".csv"; }

/// Text form with 6 significant digits; empty for non-finite values.
inline std::string format_number(double x) {
    if (!std::isfinite(x)) return {};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

/// x rounded to 6 significant digits, as the JSON writer emits it.
inline double round6(double x) {
    if (!std::isfinite(x)) return x;
    return std::strtod(format_number(x).c_str(), nullptr);
}

inline Json number(double x) {
    if (!std::isfinite(x)) return nullptr;
    return round6(x);
}

/// Run configuration, stage timings and reader warnings attached to a report.
struct Provenance {
    Json run_config = Json::object();
    std::vector<std::pair<std::string, double>> timings_ms;
    std::vector<std::string> warnings;

    Json to_json() const {
        Json t = Json::object();
        for (const auto& [stage, ms] : timings_ms) t[stage] = number(ms);
        return Json{{"run_config", run_config}, {"timings_ms", t}, {"warnings", warnings}};
    }
};

inline void append_provenance(Json& doc, const Provenance& prov) {
    const auto p = prov.to_json();
    for (const auto& [k, v] : p.items()) doc[k] = v;
}

struct MeasurementReport {
    std::string patient_id;
    Spacing spacing;
    std::array<double, 3> volumes_mm3{};  // ET, ED, Cavity
    std::vector<RanoMeasurement> rano;
};

// ---------------------------------------------------------------------------
// CSV primitives

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::string csv_line(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    return out + '\n';
}

/// RFC 4180 records. Blank lines are skipped.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    auto end_row = [&] {
        if (any || !field.empty() || !row.empty()) {
            row.push_back(std::move(field));
            rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw format_error("unterminated quoted CSV field");
    end_row();
    return rows;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw io_error("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary sibling and renames, so a failed run leaves no
/// partial file behind.
inline void write_text(const std::filesystem::path& p, const std::string& text) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write '" + p.string() + "'");
        out << text;
        if (!out.flush()) throw io_error("failed writing '" + p.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw io_error("cannot move report into place at '" + p.string() + "'");
    }
}

// ---------------------------------------------------------------------------
// Measurement report

inline Json segment_json(const std::optional<Segment2D>& s) {
    if (!s) return nullptr;
    return Json{{"p0_mm", {number(s->p0_mm[0]), number(s->p0_mm[1])}},
                {"p1_mm", {number(s->p1_mm[0]), number(s->p1_mm[1])}},
                {"length_mm", number(s->length_mm)}};
}

inline Json to_json(const MeasurementReport& r, const Provenance& prov = {}) {
    Json doc;
    doc["patient_id"] = r.patient_id;
    doc["spacing_mm"] = {number(r.spacing.dx), number(r.spacing.dy), number(r.spacing.dz)};
    Json vol = Json::object();
    for (auto c : kAllClasses) vol[std::string(class_key(c))] = number(r.volumes_mm3[static_cast<std::size_t>(c)]);
    doc["volumes_mm3"] = vol;
    doc["rano"] = Json::array();
    for (const auto& m : r.rano) {
        Json lesions = Json::array();
        for (const auto& l : m.lesions)
            lesions.push_back(Json{{"component_id", l.component_id},
                                   {"slice_index", l.slice_index},
                                   {"major", segment_json(l.major)},
                                   {"perpendicular", segment_json(l.perpendicular)},
                                   {"product_mm2", number(l.product_mm2)},
                                   {"measurable", l.measurable}});
        doc["rano"].push_back(Json{{"algorithm", algorithm_name(m.algorithm)},
                                   {"sum_product_mm2", number(m.sum_product_mm2)},
                                   {"measurable_count", m.measurable_count()},
                                   {"lesions", lesions}});
    }
    append_provenance(doc, prov);
    return doc;
}

inline const std::vector<std::string>& measurement_csv_header() {
    static const std::vector<std::string> h = {
        "patient_id", "dx_mm", "dy_mm", "dz_mm", "volume_et_mm3", "volume_ed_mm3", "volume_cavity_mm3",
        "algorithm", "sum_product_mm2", "component_id", "slice_index",
        "major_p0_x_mm", "major_p0_y_mm", "major_p1_x_mm", "major_p1_y_mm", "major_length_mm",
        "perpendicular_p0_x_mm", "perpendicular_p0_y_mm", "perpendicular_p1_x_mm", "perpendicular_p1_y_mm",
        "perpendicular_length_mm", "product_mm2", "measurable", "provenance"};
    return h;
}

/// One row per lesion per algorithm. An algorithm that found no lesion gets
/// one row with the lesion fields blank, so its zero sum is still recorded.
inline std::string to_csv(const MeasurementReport& r, const Provenance& prov = {}) {
    std::string out = csv_line(measurement_csv_header());
    const auto provenance = prov.to_json().dump();
    auto seg = [](std::vector<std::string>& row, const std::optional<Segment2D>& s) {
        if (!s) {
            row.insert(row.end(), 5, "");
            return;
        }
        for (double v : {s->p0_mm[0], s->p0_mm[1], s->p1_mm[0], s->p1_mm[1], s->length_mm})
            row.push_back(format_number(v));
    };
    for (const auto& m : r.rano) {
        std::vector<std::string> base = {r.patient_id, format_number(r.spacing.dx), format_number(r.spacing.dy),
                                         format_number(r.spacing.dz)};
        for (double v : r.volumes_mm3) base.push_back(format_number(v));
        base.push_back(std::string(algorithm_name(m.algorithm)));
        base.push_back(format_number(m.sum_product_mm2));
        if (m.lesions.empty()) {
            auto row = base;
            row.insert(row.end(), 13, "");
            row.push_back(provenance);
            out += csv_line(row);
        }
        for (const auto& l : m.lesions) {
            auto row = base;
            row.push_back(std::to_string(l.component_id));
            row.push_back(std::to_string(l.slice_index));
            seg(row, l.major);
            seg(row, l.perpendicular);
            row.push_back(format_number(l.product_mm2));
            row.push_back(l.measurable ? "true" : "false");
            row.push_back(provenance);
            out += csv_line(row);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metric report

inline Json to_json(const MetricReport& r, const Provenance& prov = {}) {
    Json doc;
    doc["patient_id"] = r.patient_id;
    Json classes = Json::object();
    for (const auto& [c, m] : r.classes)
        classes[std::string(class_key(c))] = Json{{"dice", number(m.dice)},
                                                  {"iou", number(m.iou)},
                                                  {"h95_mm", number(m.h95_mm)},
                                                  {"sensitivity", number(m.sensitivity)},
                                                  {"specificity", number(m.specificity)},
                                                  {"tp", m.counts.tp},
                                                  {"fp", m.counts.fp},
                                                  {"fn", m.counts.fn},
                                                  {"tn", m.counts.tn},
                                                  {"flags", m.flags}};
    doc["classes"] = classes;
    append_provenance(doc, prov);
    return doc;
}

inline const std::vector<std::string>& metric_csv_header() {
    static const std::vector<std::string> h = {"patient_id", "class", "dice", "iou", "h95_mm", "sensitivity",
                                               "specificity", "tp", "fp", "fn", "tn", "flags", "provenance"};
    return h;
}

inline std::string to_csv(const MetricReport& r, const Provenance& prov = {}) {
    std::string out = csv_line(metric_csv_header());
    const auto provenance = prov.to_json().dump();
    for (const auto& [c, m] : r.classes) {
        std::string flags;
        for (const auto& f : m.flags) flags += (flags.empty() ? "" : ";") + f;
        out += csv_line({r.patient_id, std::string(class_key(c)), format_number(m.dice), format_number(m.iou),
                         format_number(m.h95_mm), format_number(m.sensitivity), format_number(m.specificity),
                         std::to_string(m.counts.tp), std::to_string(m.counts.fp), std::to_string(m.counts.fn),
                         std::to_string(m.counts.tn), flags, provenance});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Agreement report

inline Json to_json(const AgreementReport& r, const Provenance& prov = {}) {
    Json doc;
    doc["stat"] = r.stat;
    doc["subjects"] = r.subjects;
    doc["raters"] = r.raters;
    doc["compared"] = r.compared;
    if (r.icc) {
        const auto& i = *r.icc;
        doc["icc"] = Json{{"value", number(i.icc)},  {"f_statistic", number(i.f_statistic)},
                          {"df1", number(i.df1)},    {"df2", number(i.df2)},
                          {"p_value", number(i.p_value)}, {"msr", number(i.msr)},
                          {"msc", number(i.msc)},    {"mse", number(i.mse)},
                          {"degenerate", i.degenerate}};
    }
    if (r.spearman_rho) doc["spearman_rho"] = number(*r.spearman_rho);
    if (r.bland_altman) {
        const auto& b = *r.bland_altman;
        Json pts = Json::array();
        for (const auto& [mean, diff] : b.points) pts.push_back(Json{{"mean", number(mean)}, {"difference", number(diff)}});
        doc["bland_altman"] = Json{{"bias", number(b.bias)},
                                   {"sd", number(b.sd)},
                                   {"loa_low", number(b.loa_low)},
                                   {"loa_high", number(b.loa_high)},
                                   {"points", pts}};
    }
    append_provenance(doc, prov);
    return doc;
}

namespace detail {

inline void flatten(const Json& j, const std::string& prefix, std::vector<std::vector<std::string>>& rows) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, rows);
    } else if (j.is_array()) {
        if (j.empty()) rows.push_back({prefix, ""});
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), rows);
    } else if (j.is_null()) {
        rows.push_back({prefix, ""});
    } else if (j.is_string()) {
        rows.push_back({prefix, j.get<std::string>()});
    } else if (j.is_number_float()) {
        rows.push_back({prefix, format_number(j.get<double>())});
    } else {
        rows.push_back({prefix, j.dump()});
    }
}

}  // namespace detail

/// field,value rows from the JSON document, provenance kept as one field.
inline std::string to_csv(const AgreementReport& r, const Provenance& prov = {}) {
    std::string out = csv_line({"field", "value"});
    std::vector<std::vector<std::string>> rows;
    detail::flatten(to_json(r), "", rows);
    for (const auto& row : rows) out += csv_line(row);
    out += csv_line({"provenance", prov.to_json().dump()});
    return out;
}

// ---------------------------------------------------------------------------
// Loss report

struct LossReport {
    std::string patient_id;
    ConfidenceLevels confidence;
    LossValue loss;
};

inline Json to_json(const LossReport& r, const Provenance& prov = {}) {
    Json doc;
    doc["patient_id"] = r.patient_id;
    doc["total"] = number(r.loss.total);
    Json classes = Json::object();
    for (auto c : kAllClasses) {
        const auto& cl = r.loss.of(c);
        const auto lv = r.confidence[c];
        classes[std::string(class_key(c))] = Json{{"confidence", lv ? Json(*lv) : Json(nullptr)},
                                                  {"alpha", number(cl.alpha)},
                                                  {"cross_entropy", number(cl.cross_entropy)},
                                                  {"soft_dice", number(cl.soft_dice)},
                                                  {"unweighted", number(cl.unweighted)},
                                                  {"weighted", number(cl.weighted)}};
    }
    doc["classes"] = classes;
    append_provenance(doc, prov);
    return doc;
}

inline std::string to_csv(const LossReport& r, const Provenance& prov = {}) {
    std::string out = csv_line({"patient_id", "class", "confidence", "alpha", "cross_entropy", "soft_dice",
                                "unweighted", "weighted", "total", "provenance"});
    const auto provenance = prov.to_json().dump();
    for (auto c : kAllClasses) {
        const auto& cl = r.loss.of(c);
        const auto lv = r.confidence[c];
        out += csv_line({r.patient_id, std::string(class_key(c)), lv ? std::to_string(*lv) : "",
                         format_number(cl.alpha), format_number(cl.cross_entropy), format_number(cl.soft_dice),
                         format_number(cl.unweighted), format_number(cl.weighted), format_number(r.loss.total),
                         provenance});
    }
    return out;
}

// ---------------------------------------------------------------------------

template <typename Report>
std::string render_report(const Report& r, ReportFormat format, const Provenance& prov = {}) {
    if (format == ReportFormat::Json) return to_json(r, prov).dump(2) + "\n";
    return to_csv(r, prov);
}

template <typename Report>
void write_report(const Report& r, const std::filesystem::path& path, ReportFormat format,
                  const Provenance& prov = {}) {
    write_text(path, render_report(r, format, prov));
}

}  // namespace glioburden
