#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "glioburden/report.hpp"
#include "phantoms.hpp"

using namespace glioburden;
using namespace glioburden::testing;

namespace {

MeasurementReport square_report() {
    // 21x21 square on slice 1: both diagonals are inscribed and perpendicular.
    auto m = empty_mask(30, 30, 3, {1.0, 1.0, 2.0});
    paint_box(m, 2, 2, 1, 21, 21);
    MeasurementReport r;
    r.patient_id = "sq";
    r.spacing = m.spacing;
    r.volumes_mm3 = {volume_mm3(m), 0.0, 0.0};
    r.rano.push_back(rano(m, {}, RanoAlgorithm::Product));
    return r;
}

// Parse CSV into header-keyed maps.
std::vector<std::map<std::string, std::string>> csv_records(const std::string& text) {
    const auto rows = parse_csv(text);
    std::vector<std::map<std::string, std::string>> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::map<std::string, std::string> rec;
        for (std::size_t j = 0; j < rows[0].size(); ++j) rec[rows[0][j]] = rows[i].at(j);
        out.push_back(rec);
    }
    return out;
}

}  // namespace

TEST(Report, SixSignificantDigits) {
    EXPECT_EQ(format_number(28.284271247461902), "28.2843");
    EXPECT_EQ(format_number(800.0), "800");
    EXPECT_EQ(format_number(1234567.0), "1.23457e+06");
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "");
    EXPECT_EQ(round6(0.1234567), 0.123457);
    EXPECT_TRUE(number(std::nan("")).is_null());
}

TEST(Report, SingleLesionJsonSchema) {
    const auto doc = to_json(square_report());
    const Json golden = Json::parse(R"({
      "patient_id": "sq",
      "spacing_mm": [1, 1, 2],
      "volumes_mm3": {"et": 882, "ed": 0, "cavity": 0},
      "rano": [{
        "algorithm": "product",
        "sum_product_mm2": 800,
        "measurable_count": 1,
        "lesions": [{
          "component_id": 1,
          "slice_index": 1,
          "major": {"p0_mm": [2, 2], "p1_mm": [22, 22], "length_mm": 28.2843},
          "perpendicular": {"p0_mm": [22, 2], "p1_mm": [2, 22], "length_mm": 28.2843},
          "product_mm2": 800,
          "measurable": true
        }]
      }],
      "run_config": {},
      "timings_ms": {},
      "warnings": []
    })");
    EXPECT_EQ(doc, golden) << doc.dump(2);
    // key order is part of the contract
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"patient_id", "spacing_mm", "volumes_mm3", "rano", "run_config",
                                              "timings_ms", "warnings"}));
}

TEST(Report, EmptyReportsHaveZeroRows) {
    MeasurementReport m;
    EXPECT_EQ(parse_csv(to_csv(m)).size(), 1u);
    EXPECT_TRUE(to_json(m)["rano"].empty());
    MetricReport mr;
    EXPECT_EQ(parse_csv(to_csv(mr)).size(), 1u);
    EXPECT_TRUE(to_json(mr)["classes"].empty());
}

TEST(Report, CsvAndJsonAgreeFieldByField) {
    auto r = square_report();
    auto m2 = empty_mask(30, 30, 3, {1.0, 1.0, 2.0});
    paint_box(m2, 2, 2, 1, 5, 5);  // unmeasurable lesion
    paint_box(m2, 10, 10, 0, 15, 12);
    r.rano.push_back(rano(m2, {}, RanoAlgorithm::Diameters));
    Provenance prov;
    prov.run_config = {{"threads", 1}};
    prov.timings_ms = {{"read", 1.25}};
    const auto doc = to_json(r, prov);
    const auto recs = csv_records(to_csv(r, prov));
    std::size_t k = 0;
    for (const auto& alg : doc["rano"])
        for (const auto& l : alg["lesions"]) {
            ASSERT_LT(k, recs.size());
            const auto& rec = recs[k++];
            EXPECT_EQ(rec.at("algorithm"), alg["algorithm"]);
            EXPECT_EQ(std::stod(rec.at("sum_product_mm2")), alg["sum_product_mm2"].get<double>());
            EXPECT_EQ(std::stoul(rec.at("component_id")), l["component_id"].get<unsigned>());
            EXPECT_EQ(std::stod(rec.at("product_mm2")), l["product_mm2"].get<double>());
            EXPECT_EQ(rec.at("measurable"), l["measurable"].get<bool>() ? "true" : "false");
            if (l["major"].is_null()) {
                EXPECT_EQ(rec.at("major_length_mm"), "");
            } else {
                EXPECT_EQ(std::stod(rec.at("major_p1_x_mm")), l["major"]["p1_mm"][0].get<double>());
                EXPECT_EQ(std::stod(rec.at("perpendicular_length_mm")), l["perpendicular"]["length_mm"].get<double>());
            }
            EXPECT_EQ(std::stod(rec.at("volume_et_mm3")), doc["volumes_mm3"]["et"].get<double>());
            const auto p = Json::parse(rec.at("provenance"));
            EXPECT_EQ(p["run_config"], doc["run_config"]);
            EXPECT_EQ(p["timings_ms"], doc["timings_ms"]);
        }
    EXPECT_EQ(k, recs.size());
}

TEST(Report, MetricInfinityIsNullAndFlagged) {
    BinaryMask a({4, 4, 4}, {}), e({4, 4, 4}, {});
    a.set(1, 1, 1);
    MetricReport r;
    r.patient_id = "p";
    r.classes[ClassName::ET] = evaluate_class(a, e);
    const auto doc = to_json(r);
    EXPECT_TRUE(doc["classes"]["et"]["h95_mm"].is_null());
    EXPECT_EQ(doc["classes"]["et"]["flags"][0], "overlap_one_empty");
    const auto recs = csv_records(to_csv(r));
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].at("h95_mm"), "");
    EXPECT_NE(recs[0].at("flags").find("h95_one_empty"), std::string::npos);
}

TEST(Report, AgreementCsvFlattensJson) {
    AgreementReport r;
    r.stat = "all";
    r.subjects = 3;
    r.raters = 2;
    const RatingsMatrix m(3, 2, {1, 2, 2, 3, 3, 5});
    r.icc = icc_2_1(m);
    r.spearman_rho = spearman(m.column(0), m.column(1));
    r.bland_altman = bland_altman(m.column(0), m.column(1));
    const auto doc = to_json(r);
    const auto rows = parse_csv(to_csv(r));
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < rows.size(); ++i) kv[rows[i][0]] = rows[i][1];
    EXPECT_EQ(std::stod(kv.at("icc.value")), doc["icc"]["value"].get<double>());
    EXPECT_EQ(std::stod(kv.at("bland_altman.points.2.difference")), -2.0);
    EXPECT_EQ(kv.at("spearman_rho"), "1");
}

TEST(Report, CsvQuotingRoundTrips) {
    const std::vector<std::string> fields{"a,b", "say \"hi\"", "", "line\nbreak", "plain"};
    const auto rows = parse_csv(csv_line(fields) + csv_line({"x"}));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], fields);
    EXPECT_THROW(parse_csv("\"open"), Error);
}

TEST(Report, WriteLeavesNoTemporary) {
    const auto dir = std::filesystem::temp_directory_path() / "glioburden_test_report";
    std::filesystem::create_directories(dir);
    write_report(square_report(), dir / "r.json", ReportFormat::Json);
    EXPECT_TRUE(std::filesystem::exists(dir / "r.json"));
    EXPECT_FALSE(std::filesystem::exists(dir / "r.json.tmp"));
    EXPECT_EQ(Json::parse(read_text(dir / "r.json"))["patient_id"], "sq");
    EXPECT_THROW(write_report(square_report(), dir / "missing_dir" / "r.json", ReportFormat::Json), Error);
}
