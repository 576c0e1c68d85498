#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "glioburden/cli.hpp"
#include "glioburden/rano_oracle.hpp"
#include "phantoms.hpp"

using namespace glioburden;
using namespace glioburden::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "glioburden");
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path dir() {
    static const fs::path d = [] {
        auto p = fs::temp_directory_path() / "glioburden_test_cli";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return d;
}

std::string path(const std::string& name) { return (dir() / name).string(); }

LabelVolume disk_volume(double radius_mm, std::size_t n = 40) {
    LabelVolume v({n, n, 3}, {1.0, 1.0, 2.0});
    auto m = empty_mask(n, n, 3, v.spacing);
    paint_disk(m, n / 2, n / 2, 1, radius_mm);
    for (std::size_t i = 0; i < m.bits.size(); ++i)
        if (m.bits[i]) v.labels[i] = 1;
    // ED rim on the next slice
    for (std::size_t x = 0; x < 5; ++x) v.at(x, 0, 2) = 2;
    return v;
}

std::string write_volume(const LabelVolume& v, const std::string& name) {
    nifti::write_label_volume(v, path(name));
    return path(name);
}

Json strip_timings(Json j) {
    j.erase("timings_ms");
    return j;
}

}  // namespace

TEST(Cli, MeasureDiskBothAlgorithmsMatchesOracle) {
    const auto v = disk_volume(10.0);
    const auto seg = write_volume(v, "disk.nii.gz");
    const auto r = run({"measure", seg, "--algorithm", "both", "--patient-id", "disk"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = Json::parse(r.out);
    ASSERT_EQ(doc["rano"].size(), 2u);
    const auto et = class_mask(v, ClassName::ET);
    const auto diam = rano_oracle(et, {}, RanoAlgorithm::Diameters);
    const auto prod = rano_oracle(et, {}, RanoAlgorithm::Product);
    EXPECT_EQ(doc["rano"][0]["algorithm"], "diameters");
    EXPECT_EQ(doc["rano"][0]["sum_product_mm2"].get<double>(), round6(diam.sum_product_mm2));
    EXPECT_EQ(doc["rano"][1]["sum_product_mm2"].get<double>(), round6(prod.sum_product_mm2));
    EXPECT_GE(doc["rano"][1]["sum_product_mm2"].get<double>(), doc["rano"][0]["sum_product_mm2"].get<double>());
    EXPECT_EQ(doc["volumes_mm3"]["et"].get<double>(), round6(volume_mm3(et)));
    EXPECT_EQ(doc["volumes_mm3"]["ed"].get<double>(), 10.0);
    EXPECT_EQ(doc["patient_id"], "disk");
    // provenance
    EXPECT_EQ(doc["run_config"]["rano"]["min_diameter_mm"], 10.0);
    EXPECT_EQ(doc["run_config"]["labels"]["et"], 1);
    for (const char* stage : {"read", "volumes", "rano_diameters", "rano_product", "write"})
        EXPECT_TRUE(doc["timings_ms"].contains(stage)) << stage;
}

TEST(Cli, MeasureEmptySegmentation) {
    const auto seg = write_volume(LabelVolume({8, 8, 2}, {}), "empty.nii");
    const auto r = run({"measure", seg});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = Json::parse(r.out);
    for (const auto& c : {"et", "ed", "cavity"}) EXPECT_EQ(doc["volumes_mm3"][c], 0.0);
    for (const auto& a : doc["rano"]) {
        EXPECT_EQ(a["sum_product_mm2"], 0.0);
        EXPECT_TRUE(a["lesions"].empty());
    }
}

TEST(Cli, ExitCodesAndNoPartialReport) {
    const auto out = path("never.json");
    auto r = run({"measure", path("missing.nii"), "--out", out});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_NE(r.err.find("missing.nii"), std::string::npos);

    EXPECT_EQ(run({"measure"}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    EXPECT_EQ(run({"measure", path("x.nii"), "--format", "xml"}).code, 1);
    EXPECT_EQ(run({"measure", path("x.nii"), "--labels", "et=1,ed=1"}).code, 1);
    EXPECT_EQ(run({"measure", path("x.nii"), "--angle-tolerance", "60"}).code, 1);

    {
        std::ofstream f(path("junk.nii"), std::ios::binary);
        f << std::string(400, 'x');
    }
    EXPECT_EQ(run({"measure", path("junk.nii")}).code, 3);

    LabelVolume odd({4, 4, 1}, {});
    odd.labels[3] = 4;
    odd.semantics = {4, 2, 3};
    const auto seg = write_volume(odd, "label4.nii");
    EXPECT_EQ(run({"measure", seg}).code, 4);
    EXPECT_EQ(run({"measure", seg, "--labels", "et=4,ed=2,cavity=3"}).code, 0);
}

TEST(Cli, MeasureWritesCsvFile) {
    const auto seg = write_volume(disk_volume(10.0), "disk_csv.nii");
    const auto out = path("disk.csv");
    const auto r = run({"--format", "csv", "measure", seg, "--out", out, "--algorithm", "product"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = parse_csv(read_text(out));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], measurement_csv_header());
    EXPECT_EQ(rows[1][7], "product");
    // global flags are also accepted after the subcommand
    EXPECT_EQ(run({"measure", seg, "--format", "csv", "--threads", "2"}).code, 0);
}

TEST(Cli, ConfigFileFromEnvironmentAndOverride) {
    const auto seg = write_volume(disk_volume(10.0), "disk_cfg.nii");
    {
        std::ofstream f(path("cfg.json"));
        f << R"({"rano": {"min_diameter_mm": 25}, "algorithms": ["product"]})";
    }
    ::setenv(cli::kConfigEnv, path("cfg.json").c_str(), 1);
    auto r = run({"measure", seg});
    ASSERT_EQ(r.code, 0) << r.err;
    auto doc = Json::parse(r.out);
    ASSERT_EQ(doc["rano"].size(), 1u);
    EXPECT_EQ(doc["rano"][0]["sum_product_mm2"], 0.0);
    EXPECT_EQ(doc["run_config"]["rano"]["min_diameter_mm"], 25.0);

    r = run({"measure", seg, "--min-diameter", "10"});
    doc = Json::parse(r.out);
    EXPECT_GT(doc["rano"][0]["sum_product_mm2"].get<double>(), 300.0);

    {
        std::ofstream f(path("bad_cfg.json"));
        f << R"({"rano": {"min_diam": 25}})";
    }
    ::setenv(cli::kConfigEnv, path("bad_cfg.json").c_str(), 1);
    EXPECT_EQ(run({"measure", seg}).code, 3);
    ::unsetenv(cli::kConfigEnv);
}

TEST(Cli, EvaluateIdentityAndConventions) {
    auto v = disk_volume(6.0, 20);
    const auto seg = write_volume(v, "eval_a.nii");
    const auto r = run({"evaluate", "--pred", seg, "--gt", seg});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = Json::parse(r.out);
    for (const auto& c : {"et", "ed", "cavity"}) {
        EXPECT_EQ(doc["classes"][c]["dice"], 1.0);
        EXPECT_EQ(doc["classes"][c]["h95_mm"], 0.0);
    }
    EXPECT_EQ(doc["classes"]["cavity"]["flags"][0], "overlap_both_empty");

    // shifted disk: values equal the metric module
    auto w = disk_volume(6.0, 20);
    std::fill(w.labels.begin(), w.labels.end(), 0);
    for (std::size_t y = 0; y < 20; ++y)
        for (std::size_t x = 1; x < 20; ++x) w.at(x, y, 1) = v.at(x - 1, y, 1);
    const auto shifted = write_volume(w, "eval_b.nii");
    const auto r2 = run({"evaluate", "--pred", shifted, "--gt", seg, "--classes", "et"});
    ASSERT_EQ(r2.code, 0) << r2.err;
    const auto d2 = Json::parse(r2.out);
    const auto m = evaluate_class(class_mask(w, ClassName::ET), class_mask(v, ClassName::ET));
    EXPECT_EQ(d2["classes"]["et"]["dice"].get<double>(), round6(m.dice));
    EXPECT_EQ(d2["classes"]["et"]["h95_mm"].get<double>(), round6(m.h95_mm));
    EXPECT_EQ(d2["classes"].size(), 1u);

    const auto small = write_volume(LabelVolume({5, 5, 5}, {}), "eval_small.nii");
    EXPECT_EQ(run({"evaluate", "--pred", small, "--gt", seg}).code, 4);
}

TEST(Cli, AgreeOverRatingsCsv) {
    {
        std::ofstream f(path("ratings.csv"));
        f << "subject,auto,r1,r2\n"
             "a,10,11,10\n"
             "b,20,19,22\n"
             "c,35,30,33\n"
             "d,41,44,40\n";
    }
    const auto r = run({"agree", path("ratings.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = Json::parse(r.out);
    const RatingsMatrix m(4, 3, {10, 11, 10, 20, 19, 22, 35, 30, 33, 41, 44, 40});
    EXPECT_EQ(doc["icc"]["value"].get<double>(), round6(icc_2_1(m).icc));
    EXPECT_EQ(doc["spearman_rho"].get<double>(), round6(spearman(m.column(0), m.column(1))));
    EXPECT_EQ(doc["compared"], Json::array({"auto", "r1"}));

    const auto agg = Json::parse(run({"agree", path("ratings.csv"), "--stat", "bland_altman", "--columns", "auto",
                                      "--aggregate", "average"})
                                     .out);
    const auto ba = bland_altman(m.column(0), aggregate_ratings(m, AggregateMode::Average, {}, {1, 2}));
    EXPECT_EQ(agg["bland_altman"]["bias"].get<double>(), round6(ba.bias));
    EXPECT_FALSE(agg.contains("icc"));

    {
        std::ofstream f(path("holes.csv"));
        f << "subject,r1,r2\na,1,\nb,2,3\n";
    }
    EXPECT_EQ(run({"agree", path("holes.csv")}).code, 4);
    {
        std::ofstream f(path("text.csv"));
        f << "subject,r1,r2\na,1,high\nb,2,3\n";
    }
    EXPECT_EQ(run({"agree", path("text.csv")}).code, 3);
}

TEST(Cli, LossMatchesLibrary) {
    const Dims d{6, 5, 4};
    const Spacing sp{1, 1, 1};
    std::mt19937_64 rng(4);
    const auto gt = random_labels(rng, d, sp);
    std::uniform_real_distribution<float> U(0.0f, 1.0f);
    ProbabilityVolume pv;
    pv.dims = d;
    pv.spacing = sp;
    const char* names[3] = {"p_et.nii", "p_ed.nii", "p_cav.nii.gz"};
    for (int k = 0; k < 3; ++k) {
        pv.channels[k].resize(d.count());
        for (auto& x : pv.channels[k]) x = U(rng);
        nifti::write_float_volume(d, sp, pv.channels[k], path(names[k]));
    }
    const auto g = write_volume(gt, "loss_gt.nii");
    const auto r = run({"loss", "--prob-et", path(names[0]), "--prob-ed", path(names[1]), "--prob-cavity",
                        path(names[2]), "--gt", g, "--confidence", "et=1,cavity=4"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = Json::parse(r.out);
    ConfidenceLevels conf;
    conf[ClassName::ET] = 1;
    conf[ClassName::Cavity] = 4;
    const auto expect = confidence_weighted_loss(pv, gt, conf, false);
    EXPECT_EQ(doc["total"].get<double>(), round6(expect.total));
    EXPECT_EQ(doc["classes"]["et"]["alpha"], 0.5);
    EXPECT_TRUE(doc["classes"]["ed"]["confidence"].is_null());
    EXPECT_EQ(run({"loss", "--prob-et", path(names[0]), "--prob-ed", path(names[1]), "--prob-cavity",
                   path(names[2]), "--gt", g, "--confidence", "et=7"})
                  .code,
              1 + 3);
}

namespace {

void write_manifest(const std::string& name, const std::string& body) {
    std::ofstream f(path(name));
    f << body;
}

std::vector<std::map<std::string, std::string>> summary_records(const fs::path& p) {
    const auto rows = parse_csv(read_text(p));
    std::vector<std::map<std::string, std::string>> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::map<std::string, std::string> rec;
        for (std::size_t j = 0; j < rows[0].size(); ++j) rec[rows[0][j]] = rows[i][j];
        out.push_back(rec);
    }
    return out;
}

}  // namespace

TEST(Cli, BatchIsolatesFailures) {
    write_volume(disk_volume(8.0), "b1.nii");
    write_volume(disk_volume(11.0), "b2.nii");
    write_manifest("three.csv", "patient_id,seg_path\np1,b1.nii\np2,b2.nii\np3,nope.nii\n");
    const auto out = path("batch_three");
    const auto r = run({"batch", path("three.csv"), "--out", out});
    EXPECT_EQ(r.code, 5);
    EXPECT_TRUE(fs::exists(fs::path(out) / "p1.measure.json"));
    EXPECT_TRUE(fs::exists(fs::path(out) / "p2.measure.json"));
    EXPECT_FALSE(fs::exists(fs::path(out) / "p3.measure.json"));
    const auto recs = summary_records(fs::path(out) / "summary.csv");
    std::size_t failures = 0;
    for (const auto& rec : recs)
        if (rec.at("kind") == "failure") {
            ++failures;
            EXPECT_EQ(rec.at("patient_id"), "p3");
            EXPECT_NE(rec.at("error").find("nope.nii"), std::string::npos);
        }
    EXPECT_EQ(failures, 1u);
}

TEST(Cli, BatchEmptyManifest) {
    write_manifest("empty.csv", "patient_id,seg_path\n");
    const auto out = path("batch_empty");
    EXPECT_EQ(run({"batch", path("empty.csv"), "--out", out}).code, 0);
    EXPECT_EQ(parse_csv(read_text(fs::path(out) / "summary.csv")).size(), 1u);
    write_manifest("dup.csv", "patient_id,seg_path\na,x.nii\na,y.nii\n");
    EXPECT_EQ(run({"batch", path("dup.csv"), "--out", out}).code, 3);
    write_manifest("nocol.csv", "id,seg\n");
    EXPECT_EQ(run({"batch", path("nocol.csv"), "--out", out}).code, 3);
}

TEST(Cli, BatchSummaryMatchesPerRowReportsAndIsThreadIndependent) {
    std::string manifest = "patient_id,seg_path,gt_path\n";
    for (int i = 0; i < 6; ++i) {
        const auto v = disk_volume(5.0 + 1.5 * i);
        write_volume(v, "c" + std::to_string(i) + ".nii");
        write_volume(disk_volume(5.5 + 1.5 * i), "g" + std::to_string(i) + ".nii");
        manifest += "c" + std::to_string(i) + ",c" + std::to_string(i) + ".nii,g" + std::to_string(i) + ".nii\n";
    }
    write_manifest("cohort.csv", manifest);
    const auto out1 = fs::path(path("cohort_t1")), out3 = fs::path(path("cohort_t3"));
    ASSERT_EQ(run({"batch", path("cohort.csv"), "--out", out1.string(), "--threads", "1"}).code, 0);
    ASSERT_EQ(run({"batch", path("cohort.csv"), "--out", out3.string(), "--threads", "3"}).code, 0);
    EXPECT_EQ(read_text(out1 / "summary.csv"), read_text(out3 / "summary.csv"));
    for (int i = 0; i < 6; ++i) {
        const auto name = "c" + std::to_string(i) + ".measure.json";
        auto a = strip_timings(Json::parse(read_text(out1 / name)));
        auto b = strip_timings(Json::parse(read_text(out3 / name)));
        for (const char* k : {"threads", "out"}) a["run_config"].erase(k);
        for (const char* k : {"threads", "out"}) b["run_config"].erase(k);
        EXPECT_EQ(a, b);
    }

    // direct computation over the per-row reports
    std::vector<double> dice, sums;
    for (int i = 0; i < 6; ++i) {
        const auto e = Json::parse(read_text(out1 / ("c" + std::to_string(i) + ".evaluate.json")));
        dice.push_back(e["classes"]["et"]["dice"].get<double>());
        const auto m = Json::parse(read_text(out1 / ("c" + std::to_string(i) + ".measure.json")));
        sums.push_back(m["rano"][1]["sum_product_mm2"].get<double>());
    }
    std::sort(dice.begin(), dice.end());
    std::sort(sums.begin(), sums.end());
    bool saw_dice = false, saw_sum = false;
    for (const auto& rec : summary_records(out1 / "summary.csv")) {
        const std::vector<double>* vals = nullptr;
        if (rec.at("metric") == "dice" && rec.at("class") == "et") vals = &dice, saw_dice = true;
        if (rec.at("metric") == "rano_product_sum_mm2") vals = &sums, saw_sum = true;
        if (!vals) continue;
        EXPECT_EQ(rec.at("n"), "6");
        EXPECT_EQ(rec.at("median"), format_number(percentile_sorted(*vals, 0.5)));
        EXPECT_EQ(rec.at("q25"), format_number(percentile_sorted(*vals, 0.25)));
        EXPECT_EQ(rec.at("q75"), format_number(percentile_sorted(*vals, 0.75)));
        double mean = 0.0;
        for (double v : *vals) mean += v;
        EXPECT_EQ(rec.at("mean"), format_number(mean / 6.0));
    }
    EXPECT_TRUE(saw_dice);
    EXPECT_TRUE(saw_sum);
}
