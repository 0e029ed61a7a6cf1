#include <gtest/gtest.h>

#include <random>

#include "kub/pipeline.hpp"

using namespace kub;

namespace {

fs::path scratch(const std::string& name) {
    static const auto root = fs::temp_directory_path() / ("kub-test-" + std::to_string(::getpid()));
    const auto p = root / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig grid_config(const fs::path& dir, int nx, int ny, std::size_t hours = 6) {
    SyntheticInputs in;
    in.kind = "grid";
    in.nx = nx;
    in.ny = ny;
    in.hours = hours;
    in.workers = 1;
    auto cfg = load_config(write_synthetic_inputs(dir, in));
    cfg.out = dir / "out";
    return cfg;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    return out;
}

struct QuietLog : ::testing::Test {
    void SetUp() override {
        saved = log_sink();
        log_sink() = [](const std::string&) {};
    }
    void TearDown() override { log_sink() = saved; }
    std::function<void(const std::string&)> saved;
};

} // namespace

TEST(Config, ParsesKeysSectionsAndComments) {
    const auto c = parse_config("# inputs\n"
                                "footprints = \"fp.geojson\"  # quoted\n"
                                "weather = w.csv\n"
                                "workers = 3\n"
                                "lod = 0\n"
                                "region = 7.7,48.5,7.8,48.6\n"
                                "union_touching = false\n",
                                "/base");
    EXPECT_EQ(c.footprints, fs::path("/base/fp.geojson"));
    EXPECT_EQ(c.weather, fs::path("/base/w.csv"));
    EXPECT_EQ(c.workers, 3u);
    EXPECT_EQ(c.lod, 0);
    ASSERT_TRUE(c.region);
    EXPECT_DOUBLE_EQ(c.region->max_lat, 48.6);
    EXPECT_FALSE(c.union_touching);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_config("nonsense = 1\n"), config_error);
    EXPECT_THROW(parse_config("workers = 0\n"), config_error);
    EXPECT_THROW(parse_config("workers = many\n"), config_error);
    EXPECT_THROW(parse_config("lod = 2\n"), config_error);
    EXPECT_THROW(parse_config("region = 1,2,3\n"), config_error);
    EXPECT_THROW(parse_config("[sim\n"), config_error);
    EXPECT_THROW(parse_config("just text\n"), config_error);
    try {
        parse_config("\n\nzoom = 40\n");
        FAIL();
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    EXPECT_THROW(RunConfig{}.validate(), config_error);
    EXPECT_THROW(load_config("/definitely/not/here.toml"), config_error);
}

TEST_F(QuietLog, MissingInputIsConfigError) {
    RunConfig c;
    c.footprints = "/nope/fp.geojson";
    c.weather = "/nope/w.csv";
    EXPECT_THROW(run_pipeline(c), config_error);
}

TEST_F(QuietLog, SingleBuildingSmoke) {
    const auto dir = scratch("smoke");
    const auto cfg = grid_config(dir, 1, 1);
    const auto r = run_pipeline(cfg);
    EXPECT_EQ(r.building_count, 1u);
    EXPECT_TRUE(fs::exists(cfg.out / "summary.json"));
    EXPECT_TRUE(fs::exists(cfg.out / "buildings" / "b0000.csv"));
    EXPECT_EQ(r.file_count, 2u);
    EXPECT_GT(r.timings.pre_s, 0);
    EXPECT_GT(r.timings.sim_s, 0);
    EXPECT_GT(r.timings.post_s, 0);
    EXPECT_GT(r.timings.wall_s, 0);
    EXPECT_LE(r.timings.pre_s + r.timings.sim_s + r.timings.post_s, r.timings.wall_s * 1.05);
    EXPECT_GT(r.total_heating_kwh, 0);
    std::size_t bytes = 0;
    for (const auto& f : r.files) bytes += fs::file_size(f);
    EXPECT_EQ(bytes, r.output_bytes);
}

TEST_F(QuietLog, SummaryIdenticalAcrossRunsAndWorkers) {
    const auto dir = scratch("determinism");
    auto cfg = grid_config(dir, 3, 3);
    std::vector<std::map<std::string, std::string>> trees;
    for (unsigned w : {1u, 1u, 2u, 5u}) {
        cfg.workers = w;
        cfg.out = dir / ("out-" + std::to_string(trees.size()));
        run_pipeline(cfg);
        trees.push_back(read_tree(cfg.out));
    }
    ASSERT_EQ(trees[0].size(), 10u);
    for (std::size_t k = 1; k < trees.size(); ++k) EXPECT_EQ(trees[k], trees[0]) << k;
}

TEST_F(QuietLog, AggregateOutputWritesOneFile) {
    const auto dir = scratch("aggregate");
    auto cfg = grid_config(dir, 2, 2);
    cfg.aggregate_output = true;
    const auto r = run_pipeline(cfg);
    EXPECT_EQ(r.file_count, 2u);
    EXPECT_FALSE(fs::exists(cfg.out / "buildings"));
    const auto text = read_file(cfg.out / "buildings.csv");
    EXPECT_EQ(text.rfind("id,time,t_in,q_heat\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 4 * 6);
}

TEST_F(QuietLog, Case1RunsWithCoupling) {
    const auto dir = scratch("case1");
    auto cfg = grid_config(dir, 2, 1, 3);
    cfg.partition_case = 1;
    cfg.vf_rays = 2000;
    const auto r = run_pipeline(cfg);
    EXPECT_EQ(r.building_count, 2u);
    EXPECT_GT(r.total_heating_kwh, 0);
}

TEST_F(QuietLog, PartialOutputsRemovedOnError) {
    const auto dir = scratch("partial");
    auto cfg = grid_config(dir, 2, 1);
    fs::create_directories(cfg.out / "buildings" / "b0001.csv"); // a directory where a file must go
    try {
        run_pipeline(cfg);
        FAIL();
    } catch (const io_error& e) {
        EXPECT_EQ(std::string(e.what()).rfind("[post]", 0), 0u) << e.what();
    }
    EXPECT_FALSE(fs::exists(cfg.out / "buildings" / "b0000.csv"));
    EXPECT_FALSE(fs::exists(cfg.out / "summary.json"));
    EXPECT_TRUE(fs::exists(cfg.out / "buildings")); // pre-existing directories stay
}

TEST_F(QuietLog, PreStageErrorsAreTagged) {
    const auto dir = scratch("tagged");
    auto cfg = grid_config(dir, 1, 1);
    write_file(cfg.footprints, "{\"type\": \"FeatureCollection\", \"features\": [\n");
    try {
        run_pipeline(cfg);
        FAIL();
    } catch (const parse_error& e) {
        EXPECT_EQ(std::string(e.what()).rfind("[pre]", 0), 0u) << e.what();
    }
    EXPECT_FALSE(fs::exists(cfg.out));
}

TEST_F(QuietLog, BenchSingleCountHasUnitSpeedups) {
    const auto dir = scratch("bench1");
    const auto cfg = grid_config(dir, 2, 2);
    const auto rep = bench_scaling(cfg, {1});
    ASSERT_EQ(rep.runs.size(), 1u);
    EXPECT_TRUE(rep.complete);
    const auto s = rep.speedups(rep.runs[0]);
    EXPECT_EQ(s.pre, 1.0);
    EXPECT_EQ(s.sim, 1.0);
    EXPECT_EQ(s.post, 1.0);
    EXPECT_EQ(s.end_to_end, 1.0);
    EXPECT_THROW(bench_scaling(cfg, {2, 4}), config_error);
}

TEST_F(QuietLog, BenchFractionsAndFailedRuns) {
    const auto dir = scratch("bench2");
    auto cfg = grid_config(dir, 2, 2);
    const auto rep = bench_scaling(cfg, {1, 2, 3});
    for (const auto& r : rep.runs) {
        ASSERT_TRUE(r.ok) << r.error;
        const auto f = BenchReport::fractions(r);
        EXPECT_NEAR(f.pre + f.sim + f.post, 1.0, 0.02);
    }
    // A run that cannot write its outputs marks the report incomplete.
    write_file(dir / "blocker", "x");
    cfg.out = dir / "blocker";
    const auto bad = bench_scaling(cfg, {1, 2});
    EXPECT_FALSE(bad.complete);
    EXPECT_EQ(bad.runs.size(), 2u);
    EXPECT_FALSE(bad.runs[0].ok);
    EXPECT_FALSE(bad.runs[0].error.empty());
}

namespace {

BenchReport sample_report() {
    BenchReport rep;
    rep.machine = {"host", "cpu, model", 4, 8, "g++ 11"};
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.001, 3.0);
    for (unsigned w : {1u, 2u, 4u, 8u}) {
        BenchRun r;
        r.workers = w;
        r.timings = {u(gen), u(gen), u(gen), 0};
        r.timings.wall_s = r.timings.pre_s + r.timings.sim_s + r.timings.post_s + 0.001;
        r.building_count = 100;
        r.output_bytes = 123456 + w;
        r.file_count = 101;
        rep.runs.push_back(r);
    }
    rep.runs.push_back({16, false, "boom", {}, 0, 0, 0});
    rep.complete = false;
    return rep;
}

} // namespace

TEST(Report, EmptySweepIsValid) {
    BenchReport rep;
    for (auto f : {ReportFormat::json, ReportFormat::csv}) {
        const auto text = emit_report(rep, f);
        const auto back = read_report(text, f);
        EXPECT_EQ(back.runs.size(), 0u);
        EXPECT_EQ(back.schema_version, report_schema_version);
    }
    const auto j = nlohmann::json::parse(report_to_json(rep));
    EXPECT_TRUE(j["runs"].empty());
}

TEST(Report, JsonCsvJsonRoundTrip) {
    const auto rep = sample_report();
    const auto json1 = report_to_json(rep);
    const auto mid = report_from_csv(report_to_csv(report_from_json(json1)));
    EXPECT_EQ(report_to_json(mid), json1);
    ASSERT_EQ(mid.runs.size(), rep.runs.size());
    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
        EXPECT_EQ(mid.runs[i].timings.pre_s, rep.runs[i].timings.pre_s);
        EXPECT_EQ(mid.runs[i].timings.wall_s, rep.runs[i].timings.wall_s);
        EXPECT_EQ(mid.runs[i].output_bytes, rep.runs[i].output_bytes);
        EXPECT_EQ(mid.runs[i].error, rep.runs[i].error);
    }
    EXPECT_EQ(mid.machine.cpu_model, "cpu, model");
}

TEST(Report, JsonFieldOrderIsStable) {
    const auto text = report_to_json(sample_report());
    const auto a = text.find("\"schema_version\""), b = text.find("\"complete\""), c = text.find("\"machine\""),
               d = text.find("\"runs\"");
    EXPECT_LT(a, b);
    EXPECT_LT(b, c);
    EXPECT_LT(c, d);
}

TEST(Report, SpeedupsRecomputableFromCsv) {
    const auto csv = report_to_csv(sample_report());
    std::map<std::pair<std::string, std::string>, double> secs, speed;
    for (auto line : fmt::split(csv, '\n')) {
        if (line.empty() || line[0] == '#' || line.rfind("run,", 0) == 0) continue;
        const auto f = fmt::split(line, ',');
        ASSERT_EQ(f.size(), 9u);
        if (f[2] != "1") continue;
        secs[{std::string(f[1]), std::string(f[6])}] = fmt::to_double(f[7], "s");
        speed[{std::string(f[1]), std::string(f[6])}] = fmt::to_double(f[8], "x");
    }
    EXPECT_EQ(secs.size(), 16u);
    for (const auto& [key, s] : secs) {
        const double base = secs[{"1", key.second}];
        EXPECT_NEAR(speed[key], base / s, 1e-12) << key.first;
    }
}

TEST(Report, Errors) {
    EXPECT_THROW(report_from_json("{"), parse_error);
    EXPECT_THROW(report_from_json("{\"schema_version\": 99}"), parse_error);
    EXPECT_THROW(report_from_csv("run,workers\n"), parse_error);
    const auto dir = scratch("report-errors");
    write_file(dir / "file", "x");
    EXPECT_THROW(emit_report(BenchReport{}, ReportFormat::json, dir / "file" / "r.json"), io_error);
}
