#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "aeromap/preprocess.hpp"

using namespace aeromap;

namespace {

RawRecord rec(const std::string& sensor, double t_utc, double conc,
              Mobility mob = Mobility::Fixed, const std::string& run = "",
              double x = 0, double y = 0, int offset = 0) {
    RawRecord r;
    r.sensor_id = sensor;
    r.time = {t_utc, offset};
    r.x = x;
    r.y = y;
    r.concentration = conc;
    r.mobility = mob;
    r.run_id = run;
    return r;
}

} // namespace

TEST_CASE("trim_warmup drops the first five minutes of mobile runs", "[preprocess]") {
    std::vector<RawRecord> records;
    for (int i = 0; i <= 9; ++i)
        records.push_back(rec("m1", i * 60.0, 10.0, Mobility::Mobile, "run1"));
    auto out = trim_warmup(records, 300.0);
    REQUIRE(out.size() == 5);
    CHECK(out.front().time.utc_s == 300.0); // boundary record kept
    CHECK(out.back().time.utc_s == 540.0);

    // A run shorter than the warm-up vanishes entirely.
    std::vector<RawRecord> shortrun;
    for (int i = 0; i < 4; ++i)
        shortrun.push_back(rec("m1", i * 60.0, 10.0, Mobility::Mobile, "runX"));
    CHECK(trim_warmup(shortrun, 300.0).empty());

    // Fixed streams are untouched.
    std::vector<RawRecord> fixed;
    for (int i = 0; i < 4; ++i) fixed.push_back(rec("f1", i * 60.0, 10.0));
    CHECK(trim_warmup(fixed, 300.0).size() == 4);
}

TEST_CASE("running_median smooths spikes and keeps constants", "[preprocess]") {
    std::vector<RawRecord> constant;
    for (int i = 0; i < 30; ++i) constant.push_back(rec("s", i * 10.0, 7.5));
    auto out = running_median(constant, 15);
    for (const auto& r : out) CHECK(r.concentration == 7.5);

    std::vector<RawRecord> spiked;
    for (int i = 0; i < 21; ++i) spiked.push_back(rec("s", i * 10.0, 10.0));
    spiked[10].concentration = 1000.0;
    out = running_median(spiked, 15);
    for (const auto& r : out) CHECK(r.concentration == 10.0);

    CHECK_THROWS_AS(running_median(constant, 14), ContractViolation);

    // Random stream equals a brute-force windowed median.
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(1.0, 50.0);
    std::vector<RawRecord> noisy;
    for (int i = 0; i < 57; ++i) noisy.push_back(rec("s", i * 10.0, u(rng)));
    out = running_median(noisy, 7);
    for (std::size_t k = 0; k < noisy.size(); ++k) {
        int h = std::min<int>({3, int(k), int(noisy.size() - 1 - k)});
        std::vector<double> window;
        for (int j = -h; j <= h; ++j) window.push_back(noisy[k + j].concentration);
        std::sort(window.begin(), window.end());
        CHECK(out[k].concentration == window[window.size() / 2]);
    }
}

TEST_CASE("filter_schedule keeps Mon-Sat 04:00-19:00 local", "[preprocess]") {
    // 2018-11-25 was a Sunday, 2018-11-20 a Tuesday, 2018-11-24 a Saturday.
    auto at = [](const char* iso) { return parse_iso8601(iso); };
    std::vector<RawRecord> records;
    RawRecord sunday = rec("s", 0, 1);
    sunday.time = at("2018-11-25T12:00:00+01:00");
    RawRecord early = rec("s", 0, 1);
    early.time = at("2018-11-20T03:59:59+01:00");
    RawRecord boundary = rec("s", 0, 1);
    boundary.time = at("2018-11-20T04:00:00+01:00");
    RawRecord evening = rec("s", 0, 1);
    evening.time = at("2018-11-20T19:00:00+01:00");
    RawRecord saturday = rec("s", 0, 1);
    saturday.time = at("2018-11-24T12:00:00+01:00");
    records = {sunday, early, boundary, evening, saturday};
    auto out = filter_schedule(records);
    REQUIRE(out.size() == 2);
    CHECK(out[0].time.utc_s == boundary.time.utc_s);
    CHECK(out[1].time.utc_s == saturday.time.utc_s);
}

TEST_CASE("dedup_colocated keeps the busiest sensor of each cluster", "[preprocess]") {
    std::vector<RawRecord> records;
    for (int i = 0; i < 5; ++i) records.push_back(rec("a", i, 1, Mobility::Fixed, "", 0, 0));
    for (int i = 0; i < 8; ++i) records.push_back(rec("b", i, 1, Mobility::Fixed, "", 5, 5));
    for (int i = 0; i < 3; ++i) records.push_back(rec("c", i, 1, Mobility::Fixed, "", 8, 2));
    for (int i = 0; i < 4; ++i) records.push_back(rec("far", i, 1, Mobility::Fixed, "", 5000, 0));
    auto out = dedup_colocated(records, 50.0);
    std::set<std::string> kept;
    for (const auto& r : out) kept.insert(r.sensor_id);
    CHECK(kept == std::set<std::string>{"b", "far"});

    // Tie in record count: lowest id wins.
    std::vector<RawRecord> tie;
    for (int i = 0; i < 4; ++i) tie.push_back(rec("z2", i, 1, Mobility::Fixed, "", 0, 0));
    for (int i = 0; i < 4; ++i) tie.push_back(rec("z1", i, 1, Mobility::Fixed, "", 1, 1));
    out = dedup_colocated(tie, 50.0);
    for (const auto& r : out) CHECK(r.sensor_id == "z1");

    // Mobile records pass through regardless of proximity.
    std::vector<RawRecord> mixed = tie;
    mixed.push_back(rec("mob", 0, 1, Mobility::Mobile, "r", 0, 0));
    out = dedup_colocated(mixed, 50.0);
    bool has_mobile = false;
    for (const auto& r : out) has_mobile |= r.mobility == Mobility::Mobile;
    CHECK(has_mobile);
}

TEST_CASE("log_transform floors zeros", "[preprocess]") {
    std::vector<RawRecord> records{rec("s", 0, std::exp(1.0)), rec("s", 1, 0.0)};
    auto obs = log_transform(records, 0.1);
    CHECK(obs[0].value == Catch::Approx(1.0));
    CHECK(obs[1].value == Catch::Approx(std::log(0.1)));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 80.0);
    std::vector<RawRecord> randoms;
    for (int i = 0; i < 40; ++i) randoms.push_back(rec("s", i, u(rng)));
    obs = log_transform(randoms, 0.1);
    for (std::size_t i = 0; i < randoms.size(); ++i)
        CHECK(obs[i].value == std::log(randoms[i].concentration));
}

TEST_CASE("pipeline filtering steps are idempotent", "[preprocess]") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(1.0, 30.0);
    std::vector<RawRecord> records;
    double base = parse_iso8601("2018-11-20T05:00:00+01:00").utc_s;
    for (int i = 0; i < 400; ++i)
        records.push_back(rec("m1", base + i, u(rng), Mobility::Mobile, "r1"));
    for (int i = 0; i < 50; ++i)
        records.push_back(rec("f1", base + i * 60.0, u(rng), Mobility::Fixed));
    for (auto& r : records) r.time.offset_s = 3600;

    auto once_sched = filter_schedule(records);
    CHECK(filter_schedule(once_sched).size() == once_sched.size());
    auto once_dedup = dedup_colocated(records);
    CHECK(dedup_colocated(once_dedup).size() == once_dedup.size());

    std::vector<StageCount> counts;
    auto obs = run_pipeline(records, PipelineParams{}, &counts);
    CHECK(obs.size() <= records.size());
    REQUIRE(!counts.empty());
    CHECK(counts.front().stage == "input");
    for (std::size_t i = 1; i < counts.size(); ++i)
        CHECK(counts[i].count <= counts[i - 1].count);

    // Same input, same output.
    auto obs2 = run_pipeline(records, PipelineParams{});
    REQUIRE(obs2.size() == obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        CHECK(obs2[i].value == obs[i].value);
        CHECK(obs2[i].point.t == obs[i].point.t);
    }
}

TEST_CASE("align_covariates interpolates per covariate kind", "[preprocess]") {
    double t0 = parse_iso8601("2018-11-20T12:00:00Z").utc_s;
    std::vector<std::unique_ptr<CovariateSource>> sources;
    sources.push_back(std::make_unique<TemporalSeriesSource>(
        "temperature", std::vector<double>{t0, t0 + 3600.0}, std::vector<double>{10.0, 12.0}));

    EsriGrid grid;
    grid.ncols = 2;
    grid.nrows = 2;
    grid.xllcorner = 0;
    grid.yllcorner = 0;
    grid.cellsize = 100;
    grid.values = {1, 2, 3, 4}; // top row first
    sources.push_back(std::make_unique<RasterSource>("elevation", grid));

    CovariateSchema schema{{"temperature", "elevation"},
                           {CovariateKind::Temporal, CovariateKind::Spatial}};

    std::vector<Observation> obs;
    obs.push_back({{50, 50, t0 + 1800.0}, 0.0, "a"});   // midpoint in time, bottom-left cell
    obs.push_back({{50, 50, t0}, 0.0, "a"});            // same place, different time
    obs.push_back({{150, 150, t0 + 1800.0}, 0.0, "b"}); // same time, different place

    Dataset ds = align_covariates(obs, sources, schema);
    CHECK(ds.covariates[0].values[0] == Catch::Approx(11.0)); // linear midpoint
    CHECK(ds.covariates[0].values[1] == 3.0);                 // bottom-left
    // Spatial covariate identical across times at one location.
    CHECK(ds.covariates[0].values[1] == ds.covariates[1].values[1]);
    // Temporal covariate identical across locations at one time.
    CHECK(ds.covariates[0].values[0] == ds.covariates[2].values[0]);

    // Out of coverage names the offending source.
    std::vector<Observation> outside{{{50, 50, t0 - 9999.0}, 0.0, "a"}};
    try {
        align_covariates(outside, sources, schema);
        FAIL("expected OutOfCoverage");
    } catch (const OutOfCoverage& e) {
        CHECK(std::string(e.what()).find("temperature") != std::string::npos);
    }
}

TEST_CASE("dataset csv round trip", "[preprocess]") {
    Dataset ds;
    ds.schema = {{"c1", "c2"}, {CovariateKind::Spatial, CovariateKind::Temporal}};
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0, 1);
    double base = parse_iso8601("2018-11-21T08:00:00+01:00").utc_s;
    for (int i = 0; i < 25; ++i) {
        Observation o;
        o.point = {g(rng) * 1000, g(rng) * 1000, base + i * 37.0};
        o.value = g(rng);
        o.sensor_id = "s" + std::to_string(i % 4);
        o.mobility = i % 2 ? Mobility::Mobile : Mobility::Fixed;
        o.station_class = i % 5 ? StationClass::LowCost : StationClass::Reference;
        ds.observations.push_back(o);
        ds.covariates.push_back({{g(rng), g(rng)}});
    }
    DatasetFile file{ds, std::vector<int>(25, 3600)};
    auto path = std::filesystem::temp_directory_path() / "aeromap_ds_test.csv";
    write_dataset_csv(path.string(), file);
    DatasetFile back = read_dataset_csv(path.string(), &ds.schema);
    REQUIRE(back.data.size() == ds.size());
    CHECK(back.dominant_offset() == 3600);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.data.observations[i].point.x == ds.observations[i].point.x);
        CHECK(back.data.observations[i].point.t == ds.observations[i].point.t);
        CHECK(back.data.observations[i].value == ds.observations[i].value);
        CHECK(back.data.covariates[i].values == ds.covariates[i].values);
        CHECK(back.data.observations[i].mobility == ds.observations[i].mobility);
    }
    std::filesystem::remove(path);
}

TEST_CASE("esri grid io and geojson proximity", "[preprocess]") {
    EsriGrid g;
    g.ncols = 3;
    g.nrows = 2;
    g.xllcorner = 10;
    g.yllcorner = 20;
    g.cellsize = 50;
    g.values = {1.5, 2.25, 3.125, 4, 5, 6.0625};
    auto path = std::filesystem::temp_directory_path() / "aeromap_grid_test.asc";
    g.write(path.string());
    EsriGrid back = EsriGrid::read(path.string());
    CHECK(back.ncols == 3);
    CHECK(back.values == g.values);
    CHECK(back.sample_nearest(11, 21) == 4.0); // bottom-left cell
    std::filesystem::remove(path);

    LocalProjection proj{47.2, -1.55};
    auto [lat, lon] = proj.to_latlon(1234.5, -987.0);
    XY xy = proj.to_xy(lat, lon);
    CHECK(xy.x == Catch::Approx(1234.5).margin(1e-6));
    CHECK(xy.y == Catch::Approx(-987.0).margin(1e-6));

    GeoFeature line;
    line.type = GeoFeature::Type::LineString;
    line.klass = "motorway";
    line.pts = {{0, 0}, {100, 0}};
    FeatureSet set{"motorway", {line}};
    CHECK(set.distance_to({50, 30}) == Catch::Approx(30.0));
    CHECK(set.distance_to({150, 0}) == Catch::Approx(50.0));
}
