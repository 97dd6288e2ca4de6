#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "aeromap/civil_time.hpp"
#include "aeromap/core.hpp"

using namespace aeromap;

namespace {

// Independent single-purpose re-implementations of the four indicators,
// kept deliberately naive. The library must agree with these.
double oracle_rmse(const std::vector<double>& p, const std::vector<double>& a) {
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += (p[i] - a[i]) * (p[i] - a[i]);
    return std::sqrt(s / double(p.size()));
}
double oracle_bias(const std::vector<double>& p, const std::vector<double>& a) {
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += p[i] - a[i];
    return s / double(p.size());
}
double oracle_corr(const std::vector<double>& p, const std::vector<double>& a) {
    double mp = 0, ma = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        mp += p[i];
        ma += a[i];
    }
    mp /= double(p.size());
    ma /= double(a.size());
    double num = 0, dp = 0, da = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        num += (p[i] - mp) * (a[i] - ma);
        dp += (p[i] - mp) * (p[i] - mp);
        da += (a[i] - ma) * (a[i] - ma);
    }
    return num / std::sqrt(dp * da);
}
double oracle_mae(const std::vector<double>& p, const std::vector<double>& a) {
    double m = 0;
    for (size_t i = 0; i < p.size(); ++i) m = std::max(m, std::abs(p[i] - a[i]));
    return m;
}

} // namespace

TEST_CASE("rmse basics", "[core]") {
    CHECK(rmse(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
    CHECK(rmse(std::vector<double>{2, 4}, std::vector<double>{1, 3}) == 1.0);
    CHECK_THROWS_AS(rmse(std::vector<double>{1}, std::vector<double>{1, 2}),
                    ContractViolation);
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}),
                    ContractViolation);
}

TEST_CASE("bias basics", "[core]") {
    CHECK(bias(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
    CHECK(bias(std::vector<double>{3, 5}, std::vector<double>{1, 3}) == 2.0);
}

TEST_CASE("corr basics", "[core]") {
    std::vector<double> a{1, 2, 3, 5};
    std::vector<double> neg{-1, -2, -3, -5};
    CHECK(*corr(a, a) == Catch::Approx(1.0).margin(1e-15));
    CHECK(*corr(neg, a) == Catch::Approx(-1.0).margin(1e-15));
    std::vector<double> flat{2, 2, 2, 2};
    CHECK_FALSE(corr(flat, a).has_value());
    CHECK_FALSE(corr(a, flat).has_value());
    CHECK_THROWS_AS(corr(std::vector<double>{1}, std::vector<double>{2}),
                    ContractViolation);
}

TEST_CASE("mae_max basics", "[core]") {
    CHECK(mae_max(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
    CHECK(mae_max(std::vector<double>{0, 10}, std::vector<double>{1, 3}) == 7.0);
}

TEST_CASE("metrics match naive oracles on random input", "[core]") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> dist(0.0, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
        size_t n = 2 + rng() % 60;
        std::vector<double> p(n), a(n);
        for (size_t i = 0; i < n; ++i) {
            p[i] = dist(rng);
            a[i] = dist(rng);
        }
        CHECK(rmse(p, a) == Catch::Approx(oracle_rmse(p, a)).margin(1e-12));
        CHECK(bias(p, a) == Catch::Approx(oracle_bias(p, a)).margin(1e-12));
        CHECK(*corr(p, a) == Catch::Approx(oracle_corr(p, a)).margin(1e-12));
        CHECK(mae_max(p, a) == oracle_mae(p, a));
    }
}

TEST_CASE("metric ordering invariants", "[core]") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> dist(0.5, 1.5);
    for (int rep = 0; rep < 200; ++rep) {
        size_t n = 1 + rng() % 40;
        std::vector<double> p(n), a(n);
        for (size_t i = 0; i < n; ++i) {
            p[i] = dist(rng);
            a[i] = dist(rng);
        }
        double r = rmse(p, a), b = bias(p, a), m = mae_max(p, a);
        CHECK(m >= r - 1e-12);
        CHECK(r >= std::abs(b) - 1e-12);
    }
}

TEST_CASE("st_distance", "[core]") {
    SpatioTemporalPoint a{10, 20, 100};
    CHECK(st_distance(a, a, 3.5) == 0.0);
    SpatioTemporalPoint b{13, 24, 100};
    CHECK(st_distance(a, b, 123.0) == Catch::Approx(5.0));
    SpatioTemporalPoint c{10, 20, 102};
    CHECK(st_distance(a, c, 9.0) == Catch::Approx(6.0));
    CHECK_THROWS_AS(st_distance(a, b, -1.0), ContractViolation);

    // Symmetry and identity on random points.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-100, 100);
    for (int rep = 0; rep < 100; ++rep) {
        SpatioTemporalPoint p{u(rng), u(rng), u(rng)};
        SpatioTemporalPoint q{u(rng), u(rng), u(rng)};
        double cfac = std::abs(u(rng)) + 0.1;
        CHECK(st_distance(p, q, cfac) == st_distance(q, p, cfac));
        if (st_distance(p, q, cfac) == 0.0) {
            CHECK(p.x == q.x);
            CHECK(p.y == q.y);
            CHECK(p.t == q.t);
        }
    }
}

TEST_CASE("iso8601 round trip and weekday", "[core]") {
    Timestamp ts = parse_iso8601("2018-11-20T04:00:00+01:00");
    CHECK(ts.offset_s == 3600);
    CHECK(ts.local_seconds_of_day() == Catch::Approx(4 * 3600.0));
    CHECK(ts.local_weekday() == 2); // Tuesday
    CHECK(format_iso8601(ts) == "2018-11-20T04:00:00+01:00");

    Timestamp utc = parse_iso8601("1970-01-01T00:00:00Z");
    CHECK(utc.utc_s == 0.0);
    CHECK(utc.local_weekday() == 4); // Thursday

    Timestamp sun = parse_iso8601("2018-11-25T12:30:00+01:00");
    CHECK(sun.local_weekday() == 7);

    Timestamp frac = parse_iso8601("2018-11-20T12:00:00.250Z");
    CHECK(frac.utc_s == Catch::Approx(parse_iso8601("2018-11-20T12:00:00Z").utc_s + 0.25));
    CHECK(format_iso8601(frac) == "2018-11-20T12:00:00.250Z");

    CHECK_THROWS_AS(parse_iso8601("not a time"), ContractViolation);
    CHECK_THROWS_AS(parse_iso8601("2018-13-01T00:00:00Z"), ContractViolation);
}

TEST_CASE("civil date conversions", "[core]") {
    CHECK(days_from_civil({1970, 1, 1}) == 0);
    CHECK(days_from_civil({2018, 11, 20}) == 17855);
    CHECK(civil_from_days(17855) == CivilDate{2018, 11, 20});
    for (std::int64_t z = -1000; z < 30000; z += 97)
        CHECK(days_from_civil(civil_from_days(z)) == z);
    CHECK(parse_date("2018-11-26") == CivilDate{2018, 11, 26});
    CHECK(format_date({2018, 11, 26}) == "2018-11-26");
}

TEST_CASE("schema and dataset validation", "[core]") {
    CovariateSchema schema{{"a", "b"},
                           {CovariateKind::Temporal, CovariateKind::Spatial}};
    schema.validate();
    CHECK(schema.index_of("b") == 1);
    CHECK_FALSE(schema.index_of("zz").has_value());

    CovariateSchema dup{{"a", "a"},
                        {CovariateKind::Temporal, CovariateKind::Spatial}};
    CHECK_THROWS_AS(dup.validate(), ContractViolation);

    Dataset ds;
    ds.schema = schema;
    ds.observations.push_back({{0, 0, 0}, 1.0, "s1"});
    ds.covariates.push_back({{1.0, 2.0}});
    ds.validate();
    ds.covariates[0].values.pop_back();
    CHECK_THROWS_AS(ds.validate(), ContractViolation);
}
