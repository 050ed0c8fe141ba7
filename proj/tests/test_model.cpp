#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <sstream>

#include "aput/model.hpp"
#include "test_instances.hpp"

using namespace aput;
using Catch::Approx;

TEST_CASE("kl divergence basics") {
    const std::vector<double> p{0.75, 0.25}, q{0.5, 0.5};
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(q, q) == 0.0);
    // two-term sum evaluated independently: 0.75 ln 1.5 + 0.25 ln 0.5
    CHECK(kl_divergence(p, q) == Approx(0.13081203594113697).margin(1e-15));

    const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
    CHECK(std::isinf(kl_divergence(a, b)));

    const std::vector<double> bad{1.0};
    CHECK_THROWS_AS(kl_divergence(p, bad), UsageError);
}

TEST_CASE("kl divergence is nonnegative, zero iff equal") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = testing::random_dist(rng, 2 + rng.uniform_int(5));
        const auto q = testing::random_dist(rng, static_cast<int>(p.size()));
        const double kl = kl_divergence(p, q);
        CHECK(kl >= 0.0);
        double l1 = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p[i] - q[i]);
        if (kl <= 1e-12) CHECK(l1 < 1e-5);
        CHECK(kl_divergence(p, p) <= 1e-12);
    }
}

TEST_CASE("hypothesis space validation") {
    CHECK_THROWS_AS(HypothesisSpace(1, 3), ConfigError);
    CHECK_THROWS_AS(HypothesisSpace(3, 1), ConfigError);
    CHECK_THROWS_AS(HypothesisSpace(2, 2, {"a"}), ConfigError);
    CHECK_NOTHROW(HypothesisSpace(2, 2, {"a", "b"}, {"x", "y"}));
}

TEST_CASE("observation model validates rows") {
    // row not summing to one
    std::vector<double> bad{0.5, 0.4, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
                            0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(ObservationModel(HypothesisSpace(2, 2), 2, 2, bad), ConfigError);
    std::vector<double> negative{1.2, -0.2, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(ObservationModel(HypothesisSpace(2, 2), 1, 2, negative), ConfigError);
}

TEST_CASE("synthetic model: degenerate sigma matches the documented row formula") {
    const int n_obs = 20, n_secret = 3, n_useful = 3;
    const double sigma = 0.8;
    const auto model = build_synthetic(3, 3, n_secret, n_useful, n_obs, sigma, sigma);

    // Independent recomputation: action a discloses s* = N-1-(a mod N);
    // disclosed cells get mean u+1, others mean 0; densities at bin centers
    // x(z) = z*(M+1)/n_obs, normalized.
    for (int a = 0; a < 3; ++a) {
        const int disclosed = n_secret - 1 - (a % n_secret);
        for (int s = 0; s < n_secret; ++s)
            for (int u = 0; u < n_useful; ++u) {
                const double mu = (s == disclosed) ? u + 1.0 : 0.0;
                std::vector<double> expect(n_obs);
                double sum = 0.0;
                for (int z = 0; z < n_obs; ++z) {
                    const double x = z * (n_useful + 1.0) / n_obs;
                    expect[z] = std::exp(-0.5 * (x - mu) * (x - mu) / (sigma * sigma));
                    sum += expect[z];
                }
                for (int z = 0; z < n_obs; ++z)
                    CHECK(model.prob(a, s, u, z) == Approx(expect[z] / sum).margin(1e-14));
            }
    }
}

TEST_CASE("synthetic model: paper-sized instance") {
    // |A|=3 release mechanisms (stop excluded), 3x3 hypotheses, 50 bins.
    const auto model = build_synthetic(7, 3, 3, 3, 50, 0.5, 1.5);
    // The mean-3 cell of action 0 (which discloses s=2) peaks near 3*(50/4).
    const auto row = model.row(0, 2, 2);
    int argmax = 0;
    for (int z = 1; z < 50; ++z)
        if (row[z] > row[argmax]) argmax = z;
    CHECK(argmax >= 36);
    CHECK(argmax <= 39);
    // Undisclosed secrets keep mean 0 under action 0.
    const auto row0 = model.row(0, 0, 2);
    int argmax0 = 0;
    for (int z = 1; z < 50; ++z)
        if (row0[z] > row0[argmax0]) argmax0 = z;
    CHECK(argmax0 == 0);

    CHECK(check_identifiability(model).ok);
}

TEST_CASE("synthetic model is bit-reproducible and seed-sensitive") {
    const auto m1 = build_synthetic(42, 3, 3, 3, 25, 0.5, 1.5);
    const auto m2 = build_synthetic(42, 3, 3, 3, 25, 0.5, 1.5);
    REQUIRE(m1.raw().size() == m2.raw().size());
    CHECK(std::memcmp(m1.raw().data(), m2.raw().data(),
                      m1.raw().size() * sizeof(double)) == 0);
    const auto m3 = build_synthetic(43, 3, 3, 3, 25, 0.5, 1.5);
    CHECK(std::memcmp(m1.raw().data(), m3.raw().data(),
                      m1.raw().size() * sizeof(double)) != 0);
}

TEST_CASE("synthetic model rejects bad parameters") {
    CHECK_THROWS_AS(build_synthetic(1, 0, 3, 3, 10, 0.5, 1.5), ConfigError);
    CHECK_THROWS_AS(build_synthetic(1, 3, 1, 3, 10, 0.5, 1.5), ConfigError);
    CHECK_THROWS_AS(build_synthetic(1, 3, 3, 3, 1, 0.5, 1.5), ConfigError);
    CHECK_THROWS_AS(build_synthetic(1, 3, 3, 3, 10, 0.0, 1.5), ConfigError);
    CHECK_THROWS_AS(build_synthetic(1, 3, 3, 3, 10, 1.5, 0.5), ConfigError);
}

TEST_CASE("identifiability: u-independent model fails with the pair named") {
    // q does not depend on u at all
    std::vector<double> probs;
    for (int a = 0; a < 2; ++a)
        for (int s = 0; s < 2; ++s)
            for (int u = 0; u < 2; ++u) {
                probs.push_back(s == 0 ? 0.7 : 0.3);
                probs.push_back(s == 0 ? 0.3 : 0.7);
            }
    const ObservationModel model(HypothesisSpace(2, 2), 2, 2, std::move(probs));
    const auto rep = check_identifiability(model);
    CHECK_FALSE(rep.ok);
    REQUIRE(rep.witnesses.size() == 1);
    CHECK(rep.witnesses[0].u0 == 0);
    CHECK(rep.witnesses[0].u1 == 1);
    CHECK_FALSE(rep.witnesses[0].action.has_value());
}

TEST_CASE("identifiability: disjoint supports give a universal witness") {
    // action 0 maps u to disjoint observations regardless of s
    std::vector<double> probs;
    for (int s = 0; s < 2; ++s)
        for (int u = 0; u < 2; ++u) {
            probs.push_back(u == 0 ? 1.0 : 0.0);
            probs.push_back(u == 0 ? 0.0 : 1.0);
        }
    const ObservationModel model(HypothesisSpace(2, 2), 1, 2, std::move(probs));
    const auto rep = check_identifiability(model);
    CHECK(rep.ok);
    REQUIRE(rep.witnesses.size() == 1);
    CHECK(rep.witnesses[0].action == 0);
}

static const char* kToyCsv =
    "action,reading,secret,useful\n"
    "0,1.0,0,0\n"
    "0,2.0,0,0\n"
    "0,3.0,0,1\n"
    "0,4.0,1,0\n"
    "0,5.0,1,1\n"
    "0,6.0,1,1\n"
    "0,7.0,0,1\n"
    "0,8.0,0,1\n"
    "0,9.0,1,0\n"
    "0,10.0,1,1\n"
    "0,11.0,0,0\n"
    "0,12.0,1,0\n";

TEST_CASE("csv fit matches hand counts with add-one smoothing") {
    std::istringstream in(kToyCsv);
    const auto model = fit_from_csv(in, 2, 1.0);
    REQUIRE(model.n_actions() == 1);
    REQUIRE(model.n_obs() == 2);
    // Pooled readings 1..12, cut at the 7.0 quantile; readings >= 7 land in
    // bin 1. Hand counts per (s,u): (0,0) -> (2,1), (0,1) -> (1,2),
    // (1,0) -> (1,2), (1,1) -> (2,1); add-one smoothing over 2 bins.
    CHECK(model.prob(0, 0, 0, 0) == Approx(3.0 / 5.0));
    CHECK(model.prob(0, 0, 0, 1) == Approx(2.0 / 5.0));
    CHECK(model.prob(0, 0, 1, 0) == Approx(2.0 / 5.0));
    CHECK(model.prob(0, 0, 1, 1) == Approx(3.0 / 5.0));
    CHECK(model.prob(0, 1, 0, 0) == Approx(2.0 / 5.0));
    CHECK(model.prob(0, 1, 0, 1) == Approx(3.0 / 5.0));
    CHECK(model.prob(0, 1, 1, 0) == Approx(3.0 / 5.0));
    CHECK(model.prob(0, 1, 1, 1) == Approx(2.0 / 5.0));
}

TEST_CASE("csv fit: one-bin cell without smoothing becomes a point mass") {
    std::istringstream in(
        "action,reading,secret,useful\n"
        "0,1.0,0,0\n"
        "0,1.5,0,1\n"
        "0,9.0,1,0\n"
        "0,9.5,1,1\n");
    const auto model = fit_from_csv(in, 2, 0.0);
    CHECK(model.prob(0, 0, 0, 0) == 1.0);
    CHECK(model.prob(0, 0, 0, 1) == 0.0);
    CHECK(model.prob(0, 1, 1, 1) == 1.0);
}

TEST_CASE("csv fit: huge smoothing tends to uniform") {
    std::istringstream in(kToyCsv);
    const auto model = fit_from_csv(in, 2, 1e9);
    for (int s = 0; s < 2; ++s)
        for (int u = 0; u < 2; ++u)
            for (int z = 0; z < 2; ++z)
                CHECK(model.prob(0, s, u, z) == Approx(0.5).margin(1e-8));
}

TEST_CASE("csv fit error paths carry row numbers") {
    {
        std::istringstream in("action,reading,secret,useful\n0,abc,0,0\n0,1.0,1,1\n");
        CHECK_THROWS_MATCHES(fit_from_csv(in, 2, 1.0), IngestError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("row 2")));
    }
    {
        std::istringstream in("");
        CHECK_THROWS_AS(fit_from_csv(in, 2, 1.0), IngestError);
    }
    {
        std::istringstream in("action,reading,secret,useful\n");
        CHECK_THROWS_AS(fit_from_csv(in, 2, 1.0), IngestError);
    }
    {
        // label outside the provided space
        std::istringstream in(
            "action,reading,secret,useful\n0,1.0,walking,sitting\n0,2.0,smoking,sitting\n");
        HypothesisSpace spaces(2, 2, {"none", "smoking"}, {"sitting", "walking"});
        CHECK_THROWS_MATCHES(fit_from_csv(in, 2, 1.0, spaces), IngestError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("walking")));
    }
    {
        // missing (a,s,u) combination with zero smoothing
        std::istringstream in(
            "action,reading,secret,useful\n0,1.0,0,0\n0,2.0,1,1\n");
        CHECK_THROWS_AS(fit_from_csv(in, 2, 0.0), ConfigError);
    }
}

TEST_CASE("csv fit: string labels map in sorted order") {
    std::istringstream in(
        "action,reading,secret,useful\n"
        "gyro,1.0,none,sitting\n"
        "gyro,2.0,smoking,walking\n"
        "accel,3.0,none,walking\n"
        "accel,4.0,smoking,sitting\n");
    const auto ds = parse_sensor_csv(in);
    CHECK(ds.n_actions == 2); // accel < gyro
    REQUIRE(ds.spaces.secret_labels.size() == 2);
    CHECK(ds.spaces.secret_labels[0] == "none");
    CHECK(ds.spaces.secret_labels[1] == "smoking");
    CHECK(ds.records[0].action == 1);
    CHECK(ds.records[2].action == 0);
}

TEST_CASE("equal-frequency binning balances occupancy without ties") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int n_obs = 2 + rng.uniform_int(5);
        const int n_rows = n_obs * (3 + rng.uniform_int(5)) + rng.uniform_int(n_obs);
        std::ostringstream csv;
        csv << "action,reading,secret,useful\n";
        for (int i = 0; i < n_rows; ++i)
            csv << "0," << rng.next_u01() << ',' << rng.uniform_int(2) << ','
                << rng.uniform_int(2) << '\n';
        std::istringstream in(csv.str());
        const auto ds = parse_sensor_csv(in);
        const auto model = fit_from_records(ds, n_obs, 0.5);

        // recount occupancy through the fitted table: total mass per z over
        // all cells, unsmoothed counts recovered by re-binning the readings
        std::vector<double> pool;
        for (const auto& r : ds.records) pool.push_back(r.reading);
        std::sort(pool.begin(), pool.end());
        std::vector<double> cuts;
        for (int k = 1; k < n_obs; ++k)
            cuts.push_back(pool[(pool.size() * static_cast<std::size_t>(k)) / n_obs]);
        std::vector<int> occupancy(n_obs, 0);
        for (const auto& r : ds.records) {
            int z = 0;
            for (double c : cuts)
                if (r.reading >= c) ++z;
            occupancy[z] += 1;
        }
        const auto [mn, mx] = std::minmax_element(occupancy.begin(), occupancy.end());
        CHECK(*mx - *mn <= 1);
        (void)model;
    }
}

TEST_CASE("model json round trip is bit exact") {
    const auto model = testing::paper_synth_model();
    const auto j = model_to_json(model);
    const auto text = j.dump();
    const auto model2 = model_from_json(nlohmann::json::parse(text));
    REQUIRE(model2.raw().size() == model.raw().size());
    CHECK(std::memcmp(model.raw().data(), model2.raw().data(),
                      model.raw().size() * sizeof(double)) == 0);
    CHECK(model2.n_actions() == model.n_actions());
    CHECK(model2.n_obs() == model.n_obs());

    // labels survive the trip
    std::istringstream in(
        "action,reading,secret,useful\n"
        "0,1.0,none,sit\n0,2.0,smoke,walk\n0,3.0,none,walk\n0,4.0,smoke,sit\n");
    const auto fitted = fit_from_csv(in, 2, 1.0);
    const auto fitted2 = model_from_json(model_to_json(fitted));
    CHECK(fitted2.spaces().secret_labels == fitted.spaces().secret_labels);
    CHECK(fitted2.spaces().useful_labels == fitted.spaces().useful_labels);
}

TEST_CASE("prior validation") {
    CHECK_THROWS_AS(Prior(2, 2, {0.5, 0.5, 0.25, 0.25}), ConfigError);
    CHECK_THROWS_AS(Prior(2, 2, {0.5, 0.5, 0.25}), ConfigError);
    const auto p = Prior::uniform(3, 2);
    CHECK(p.at(2, 1) == Approx(1.0 / 6));
    CHECK(p.secret_marginal()[0] == Approx(1.0 / 3));
}
