#include <catch_amalgamated.hpp>

#include <cmath>

#include "aput/belief.hpp"
#include "test_instances.hpp"

using namespace aput;
using Catch::Approx;

TEST_CASE("uninformative observation leaves the belief unchanged") {
    // q identical across (s,u)
    std::vector<double> probs;
    for (int i = 0; i < 4; ++i) {
        probs.push_back(0.4);
        probs.push_back(0.6);
    }
    const ObservationModel model(HypothesisSpace(2, 2), 1, 2, std::move(probs));
    const Belief prior(2, 2, {0.1, 0.2, 0.3, 0.4});
    const auto post = update(prior, model, 0, 1);
    for (int s = 0; s < 2; ++s)
        for (int u = 0; u < 2; ++u)
            CHECK(post.at(s, u) == Approx(prior.at(s, u)).margin(1e-15));
}

TEST_CASE("fully informative observation gives a point mass") {
    // action 0 emits z=1 exactly when (s,u)=(1,0)
    std::vector<double> probs{1, 0, 1, 0, 0, 1, 1, 0};
    const ObservationModel model(HypothesisSpace(2, 2), 1, 2, std::move(probs));
    const Belief prior(2, 2, {0.25, 0.25, 0.25, 0.25});
    const auto post = update(prior, model, 0, 1);
    CHECK(post.at(1, 0) == Approx(1.0));
    CHECK(post.at(0, 0) == 0.0);
}

TEST_CASE("2x2 update matches the hand-normalized product") {
    // q(z=0|a0,s,u) = [[0.9, 0.6], [0.3, 0.2]]
    std::vector<double> probs{0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.2, 0.8};
    const ObservationModel model(HypothesisSpace(2, 2), 1, 2, std::move(probs));
    const Belief prior(2, 2, {0.25, 0.25, 0.25, 0.25});
    const auto post = update(prior, model, 0, 0);
    CHECK(post.at(0, 0) == Approx(0.45).margin(1e-15));
    CHECK(post.at(0, 1) == Approx(0.30).margin(1e-15));
    CHECK(post.at(1, 0) == Approx(0.15).margin(1e-15));
    CHECK(post.at(1, 1) == Approx(0.10).margin(1e-15));
}

TEST_CASE("zero-likelihood observation raises") {
    std::vector<double> probs{1, 0, 1, 0, 1, 0, 1, 0};
    const ObservationModel model(HypothesisSpace(2, 2), 1, 2, std::move(probs));
    const Belief prior(2, 2, {0.25, 0.25, 0.25, 0.25});
    CHECK_THROWS_AS(update(prior, model, 0, 1), ZeroLikelihoodError);
}

TEST_CASE("posterior equivalence against the enumerated product") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_s = 2 + rng.uniform_int(2);
        const int n_u = 2 + rng.uniform_int(2);
        const int n_z = 2 + rng.uniform_int(3);
        const auto model = testing::random_model(rng, 2, n_s, n_u, n_z);
        auto belief = testing::random_belief(rng, n_s, n_u);

        // a short (a, z) sequence applied stepwise
        std::vector<std::pair<int, int>> seq;
        for (int t = 0; t < 4; ++t)
            seq.push_back({rng.uniform_int(2), rng.uniform_int(n_z)});
        Belief stepwise = belief;
        for (auto [a, z] : seq) stepwise = update(stepwise, model, a, z);

        // one-shot normalized product over all cells
        std::vector<double> prod(belief.joint().begin(), belief.joint().end());
        for (int s = 0; s < n_s; ++s)
            for (int u = 0; u < n_u; ++u)
                for (auto [a, z] : seq)
                    prod[static_cast<std::size_t>(s) * n_u + u] *= model.prob(a, s, u, z);
        double sum = 0.0;
        for (double v : prod) sum += v;
        for (int s = 0; s < n_s; ++s)
            for (int u = 0; u < n_u; ++u)
                CHECK(stepwise.at(s, u) ==
                      Approx(prod[static_cast<std::size_t>(s) * n_u + u] / sum)
                          .margin(1e-12));
    }
}

TEST_CASE("marginals") {
    const Belief point(2, 2, {0, 0, 0, 1});
    CHECK(marginal_secret(point)[1] == 1.0);
    CHECK(marginal_useful(point)[1] == 1.0);

    const Belief uniform = Belief::uniform(3, 4);
    for (double v : marginal_secret(uniform)) CHECK(v == Approx(1.0 / 3));
    for (double v : marginal_useful(uniform)) CHECK(v == Approx(1.0 / 4));

    const Belief b(2, 2, {0.1, 0.2, 0.3, 0.4});
    const auto ms = marginal_secret(b);
    CHECK(ms[0] == Approx(0.3));
    CHECK(ms[1] == Approx(0.7));
    const auto mu = marginal_useful(b);
    CHECK(mu[0] == Approx(0.4));
    CHECK(mu[1] == Approx(0.6));
}

TEST_CASE("max confidence with smallest-index tie break") {
    const Belief uniform = Belief::uniform(3, 3);
    CHECK(max_confidence_secret(uniform).first == 0);
    CHECK(max_confidence_secret(uniform).second == Approx(1.0 / 3).margin(1e-14));
    CHECK(max_confidence_useful(uniform).first == 0);
    CHECK(max_confidence_useful(uniform).second == Approx(1.0 / 3).margin(1e-14));

    const Belief point(2, 2, {0, 0, 0, 1});
    CHECK(max_confidence_secret(point).first == 1);
    CHECK(max_confidence_secret(point).second == 1.0);

    const Belief b(2, 2, {0.1, 0.2, 0.3, 0.4});
    CHECK(max_confidence_secret(b).first == 1);
    CHECK(max_confidence_secret(b).second == Approx(0.7));
}

TEST_CASE("argmax is invariant to scaling the unnormalized joint") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> joint(6);
        for (double& v : joint) v = 0.01 + rng.next_u01();
        const double c = 0.001 + 100.0 * rng.next_u01();
        std::vector<double> scaled(joint);
        for (double& v : scaled) v *= c;
        const Belief b1(2, 3, joint), b2(2, 3, scaled);
        CHECK(max_confidence_secret(b1).first == max_confidence_secret(b2).first);
        CHECK(max_confidence_useful(b1).first == max_confidence_useful(b2).first);
        CHECK(max_confidence_secret(b1).second ==
              Approx(max_confidence_secret(b2).second).margin(1e-12));
    }
}

TEST_CASE("entropy") {
    const std::vector<double> point{1.0, 0.0, 0.0};
    CHECK(entropy(point) == 0.0);
    const std::vector<double> uniform5(5, 0.2);
    CHECK(entropy(uniform5) == Approx(std::log(5.0)).margin(1e-14));
    const std::vector<double> p{0.25, 0.75};
    // direct two-term evaluation
    CHECK(entropy(p) == Approx(0.56233514461880829).margin(1e-15));

    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const auto d = testing::random_dist(rng, 2 + rng.uniform_int(6));
        const double h = entropy(d);
        CHECK(h >= 0.0);
        CHECK(h <= std::log(static_cast<double>(d.size())) + 1e-12);
    }
}

TEST_CASE("belief renormalizes and validates") {
    const Belief b(2, 2, {1.0, 1.0, 1.0, 1.0});
    CHECK(b.at(0, 0) == Approx(0.25));
    CHECK_THROWS_AS(Belief(2, 2, {1.0, -0.1, 0.05, 0.05}), ConfigError);
    CHECK_THROWS_AS(Belief(2, 2, {0.0, 0.0, 0.0, 0.0}), ConfigError);
    CHECK_THROWS_AS(Belief(2, 2, {0.5, 0.5}), ConfigError);
}
