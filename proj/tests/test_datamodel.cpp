#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cstdio>

#include "perfdro/datamodel.hpp"
#include "perfdro/errors.hpp"
#include "test_util.hpp"

using namespace perfdro;

namespace {

DatasetSchema two_feature_schema() {
    DatasetSchema s;
    s.feature_columns = {"f1", "f2"};
    s.label_column = "y";
    s.strategic_mask = {true, false};
    return s;
}

}  // namespace

TEST_CASE("load_csv reads rows with uniform weights") {
    const auto path = testutil::write_temp_file("perfdro_ok.csv",
                                                "f1,f2,y\n"
                                                "1,2,1\n"
                                                "3,4,0\n");
    const EmpiricalDistribution dist = load_csv(path, two_feature_schema());
    REQUIRE(dist.size() == 2);
    CHECK(dist.weights()[0] == doctest::Approx(0.5));
    CHECK(dist.weights()[1] == doctest::Approx(0.5));
    CHECK(dist.samples()[0].features[0] == 1.0);
    CHECK(dist.samples()[0].features[1] == 2.0);
    CHECK(dist.samples()[0].label == 1);
    CHECK(dist.samples()[1].label == 0);
    std::remove(path.c_str());
}

TEST_CASE("load_csv respects schema column order, not file order") {
    const auto path = testutil::write_temp_file("perfdro_order.csv",
                                                "y,f2,f1\n"
                                                "1,20,10\n");
    const EmpiricalDistribution dist = load_csv(path, two_feature_schema());
    CHECK(dist.samples()[0].features[0] == 10.0);
    CHECK(dist.samples()[0].features[1] == 20.0);
    std::remove(path.c_str());
}

TEST_CASE("load_csv errors") {
    SUBCASE("missing label column names it") {
        const auto path = testutil::write_temp_file("perfdro_nolabel.csv", "f1,f2\n1,2\n");
        CHECK_THROWS_WITH_AS(load_csv(path, two_feature_schema()),
                             doctest::Contains("'y'"), SchemaError);
        std::remove(path.c_str());
    }
    SUBCASE("non-numeric cell reports the row") {
        const auto path =
            testutil::write_temp_file("perfdro_bad.csv", "f1,f2,y\n1,2,1\nx,4,0\n");
        CHECK_THROWS_WITH_AS(load_csv(path, two_feature_schema()),
                             doctest::Contains("row 2"), ParseError);
        std::remove(path.c_str());
    }
    SUBCASE("empty file") {
        const auto path = testutil::write_temp_file("perfdro_empty.csv", "");
        CHECK_THROWS_AS(load_csv(path, two_feature_schema()), EmptyDataError);
        std::remove(path.c_str());
    }
    SUBCASE("header but no data rows") {
        const auto path = testutil::write_temp_file("perfdro_headeronly.csv", "f1,f2,y\n");
        CHECK_THROWS_AS(load_csv(path, two_feature_schema()), EmptyDataError);
        std::remove(path.c_str());
    }
    SUBCASE("non-finite cells rejected") {
        const auto path = testutil::write_temp_file("perfdro_nan.csv", "f1,f2,y\nnan,2,1\n");
        CHECK_THROWS_AS(load_csv(path, two_feature_schema()), ParseError);
        std::remove(path.c_str());
    }
    SUBCASE("label outside 0/1") {
        const auto path = testutil::write_temp_file("perfdro_label2.csv", "f1,f2,y\n1,2,2\n");
        CHECK_THROWS_AS(load_csv(path, two_feature_schema()), ParseError);
        std::remove(path.c_str());
    }
}

TEST_CASE("load_csv credit-scale file gets equal mass 1/n") {
    std::string contents = "f1,f2,y\n";
    const std::size_t n = 14878;
    for (std::size_t i = 0; i < n; ++i)
        contents += std::to_string(i % 7) + "," + std::to_string(i % 3) + "," +
                    std::to_string(i % 2) + "\n";
    const auto path = testutil::write_temp_file("perfdro_credit.csv", contents);
    const EmpiricalDistribution dist = load_csv(path, two_feature_schema());
    REQUIRE(dist.size() == n);
    for (Eigen::Index i = 0; i < 5; ++i)
        CHECK(dist.weights()[i] == doctest::Approx(1.0 / 14878.0).epsilon(1e-12));
    std::remove(path.c_str());
}

TEST_CASE("load_csv then moments reproduces known column means") {
    const auto path = testutil::write_temp_file("perfdro_means.csv",
                                                "f1,f2,y\n"
                                                "1,10,0\n"
                                                "2,20,1\n"
                                                "3,30,0\n"
                                                "6,40,1\n");
    const EmpiricalDistribution dist = load_csv(path, two_feature_schema());
    const MomentSummary m = moments(dist);
    CHECK(m.mean[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(m.mean[1] == doctest::Approx(25.0).epsilon(1e-15));
    std::remove(path.c_str());
}

namespace {

EmpiricalDistribution scalar_dist(std::vector<double> xs, Vector weights) {
    std::vector<Sample> atoms;
    for (double x : xs) atoms.push_back({Vector::Constant(1, x), 0});
    return EmpiricalDistribution(std::move(atoms), std::move(weights));
}

}  // namespace

TEST_CASE("bootstrap_resample") {
    SUBCASE("single atom copies it n times") {
        const auto dist = EmpiricalDistribution::uniform({{Vector::Constant(1, 3.5), 1}});
        const auto out = bootstrap_resample(dist, 5, 42);
        REQUIRE(out.size() == 5);
        for (const Sample& s : out.samples()) {
            CHECK(s.features[0] == 3.5);
            CHECK(s.label == 1);
        }
        for (Eigen::Index i = 0; i < 5; ++i) CHECK(out.weights()[i] == doctest::Approx(0.2));
    }
    SUBCASE("same seed reproduces bit for bit") {
        Vector w(3);
        w << 0.2, 0.5, 0.3;
        const auto dist = scalar_dist({1.0, 2.0, 3.0}, w);
        const auto a = bootstrap_resample(dist, 100, 7);
        const auto b = bootstrap_resample(dist, 100, 7);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a.samples()[i].features[0] == b.samples()[i].features[0]);
    }
    SUBCASE("frequencies follow the weights") {
        Vector w(2);
        w << 0.9, 0.1;
        const auto dist = scalar_dist({1.0, 0.0}, w);
        const auto out = bootstrap_resample(dist, 10000, 1);
        double first = 0;
        for (const Sample& s : out.samples()) first += s.features[0];
        CHECK(std::abs(first / 10000.0 - 0.9) <= 0.01);
    }
    SUBCASE("n = 0 rejected") {
        const auto dist = EmpiricalDistribution::uniform({{Vector::Constant(1, 0.0), 0}});
        CHECK_THROWS_AS(bootstrap_resample(dist, 0, 1), std::invalid_argument);
    }
    SUBCASE("output weights are uniform and sum to one") {
        Vector w(3);
        w << 0.6, 0.15, 0.25;
        const auto dist = scalar_dist({1.0, 2.0, 3.0}, w);
        const auto out = bootstrap_resample(dist, 37, 9);
        double total = 0.0;
        for (Eigen::Index i = 0; i < out.weights().size(); ++i) {
            CHECK(out.weights()[i] == doctest::Approx(1.0 / 37.0).epsilon(1e-14));
            total += out.weights()[i];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("moments hand values") {
    SUBCASE("two scalar atoms") {
        const auto dist = EmpiricalDistribution::uniform(
            {{Vector::Constant(1, 0.0), 0}, {Vector::Constant(1, 2.0), 1}});
        const MomentSummary m = moments(dist);
        CHECK(m.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(m.covariance(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("single atom has zero covariance") {
        Vector x(3);
        x << 1, 2, 3;
        const auto dist = EmpiricalDistribution::uniform({{x, 0}});
        const MomentSummary m = moments(dist);
        CHECK(m.covariance.norm() == 0.0);
    }
    SUBCASE("anticorrelated pair") {
        Vector a(2), b(2);
        a << 1, 0;
        b << 0, 1;
        const auto dist = EmpiricalDistribution::uniform({{a, 0}, {b, 1}});
        const MomentSummary m = moments(dist);
        CHECK(m.mean[0] == doctest::Approx(0.5));
        CHECK(m.mean[1] == doctest::Approx(0.5));
        CHECK(m.covariance(0, 0) == doctest::Approx(0.25));
        CHECK(m.covariance(0, 1) == doctest::Approx(-0.25));
        CHECK(m.covariance(1, 0) == doctest::Approx(-0.25));
        CHECK(m.covariance(1, 1) == doctest::Approx(0.25));
    }
}

TEST_CASE("moments covariance stays positive semidefinite on random data") {
    Rng rng(123);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + static_cast<int>(rng.uniform01() * 30);
        const int d = 1 + static_cast<int>(rng.uniform01() * 5);
        std::vector<Sample> atoms;
        Vector w(n);
        for (int i = 0; i < n; ++i) {
            Vector x(d);
            for (int j = 0; j < d; ++j) x[j] = rng.gauss();
            atoms.push_back({x, 0});
            w[i] = 0.05 + rng.uniform01();
        }
        w /= w.sum();
        const MomentSummary m = moments(EmpiricalDistribution(std::move(atoms), w));
        Eigen::SelfAdjointEigenSolver<Matrix> es(m.covariance);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("EmpiricalDistribution validates construction") {
    CHECK_THROWS_AS(EmpiricalDistribution::uniform({}), EmptyDataError);
    Vector bad(1);
    bad << 0.9;
    CHECK_THROWS_AS(EmpiricalDistribution({{Vector::Constant(1, 0.0), 0}}, bad),
                    std::invalid_argument);
    Vector neg(2);
    neg << 1.5, -0.5;
    CHECK_THROWS_AS(
        EmpiricalDistribution({{Vector::Constant(1, 0.0), 0}, {Vector::Constant(1, 1.0), 0}},
                              neg),
        std::invalid_argument);
    CHECK_THROWS_AS(EmpiricalDistribution::uniform({{Vector::Constant(1, 0.0), 2}}),
                    std::invalid_argument);
}
