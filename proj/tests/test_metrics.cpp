#include <doctest.h>

#include <cmath>
#include <random>

#include "tsc/errors.hpp"
#include "tsc/metrics.hpp"
#include "tsc/policy.hpp"

using namespace tsc;

namespace {

EpisodeLog log_of(std::vector<std::pair<long long, std::optional<long long>>> trips) {
    EpisodeLog log;
    int k = 0;
    for (auto [enter, exit] : trips) log.vehicles.push_back({"v" + std::to_string(k++), enter, exit});
    return log;
}

EvalReport report(double aatt) {
    EvalReport r;
    r.aatt = aatt;
    return r;
}

} // namespace

TEST_CASE("aatt") {
    CHECK(!aatt(EpisodeLog{}));
    CHECK(*aatt(log_of({{0, 50}, {10, 40}, {5, 95}})) == doctest::Approx((50.0 + 30.0 + 90.0) / 3.0));
    CHECK(*aatt(log_of({{7, 7}})) == 0.0);
    CHECK_THROWS_AS(aatt(log_of({{0, 50}, {3, std::nullopt}})), UnfinishedVehicles);
}

TEST_CASE("episode reports") {
    EpisodeLog log = log_of({{0, 50}, {3, std::nullopt}});
    log.steps.push_back({1, 2, 2, 0, {1, 3}});
    log.steps.push_back({2, 2, 1, 1, {0, 4}});
    const EvalReport r = make_report(log);
    CHECK(!r.aatt);
    CHECK(r.throughput == 1);
    CHECK(r.unfinished == 1);
    CHECK(r.mean_queue == doctest::Approx(2.0));
    CHECK(r.max_queue == 4.0);

    const EvalReport done = make_report(log_of({{0, 20}, {0, 40}}));
    CHECK(*done.aatt == 30.0);
    CHECK(done.mean_queue == 0.0);

    const EvalReport avg = average_reports({done, report(50.0)});
    CHECK(*avg.aatt == 40.0);
    CHECK(!average_reports({done, r}).aatt);
    CHECK(!average_reports({}).aatt);
}

TEST_CASE("transfer ratio") {
    CHECK(transfer_ratio(330.0, 300.0) == doctest::Approx(1.1));
    CHECK(transfer_ratio(300.0, 300.0) == 1.0);
    CHECK_THROWS_AS(transfer_ratio(300.0, 0.0), DivisionDomain);
    CHECK_THROWS_AS(transfer_ratio(300.0, -1.0), DivisionDomain);
    CHECK_THROWS_AS(transfer_ratio(300.0, std::nan("")), DivisionDomain);
}

TEST_CASE("comparison table") {
    const std::vector<std::pair<std::string, EvalReport>> reports{
        {"ft", report(400.0)}, {"agent", report(300.0)}, {"mql", report(320.0)}, {"tie", report(300.0)}};
    const auto rows = compare(reports, "ft");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].name == "agent");
    CHECK(rows[1].name == "tie");
    CHECK(rows[2].name == "mql");
    CHECK(rows[3].name == "ft");
    CHECK(rows[0].improvement == doctest::Approx(25.0));
    CHECK(rows[2].improvement == doctest::Approx(20.0));
    CHECK(rows[3].improvement == 0.0);

    CHECK_THROWS_AS(compare(reports, "missing"), ConfigError);
    auto broken = reports;
    broken.push_back({"none", EvalReport{}});
    CHECK_THROWS_AS(compare(broken, "ft"), ConfigError);

    CHECK(comparison_csv({{"a", 300.0, 25.0}}) == "method,aatt,improvement_pct\na,300.000000,25.000000\n");
}

TEST_CASE("comparison signs are antisymmetric") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> t(50.0, 900.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double a = t(gen), b = t(gen);
        const std::vector<std::pair<std::string, EvalReport>> reports{{"a", report(a)}, {"b", report(b)}};
        auto find = [](const std::vector<ComparisonRow>& rows, const std::string& name) {
            for (const ComparisonRow& r : rows)
                if (r.name == name) return r.improvement;
            return std::nan("");
        };
        const double b_over_a = find(compare(reports, "a"), "b");
        const double a_over_b = find(compare(reports, "b"), "a");
        CHECK((b_over_a > 0) == (a_over_b < 0));
        CHECK(b_over_a == doctest::Approx(-a_over_b * b / a).epsilon(1e-12));
    }
}

TEST_CASE("median") {
    CHECK(median({3.0}) == 3.0);
    CHECK(median({5.0, 1.0, 3.0}) == 3.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK_THROWS_AS(median({}), DivisionDomain);
}

TEST_CASE("measured travel times respect free-flow bounds") {
    const Network net = build_grid(2, 3, Topology::B, 300, 500);
    const FlowSet flow = generate_flow(net, 0.1, {}, 900, 11);
    TwoStageController ctrl(std::make_shared<MaxQueuePhase>(), std::make_shared<ConstantDuration>(15));
    const EpisodeLog log = run_episode(net, flow, ctrl, {900, true, {}});
    double bound = 0.0;
    for (const VehicleSpec& v : flow.vehicles) bound += route_length(net, v.route) / 10.0;
    bound /= static_cast<double>(flow.vehicles.size());
    const EvalReport r = make_report(log);
    REQUIRE(r.aatt);
    CHECK(*r.aatt >= bound);
    CHECK(r.throughput == flow.vehicles.size());
    CHECK(r.unfinished == 0);
}
