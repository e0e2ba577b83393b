#include <doctest.h>

#include <cmath>
#include <sstream>

#include "p2p2g/distflow.hpp"
#include "test_support.hpp"

using namespace p2p2g;
using testsupport::json;

namespace {

// Values from a standalone 30-digit fixed-point iteration of
// l = ((p + R l)^2 + (q + X l)^2) / v0^2 with v0 = 1, R = X = 0.01, p = 0.1, q = 0.
constexpr double kOracleL = 0.0100200602007227306828957720497;
constexpr double kOracleV1 = 0.998998496489338994567620835158;

/// Closed form of the same scalar problem: the smaller root of
/// (R^2+X^2) l^2 + (2Rp + 2Xq - v0^2) l + p^2 + q^2 = 0.
double two_node_current(double r, double x, double p, double q, double v0)
{
    const double a = r * r + x * x;
    const double bb = 2.0 * r * p + 2.0 * x * q - v0 * v0;
    const double c = p * p + q * q;
    return (-bb - std::sqrt(bb * bb - 4.0 * a * c)) / (2.0 * a);
}

CaseConfig two_node(double p, double q, int horizon = 1)
{
    json doc = testsupport::chain_case(2, horizon);
    doc["network"]["fixed_loads"]["1"] = {{"p", std::vector<double>(horizon, p)}, {"q", std::vector<double>(horizon, q)}};
    return load_case(doc.dump());
}

Injections loads_only(const CaseConfig& cfg)
{
    return nodal_injections(cfg, Eigen::MatrixXd::Zero(cfg.num_prosumers(), cfg.horizon()));
}

json four_bus()
{
    // 0 - 1 - 2 - 3 chain, prosumers at 2 and 3, load at 1.
    json doc = testsupport::chain_case(4, 1, 0.02, 0.02, 2.0);
    doc["network"]["vmax"] = 1.05;
    doc["network"]["vmin"] = 0.95;
    doc["network"]["fixed_loads"]["1"] = {{"p", {0.2}}, {"q", {0.05}}};
    doc["network"]["fixed_loads"]["2"] = {{"p", {0.0}}, {"q", {0.02}}};
    doc["prosumers"].push_back(testsupport::prosumer(2, {0.1}, {0.0}));
    doc["prosumers"].push_back(testsupport::prosumer(3, {0.1}, {0.0}));
    doc["market"]["pi"] = {5.0};
    return doc;
}

}  // namespace

TEST_CASE("no-load network is flat")
{
    const CaseConfig cfg = two_node(0.0, 0.0, 3);
    const PowerFlowSolution pf = sweep_powerflow(cfg.network, loads_only(cfg));
    CHECK(pf.l.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pf.fp.cwiseAbs().maxCoeff() == 0.0);
    CHECK((pf.v.array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(loss_cost(cfg.network, pf, Eigen::VectorXd::Ones(3), 1.0) == 0.0);
}

TEST_CASE("two-node sweep matches the scalar oracle")
{
    const CaseConfig cfg = two_node(0.1, 0.0);
    const PowerFlowSolution pf = sweep_powerflow(cfg.network, loads_only(cfg));
    CHECK(pf.l(0, 0) == doctest::Approx(kOracleL).epsilon(1e-9));
    CHECK(pf.v(1, 0) == doctest::Approx(kOracleV1).epsilon(1e-10));
    CHECK(pf.l(0, 0) == doctest::Approx(two_node_current(0.01, 0.01, 0.1, 0.0, 1.0)).epsilon(1e-9));
    CHECK(pf.p0[0] == doctest::Approx(0.1 + 0.01 * kOracleL).epsilon(1e-10));

    const double cost = loss_cost(cfg.network, pf, Eigen::VectorXd::Ones(1), 1.0);
    CHECK(cost == doctest::Approx(0.01 * kOracleL).epsilon(1e-9));
    CHECK(loss_cost(cfg.network, pf, Eigen::VectorXd::Constant(1, 2.0), 1.0) == doctest::Approx(2.0 * cost));

    for (double q : {0.0, 0.05, -0.03}) {
        for (double p : {-0.3, 0.05, 0.4}) {
            const CaseConfig c2 = two_node(p, q);
            const PowerFlowSolution s2 = sweep_powerflow(c2.network, loads_only(c2));
            CHECK(s2.l(0, 0) == doctest::Approx(two_node_current(0.01, 0.01, p, q, 1.0)).epsilon(1e-8).scale(1e-6));
        }
    }
}

TEST_CASE("doubling loads never decreases losses")
{
    for (double p : {0.05, 0.1, 0.3, 0.6}) {
        const CaseConfig a = two_node(p, 0.2 * p);
        const CaseConfig b = two_node(2.0 * p, 0.4 * p);
        const double la = loss_energy(a.network, sweep_powerflow(a.network, loads_only(a)));
        const double lb = loss_energy(b.network, sweep_powerflow(b.network, loads_only(b)));
        CHECK(lb >= la);
    }
    const CaseConfig cfg = load_case(four_bus().dump());
    Injections inj = loads_only(cfg);
    const double l1 = loss_energy(cfg.network, sweep_powerflow(cfg.network, inj));
    inj.p *= 2.0;
    inj.q *= 2.0;
    CHECK(loss_energy(cfg.network, sweep_powerflow(cfg.network, inj)) >= l1);
}

TEST_CASE("sweep failures")
{
    const CaseConfig cfg = two_node(30.0, 0.0);
    CHECK_THROWS_AS(sweep_powerflow(cfg.network, loads_only(cfg)), PowerFlowError);

    const CaseConfig ok = two_node(0.3, 0.1);
    CHECK_THROWS_AS(sweep_powerflow(ok.network, loads_only(ok), SweepSettings{1e-15, 1}), NonConvergence);

    json doc = testsupport::chain_case(2, 1, 0.5, 0.5, 10.0);
    doc["network"]["fixed_loads"]["1"] = {{"p", {2.0}}, {"q", {0.0}}};
    const CaseConfig collapse = load_case(doc.dump());
    CHECK_THROWS_AS(sweep_powerflow(collapse.network, loads_only(collapse)), VoltageCollapse);
}

TEST_CASE("exactness of sweep solutions and of perturbed points")
{
    const CaseConfig cfg = two_node(0.1, 0.02);
    PowerFlowSolution pf = sweep_powerflow(cfg.network, loads_only(cfg));
    CHECK(check_exactness(cfg.network, pf) <= 1e-9);
    pf.l(0, 0) += 0.1;
    CHECK(check_exactness(cfg.network, pf) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("violation counting")
{
    json doc = testsupport::chain_case(3, 2, 0.05, 0.05, 0.5);
    doc["network"]["vmin"] = 0.97;
    doc["network"]["fixed_loads"]["2"] = {{"p", {0.3, 0.01}}, {"q", {0.0, 0.0}}};
    const CaseConfig cfg = load_case(doc.dump());
    const PowerFlowSolution pf = sweep_powerflow(cfg.network, loads_only(cfg));
    const ViolationCounts v = count_violations(cfg.network, pf);
    CHECK(v.voltage == 1);  // node 2 at t = 0
    CHECK(v.overload == 0);
}

TEST_CASE("penalty dominance pins allocations to feasible asks")
{
    const CaseConfig cfg = load_case(four_bus().dump());
    Eigen::MatrixXd ask(2, 1);
    ask << 0.1, 0.15;
    const Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(2, 1);
    const OpfSolution sol = solve_opf(cfg, ask, psi, 1e6, 1, cfg.market.pi);
    CHECK((sol.allocation - ask).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(sol.exactness <= 1e-5);
}

TEST_CASE("zero ask reproduces the fixed-load loss cost")
{
    json doc = testsupport::chain_case(2, 2);
    doc["network"]["fixed_loads"]["1"] = {{"p", {0.0, 0.0}}, {"q", {0.1, 0.2}}};
    doc["prosumers"].push_back(testsupport::prosumer(1, {0.1, 0.1}, {0.0, 0.0}));
    const CaseConfig cfg = load_case(doc.dump());
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 2);
    const OpfSolution sol = solve_opf(cfg, zero, zero, 1.0, 1, cfg.market.pi);
    const PowerFlowSolution pf = sweep_powerflow(cfg.network, loads_only(cfg));
    const double expect = loss_cost(cfg.network, pf, cfg.market.pi, cfg.network.dt);
    CHECK(sol.objective == doctest::Approx(expect).epsilon(1e-7));
    CHECK(sol.loss == doctest::Approx(expect).epsilon(1e-7));
    CHECK(sol.allocation.cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("scenarios inject s/S of the allocation")
{
    const CaseConfig cfg = load_case(four_bus().dump());
    Eigen::MatrixXd ask(2, 1);
    ask << 0.2, 0.3;
    const Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(2, 1);
    const OpfSolution sol = solve_opf(cfg, ask, psi, 1e5, 4, cfg.market.pi);
    REQUIRE(sol.flows.size() == 4);
    CHECK(sol.exactness <= 1e-5);
    double expect_loss = 0.0;
    for (int s = 1; s <= 4; ++s) {
        const PowerFlowSolution pf =
            sweep_powerflow(cfg.network, nodal_injections(cfg, sol.allocation, s / 4.0));
        CHECK((pf.v - sol.flows[s - 1].v).cwiseAbs().maxCoeff() <= 1e-5);
        CHECK((pf.fp - sol.flows[s - 1].fp).cwiseAbs().maxCoeff() <= 1e-5);
        expect_loss += loss_cost(cfg.network, pf, cfg.market.pi, 1.0) / 4.0;
    }
    CHECK(sol.loss == doctest::Approx(expect_loss).epsilon(1e-5));
}

TEST_CASE("four-bus envelope problem agrees with a brute-force grid")
{
    json doc = four_bus();
    doc["market"]["pi"] = {10.0};
    const CaseConfig cfg = load_case(doc.dump());
    Eigen::MatrixXd ask(2, 1);
    ask << 1.2, 1.5;  // beyond what the voltage limit admits
    Eigen::MatrixXd psi(2, 1);
    psi << -0.05, 0.02;
    const double rho = 2.0;
    const int scenarios = 2;
    const OpfSolution sol = solve_opf(cfg, ask, psi, rho, scenarios, cfg.market.pi);
    CHECK(sol.exactness <= 1e-5);

    auto value = [&](double a, double b, bool& feasible) {
        Eigen::MatrixXd alloc(2, 1);
        alloc << a, b;
        double f = 0.0;
        for (int i = 0; i < 2; ++i) {
            const double g = alloc(i, 0) - ask(i, 0);
            f += psi(i, 0) * g + 0.5 * rho * g * g;
        }
        feasible = true;
        for (int s = 1; s <= scenarios; ++s) {
            const PowerFlowSolution pf =
                sweep_powerflow(cfg.network, nodal_injections(cfg, alloc, double(s) / scenarios));
            if (count_violations(cfg.network, pf, 0.0).voltage + count_violations(cfg.network, pf, 0.0).overload > 0) {
                feasible = false;
            }
            f += loss_cost(cfg.network, pf, cfg.market.pi, 1.0) / scenarios;
        }
        return f;
    };

    double best = INFINITY, ba = 0, bb = 0;
    for (double a = -0.5; a <= 2.0; a += 0.01) {
        for (double b = -0.5; b <= 2.0; b += 0.01) {
            bool ok = false;
            const double f = value(a, b, ok);
            if (ok && f < best) {
                best = f;
                ba = a;
                bb = b;
            }
        }
    }
    const double ca = ba, cb = bb;
    for (double a = ca - 0.02; a <= ca + 0.02; a += 1e-3) {
        for (double b = cb - 0.02; b <= cb + 0.02; b += 1e-3) {
            bool ok = false;
            const double f = value(a, b, ok);
            if (ok && f < best) {
                best = f;
                ba = a;
                bb = b;
            }
        }
    }
    CHECK(sol.objective == doctest::Approx(best).epsilon(1e-3).scale(1.0));
    CHECK(sol.objective <= best + 1e-9);
    CHECK(std::abs(sol.allocation(0, 0) - ba) <= 5e-3);
    CHECK(std::abs(sol.allocation(1, 0) - bb) <= 5e-3);
    // The voltage limit binds in the full-export scenario.
    CHECK(sol.flows.back().v.maxCoeff() == doctest::Approx(1.05).epsilon(1e-6));
}

TEST_CASE("power flow csv layout")
{
    const CaseConfig cfg = two_node(0.1, 0.0, 2);
    const PowerFlowSolution pf = sweep_powerflow(cfg.network, loads_only(cfg));
    std::ostringstream out;
    write_powerflow_csv(out, cfg.network, {pf, pf});
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "scenario,t,element_type,element_id,quantity,value");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 5);
    }
    CHECK(rows == 2 * 2 * (3 + 2 + 2));
}
