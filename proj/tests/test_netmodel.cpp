#include <doctest.h>

#include <deque>
#include <map>
#include <random>

#include "p2p2g/netmodel.hpp"
#include "test_support.hpp"

using namespace p2p2g;
using testsupport::json;

namespace {

json minimal_case()
{
    json doc = testsupport::chain_case(2, 2);
    doc["prosumers"].push_back(testsupport::prosumer(1, {0.1, 0.1}, {0.0, 0.3}));
    return doc;
}

}  // namespace

TEST_CASE("minimal two-node case loads")
{
    const CaseConfig cfg = load_case(minimal_case().dump());
    CHECK(cfg.network.num_lines() == 1);
    CHECK(cfg.network.num_nodes() == 2);
    CHECK(cfg.num_prosumers() == 1);
    CHECK(cfg.prosumer_node[0] == 1);
    CHECK(cfg.network.topo.upstream[0] == 0);
    CHECK(cfg.network.topo.downstream[0] == 1);
}

TEST_CASE("tariffs with ToU twice FiT are accepted")
{
    json doc = minimal_case();
    doc["market"]["fit"] = {0.10, 0.10};
    doc["market"]["tou"] = {0.20, 0.20};
    const CaseConfig cfg = load_case(doc.dump());
    CHECK(cfg.market.tou[0] == doctest::Approx(2.0 * cfg.market.fit[0]));

    doc["market"]["fit"] = {0.30, 0.10};
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);
}

TEST_CASE("cycles and disconnected graphs are rejected")
{
    json doc = minimal_case();
    doc["network"]["lines"].push_back({{"from", 1}, {"to", 0}, {"r", 0.01}, {"x", 0.01}, {"s_max", 1.0}});
    CHECK_THROWS_AS(load_case(doc.dump()), TopologyError);

    json tri = testsupport::chain_case(3, 1);
    tri["network"]["lines"][1] = {{"from", 1}, {"to", 0}, {"r", 0.01}, {"x", 0.01}, {"s_max", 1.0}};
    CHECK_THROWS_AS(load_case(tri.dump()), TopologyError);

    json noroot = testsupport::chain_case(2, 1);
    noroot["network"]["nodes"] = {1, 2};
    noroot["network"]["lines"][0]["from"] = 1;
    noroot["network"]["lines"][0]["to"] = 2;
    CHECK_THROWS_AS(load_case(noroot.dump()), TopologyError);
}

TEST_CASE("schema and bounds violations")
{
    json doc = minimal_case();
    doc["network"].erase("v0");
    CHECK_THROWS_AS(load_case(doc.dump()), SchemaError);

    doc = minimal_case();
    doc["prosumers"][0]["demand"] = {0.1};
    CHECK_THROWS_AS(load_case(doc.dump()), SchemaError);

    doc = minimal_case();
    doc["prosumers"][0]["demand"] = {0.1, "x"};
    CHECK_THROWS_AS(load_case(doc.dump()), SchemaError);

    CHECK_THROWS_AS(load_case("{not json"), SchemaError);

    doc = minimal_case();
    doc["network"]["lines"][0]["r"] = -0.01;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["network"]["lines"][0]["s_max"] = 0.0;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["network"]["v0"] = 1.2;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["network"]["vmin"] = 1.2;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["prosumers"][0]["battery"] = {{"p_min", 0.1}, {"p_max", 0.2}, {"e_min", 0.0}, {"e_max", 1.0}, {"e0", 0.5}};
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["prosumers"][0]["battery"] = {{"p_min", -0.1}, {"p_max", 0.2}, {"e_min", 0.0}, {"e_max", 1.0}, {"e0", 1.5}};
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["prosumers"][0]["res"] = {-0.1, 0.0};
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["prosumers"][0]["import_limit"] = {-1.0, 0.0};
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["market"]["rho"] = 0.0;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["market"]["scenarios"] = 0;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc = minimal_case();
    doc["market"]["thresholds"]["chi_dt"] = 0.0;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);
}

TEST_CASE("prosumer placement")
{
    json doc = minimal_case();
    doc["prosumers"].push_back(testsupport::prosumer(1, {0.1, 0.1}, {0.0, 0.0}));
    CHECK_THROWS_AS(load_case(doc.dump()), DuplicateProsumerError);

    doc = minimal_case();
    doc["prosumers"][0]["node"] = 7;
    CHECK_THROWS_AS(load_case(doc.dump()), UnknownNodeError);

    doc = minimal_case();
    doc["prosumers"][0]["node"] = 0;
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);
}

TEST_CASE("partner sets must be symmetric")
{
    json doc = testsupport::chain_case(4, 1);
    doc["prosumers"].push_back(testsupport::prosumer(1, {0.1}, {0.0}, {2}));
    doc["prosumers"].push_back(testsupport::prosumer(2, {0.0}, {0.2}, {1}));
    doc["prosumers"].push_back(testsupport::prosumer(3, {0.0}, {0.2}, {}));
    const CaseConfig cfg = load_case(doc.dump());
    CHECK(cfg.partner_index[0] == std::vector<int>{1});
    CHECK(cfg.partner_index[1] == std::vector<int>{0});
    CHECK(cfg.partner_index[2].empty());

    doc["prosumers"][2]["partners"] = {1};
    CHECK_THROWS_AS(load_case(doc.dump()), BoundsError);

    doc["prosumers"][2]["partners"] = {3};
    CHECK_THROWS(load_case(doc.dump()));

    doc["prosumers"][2]["partners"] = {0};
    CHECK_THROWS_AS(load_case(doc.dump()), UnknownNodeError);
}

TEST_CASE("path to root on a chain")
{
    const CaseConfig cfg = load_case(testsupport::chain_case(3, 1).dump());
    CHECK(path_to_root(cfg.network, 0).empty());
    CHECK(path_to_root(cfg.network, 2) == std::vector<int>{1, 0});
    CHECK_THROWS_AS(path_to_root(cfg.network, 9), UnknownNodeError);
}

TEST_CASE("path to root matches an independent breadth-first search")
{
    std::mt19937 rng(42);
    for (int rep = 0; rep < 5; ++rep) {
        json doc = testsupport::chain_case(15, 1);
        // Random recursive tree with shuffled ids and random line orientation.
        std::vector<int> ids(15);
        for (int i = 0; i < 15; ++i) {
            ids[i] = i == 0 ? 0 : 100 + i;
        }
        json lines = json::array();
        std::vector<std::pair<int, int>> edges;
        for (int i = 1; i < 15; ++i) {
            const int parent = std::uniform_int_distribution<int>(0, i - 1)(rng);
            int a = ids[parent];
            int b = ids[i];
            if (rng() % 2) {
                std::swap(a, b);
            }
            edges.emplace_back(a, b);
            lines.push_back({{"from", a}, {"to", b}, {"r", 0.01}, {"x", 0.01}, {"s_max", 1.0}});
        }
        doc["network"]["nodes"] = ids;
        doc["network"]["lines"] = lines;
        const CaseConfig cfg = load_case(doc.dump());

        std::map<int, std::pair<int, int>> via;  // node -> (line, neighbour towards root)
        std::deque<int> q{0};
        std::map<int, bool> seen{{0, true}};
        while (!q.empty()) {
            const int u = q.front();
            q.pop_front();
            for (int j = 0; j < static_cast<int>(edges.size()); ++j) {
                int w = -1;
                if (edges[j].first == u) {
                    w = edges[j].second;
                } else if (edges[j].second == u) {
                    w = edges[j].first;
                }
                if (w >= 0 && !seen[w]) {
                    seen[w] = true;
                    via[w] = {j, u};
                    q.push_back(w);
                }
            }
        }
        for (int id : ids) {
            std::vector<int> expect;
            for (int u = id; u != 0; u = via[u].second) {
                expect.push_back(via[u].first);
            }
            const std::vector<int> got = path_to_root(cfg.network, id);
            CHECK(got == expect);
            if (!got.empty()) {
                const Line& last = cfg.network.lines[got.back()];
                CHECK((last.from == 0 || last.to == 0));
            }
        }
    }
}

TEST_CASE("serialize then load is the identity")
{
    json doc = testsupport::chain_case(4, 3);
    doc["network"]["vmin"] = {0.95, 0.9, 0.91, 0.92};
    doc["network"]["fixed_loads"]["2"] = {{"p", {0.1, 0.2, 0.3}}, {"q", {0.01, 0.02, 0.03}}};
    doc["prosumers"].push_back(testsupport::prosumer(1, {0.1, 0.2, 0.1}, {0.0, 0.5, 0.3}, {3}));
    doc["prosumers"].push_back(testsupport::prosumer(3, {0.3, 0.1, 0.0}, {0.4, 0.0, 0.2}, {1}));
    doc["prosumers"][1]["battery"] = {{"p_min", -0.2}, {"p_max", 0.3}, {"e_min", 0.1}, {"e_max", 1.0}, {"e0", 0.4}};
    doc["market"]["terminal_soc"] = false;
    doc["market"]["dso_steps"] = 2;
    const CaseConfig a = load_case(doc.dump());
    const CaseConfig b = load_case(serialize_case(a));
    CHECK(serialize_case(a) == serialize_case(b));
    CHECK(b.network.vmin[2] == doctest::Approx(0.91));
    CHECK(b.network.load_p(2, 1) == doctest::Approx(0.2));
    CHECK(b.prosumers[1].battery.p_min == doctest::Approx(-0.2));
    CHECK(b.prosumers[1].partners == std::vector<int>{1});
    CHECK(b.market.terminal_soc == false);
    CHECK(b.market.dso_steps == 2);
    CHECK(b.market.tou == a.market.tou);
    CHECK(b.prosumers[0].res == a.prosumers[0].res);
}
