#include "p2p2g/netmodel.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace p2p2g {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object() || !obj.contains(key)) {
        throw SchemaError(where + ": missing field '" + key + "'");
    }
    return obj.at(key);
}

double number(const json& obj, const char* key, const std::string& where)
{
    const json& v = require(obj, key, where);
    if (!v.is_number()) {
        throw SchemaError(where + "." + key + ": expected a number");
    }
    return v.get<double>();
}

int integer(const json& obj, const char* key, const std::string& where)
{
    const json& v = require(obj, key, where);
    if (!v.is_number_integer()) {
        throw SchemaError(where + "." + key + ": expected an integer");
    }
    return v.get<int>();
}

Eigen::VectorXd series(const json& obj, const char* key, int horizon, const std::string& where)
{
    const json& v = require(obj, key, where);
    if (!v.is_array()) {
        throw SchemaError(where + "." + key + ": expected an array");
    }
    if (static_cast<int>(v.size()) != horizon) {
        throw SchemaError(where + "." + key + ": expected " + std::to_string(horizon) +
                          " entries, got " + std::to_string(v.size()));
    }
    Eigen::VectorXd out(horizon);
    for (int t = 0; t < horizon; ++t) {
        if (!v[t].is_number()) {
            throw SchemaError(where + "." + key + "[" + std::to_string(t) + "]: expected a number");
        }
        out[t] = v[t].get<double>();
    }
    return out;
}

Eigen::VectorXd node_bound(const json& obj, const char* key, int num_nodes, const std::string& where)
{
    const json& v = require(obj, key, where);
    if (v.is_number()) {
        return Eigen::VectorXd::Constant(num_nodes, v.get<double>());
    }
    if (v.is_array()) {
        return series(obj, key, num_nodes, where);
    }
    throw SchemaError(where + "." + key + ": expected a number or per-node array");
}

json to_array(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

bool all_nonnegative(const Eigen::VectorXd& v) { return v.size() == 0 || v.minCoeff() >= 0.0; }

void build_topology(NetworkCase& net)
{
    const int n = net.num_nodes();
    const int nl = net.num_lines();
    if (nl != n - 1) {
        throw TopologyError("radial network needs |lines| = |nodes| - 1 (" + std::to_string(nl) +
                            " lines for " + std::to_string(n) + " nodes)");
    }
    std::vector<std::vector<std::pair<int, int>>> adj(n);  // (line, neighbour)
    for (int j = 0; j < nl; ++j) {
        const int a = net.node_index(net.lines[j].from);
        const int b = net.node_index(net.lines[j].to);
        if (a == b) {
            throw TopologyError("line " + std::to_string(j) + " is a self-loop");
        }
        adj[a].emplace_back(j, b);
        adj[b].emplace_back(j, a);
    }

    Topology topo;
    topo.root = net.node_index(0);
    topo.parent_line.assign(n, -1);
    topo.upstream.assign(nl, -1);
    topo.downstream.assign(nl, -1);
    topo.child_lines.assign(n, {});
    topo.depth.assign(n, -1);

    std::queue<int> frontier;
    frontier.push(topo.root);
    topo.depth[topo.root] = 0;
    while (!frontier.empty()) {
        const int u = frontier.front();
        frontier.pop();
        topo.order.push_back(u);
        for (auto [j, w] : adj[u]) {
            if (j == topo.parent_line[u]) {
                continue;
            }
            if (topo.depth[w] >= 0) {
                throw TopologyError("network contains a cycle through line " + std::to_string(j));
            }
            topo.depth[w] = topo.depth[u] + 1;
            topo.parent_line[w] = j;
            topo.upstream[j] = u;
            topo.downstream[j] = w;
            topo.child_lines[u].push_back(j);
            frontier.push(w);
        }
    }
    if (static_cast<int>(topo.order.size()) != n) {
        throw TopologyError("network is not connected");
    }
    net.topo = std::move(topo);
}

}  // namespace

int NetworkCase::node_index(NodeId id) const
{
    auto it = std::find(nodes.begin(), nodes.end(), id);
    if (it == nodes.end()) {
        throw UnknownNodeError("unknown node id " + std::to_string(id));
    }
    return static_cast<int>(it - nodes.begin());
}

int CaseConfig::prosumer_at(NodeId id) const
{
    for (int i = 0; i < num_prosumers(); ++i) {
        if (prosumers[i].node == id) {
            return i;
        }
    }
    return -1;
}

void validate_market(const MarketParams& m, int horizon)
{
    if (m.fit.size() != horizon || m.tou.size() != horizon || m.pi.size() != horizon) {
        throw BoundsError("market series must have one entry per period");
    }
    for (int t = 0; t < horizon; ++t) {
        if (m.fit[t] > m.tou[t]) {
            throw BoundsError("feed-in tariff exceeds time-of-use tariff at period " + std::to_string(t));
        }
    }
    if (!(m.rho > 0.0)) {
        throw BoundsError("rho must be positive");
    }
    if (m.alpha < 0.0) {
        throw BoundsError("alpha must be nonnegative");
    }
    if (!(m.m0 > 0.0) || !(m.tau_m > 0.0 && m.tau_m < 1.0)) {
        throw BoundsError("censoring schedule needs m0 > 0 and 0 < tau_m < 1");
    }
    if (m.scenarios < 1) {
        throw BoundsError("scenario count must be at least 1");
    }
    const auto& th = m.thresholds;
    if (!(th.chi_es > 0 && th.chi_et > 0 && th.chi_ds > 0 && th.chi_dt > 0)) {
        throw BoundsError("convergence thresholds must be positive");
    }
    if (m.max_iters < 2) {
        throw BoundsError("max_iters must be at least 2");
    }
    if (!(m.solver_tol > 0.0)) {
        throw BoundsError("solver_tol must be positive");
    }
    if (m.dso_steps < 1) {
        throw BoundsError("dso_steps must be at least 1");
    }
}

void validate(CaseConfig& cfg)
{
    NetworkCase& net = cfg.network;
    const int n = net.num_nodes();
    const int horizon = net.horizon;
    if (horizon < 1) {
        throw BoundsError("horizon must be at least 1");
    }
    if (!(net.dt > 0.0)) {
        throw BoundsError("dt must be positive");
    }
    {
        std::set<NodeId> seen(net.nodes.begin(), net.nodes.end());
        if (static_cast<int>(seen.size()) != n) {
            throw TopologyError("duplicate node ids");
        }
        if (!seen.count(0)) {
            throw TopologyError("root node 0 is missing");
        }
    }
    for (std::size_t j = 0; j < net.lines.size(); ++j) {
        const Line& ln = net.lines[j];
        if (ln.r < 0.0 || ln.x < 0.0 || !(ln.s_max > 0.0)) {
            throw BoundsError("line " + std::to_string(j) + " needs r, x >= 0 and s_max > 0");
        }
    }
    if (net.vmin.size() != n || net.vmax.size() != n) {
        throw BoundsError("voltage bounds must be given per node");
    }
    for (int i = 0; i < n; ++i) {
        if (!(net.vmin[i] > 0.0 && net.vmin[i] < net.vmax[i])) {
            throw BoundsError("node " + std::to_string(net.nodes[i]) + " needs 0 < vmin < vmax");
        }
    }
    build_topology(net);
    const int root = net.topo.root;
    if (net.v0 < net.vmin[root] || net.v0 > net.vmax[root]) {
        throw BoundsError("root voltage v0 outside [vmin, vmax]");
    }
    if (net.load_p.rows() != n || net.load_p.cols() != horizon || net.load_q.rows() != n ||
        net.load_q.cols() != horizon) {
        throw BoundsError("fixed loads must be node x period");
    }

    cfg.prosumer_node.clear();
    std::set<NodeId> hosts;
    for (const ProsumerSpec& p : cfg.prosumers) {
        const int idx = net.node_index(p.node);
        if (idx == root) {
            throw BoundsError("a prosumer cannot sit at the root node");
        }
        if (!hosts.insert(p.node).second) {
            throw DuplicateProsumerError("more than one prosumer at node " + std::to_string(p.node));
        }
        cfg.prosumer_node.push_back(idx);
        const Battery& b = p.battery;
        if (b.p_min > 0.0 || b.p_max < 0.0) {
            throw BoundsError("battery power range must contain 0 (node " + std::to_string(p.node) + ")");
        }
        if (b.e_min > b.e0 || b.e0 > b.e_max) {
            throw BoundsError("battery needs e_min <= e0 <= e_max (node " + std::to_string(p.node) + ")");
        }
        if (b.present() && !(b.e_min < b.e_max)) {
            throw BoundsError("battery energy range is empty (node " + std::to_string(p.node) + ")");
        }
        if (p.demand.size() != horizon || p.res.size() != horizon || p.import_limit.size() != horizon) {
            throw BoundsError("prosumer series must have one entry per period");
        }
        if (!all_nonnegative(p.demand) || !all_nonnegative(p.res)) {
            throw BoundsError("forecasts must be nonnegative (node " + std::to_string(p.node) + ")");
        }
        if (!all_nonnegative(p.import_limit)) {
            throw BoundsError("import limit must be nonnegative (node " + std::to_string(p.node) + ")");
        }
        if (p.buy_max < 0.0 || p.sell_max < 0.0) {
            throw BoundsError("P2G limits must be nonnegative (node " + std::to_string(p.node) + ")");
        }
        if (net.load_p.row(idx).cwiseAbs().maxCoeff() > 0.0) {
            throw BoundsError("active fixed load at prosumer node " + std::to_string(p.node) +
                              " belongs in the prosumer's demand");
        }
    }

    cfg.partner_index.assign(cfg.prosumers.size(), {});
    for (int i = 0; i < cfg.num_prosumers(); ++i) {
        for (NodeId pid : cfg.prosumers[i].partners) {
            const int j = cfg.prosumer_at(pid);
            if (j < 0) {
                throw UnknownNodeError("partner " + std::to_string(pid) + " of prosumer at node " +
                                       std::to_string(cfg.prosumers[i].node) + " is not a prosumer");
            }
            if (j == i) {
                throw BoundsError("prosumer at node " + std::to_string(pid) + " lists itself as partner");
            }
            cfg.partner_index[i].push_back(j);
        }
        auto& list = cfg.partner_index[i];
        std::sort(list.begin(), list.end());
        if (std::adjacent_find(list.begin(), list.end()) != list.end()) {
            throw BoundsError("duplicate partner for prosumer at node " + std::to_string(cfg.prosumers[i].node));
        }
    }
    for (int i = 0; i < cfg.num_prosumers(); ++i) {
        for (int j : cfg.partner_index[i]) {
            const auto& back = cfg.partner_index[j];
            if (!std::binary_search(back.begin(), back.end(), i)) {
                throw BoundsError("partner sets are not symmetric: node " + std::to_string(cfg.prosumers[i].node) +
                                  " lists " + std::to_string(cfg.prosumers[j].node) + " but not vice versa");
            }
        }
    }

    validate_market(cfg.market, horizon);
}

CaseConfig load_case(std::string_view document)
{
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("case document is not valid JSON: ") + e.what());
    }

    CaseConfig cfg;
    try {
        const json& jn = require(doc, "network", "case");
        NetworkCase& net = cfg.network;
        net.horizon = integer(jn, "horizon", "network");
        net.dt = number(jn, "dt", "network");
        const int horizon = net.horizon;
        if (horizon < 1) {
            throw BoundsError("horizon must be at least 1");
        }

        const json& jnodes = require(jn, "nodes", "network");
        if (!jnodes.is_array()) {
            throw SchemaError("network.nodes: expected an array");
        }
        for (const json& id : jnodes) {
            if (!id.is_number_integer()) {
                throw SchemaError("network.nodes: node ids must be integers");
            }
            net.nodes.push_back(id.get<int>());
        }
        const int n = net.num_nodes();

        const json& jlines = require(jn, "lines", "network");
        if (!jlines.is_array()) {
            throw SchemaError("network.lines: expected an array");
        }
        for (std::size_t j = 0; j < jlines.size(); ++j) {
            const std::string where = "network.lines[" + std::to_string(j) + "]";
            Line ln;
            ln.from = integer(jlines[j], "from", where);
            ln.to = integer(jlines[j], "to", where);
            ln.r = number(jlines[j], "r", where);
            ln.x = number(jlines[j], "x", where);
            ln.s_max = number(jlines[j], "s_max", where);
            net.lines.push_back(ln);
        }
        net.v0 = number(jn, "v0", "network");
        net.vmin = node_bound(jn, "vmin", n, "network");
        net.vmax = node_bound(jn, "vmax", n, "network");

        net.load_p = Eigen::MatrixXd::Zero(n, horizon);
        net.load_q = Eigen::MatrixXd::Zero(n, horizon);
        if (jn.contains("fixed_loads")) {
            const json& jl = jn.at("fixed_loads");
            if (!jl.is_object()) {
                throw SchemaError("network.fixed_loads: expected an object keyed by node id");
            }
            for (auto it = jl.begin(); it != jl.end(); ++it) {
                NodeId id = 0;
                try {
                    std::size_t used = 0;
                    id = std::stoi(it.key(), &used);
                    if (used != it.key().size()) {
                        throw std::invalid_argument("trailing characters");
                    }
                } catch (const std::exception&) {
                    throw SchemaError("network.fixed_loads: key '" + it.key() + "' is not a node id");
                }
                const int idx = net.node_index(id);
                const std::string where = "network.fixed_loads." + it.key();
                net.load_p.row(idx) = series(it.value(), "p", horizon, where).transpose();
                net.load_q.row(idx) = series(it.value(), "q", horizon, where).transpose();
            }
        }

        const json& jp = require(doc, "prosumers", "case");
        if (!jp.is_array()) {
            throw SchemaError("prosumers: expected an array");
        }
        for (std::size_t k = 0; k < jp.size(); ++k) {
            const std::string where = "prosumers[" + std::to_string(k) + "]";
            const json& e = jp[k];
            ProsumerSpec p;
            p.node = integer(e, "node", where);
            const json& jb = require(e, "battery", where);
            p.battery.p_min = number(jb, "p_min", where + ".battery");
            p.battery.p_max = number(jb, "p_max", where + ".battery");
            p.battery.e_min = number(jb, "e_min", where + ".battery");
            p.battery.e_max = number(jb, "e_max", where + ".battery");
            p.battery.e0 = number(jb, "e0", where + ".battery");
            p.demand = series(e, "demand", horizon, where);
            p.res = series(e, "res", horizon, where);
            const json& jg = require(e, "p2g", where);
            p.buy_max = number(jg, "buy_max", where + ".p2g");
            p.sell_max = number(jg, "sell_max", where + ".p2g");
            const json& jpart = require(e, "partners", where);
            if (!jpart.is_array()) {
                throw SchemaError(where + ".partners: expected an array");
            }
            for (const json& id : jpart) {
                if (!id.is_number_integer()) {
                    throw SchemaError(where + ".partners: ids must be integers");
                }
                p.partners.push_back(id.get<int>());
            }
            p.import_limit = series(e, "import_limit", horizon, where);
            cfg.prosumers.push_back(std::move(p));
        }

        const json& jm = require(doc, "market", "case");
        MarketParams& m = cfg.market;
        m.fit = series(jm, "fit", horizon, "market");
        m.tou = series(jm, "tou", horizon, "market");
        m.pi = series(jm, "pi", horizon, "market");
        m.rho = number(jm, "rho", "market");
        m.alpha = number(jm, "alpha", "market");
        m.m0 = number(jm, "m0", "market");
        m.tau_m = number(jm, "tau_m", "market");
        m.scenarios = integer(jm, "scenarios", "market");
        const json& jt = require(jm, "thresholds", "market");
        m.thresholds.chi_es = number(jt, "chi_es", "market.thresholds");
        m.thresholds.chi_et = number(jt, "chi_et", "market.thresholds");
        m.thresholds.chi_ds = number(jt, "chi_ds", "market.thresholds");
        m.thresholds.chi_dt = number(jt, "chi_dt", "market.thresholds");
        m.max_iters = integer(jm, "max_iters", "market");
        m.solver_tol = number(jm, "solver_tol", "market");
        if (jm.contains("terminal_soc")) {
            if (!jm.at("terminal_soc").is_boolean()) {
                throw SchemaError("market.terminal_soc: expected a boolean");
            }
            m.terminal_soc = jm.at("terminal_soc").get<bool>();
        }
        if (jm.contains("dso_steps")) {
            m.dso_steps = integer(jm, "dso_steps", "market");
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("case document: ") + e.what());
    }

    validate(cfg);
    return cfg;
}

CaseConfig load_case_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw CaseError("cannot open case file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return load_case(buf.str());
}

std::string serialize_case(const CaseConfig& cfg)
{
    const NetworkCase& net = cfg.network;
    json jn;
    jn["horizon"] = net.horizon;
    jn["dt"] = net.dt;
    jn["nodes"] = net.nodes;
    json lines = json::array();
    for (const Line& ln : net.lines) {
        lines.push_back({{"from", ln.from}, {"to", ln.to}, {"r", ln.r}, {"x", ln.x}, {"s_max", ln.s_max}});
    }
    jn["lines"] = lines;
    jn["v0"] = net.v0;
    jn["vmin"] = to_array(net.vmin);
    jn["vmax"] = to_array(net.vmax);
    json loads = json::object();
    for (int i = 0; i < net.num_nodes(); ++i) {
        if (net.load_p.row(i).cwiseAbs().maxCoeff() == 0.0 && net.load_q.row(i).cwiseAbs().maxCoeff() == 0.0) {
            continue;
        }
        loads[std::to_string(net.nodes[i])] = {{"p", to_array(net.load_p.row(i).transpose())},
                                               {"q", to_array(net.load_q.row(i).transpose())}};
    }
    jn["fixed_loads"] = loads;

    json jp = json::array();
    for (const ProsumerSpec& p : cfg.prosumers) {
        jp.push_back({{"node", p.node},
                      {"battery",
                       {{"p_min", p.battery.p_min},
                        {"p_max", p.battery.p_max},
                        {"e_min", p.battery.e_min},
                        {"e_max", p.battery.e_max},
                        {"e0", p.battery.e0}}},
                      {"demand", to_array(p.demand)},
                      {"res", to_array(p.res)},
                      {"p2g", {{"buy_max", p.buy_max}, {"sell_max", p.sell_max}}},
                      {"partners", p.partners},
                      {"import_limit", to_array(p.import_limit)}});
    }

    const MarketParams& m = cfg.market;
    json jm;
    jm["fit"] = to_array(m.fit);
    jm["tou"] = to_array(m.tou);
    jm["pi"] = to_array(m.pi);
    jm["rho"] = m.rho;
    jm["alpha"] = m.alpha;
    jm["m0"] = m.m0;
    jm["tau_m"] = m.tau_m;
    jm["scenarios"] = m.scenarios;
    jm["thresholds"] = {{"chi_es", m.thresholds.chi_es},
                        {"chi_et", m.thresholds.chi_et},
                        {"chi_ds", m.thresholds.chi_ds},
                        {"chi_dt", m.thresholds.chi_dt}};
    jm["max_iters"] = m.max_iters;
    jm["solver_tol"] = m.solver_tol;
    jm["terminal_soc"] = m.terminal_soc;
    jm["dso_steps"] = m.dso_steps;

    json doc;
    doc["network"] = jn;
    doc["prosumers"] = jp;
    doc["market"] = jm;
    return doc.dump(2);
}

std::vector<int> path_to_root(const NetworkCase& net, NodeId node)
{
    int u = net.node_index(node);
    std::vector<int> path;
    while (net.topo.parent_line[u] >= 0) {
        const int j = net.topo.parent_line[u];
        path.push_back(j);
        u = net.topo.upstream[j];
    }
    return path;
}

}  // namespace p2p2g
