#include "p2p2g/report.hpp"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace p2p2g {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << std::setprecision(17);
    return out;
}

int node_id(const CaseConfig& cfg, int prosumer) { return cfg.prosumers[prosumer].node; }

}  // namespace

std::string config_hash(const CaseConfig& config)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : serialize_case(config)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

void write_iteration_csv(std::ostream& out, const std::vector<IterationTrace>& trace)
{
    out << "iter,r_es,r_ec,r_et,r_ds,r_dt,threshold,messages_sent,messages_censored,dso_exactness\n";
    for (const IterationTrace& t : trace) {
        out << t.iteration << ',' << t.r_es << ',' << t.r_ec << ',' << t.r_et << ',' << t.r_ds << ',' << t.r_dt << ','
            << t.threshold << ',' << t.messages_sent << ',' << t.messages_censored << ',' << t.dso_exactness << '\n';
    }
}

void write_agent_csv(std::ostream& out, const CaseConfig& cfg, const std::vector<AgentTraceRow>& rows)
{
    out << "iter,i,j,t,e,e_hat,lambda,sent\n";
    for (const AgentTraceRow& r : rows) {
        out << r.iteration << ',' << node_id(cfg, r.i) << ',' << node_id(cfg, r.j) << ',' << r.t << ',' << r.e << ','
            << r.e_hat << ',' << r.lambda << ',' << (r.sent ? 1 : 0) << '\n';
    }
}

void write_doe_csv(std::ostream& out, const CaseConfig& cfg, const std::vector<DoeTraceRow>& rows)
{
    out << "iter,i,t,ask,allocation,psi\n";
    for (const DoeTraceRow& r : rows) {
        out << r.iteration << ',' << node_id(cfg, r.i) << ',' << r.t << ',' << r.ask << ',' << r.allocation << ','
            << r.psi << '\n';
    }
}

void write_breakdown_csv(std::ostream& out, const CaseConfig& cfg, const PriceBreakdown& br)
{
    const std::vector<std::pair<const char*, const Eigen::MatrixXd*>> parts = {
        {"congestion_send", &br.congestion_send}, {"congestion_recv", &br.congestion_recv},
        {"voltage", &br.voltage},                 {"energy", &br.energy},
        {"loss", &br.loss},                       {"penalty", &br.penalty},
        {"residual", &br.residual}};
    out << "i,t,component,value\n";
    for (int i = 0; i < br.residual.rows(); ++i) {
        for (int t = 0; t < br.residual.cols(); ++t) {
            for (const auto& [name, m] : parts) {
                out << node_id(cfg, i) << ',' << t << ',' << name << ',' << (*m)(i, t) << '\n';
            }
        }
    }
}

void write_decisions_csv(std::ostream& out, const CaseConfig& cfg, const ClearingResult& res)
{
    out << "i,t,p_buy,p_sell,p_batt,soc,p_p2p,ask,p_inj,allocation,psi\n";
    for (std::size_t i = 0; i < res.decisions.size(); ++i) {
        const LocalDecision& d = res.decisions[i];
        for (int t = 0; t < d.p_inj.size(); ++t) {
            out << node_id(cfg, static_cast<int>(i)) << ',' << t << ',' << d.p_buy[t] << ',' << d.p_sell[t] << ','
                << d.p_batt[t] << ',' << d.soc[t] << ',' << d.p_p2p[t] << ',' << d.ask[t] << ',' << d.p_inj[t] << ','
                << res.envelope.allocation(i, t) << ',' << res.envelope.psi(i, t) << '\n';
        }
    }
}

json integrity_json(const IntegrityReport& r)
{
    return json{{"voltage_violations", r.voltage_violations},
                {"overloads", r.overloads},
                {"loss_energy", r.loss_energy},
                {"samples", r.samples},
                {"sample_voltage_violations", r.sample_voltage_violations},
                {"sample_overloads", r.sample_overloads},
                {"conservation_error", r.conservation_error},
                {"collapsed", r.collapsed}};
}

json manifest(const CaseConfig& cfg, const ClearingResult& res, const std::string& case_path, const RunOptions& opt)
{
    double surplus_total = 0.0;
    for (double s : res.surpluses) {
        surplus_total += s;
    }
    json m;
    m["case"] = case_path;
    m["mode"] = to_string(res.mode);
    m["config_hash"] = config_hash(cfg);
    m["doe"] = opt.doe;
    m["p2p"] = opt.p2p;
    m["seed"] = opt.seed;
    m["iterations"] = res.iterations;
    m["converged"] = res.converged;
    m["objective"] = res.objective;
    m["grid_cost"] = res.grid_cost;
    m["network_cost"] = res.network_cost;
    m["messages_sent"] = res.messages_sent;
    m["messages_censored"] = res.messages_censored;
    m["surpluses"] = res.surpluses;
    m["surplus_total"] = surplus_total;
    m["integrity"] = integrity_json(res.integrity);
    if (!res.trace.empty()) {
        const IterationTrace& t = res.trace.back();
        m["residuals"] = {{"r_es", t.r_es}, {"r_ec", t.r_ec}, {"r_et", t.r_et}, {"r_ds", t.r_ds}, {"r_dt", t.r_dt}};
    }
    return m;
}

void write_run(const std::filesystem::path& dir, const CaseConfig& cfg, const ClearingResult& res,
               const std::string& case_path, const RunOptions& opt)
{
    std::filesystem::create_directories(dir);
    open_out(dir / "manifest.json") << manifest(cfg, res, case_path, opt).dump(2) << '\n';
    open_out(dir / "integrity.json") << integrity_json(res.integrity).dump(2) << '\n';
    {
        auto out = open_out(dir / "iterations.csv");
        write_iteration_csv(out, res.trace);
    }
    {
        auto out = open_out(dir / "agents.csv");
        write_agent_csv(out, cfg, res.agent_trace);
    }
    {
        auto out = open_out(dir / "doe.csv");
        write_doe_csv(out, cfg, res.doe_trace);
    }
    if (res.has_breakdown) {
        auto out = open_out(dir / "breakdown.csv");
        write_breakdown_csv(out, cfg, res.breakdown);
    }
    {
        auto out = open_out(dir / "decisions.csv");
        write_decisions_csv(out, cfg, res);
    }
    if (!res.flows.empty()) {
        auto out = open_out(dir / "powerflow.csv");
        write_powerflow_csv(out, cfg.network, res.flows);
    }
}

namespace {

json read_manifest(const std::filesystem::path& dir)
{
    const std::filesystem::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) {
        throw MissingArtifacts("missing " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw MissingArtifacts("unreadable " + path.string() + ": " + e.what());
    }
}

}  // namespace

std::vector<CompareRow> compare_runs(const std::filesystem::path& a, const std::filesystem::path& b)
{
    const json ma = read_manifest(a);
    const json mb = read_manifest(b);
    const std::vector<std::pair<std::string, std::string>> metrics = {
        {"voltage_violations", "/integrity/voltage_violations"},
        {"overloads", "/integrity/overloads"},
        {"loss_energy", "/integrity/loss_energy"},
        {"surplus_total", "/surplus_total"},
        {"objective", "/objective"},
        {"messages_sent", "/messages_sent"},
        {"messages_censored", "/messages_censored"},
        {"iterations", "/iterations"}};
    std::vector<CompareRow> rows;
    for (const auto& [name, pointer] : metrics) {
        const json::json_pointer ptr(pointer);
        if (!ma.contains(ptr) || !mb.contains(ptr)) {
            throw MissingArtifacts("manifest lacks " + name);
        }
        CompareRow r{name, ma[ptr].get<double>(), mb[ptr].get<double>(), 0.0};
        r.delta = r.b - r.a;
        rows.push_back(r);
    }
    const auto& sa = ma["surpluses"];
    const auto& sb = mb["surpluses"];
    for (std::size_t i = 0; i < std::min(sa.size(), sb.size()); ++i) {
        CompareRow r{"surplus_" + std::to_string(i), sa[i].get<double>(), sb[i].get<double>(), 0.0};
        r.delta = r.b - r.a;
        rows.push_back(r);
    }
    return rows;
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows)
{
    out << std::setprecision(17) << "metric,a,b,delta\n";
    for (const CompareRow& r : rows) {
        out << r.metric << ',' << r.a << ',' << r.b << ',' << r.delta << '\n';
    }
}

void write_compare_text(std::ostream& out, const std::vector<CompareRow>& rows)
{
    out << std::left << std::setw(22) << "metric" << std::right << std::setw(16) << "a" << std::setw(16) << "b"
        << std::setw(16) << "delta" << '\n';
    for (const CompareRow& r : rows) {
        out << std::left << std::setw(22) << r.metric << std::right << std::setprecision(8) << std::setw(16) << r.a
            << std::setw(16) << r.b << std::setw(16) << r.delta << '\n';
    }
}

}  // namespace p2p2g
