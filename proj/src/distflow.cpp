#include "p2p2g/distflow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <string>

namespace p2p2g {

PowerFlowSolution sweep_powerflow(const NetworkCase& net, const Injections& inj, const SweepSettings& settings)
{
    const int n = net.num_nodes();
    const int nl = net.num_lines();
    const int horizon = net.horizon;
    const Topology& topo = net.topo;
    if (inj.p.rows() != n || inj.q.rows() != n || inj.p.cols() != horizon || inj.q.cols() != horizon) {
        throw std::invalid_argument("injections must be node x period");
    }

    PowerFlowSolution sol;
    sol.fp = Eigen::MatrixXd::Zero(nl, horizon);
    sol.fq = Eigen::MatrixXd::Zero(nl, horizon);
    sol.l = Eigen::MatrixXd::Zero(nl, horizon);
    sol.v = Eigen::MatrixXd::Constant(n, horizon, net.v0);
    sol.p0 = Eigen::VectorXd::Zero(horizon);
    sol.q0 = Eigen::VectorXd::Zero(horizon);

    const double w0 = net.v0 * net.v0;
    Eigen::VectorXd w(n);
    Eigen::VectorXd fp(nl), fq(nl), l(nl);

    for (int t = 0; t < horizon; ++t) {
        w.setConstant(w0);
        l.setZero();
        bool converged = false;
        for (int sweep = 0; sweep < settings.max_sweeps; ++sweep) {
            double change = 0.0;
            for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
                const int b = *it;
                const int j = topo.parent_line[b];
                if (j < 0) {
                    continue;
                }
                double sp = -inj.p(b, t);
                double sq = -inj.q(b, t);
                for (int k : topo.child_lines[b]) {
                    sp += fp[k];
                    sq += fq[k];
                }
                fp[j] = sp + net.lines[j].r * l[j];
                fq[j] = sq + net.lines[j].x * l[j];
                const double lj = (fp[j] * fp[j] + fq[j] * fq[j]) / w[topo.upstream[j]];
                change = std::max(change, std::abs(lj - l[j]));
                l[j] = lj;
            }
            for (int b : topo.order) {
                const int j = topo.parent_line[b];
                if (j < 0) {
                    continue;
                }
                const Line& ln = net.lines[j];
                const double wa = w[topo.upstream[j]];
                const double wb = wa - 2.0 * (ln.r * fp[j] + ln.x * fq[j]) + (ln.r * ln.r + ln.x * ln.x) * l[j];
                if (!(wb > 0.0)) {
                    throw VoltageCollapse("squared voltage at node " + std::to_string(net.nodes[b]) +
                                          " became non-positive at period " + std::to_string(t));
                }
                change = std::max(change, std::abs(wb - w[b]));
                w[b] = wb;
            }
            if (!std::isfinite(change)) {
                throw VoltageCollapse("power flow diverged at period " + std::to_string(t));
            }
            if (change <= settings.tol) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            throw NonConvergence("power flow sweep did not converge at period " + std::to_string(t));
        }
        // Final backward pass so flows and currents match the converged voltages.
        for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
            const int b = *it;
            const int j = topo.parent_line[b];
            if (j < 0) {
                continue;
            }
            double sp = -inj.p(b, t);
            double sq = -inj.q(b, t);
            for (int k : topo.child_lines[b]) {
                sp += fp[k];
                sq += fq[k];
            }
            fp[j] = sp + net.lines[j].r * l[j];
            fq[j] = sq + net.lines[j].x * l[j];
            l[j] = (fp[j] * fp[j] + fq[j] * fq[j]) / w[topo.upstream[j]];
        }
        sol.fp.col(t) = fp;
        sol.fq.col(t) = fq;
        sol.l.col(t) = l;
        sol.v.col(t) = w.cwiseSqrt();
        double p0 = -inj.p(topo.root, t);
        double q0 = -inj.q(topo.root, t);
        for (int k : topo.child_lines[topo.root]) {
            p0 += fp[k];
            q0 += fq[k];
        }
        sol.p0[t] = p0;
        sol.q0[t] = q0;
    }
    return sol;
}

Injections nodal_injections(const CaseConfig& cfg, const Eigen::MatrixXd& prosumer_export, double scale)
{
    Injections inj;
    inj.p = -cfg.network.load_p;
    inj.q = -cfg.network.load_q;
    for (int i = 0; i < cfg.num_prosumers(); ++i) {
        inj.p.row(cfg.prosumer_node[i]) += scale * prosumer_export.row(i);
    }
    return inj;
}

double check_exactness(const NetworkCase& net, const PowerFlowSolution& sol)
{
    double worst = 0.0;
    for (int t = 0; t < sol.l.cols(); ++t) {
        for (int j = 0; j < net.num_lines(); ++j) {
            const double va = sol.v(net.topo.upstream[j], t);
            const double f2 = sol.fp(j, t) * sol.fp(j, t) + sol.fq(j, t) * sol.fq(j, t);
            worst = std::max(worst, std::abs(sol.l(j, t) * va * va - f2) / std::max(1.0, f2));
        }
    }
    return worst;
}

double loss_cost(const NetworkCase& net, const PowerFlowSolution& sol, const Eigen::VectorXd& pi, double dt)
{
    double cost = 0.0;
    for (int t = 0; t < sol.l.cols(); ++t) {
        for (int j = 0; j < net.num_lines(); ++j) {
            cost += pi[t] * dt * net.lines[j].r * sol.l(j, t);
        }
    }
    return cost;
}

double loss_energy(const NetworkCase& net, const PowerFlowSolution& sol)
{
    return loss_cost(net, sol, Eigen::VectorXd::Ones(sol.l.cols()), net.dt);
}

ViolationCounts count_violations(const NetworkCase& net, const PowerFlowSolution& sol, double tol)
{
    ViolationCounts out;
    for (int t = 0; t < sol.v.cols(); ++t) {
        for (int i = 0; i < net.num_nodes(); ++i) {
            if (i == net.topo.root) {
                continue;
            }
            if (sol.v(i, t) > net.vmax[i] + tol || sol.v(i, t) < net.vmin[i] - tol) {
                ++out.voltage;
            }
        }
        for (int j = 0; j < net.num_lines(); ++j) {
            const Line& ln = net.lines[j];
            const double send = std::hypot(sol.fp(j, t), sol.fq(j, t));
            const double recv = std::hypot(sol.fp(j, t) - ln.r * sol.l(j, t), sol.fq(j, t) - ln.x * sol.l(j, t));
            if (std::max(send, recv) > ln.s_max + tol) {
                ++out.overload;
            }
        }
    }
    return out;
}

void write_powerflow_csv(std::ostream& out, const NetworkCase& net, const std::vector<PowerFlowSolution>& scenarios)
{
    out << "scenario,t,element_type,element_id,quantity,value\n";
    out << std::setprecision(12);
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        const PowerFlowSolution& sol = scenarios[s];
        for (int t = 0; t < sol.v.cols(); ++t) {
            for (int j = 0; j < net.num_lines(); ++j) {
                out << s + 1 << ',' << t << ",line," << j << ",fp," << sol.fp(j, t) << '\n';
                out << s + 1 << ',' << t << ",line," << j << ",fq," << sol.fq(j, t) << '\n';
                out << s + 1 << ',' << t << ",line," << j << ",l," << sol.l(j, t) << '\n';
            }
            for (int i = 0; i < net.num_nodes(); ++i) {
                out << s + 1 << ',' << t << ",node," << net.nodes[i] << ",v," << sol.v(i, t) << '\n';
            }
            out << s + 1 << ',' << t << ",root,0,p0," << sol.p0[t] << '\n';
            out << s + 1 << ',' << t << ",root,0,q0," << sol.q0[t] << '\n';
        }
    }
}

NetworkLayout add_network_block(ProgramBuilder& b, const CaseConfig& cfg, const std::vector<std::vector<int>>& envelope,
                                int scenarios, const Eigen::VectorXd& pi)
{
    const NetworkCase& net = cfg.network;
    const Topology& topo = net.topo;
    const int n = net.num_nodes();
    const int nl = net.num_lines();
    const int horizon = net.horizon;
    const double w0 = net.v0 * net.v0;
    if (scenarios < 1) {
        throw std::invalid_argument("scenario count must be at least 1");
    }

    std::vector<int> prosumer_of(n, -1);
    for (int i = 0; i < cfg.num_prosumers(); ++i) {
        prosumer_of[cfg.prosumer_node[i]] = i;
    }

    NetworkLayout layout;
    layout.lines = nl;
    layout.nodes = n;
    layout.horizon = horizon;
    for (int s = 1; s <= scenarios; ++s) {
        ScenarioLayout sl;
        sl.weight = static_cast<double>(s) / scenarios;
        sl.fp.assign(nl * horizon, -1);
        sl.fq.assign(nl * horizon, -1);
        sl.l.assign(nl * horizon, -1);
        sl.w.assign(n * horizon, -1);
        sl.bal_p.assign(n * horizon, -1);
        sl.bal_q.assign(n * horizon, -1);
        sl.vmax_row.assign(n * horizon, -1);
        sl.vmin_row.assign(n * horizon, -1);
        sl.drop.assign(nl * horizon, -1);
        sl.flow_cone.assign(nl * horizon, -1);
        sl.send_cone.assign(nl * horizon, -1);
        sl.recv_cone.assign(nl * horizon, -1);

        for (int t = 0; t < horizon; ++t) {
            for (int j = 0; j < nl; ++j) {
                sl.fp[t * nl + j] = b.add_variable();
                sl.fq[t * nl + j] = b.add_variable();
                sl.l[t * nl + j] = b.add_variable();
                b.add_linear_cost(sl.l[t * nl + j], pi[t] * net.lines[j].r * net.dt / scenarios);
            }
            for (int i = 0; i < n; ++i) {
                if (i != topo.root) {
                    sl.w[t * n + i] = b.add_variable();
                }
            }
            sl.p0.push_back(b.add_variable());
            sl.q0.push_back(b.add_variable());

            for (int node = 0; node < n; ++node) {
                const int j = topo.parent_line[node];
                if (j < 0) {
                    continue;
                }
                const Line& ln = net.lines[j];
                std::vector<Term> tp{{sl.fp[t * nl + j], 1.0}, {sl.l[t * nl + j], -ln.r}};
                std::vector<Term> tq{{sl.fq[t * nl + j], 1.0}, {sl.l[t * nl + j], -ln.x}};
                for (int k : topo.child_lines[node]) {
                    tp.push_back({sl.fp[t * nl + k], -1.0});
                    tq.push_back({sl.fq[t * nl + k], -1.0});
                }
                if (prosumer_of[node] >= 0) {
                    tp.push_back({envelope[prosumer_of[node]][t], sl.weight});
                }
                sl.bal_p[t * n + node] = b.add_equality(tp, net.load_p(node, t));
                sl.bal_q[t * n + node] = b.add_equality(tq, net.load_q(node, t));
            }
            {
                std::vector<Term> tp{{sl.p0[t], 1.0}};
                std::vector<Term> tq{{sl.q0[t], 1.0}};
                for (int k : topo.child_lines[topo.root]) {
                    tp.push_back({sl.fp[t * nl + k], -1.0});
                    tq.push_back({sl.fq[t * nl + k], -1.0});
                }
                sl.root_p.push_back(b.add_equality(tp, net.load_p(topo.root, t)));
                sl.root_q.push_back(b.add_equality(tq, net.load_q(topo.root, t)));
            }
            for (int j = 0; j < nl; ++j) {
                const Line& ln = net.lines[j];
                const int a = topo.upstream[j];
                const int d = topo.downstream[j];
                const int fp = sl.fp[t * nl + j];
                const int fq = sl.fq[t * nl + j];
                const int l = sl.l[t * nl + j];
                std::vector<Term> drop{{sl.w[t * n + d], 1.0},
                                       {fp, 2.0 * ln.r},
                                       {fq, 2.0 * ln.x},
                                       {l, -(ln.r * ln.r + ln.x * ln.x)}};
                double rhs = 0.0;
                AffineExpr wa;
                if (a == topo.root) {
                    rhs = w0;
                    wa.constant = w0;
                } else {
                    drop.push_back({sl.w[t * n + a], -1.0});
                    wa.terms.push_back({sl.w[t * n + a], 1.0});
                }
                sl.drop[t * nl + j] = b.add_equality(drop, rhs);

                AffineExpr lead{{{l, 1.0}}, wa.constant};
                AffineExpr tail{{{l, 1.0}}, -wa.constant};
                for (const Term& term : wa.terms) {
                    lead.terms.push_back(term);
                    tail.terms.push_back({term.var, -term.coef});
                }
                sl.flow_cone[t * nl + j] = b.add_soc({lead, {{{fp, 2.0}}, 0.0}, {{{fq, 2.0}}, 0.0}, tail});
                sl.send_cone[t * nl + j] = b.add_soc({{{}, ln.s_max}, {{{fp, 1.0}}, 0.0}, {{{fq, 1.0}}, 0.0}});
                sl.recv_cone[t * nl + j] = b.add_soc(
                    {{{}, ln.s_max}, {{{fp, 1.0}, {l, -ln.r}}, 0.0}, {{{fq, 1.0}, {l, -ln.x}}, 0.0}});
            }
            for (int i = 0; i < n; ++i) {
                if (i == topo.root) {
                    continue;
                }
                const auto rows = b.add_bounds(sl.w[t * n + i], net.vmin[i] * net.vmin[i], net.vmax[i] * net.vmax[i]);
                sl.vmin_row[t * n + i] = rows.first;
                sl.vmax_row[t * n + i] = rows.second;
            }
        }
        layout.scenarios.push_back(std::move(sl));
    }
    return layout;
}

std::vector<PowerFlowSolution> extract_flows(const NetworkLayout& layout, const CaseConfig& cfg, const ConicSolution& sol)
{
    const NetworkCase& net = cfg.network;
    const int n = layout.nodes;
    const int nl = layout.lines;
    const int horizon = layout.horizon;
    std::vector<PowerFlowSolution> out;
    for (const ScenarioLayout& sl : layout.scenarios) {
        PowerFlowSolution pf;
        pf.fp.resize(nl, horizon);
        pf.fq.resize(nl, horizon);
        pf.l.resize(nl, horizon);
        pf.v.resize(n, horizon);
        pf.p0.resize(horizon);
        pf.q0.resize(horizon);
        for (int t = 0; t < horizon; ++t) {
            for (int j = 0; j < nl; ++j) {
                pf.fp(j, t) = sol.x[sl.fp[t * nl + j]];
                pf.fq(j, t) = sol.x[sl.fq[t * nl + j]];
                pf.l(j, t) = sol.x[sl.l[t * nl + j]];
            }
            for (int i = 0; i < n; ++i) {
                const int var = sl.w[t * n + i];
                pf.v(i, t) = var < 0 ? net.v0 : std::sqrt(std::max(0.0, sol.x[var]));
            }
            pf.p0[t] = sol.x[sl.p0[t]];
            pf.q0[t] = sol.x[sl.q0[t]];
        }
        out.push_back(std::move(pf));
    }
    return out;
}

std::vector<ScenarioDuals> extract_duals(const NetworkLayout& layout, const CaseConfig& cfg, const ConicProgram& prog,
                                         const ConicSolution& sol)
{
    const NetworkCase& net = cfg.network;
    const int n = layout.nodes;
    const int nl = layout.lines;
    const int horizon = layout.horizon;
    std::vector<ScenarioDuals> out;
    for (const ScenarioLayout& sl : layout.scenarios) {
        ScenarioDuals d;
        d.eta = Eigen::MatrixXd::Zero(nl, horizon);
        d.delta = Eigen::MatrixXd::Zero(nl, horizon);
        d.tau_plus = Eigen::MatrixXd::Zero(n, horizon);
        d.tau_minus = Eigen::MatrixXd::Zero(n, horizon);
        d.omega_p = Eigen::VectorXd::Zero(horizon);
        d.omega_q = Eigen::VectorXd::Zero(horizon);
        d.bal_p = Eigen::MatrixXd::Zero(n, horizon);
        for (int t = 0; t < horizon; ++t) {
            for (int j = 0; j < nl; ++j) {
                const double smax = net.lines[j].s_max;
                d.eta(j, t) = sol.z[prog.soc_offsets[sl.send_cone[t * nl + j]]] / (2.0 * smax);
                d.delta(j, t) = sol.z[prog.soc_offsets[sl.recv_cone[t * nl + j]]] / (2.0 * smax);
            }
            for (int i = 0; i < n; ++i) {
                if (sl.vmax_row[t * n + i] >= 0) {
                    d.tau_plus(i, t) = sol.z[sl.vmax_row[t * n + i]];
                    d.tau_minus(i, t) = sol.z[sl.vmin_row[t * n + i]];
                }
                if (sl.bal_p[t * n + i] >= 0) {
                    d.bal_p(i, t) = sol.y[sl.bal_p[t * n + i]];
                }
            }
            d.omega_p[t] = sol.y[sl.root_p[t]];
            d.omega_q[t] = sol.y[sl.root_q[t]];
        }
        out.push_back(std::move(d));
    }
    return out;
}

OpfProgram build_socp_opf(const CaseConfig& cfg, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi, double rho,
                          int scenarios, const Eigen::VectorXd& pi)
{
    const int np = cfg.num_prosumers();
    const int horizon = cfg.horizon();
    if (ask.rows() != np || ask.cols() != horizon || psi.rows() != np || psi.cols() != horizon) {
        throw std::invalid_argument("asks and DOE prices must be prosumer x period");
    }
    if (!ask.allFinite() || !psi.allFinite()) {
        throw std::invalid_argument("asks and DOE prices must be finite");
    }
    const double dt = cfg.network.dt;
    ProgramBuilder b;
    OpfProgram out;
    out.allocation.assign(np, std::vector<int>(horizon, -1));
    for (int i = 0; i < np; ++i) {
        for (int t = 0; t < horizon; ++t) {
            const int var = b.add_variable();
            out.allocation[i][t] = var;
            // dt * [psi (P - ask) + rho/2 (P - ask)^2]
            b.add_quadratic_cost(var, var, 0.5 * rho * dt);
            b.add_linear_cost(var, dt * (psi(i, t) - rho * ask(i, t)));
            b.add_constant_cost(dt * (-psi(i, t) * ask(i, t) + 0.5 * rho * ask(i, t) * ask(i, t)));
        }
    }
    out.layout = add_network_block(b, cfg, out.allocation, scenarios, pi);
    out.conic = b.build();
    return out;
}

OpfSolution solve_opf(const CaseConfig& cfg, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi, double rho,
                      int scenarios, const Eigen::VectorXd& pi, const ConicSettings& settings)
{
    const OpfProgram prog = build_socp_opf(cfg, ask, psi, rho, scenarios, pi);
    const ConicSolution sol = solve_conic(prog.conic, settings);
    OpfSolution out;
    const int np = cfg.num_prosumers();
    const int horizon = cfg.horizon();
    out.allocation.resize(np, horizon);
    for (int i = 0; i < np; ++i) {
        for (int t = 0; t < horizon; ++t) {
            out.allocation(i, t) = sol.x[prog.allocation[i][t]];
        }
    }
    out.flows = extract_flows(prog.layout, cfg, sol);
    out.duals = extract_duals(prog.layout, cfg, prog.conic, sol);
    out.objective = sol.objective;
    out.iterations = sol.iterations;
    for (const PowerFlowSolution& pf : out.flows) {
        out.loss += loss_cost(cfg.network, pf, pi, cfg.network.dt) / scenarios;
        out.exactness = std::max(out.exactness, check_exactness(cfg.network, pf));
    }
    return out;
}

}  // namespace p2p2g
