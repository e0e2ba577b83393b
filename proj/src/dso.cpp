#include "p2p2g/dso.hpp"

#include <cmath>

namespace p2p2g {

namespace {

struct Probe {
    Eigen::MatrixXd send;  // line x period: fp^2 + fq^2
    Eigen::MatrixXd recv;  // (fp - R l)^2 + (fq - X l)^2
    Eigen::MatrixXd w;     // node x period: v^2
    Eigen::MatrixXd l;
};

Probe probe(const NetworkCase& net, const Injections& inj)
{
    PowerFlowSolution pf;
    try {
        pf = sweep_powerflow(net, inj, SweepSettings{1e-14, 500});
    } catch (const PowerFlowError& e) {
        throw SensitivityError(std::string("finite-difference power flow failed: ") + e.what());
    }
    Probe out;
    const int nl = net.num_lines();
    out.send = pf.fp.cwiseProduct(pf.fp) + pf.fq.cwiseProduct(pf.fq);
    out.recv.resize(nl, pf.fp.cols());
    for (int j = 0; j < nl; ++j) {
        const Line& ln = net.lines[j];
        const Eigen::ArrayXd a = pf.fp.row(j).array() - ln.r * pf.l.row(j).array();
        const Eigen::ArrayXd b = pf.fq.row(j).array() - ln.x * pf.l.row(j).array();
        out.recv.row(j) = (a * a + b * b).matrix().transpose();
    }
    out.w = pf.v.cwiseProduct(pf.v);
    out.l = pf.l;
    return out;
}

}  // namespace

OpfSolution solve_dso(const CaseConfig& cfg, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi,
                      const ConicSettings& settings)
{
    return solve_opf(cfg, ask, psi, cfg.market.rho, cfg.market.scenarios, cfg.market.pi, settings);
}

OpfSolution solve_dso(const CaseConfig& cfg, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi)
{
    ConicSettings settings;
    settings.tol = cfg.market.solver_tol;
    return solve_dso(cfg, ask, psi, settings);
}

Eigen::MatrixXd update_doe_price(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& allocation,
                                 const Eigen::MatrixXd& ask, double rho)
{
    return psi + rho * (allocation - ask);
}

PriceBreakdown decompose_price(const CaseConfig& cfg, const OpfSolution& sol, const Eigen::MatrixXd& psi,
                               const Eigen::MatrixXd& ask, double step)
{
    const NetworkCase& net = cfg.network;
    const int np = cfg.num_prosumers();
    const int horizon = cfg.horizon();
    const int nl = net.num_lines();
    const int n = net.num_nodes();
    const int scenarios = static_cast<int>(sol.flows.size());
    const double dt = net.dt;

    PriceBreakdown out;
    for (Eigen::MatrixXd* m : {&out.congestion_send, &out.congestion_recv, &out.voltage, &out.energy, &out.loss,
                               &out.penalty, &out.residual}) {
        m->setZero(np, horizon);
    }

    for (int s = 0; s < scenarios; ++s) {
        const double weight = static_cast<double>(s + 1) / scenarios;
        const ScenarioDuals& d = sol.duals[s];
        const Injections base = nodal_injections(cfg, sol.allocation, weight);
        for (int i = 0; i < np; ++i) {
            const int node = cfg.prosumer_node[i];
            Injections up = base;
            Injections down = base;
            up.p.row(node).array() += step;
            down.p.row(node).array() -= step;
            // Periods are independent, so one probe pair covers all of them.
            const Probe hi = probe(net, up);
            const Probe lo = probe(net, down);
            for (int t = 0; t < horizon; ++t) {
                double send = 0.0, recv = 0.0, volt = 0.0, loss_r = 0.0, loss_x = 0.0;
                for (int j = 0; j < nl; ++j) {
                    send += d.eta(j, t) * (hi.send(j, t) - lo.send(j, t)) / (2.0 * step);
                    recv += d.delta(j, t) * (hi.recv(j, t) - lo.recv(j, t)) / (2.0 * step);
                    const double dl = (hi.l(j, t) - lo.l(j, t)) / (2.0 * step);
                    loss_r += net.lines[j].r * dl;
                    loss_x += net.lines[j].x * dl;
                }
                for (int k = 0; k < n; ++k) {
                    volt += (d.tau_plus(k, t) - d.tau_minus(k, t)) * (hi.w(k, t) - lo.w(k, t)) / (2.0 * step);
                }
                const double loss = (cfg.market.pi[t] * dt / scenarios + d.omega_p[t]) * loss_r + d.omega_q[t] * loss_x;
                const double scale = weight / dt;
                out.congestion_send(i, t) += scale * send;
                out.congestion_recv(i, t) += scale * recv;
                out.voltage(i, t) += scale * volt;
                out.energy(i, t) += scale * -d.omega_p[t];
                out.loss(i, t) += scale * loss;
            }
        }
    }
    out.penalty = cfg.market.rho * (sol.allocation - ask);
    out.residual = (out.total() + psi).cwiseAbs();
    return out;
}

double dso_cost(const CaseConfig& cfg, const Eigen::MatrixXd& allocation, int scenarios, const Eigen::VectorXd& pi)
{
    double cost = 0.0;
    for (int s = 1; s <= scenarios; ++s) {
        const PowerFlowSolution pf =
            sweep_powerflow(cfg.network, nodal_injections(cfg, allocation, static_cast<double>(s) / scenarios));
        cost += loss_cost(cfg.network, pf, pi, cfg.network.dt);
    }
    return cost / scenarios;
}

}  // namespace p2p2g
