#include "p2p2g/prosumer.hpp"

#include <cmath>
#include <sstream>

namespace p2p2g {

namespace {

double value_of(const ConicSolution& sol, int var) { return var < 0 ? 0.0 : sol.x[var]; }

Eigen::VectorXd values_of(const ConicSolution& sol, const std::vector<int>& vars)
{
    Eigen::VectorXd out(vars.size());
    for (std::size_t t = 0; t < vars.size(); ++t) {
        out[t] = value_of(sol, vars[t]);
    }
    return out;
}

Eigen::VectorXd duals_of(const Eigen::VectorXd& mult, const std::vector<int>& rows, double dt)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t] >= 0) {
            out[t] = mult[rows[t]] / dt;
        }
    }
    return out;
}

}  // namespace

ProsumerLayout add_prosumer_block(ProgramBuilder& b, const ProsumerSpec& spec, const MarketParams& market, double dt,
                                  int num_partners, const Eigen::VectorXd* fixed_envelope)
{
    const int horizon = static_cast<int>(spec.demand.size());
    const Battery& batt = spec.battery;
    ProsumerLayout lay;
    lay.trades.assign(num_partners, std::vector<int>(horizon, -1));

    for (int t = 0; t < horizon; ++t) {
        int buy = -1;
        if (spec.buy_max > 0.0) {
            buy = b.add_variable();
            b.add_bounds(buy, 0.0, spec.buy_max);
            b.add_linear_cost(buy, dt * market.tou[t]);
        }
        int sell = -1;
        if (spec.sell_max > 0.0) {
            sell = b.add_variable();
            b.add_bounds(sell, 0.0, spec.sell_max);
            b.add_linear_cost(sell, -dt * market.fit[t]);
        }
        int charge = -1;
        int soc = -1;
        if (batt.present()) {
            charge = b.add_variable();
            b.add_bounds(charge, batt.p_min, batt.p_max);
            soc = b.add_variable();
            double lo = batt.e_min;
            if (t == horizon - 1 && market.terminal_soc) {
                lo = std::max(lo, batt.e0);
            }
            if (lo < batt.e_max) {
                b.add_bounds(soc, lo, batt.e_max);
            } else {
                b.add_equality({{soc, 1.0}}, batt.e_max);
            }
            std::vector<Term> dyn{{soc, 1.0}, {charge, -dt}};
            double rhs = batt.e0;
            if (t > 0) {
                dyn.push_back({lay.soc[t - 1], -1.0});
                rhs = 0.0;
            }
            b.add_equality(dyn, rhs);
        }
        const int p2p = b.add_variable();
        const int inj = b.add_variable();
        std::vector<Term> sum{{p2p, 1.0}};
        for (int k = 0; k < num_partners; ++k) {
            lay.trades[k][t] = b.add_variable();
            sum.push_back({lay.trades[k][t], -1.0});
        }
        lay.p2p_row.push_back(b.add_equality(sum, 0.0));

        std::vector<Term> bal{{p2p, -1.0}};
        std::vector<Term> split{{inj, 1.0}, {p2p, -1.0}};
        if (buy >= 0) {
            bal.push_back({buy, 1.0});
            split.push_back({buy, 1.0});
        }
        if (sell >= 0) {
            bal.push_back({sell, -1.0});
            split.push_back({sell, -1.0});
        }
        if (charge >= 0) {
            bal.push_back({charge, -1.0});
        }
        lay.balance.push_back(b.add_equality(bal, spec.demand[t] - spec.res[t]));
        lay.split.push_back(b.add_equality(split, 0.0));

        int ask = -1;
        if (fixed_envelope != nullptr) {
            lay.doe_row.push_back(b.add_inequality({{inj, 1.0}}, (*fixed_envelope)[t]));
        } else {
            ask = b.add_variable();
            lay.doe_row.push_back(b.add_inequality({{inj, 1.0}, {ask, -1.0}}, 0.0));
        }
        lay.import_row.push_back(b.add_inequality({{inj, -1.0}}, spec.import_limit[t]));

        lay.p_buy.push_back(buy);
        lay.p_sell.push_back(sell);
        lay.p_batt.push_back(charge);
        lay.soc.push_back(soc);
        lay.p2p.push_back(p2p);
        lay.p_inj.push_back(inj);
        lay.ask.push_back(ask);
    }
    return lay;
}

LocalDecision extract_decision(const ProsumerLayout& lay, const ProsumerSpec& spec, const ConicSolution& sol)
{
    const int horizon = static_cast<int>(lay.p_inj.size());
    LocalDecision d;
    d.p_buy = values_of(sol, lay.p_buy);
    d.p_sell = values_of(sol, lay.p_sell);
    d.p_batt = values_of(sol, lay.p_batt);
    d.soc = values_of(sol, lay.soc);
    if (!spec.battery.present()) {
        d.soc.setConstant(spec.battery.e0);
    }
    d.p_p2p = values_of(sol, lay.p2p);
    d.ask = values_of(sol, lay.ask);
    d.p_inj = values_of(sol, lay.p_inj);
    d.trades.resize(static_cast<int>(lay.trades.size()), horizon);
    for (std::size_t k = 0; k < lay.trades.size(); ++k) {
        d.trades.row(k) = values_of(sol, lay.trades[k]).transpose();
    }
    return d;
}

LocalEstimates initial_estimates(const ProsumerSpec& spec, const MarketParams& market, int num_partners)
{
    const int horizon = static_cast<int>(spec.demand.size());
    LocalEstimates est;
    est.e_hat = Eigen::MatrixXd::Zero(num_partners, horizon);
    est.lambda.resize(num_partners, horizon);
    for (int k = 0; k < num_partners; ++k) {
        est.lambda.row(k) = (0.5 * (market.fit + market.tou)).transpose();
    }
    est.psi = Eigen::VectorXd::Zero(horizon);
    est.allocation = Eigen::VectorXd::Constant(horizon, spec.res.size() > 0 ? spec.res.maxCoeff() : 0.0);
    return est;
}

LocalResult solve_local(const ProsumerSpec& spec, const LocalEstimates& est, const MarketParams& market, double dt,
                        const ConicSettings& settings)
{
    const int horizon = static_cast<int>(spec.demand.size());
    const int partners = static_cast<int>(est.e_hat.rows());
    const double rho = market.rho;

    ProgramBuilder b;
    const ProsumerLayout lay =
        add_prosumer_block(b, spec, market, dt, partners, est.envelope_fixed ? &est.allocation : nullptr);
    for (int t = 0; t < horizon; ++t) {
        for (int k = 0; k < partners; ++k) {
            const int e = lay.trades[k][t];
            const double eh = est.e_hat(k, t);
            const double lam = est.lambda(k, t);
            b.add_quadratic_cost(e, e, 0.5 * rho * dt);
            b.add_linear_cost(e, -dt * (lam + rho * eh));
            b.add_constant_cost(dt * (lam * eh + 0.5 * rho * eh * eh));
        }
        if (!est.envelope_fixed) {
            const int a = lay.ask[t];
            const double alloc = est.allocation[t];
            const double psi = est.psi[t];
            b.add_quadratic_cost(a, a, 0.5 * rho * dt);
            b.add_linear_cost(a, -dt * (psi + rho * alloc));
            b.add_constant_cost(dt * (psi * alloc + 0.5 * rho * alloc * alloc));
        }
    }

    const ConicProgram prog = b.build();
    ConicSolution sol;
    try {
        sol = solve_conic(prog, settings);
    } catch (const InfeasibleError& e) {
        std::ostringstream msg;
        msg << "prosumer at node " << spec.node << " has no feasible schedule: " << e.what();
        throw AgentInfeasible(msg.str());
    }

    LocalResult out;
    out.decision = extract_decision(lay, spec, sol);
    if (est.envelope_fixed) {
        out.decision.ask = est.allocation;
    }
    out.prices.phi = duals_of(sol.y, lay.balance, dt);
    out.prices.mu = duals_of(sol.y, lay.p2p_row, dt);
    out.prices.eps = duals_of(sol.y, lay.split, dt);
    out.prices.gamma = duals_of(sol.z, lay.doe_row, dt);
    out.prices.kappa = duals_of(sol.z, lay.import_row, dt);
    out.objective = sol.objective;
    out.iterations = sol.iterations;
    return out;
}

bool censor(const Eigen::MatrixXd& previous, const Eigen::MatrixXd& current, double alpha, double threshold)
{
    return (previous - current).norm() - alpha * threshold >= 0.0;
}

void update_estimates(LocalEstimates& est, const Eigen::MatrixXd& own, const Eigen::MatrixXd& partner, double rho)
{
    est.e_hat = 0.5 * (own - partner);
    est.lambda += rho * (est.e_hat - own);
}

double surplus(const LocalDecision& d, const Eigen::MatrixXd& lambda, const MarketParams& market, double dt)
{
    double total = 0.0;
    for (int t = 0; t < d.p_buy.size(); ++t) {
        total += market.fit[t] * d.p_sell[t] - market.tou[t] * d.p_buy[t];
        for (int k = 0; k < d.trades.rows(); ++k) {
            total += lambda(k, t) * d.trades(k, t);
        }
    }
    return dt * total;
}

}  // namespace p2p2g
