#include "p2p2g/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>

namespace p2p2g {

std::string to_string(Mode mode) { return mode == Mode::Admm ? "admm" : "coca"; }

Mode parse_mode(const std::string& text)
{
    if (text == "admm") {
        return Mode::Admm;
    }
    if (text == "coca") {
        return Mode::Coca;
    }
    throw std::invalid_argument("unknown mode '" + text + "' (expected admm or coca)");
}

MessageBus::MessageBus(int num_prosumers) : inbox_(num_prosumers) {}

void MessageBus::send(const Message& message, Endpoint to)
{
    Record rec{message.iteration, "", 0, to.id};
    if (const auto* offer = std::get_if<TradeOffer>(&message.payload)) {
        if (to.is_dso()) {
            throw RoutingError("trade offers are never delivered to the DSO");
        }
        rec.kind = "TradeOffer";
        rec.from = offer->from;
    } else if (const auto* ask = std::get_if<EnvelopeAsk>(&message.payload)) {
        if (!to.is_dso()) {
            throw RoutingError("envelope asks go to the DSO only");
        }
        rec.kind = "EnvelopeAsk";
        rec.from = ask->from;
        dso_inbox_.push_back(*ask);
        log_.push_back(rec);
        return;
    } else {
        if (to.is_dso()) {
            throw RoutingError("envelope grants go to prosumers only");
        }
        rec.kind = "EnvelopeGrant";
        rec.from = Endpoint::kDso;
    }
    if (to.id < 0 || to.id >= static_cast<int>(inbox_.size())) {
        throw RoutingError("no prosumer " + std::to_string(to.id));
    }
    inbox_[to.id].push_back(message);
    log_.push_back(rec);
}

std::vector<Message> MessageBus::drain(int prosumer)
{
    std::vector<Message> out;
    out.swap(inbox_.at(prosumer));
    return out;
}

std::vector<EnvelopeAsk> MessageBus::drain_dso()
{
    std::vector<EnvelopeAsk> out;
    out.swap(dso_inbox_);
    return out;
}

double adaptive_threshold(int k, double m0, double tau_m) { return m0 * std::pow(tau_m, k); }

bool check_convergence(const IterationTrace& tr, const Thresholds& chi)
{
    return tr.r_es <= chi.chi_es && tr.r_ec <= chi.chi_es && tr.r_et <= chi.chi_et && tr.r_ds <= chi.chi_ds && tr.r_dt <= chi.chi_dt;
}

double grid_cost(const CaseConfig& cfg, const std::vector<LocalDecision>& decisions)
{
    double total = 0.0;
    for (const LocalDecision& d : decisions) {
        total += cfg.network.dt * (cfg.market.tou.dot(d.p_buy) - cfg.market.fit.dot(d.p_sell));
    }
    return total;
}

CaseConfig without_p2p(const CaseConfig& config)
{
    CaseConfig out = config;
    for (ProsumerSpec& p : out.prosumers) {
        p.partners.clear();
    }
    validate(out);
    return out;
}

IntegrityReport check_integrity(const CaseConfig& cfg, const Eigen::MatrixXd& injections,
                                const Eigen::MatrixXd& envelope, int samples, std::uint64_t seed)
{
    const NetworkCase& net = cfg.network;
    IntegrityReport rep;
    try {
        const PowerFlowSolution pf = sweep_powerflow(net, nodal_injections(cfg, injections));
        const ViolationCounts v = count_violations(net, pf);
        rep.voltage_violations = v.voltage;
        rep.overloads = v.overload;
        rep.loss_energy = loss_energy(net, pf);
        const Injections inj = nodal_injections(cfg, injections);
        for (int t = 0; t < net.horizon; ++t) {
            double losses = 0.0;
            for (int j = 0; j < net.num_lines(); ++j) {
                losses += net.lines[j].r * pf.l(j, t);
            }
            rep.conservation_error =
                std::max(rep.conservation_error, std::abs(pf.p0[t] + inj.p.col(t).sum() - losses));
        }
    } catch (const PowerFlowError&) {
        rep.collapsed = true;
        rep.voltage_violations = net.num_nodes() * net.horizon;
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd point(injections.rows(), injections.cols());
    for (int k = 0; k < samples; ++k) {
        for (int i = 0; i < point.rows(); ++i) {
            for (int t = 0; t < point.cols(); ++t) {
                const double lo = -cfg.prosumers[i].import_limit[t];
                const double hi = std::max(lo, envelope(i, t));
                point(i, t) = lo + unit(rng) * (hi - lo);
            }
        }
        ++rep.samples;
        try {
            const ViolationCounts v =
                count_violations(net, sweep_powerflow(net, nodal_injections(cfg, point)));
            rep.sample_voltage_violations += v.voltage;
            rep.sample_overloads += v.overload;
        } catch (const PowerFlowError&) {
            rep.sample_voltage_violations += net.num_nodes() * net.horizon;
        }
    }
    return rep;
}

namespace {

/// Position of prosumer `who` in the sorted partner list of `owner`.
int slot(const CaseConfig& cfg, int owner, int who)
{
    const std::vector<int>& list = cfg.partner_index[owner];
    return static_cast<int>(std::lower_bound(list.begin(), list.end(), who) - list.begin());
}

}  // namespace

ClearingResult run_clearing(const CaseConfig& input, Mode mode, const RunOptions& opt)
{
    const CaseConfig cfg = opt.p2p ? input : without_p2p(input);
    const MarketParams& market = cfg.market;
    const int np = cfg.num_prosumers();
    const int horizon = cfg.horizon();
    const double dt = cfg.network.dt;
    const double alpha = mode == Mode::Admm ? 0.0 : market.alpha;
    ConicSettings local_settings;
    local_settings.tol = market.solver_tol;
    ConicSettings dso_settings = local_settings;

    std::vector<LocalEstimates> est(np);
    std::vector<Eigen::MatrixXd> transmitted(np);  // own e as last sent
    std::vector<Eigen::MatrixXd> heard(np);        // partners' e as last received
    Eigen::MatrixXd ask = Eigen::MatrixXd::Zero(np, horizon);
    Eigen::MatrixXd allocation(np, horizon);
    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(np, horizon);
    for (int i = 0; i < np; ++i) {
        const int deg = static_cast<int>(cfg.partner_index[i].size());
        est[i] = initial_estimates(cfg.prosumers[i], market, deg);
        if (!opt.doe) {
            est[i].allocation.setConstant(kNoEnvelope);
            est[i].envelope_fixed = true;
        }
        allocation.row(i) = est[i].allocation.transpose();
        transmitted[i] = Eigen::MatrixXd::Zero(deg, horizon);
        heard[i] = Eigen::MatrixXd::Zero(deg, horizon);
    }

    MessageBus bus(np);
    ClearingResult res;
    res.mode = mode;
    std::vector<LocalResult> local(np);
    OpfSolution dso;
    bool have_dso = false;

    for (int k = 1; k <= market.max_iters; ++k) {
        IterationTrace tr;
        tr.iteration = k;
        tr.threshold = adaptive_threshold(k, market.m0, market.tau_m);

        if (opt.parallel && np > 1) {
            std::vector<std::future<LocalResult>> jobs;
            for (int i = 0; i < np; ++i) {
                jobs.push_back(std::async(std::launch::async, [&, i] {
                    return solve_local(cfg.prosumers[i], est[i], market, dt, local_settings);
                }));
            }
            for (int i = 0; i < np; ++i) {
                local[i] = jobs[i].get();
            }
        } else {
            for (int i = 0; i < np; ++i) {
                local[i] = solve_local(cfg.prosumers[i], est[i], market, dt, local_settings);
            }
        }
        for (int i = 0; i < np; ++i) {
            tr.solver_iterations.push_back(local[i].iterations);
        }

        // P2P loop with censoring.
        for (int i = 0; i < np; ++i) {
            const std::vector<int>& partners = cfg.partner_index[i];
            if (partners.empty()) {
                continue;
            }
            const Eigen::MatrixXd& e = local[i].decision.trades;
            const bool send = alpha == 0.0 || censor(transmitted[i], e, alpha, tr.threshold);
            if (send) {
                transmitted[i] = e;
                for (std::size_t n = 0; n < partners.size(); ++n) {
                    bus.send(Message{k, TradeOffer{i, partners[n], e.row(n).transpose()}}, Endpoint{partners[n]});
                }
                tr.messages_sent += static_cast<int>(partners.size());
            } else {
                tr.messages_censored += static_cast<int>(partners.size());
            }
            if (opt.record_agents) {
                for (std::size_t n = 0; n < partners.size(); ++n) {
                    for (int t = 0; t < horizon; ++t) {
                        res.agent_trace.push_back({k, i, partners[n], t, e(n, t), est[i].e_hat(n, t),
                                                   est[i].lambda(n, t), send});
                    }
                }
            }
        }

        if (opt.doe) {
            for (int i = 0; i < np; ++i) {
                bus.send(Message{k, EnvelopeAsk{i, local[i].decision.ask}}, Endpoint{});
            }
        }

        for (int i = 0; i < np; ++i) {
            for (const Message& m : bus.drain(i)) {
                if (const auto* offer = std::get_if<TradeOffer>(&m.payload)) {
                    heard[i].row(slot(cfg, i, offer->from)) = offer->amount.transpose();
                }
            }
            const Eigen::MatrixXd previous = est[i].e_hat;
            update_estimates(est[i], transmitted[i], heard[i], market.rho);
            tr.r_et += (est[i].e_hat - previous).squaredNorm();
            tr.r_ec += (transmitted[i] - est[i].e_hat).squaredNorm() +
                       (local[i].decision.trades - transmitted[i]).squaredNorm();
        }

        for (int i = 0; i < np; ++i) {
            for (std::size_t n = 0; n < cfg.partner_index[i].size(); ++n) {
                const int j = cfg.partner_index[i][n];
                if (j > i) {
                    const int back = slot(cfg, j, i);
                    tr.r_es += (local[i].decision.trades.row(n) + local[j].decision.trades.row(back)).squaredNorm();
                }
            }
        }

        // DOE loop.
        if (opt.doe) {
            for (const EnvelopeAsk& a : bus.drain_dso()) {
                ask.row(a.from) = a.ask.transpose();
            }
            const Eigen::MatrixXd previous = allocation;
            for (int step = 0; step < std::max(1, market.dso_steps); ++step) {
                dso = solve_dso(cfg, ask, psi, dso_settings);
                psi = update_doe_price(psi, dso.allocation, ask, market.rho);
            }
            have_dso = true;
            allocation = dso.allocation;
            tr.solver_iterations.push_back(dso.iterations);
            tr.dso_exactness = dso.exactness;
            tr.r_ds = (allocation - ask).squaredNorm();
            tr.r_dt = (allocation - previous).squaredNorm();
            for (int i = 0; i < np; ++i) {
                bus.send(Message{k, EnvelopeGrant{i, allocation.row(i).transpose(), psi.row(i).transpose()}},
                         Endpoint{i});
            }
            for (int i = 0; i < np; ++i) {
                for (const Message& m : bus.drain(i)) {
                    if (const auto* grant = std::get_if<EnvelopeGrant>(&m.payload)) {
                        est[i].allocation = grant->allocation;
                        est[i].psi = grant->psi;
                    }
                }
            }
            for (int i = 0; i < np; ++i) {
                for (int t = 0; t < horizon; ++t) {
                    res.doe_trace.push_back({k, i, t, ask(i, t), allocation(i, t), psi(i, t)});
                }
            }
        } else {
            tr.solver_iterations.push_back(0);
            for (int i = 0; i < np; ++i) {
                ask.row(i) = local[i].decision.ask.transpose();
            }
        }

        res.messages_sent += tr.messages_sent;
        res.messages_censored += tr.messages_censored;
        res.trace.push_back(tr);
        res.iterations = k;
        if (k >= 2 && check_convergence(tr, market.thresholds)) {
            res.converged = true;
            break;
        }
    }

    Eigen::MatrixXd injections(np, horizon);
    for (int i = 0; i < np; ++i) {
        res.decisions.push_back(local[i].decision);
        res.prices.push_back(local[i].prices);
        res.lambda.push_back(est[i].lambda);
        res.surpluses.push_back(surplus(local[i].decision, est[i].lambda, market, dt));
        injections.row(i) = local[i].decision.p_inj.transpose();
    }
    res.envelope.ask = ask;
    res.envelope.allocation = opt.doe ? allocation : Eigen::MatrixXd::Constant(np, horizon, kNoEnvelope);
    res.envelope.psi = psi;
    res.envelope.import_limit.resize(np, horizon);
    for (int i = 0; i < np; ++i) {
        res.envelope.import_limit.row(i) = cfg.prosumers[i].import_limit.transpose();
    }

    if (have_dso) {
        res.flows = dso.flows;
        try {
            res.breakdown = decompose_price(cfg, dso, psi, ask);
            res.has_breakdown = true;
        } catch (const SensitivityError&) {
            res.has_breakdown = false;
        }
    }

    res.integrity = check_integrity(cfg, injections, opt.doe ? allocation : injections, opt.samples, opt.seed);
    res.grid_cost = grid_cost(cfg, res.decisions);
    try {
        res.network_cost = dso_cost(cfg, opt.doe ? allocation : injections, market.scenarios, market.pi);
    } catch (const PowerFlowError&) {
        res.network_cost = std::numeric_limits<double>::quiet_NaN();
    }
    res.objective = res.grid_cost + res.network_cost;
    res.message_log = bus.log();
    return res;
}

}  // namespace p2p2g
