#include <algorithm>

#include "p2p2g/coordinator.hpp"

namespace p2p2g {

OracleSolution solve_centralized_oracle(const CaseConfig& cfg, const ConicSettings& settings)
{
    const int np = cfg.num_prosumers();
    const int horizon = cfg.horizon();
    const double dt = cfg.network.dt;

    ProgramBuilder b;
    std::vector<ProsumerLayout> lay;
    std::vector<std::vector<int>> envelope;
    for (int i = 0; i < np; ++i) {
        lay.push_back(add_prosumer_block(b, cfg.prosumers[i], cfg.market, dt,
                                         static_cast<int>(cfg.partner_index[i].size())));
        envelope.push_back(lay.back().ask);
    }
    const NetworkLayout net = add_network_block(b, cfg, envelope, cfg.market.scenarios, cfg.market.pi);
    for (int i = 0; i < np; ++i) {
        const std::vector<int>& partners = cfg.partner_index[i];
        for (std::size_t n = 0; n < partners.size(); ++n) {
            const int j = partners[n];
            if (j < i) {
                continue;
            }
            const std::vector<int>& back = cfg.partner_index[j];
            const auto m = std::lower_bound(back.begin(), back.end(), i) - back.begin();
            for (int t = 0; t < horizon; ++t) {
                b.add_equality({{lay[i].trades[n][t], 1.0}, {lay[j].trades[m][t], 1.0}}, 0.0);
            }
        }
    }

    const ConicProgram prog = b.build();
    const ConicSolution sol = solve_conic(prog, settings);

    OracleSolution out;
    out.objective = sol.objective;
    out.envelope.resize(np, horizon);
    for (int i = 0; i < np; ++i) {
        LocalDecision d = extract_decision(lay[i], cfg.prosumers[i], sol);
        out.envelope.row(i) = d.ask.transpose();
        out.trades.push_back(d.trades);
        out.decisions.push_back(std::move(d));
    }
    out.network_cost = out.objective - grid_cost(cfg, out.decisions);
    for (const PowerFlowSolution& pf : extract_flows(net, cfg, sol)) {
        out.exactness = std::max(out.exactness, check_exactness(cfg.network, pf));
    }
    return out;
}

}  // namespace p2p2g
