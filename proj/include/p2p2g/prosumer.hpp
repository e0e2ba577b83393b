#pragma once

#include <vector>

#include <Eigen/Dense>

#include "p2p2g/conic.hpp"
#include "p2p2g/netmodel.hpp"

namespace p2p2g {

class AgentInfeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Local decisions of one prosumer. Trade rows follow the sorted partner list.
struct LocalDecision {
    Eigen::VectorXd p_buy;   // p+ per period
    Eigen::VectorXd p_sell;  // p-
    Eigen::VectorXd p_batt;  // net charge
    Eigen::VectorXd soc;     // state of charge at the end of each period
    Eigen::VectorXd p_p2p;   // total peer trade
    Eigen::VectorXd ask;     // export-limit ask P^e
    Eigen::VectorXd p_inj;   // net injection
    Eigen::MatrixXd trades;  // partner x period, positive = sold to the partner
};

/// What a prosumer knows about its coupling variables at the start of an
/// iteration.
struct LocalEstimates {
    Eigen::MatrixXd e_hat;       // partner x period
    Eigen::MatrixXd lambda;      // partner x period P2P price
    Eigen::VectorXd psi;         // DOE price
    Eigen::VectorXd allocation;  // DSO-side envelope
    /// When set, the envelope is a fixed export limit equal to `allocation`
    /// and the ask carries no penalty.
    bool envelope_fixed = false;
};

/// Multipliers of the local problem, per unit of energy (divided by dt).
struct PriceReport {
    Eigen::VectorXd phi;    // balance p+ - p- = d - res + batt + p2p
    Eigen::VectorXd gamma;  // export constraint p_inj <= P^e
    Eigen::VectorXd mu;     // p2p = sum of trades
    Eigen::VectorXd eps;    // p_inj = p- - p+ + p2p
    Eigen::VectorXd kappa;  // import constraint p_inj >= -P^imp
};

/// Variable and row indices of one prosumer inside a larger program.
/// Entries of -1 mark quantities fixed at zero (absent battery, zero limits).
struct ProsumerLayout {
    std::vector<int> p_buy, p_sell, p_batt, soc, p2p, p_inj, ask;
    std::vector<std::vector<int>> trades;  // partner x period
    std::vector<int> balance, p2p_row, split;  // equality rows
    std::vector<int> doe_row, import_row;      // inequality rows
};

/// Adds the device, balance and envelope constraints of one prosumer plus
/// its grid-tariff cost dt * (ToU p+ - FiT p-). With `fixed_envelope` the
/// export constraint uses those constants instead of ask variables.
ProsumerLayout add_prosumer_block(ProgramBuilder& builder, const ProsumerSpec& spec, const MarketParams& market,
                                  double dt, int num_partners, const Eigen::VectorXd* fixed_envelope = nullptr);

LocalDecision extract_decision(const ProsumerLayout& layout, const ProsumerSpec& spec, const ConicSolution& sol);

/// Initial estimates: zero trades, lambda = (FiT + ToU) / 2, zero DOE price and
/// an allocation of max_t res.
LocalEstimates initial_estimates(const ProsumerSpec& spec, const MarketParams& market, int num_partners);

struct LocalResult {
    LocalDecision decision;
    PriceReport prices;
    double objective = 0.0;
    int iterations = 0;
};

/// Solves the local problem
///   min dt * sum_t [ ToU p+ - FiT p- + sum_j lambda (e_hat - e) + rho/2 (e_hat - e)^2
///                    + psi (P^dso - P^e) + rho/2 (P^dso - P^e)^2 ]
/// under the device, balance and envelope constraints.
LocalResult solve_local(const ProsumerSpec& spec, const LocalEstimates& est, const MarketParams& market, double dt,
                        const ConicSettings& settings = {});

/// True iff ||previous - current||_2 - alpha * threshold >= 0.
bool censor(const Eigen::MatrixXd& previous, const Eigen::MatrixXd& current, double alpha, double threshold);

/// e_hat = (own - partner) / 2 and lambda += rho * (e_hat - own), where
/// `partner` holds e_ji as last received from each partner.
void update_estimates(LocalEstimates& est, const Eigen::MatrixXd& own, const Eigen::MatrixXd& partner, double rho);

/// dt * sum_t (FiT p- - ToU p+ + sum_j lambda_j e_j); positive is a net benefit.
double surplus(const LocalDecision& decision, const Eigen::MatrixXd& lambda, const MarketParams& market, double dt);

}  // namespace p2p2g
