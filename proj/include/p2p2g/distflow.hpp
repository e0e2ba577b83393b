#pragma once

#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "p2p2g/conic.hpp"
#include "p2p2g/netmodel.hpp"

namespace p2p2g {

class PowerFlowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonConvergence : public PowerFlowError {
public:
    using PowerFlowError::PowerFlowError;
};

class VoltageCollapse : public PowerFlowError {
public:
    using PowerFlowError::PowerFlowError;
};

/// Net nodal injections, node index x period. Positive values export into
/// the network; the root row is ignored.
struct Injections {
    Eigen::MatrixXd p;
    Eigen::MatrixXd q;
};

struct PowerFlowSolution {
    Eigen::MatrixXd fp;  // line x period, sending-end active flow (upstream to downstream)
    Eigen::MatrixXd fq;
    Eigen::MatrixXd l;   // squared current magnitude
    Eigen::MatrixXd v;   // node x period voltage magnitude
    Eigen::VectorXd p0;  // root injection per period
    Eigen::VectorXd q0;
};

struct SweepSettings {
    double tol = 1e-10;  // on squared voltage and squared current updates
    int max_sweeps = 100;
};

/// Backward/forward sweep on the exact branch-flow equations.
PowerFlowSolution sweep_powerflow(const NetworkCase& network, const Injections& injections,
                                  const SweepSettings& settings = {});

/// Fixed loads as negative injections plus scale * export at each prosumer node.
Injections nodal_injections(const CaseConfig& config, const Eigen::MatrixXd& prosumer_export, double scale = 1.0);

/// Largest |l v_up^2 - fp^2 - fq^2| / max(1, fp^2 + fq^2) over lines and periods.
double check_exactness(const NetworkCase& network, const PowerFlowSolution& sol);

/// sum_t pi_t dt sum_j R_j l_jt
double loss_cost(const NetworkCase& network, const PowerFlowSolution& sol, const Eigen::VectorXd& pi, double dt);

/// sum_t dt sum_j R_j l_jt
double loss_energy(const NetworkCase& network, const PowerFlowSolution& sol);

struct ViolationCounts {
    int voltage = 0;   // (node, period) pairs outside [vmin - tol, vmax + tol]
    int overload = 0;  // (line, period) pairs with either end above s_max + tol
};

ViolationCounts count_violations(const NetworkCase& network, const PowerFlowSolution& sol, double tol = 1e-4);

/// Rows (scenario, t, element_type, element_id, quantity, value).
void write_powerflow_csv(std::ostream& out, const NetworkCase& network, const std::vector<PowerFlowSolution>& scenarios);

/// Variable and row indices of the DistFlow relaxation for one scenario.
/// Vectors are period-major: entry t * count + k.
struct ScenarioLayout {
    double weight = 1.0;  // s / S
    std::vector<int> fp, fq, l;       // per line
    std::vector<int> w;               // per node, -1 at the root
    std::vector<int> p0, q0;          // per period
    std::vector<int> bal_p, bal_q;    // equality rows per node, -1 at the root
    std::vector<int> root_p, root_q;  // equality rows per period
    std::vector<int> drop;            // equality rows per line
    std::vector<int> vmax_row, vmin_row;  // inequality rows per node, -1 at the root
    std::vector<int> flow_cone, send_cone, recv_cone;  // cone handles per line
};

struct NetworkLayout {
    int lines = 0;
    int nodes = 0;
    int horizon = 0;
    std::vector<ScenarioLayout> scenarios;
};

/// Adds the S-scenario DistFlow relaxation and its loss cost
/// (1/S) sum_s sum_t sum_j pi_t R_j l dt to the builder. envelope[i][t] is the
/// variable holding prosumer i's export at period t; scenario s injects
/// (s/S) times it.
NetworkLayout add_network_block(ProgramBuilder& builder, const CaseConfig& config,
                                const std::vector<std::vector<int>>& envelope, int scenarios,
                                const Eigen::VectorXd& pi);

std::vector<PowerFlowSolution> extract_flows(const NetworkLayout& layout, const CaseConfig& config,
                                             const ConicSolution& sol);

/// Multipliers of one scenario in the units of the original constraints:
/// eta/delta belong to fp^2 + fq^2 <= S^2 style ratings, tau to the bounds on
/// squared voltages.
struct ScenarioDuals {
    Eigen::MatrixXd eta;        // line x period, sending-end rating
    Eigen::MatrixXd delta;      // line x period, receiving-end rating
    Eigen::MatrixXd tau_plus;   // node x period, upper squared-voltage bound
    Eigen::MatrixXd tau_minus;  // node x period, lower squared-voltage bound
    Eigen::VectorXd omega_p;    // root active balance
    Eigen::VectorXd omega_q;
    Eigen::MatrixXd bal_p;      // node x period, active balance rows
};

std::vector<ScenarioDuals> extract_duals(const NetworkLayout& layout, const CaseConfig& config,
                                         const ConicProgram& program, const ConicSolution& sol);

/// The DSO envelope problem for given asks and DOE prices.
struct OpfProgram {
    ConicProgram conic;
    NetworkLayout layout;
    std::vector<std::vector<int>> allocation;  // prosumer x period variable index
};

OpfProgram build_socp_opf(const CaseConfig& config, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi, double rho,
                          int scenarios, const Eigen::VectorXd& pi);

struct OpfSolution {
    Eigen::MatrixXd allocation;  // prosumer x period
    std::vector<PowerFlowSolution> flows;
    std::vector<ScenarioDuals> duals;
    double objective = 0.0;  // including penalty terms
    double loss = 0.0;       // scenario-averaged loss cost J
    double exactness = 0.0;  // worst check_exactness over scenarios
    int iterations = 0;
};

OpfSolution solve_opf(const CaseConfig& config, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi, double rho,
                      int scenarios, const Eigen::VectorXd& pi, const ConicSettings& settings = {});

}  // namespace p2p2g
