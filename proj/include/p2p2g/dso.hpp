#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "p2p2g/distflow.hpp"
#include "p2p2g/netmodel.hpp"

namespace p2p2g {

class SensitivityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Envelope negotiation state, prosumer x period.
struct EnvelopeState {
    Eigen::MatrixXd ask;           // P^e from prosumers
    Eigen::MatrixXd allocation;    // P^dso from the DSO
    Eigen::MatrixXd psi;           // DOE price
    Eigen::MatrixXd import_limit;  // fixed P^imp
};

/// Components of -psi per prosumer and period, money per pu*h.
struct PriceBreakdown {
    Eigen::MatrixXd congestion_send;
    Eigen::MatrixXd congestion_recv;
    Eigen::MatrixXd voltage;
    Eigen::MatrixXd energy;
    Eigen::MatrixXd loss;
    Eigen::MatrixXd penalty;   // rho (P^dso - P^e); vanishes at consensus
    Eigen::MatrixXd residual;  // |congestion + voltage + energy + loss + psi|

    Eigen::MatrixXd total() const { return congestion_send + congestion_recv + voltage + energy + loss; }
};

/// The envelope OPF with the case's scenario count, prices and tolerance.
OpfSolution solve_dso(const CaseConfig& config, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi,
                      const ConicSettings& settings);
OpfSolution solve_dso(const CaseConfig& config, const Eigen::MatrixXd& ask, const Eigen::MatrixXd& psi);

/// psi + rho (allocation - ask)
Eigen::MatrixXd update_doe_price(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& allocation,
                                 const Eigen::MatrixXd& ask, double rho);

/// Splits -psi into congestion, voltage, energy and loss parts using the
/// solve's multipliers and central finite differences of the exact power
/// flow at each scenario operating point.
PriceBreakdown decompose_price(const CaseConfig& config, const OpfSolution& solution, const Eigen::MatrixXd& psi,
                               const Eigen::MatrixXd& ask, double step = 1e-5);

/// Scenario-averaged loss cost (1/S) sum_s loss_cost at (s/S) * allocation.
double dso_cost(const CaseConfig& config, const Eigen::MatrixXd& allocation, int scenarios, const Eigen::VectorXd& pi);

}  // namespace p2p2g
