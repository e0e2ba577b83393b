#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "p2p2g/distflow.hpp"
#include "p2p2g/dso.hpp"
#include "p2p2g/netmodel.hpp"
#include "p2p2g/prosumer.hpp"

namespace p2p2g {

enum class Mode { Admm, Coca };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

/// Envelope used when DOEs are switched off.
inline constexpr double kNoEnvelope = 1e3;

class MaxItersExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A message routed somewhere it must never go.
class RoutingError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct TradeOffer {
    int from = 0;  // prosumer index
    int to = 0;
    Eigen::VectorXd amount;  // e_{from,to} per period
};

struct EnvelopeAsk {
    int from = 0;
    Eigen::VectorXd ask;
};

struct EnvelopeGrant {
    int to = 0;
    Eigen::VectorXd allocation;
    Eigen::VectorXd psi;
};

struct Message {
    int iteration = 0;
    std::variant<TradeOffer, EnvelopeAsk, EnvelopeGrant> payload;
};

struct Endpoint {
    static constexpr int kDso = -1;
    int id = kDso;  // prosumer index or kDso

    bool is_dso() const { return id == kDso; }
};

/// Synchronous in-process bus. The DSO inbox is typed to EnvelopeAsk, so
/// trades and device data cannot reach it.
class MessageBus {
public:
    struct Record {
        int iteration;
        std::string kind;
        int from;
        int to;
    };

    explicit MessageBus(int num_prosumers);

    /// Throws RoutingError for TradeOffer or EnvelopeGrant sent to the DSO
    /// and for EnvelopeAsk sent to a prosumer.
    void send(const Message& message, Endpoint to);

    std::vector<Message> drain(int prosumer);
    std::vector<EnvelopeAsk> drain_dso();

    const std::vector<Record>& log() const { return log_; }

private:
    std::vector<std::vector<Message>> inbox_;
    std::vector<EnvelopeAsk> dso_inbox_;
    std::vector<Record> log_;
};

struct IterationTrace {
    int iteration = 0;
    double r_es = 0.0;  // sum (e_ij + e_ji)^2
    double r_ec = 0.0;  // sum (x_ij - e_hat_ij)^2 + (e_ij - x_ij)^2, x = last sent; held to chi_es
    double r_et = 0.0;  // sum (e_hat^k - e_hat^{k-1})^2
    double r_ds = 0.0;  // sum (P^dso - P^e)^2
    double r_dt = 0.0;  // sum (P^dso,k - P^dso,k-1)^2
    double threshold = 0.0;  // m^k
    int messages_sent = 0;
    int messages_censored = 0;
    std::vector<int> solver_iterations;  // per prosumer, then the DSO (0 when off)
    double dso_exactness = 0.0;
};

/// One row per (iteration, i, j, t) of the P2P loop.
struct AgentTraceRow {
    int iteration;
    int i;
    int j;
    int t;
    double e;
    double e_hat;
    double lambda;
    bool sent;
};

/// One row per (iteration, i, t) of the DOE loop.
struct DoeTraceRow {
    int iteration;
    int i;
    int t;
    double ask;
    double allocation;
    double psi;
};

struct IntegrityReport {
    int voltage_violations = 0;  // realized injections
    int overloads = 0;
    double loss_energy = 0.0;  // pu*h at realized injections
    int samples = 0;
    int sample_voltage_violations = 0;  // dominated random points
    int sample_overloads = 0;
    double conservation_error = 0.0;  // max_t |p0 - loads + injections - losses|
    bool collapsed = false;           // realized point has no power-flow solution
};

struct RunOptions {
    bool doe = true;
    bool p2p = true;
    int samples = 100;
    std::uint64_t seed = 1;
    bool record_agents = true;
    bool parallel = true;
};

struct ClearingResult {
    Mode mode = Mode::Admm;
    bool converged = false;
    int iterations = 0;
    std::vector<LocalDecision> decisions;
    std::vector<PriceReport> prices;
    std::vector<Eigen::MatrixXd> lambda;  // per prosumer, partner x period
    EnvelopeState envelope;
    PriceBreakdown breakdown;
    bool has_breakdown = false;
    std::vector<IterationTrace> trace;
    std::vector<AgentTraceRow> agent_trace;
    std::vector<DoeTraceRow> doe_trace;
    IntegrityReport integrity;
    std::vector<double> surpluses;
    double objective = 0.0;  // J(P^dso) + sum of grid costs
    double grid_cost = 0.0;
    double network_cost = 0.0;
    std::vector<PowerFlowSolution> flows;  // last DSO scenario flows
    int messages_sent = 0;
    int messages_censored = 0;
    std::vector<MessageBus::Record> message_log;
};

/// m^k = m0 tau^k
double adaptive_threshold(int k, double m0, double tau_m);

bool check_convergence(const IterationTrace& trace, const Thresholds& thresholds);

/// The decentralized clearing loop. Prosumers solve against the previous
/// grant, the DSO then solves against the fresh asks. Returns a result
/// flagged non-converged when max_iters is reached.
ClearingResult run_clearing(const CaseConfig& config, Mode mode, const RunOptions& options = {});

/// Power-flow checks at the realized injections and at random points between
/// -P^imp and the envelope.
IntegrityReport check_integrity(const CaseConfig& config, const Eigen::MatrixXd& injections,
                                const Eigen::MatrixXd& envelope, int samples, std::uint64_t seed);

/// sum_i dt sum_t (ToU p+ - FiT p-)
double grid_cost(const CaseConfig& config, const std::vector<LocalDecision>& decisions);

struct OracleSolution {
    double objective = 0.0;
    double network_cost = 0.0;
    Eigen::MatrixXd envelope;           // P^e, prosumer x period
    std::vector<Eigen::MatrixXd> trades;  // per prosumer, partner x period
    std::vector<LocalDecision> decisions;
    double exactness = 0.0;
};

/// Monolithic SOCP over all prosumer and network variables with
/// e_ij + e_ji = 0 imposed directly.
OracleSolution solve_centralized_oracle(const CaseConfig& config, const ConicSettings& settings = {});

/// Copy of the case with every partner set emptied.
CaseConfig without_p2p(const CaseConfig& config);

}  // namespace p2p2g
