#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace p2p2g {

using NodeId = int;

class CaseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing or ill-typed field in a case document.
class SchemaError : public CaseError {
public:
    using CaseError::CaseError;
};

/// Network is not a tree rooted at node 0.
class TopologyError : public CaseError {
public:
    using CaseError::CaseError;
};

/// A numeric invariant (bounds, signs, array lengths) does not hold.
class BoundsError : public CaseError {
public:
    using CaseError::CaseError;
};

class DuplicateProsumerError : public CaseError {
public:
    using CaseError::CaseError;
};

class UnknownNodeError : public CaseError {
public:
    using CaseError::CaseError;
};

struct Line {
    NodeId from = 0;
    NodeId to = 0;
    double r = 0.0;      // pu
    double x = 0.0;      // pu
    double s_max = 0.0;  // pu apparent power
};

/// Orientation of the tree after validation. Indices refer to positions in
/// NetworkCase::nodes and NetworkCase::lines.
struct Topology {
    int root = -1;
    std::vector<int> parent_line;               // per node; -1 for the root
    std::vector<int> upstream;                  // per line: parent-side node index
    std::vector<int> downstream;                // per line: child-side node index
    std::vector<std::vector<int>> child_lines;  // per node
    std::vector<int> order;                     // nodes in breadth-first order from the root
    std::vector<int> depth;                     // per node, in lines
};

/// Radial distribution network with fixed withdrawals over the horizon.
/// Loads are withdrawals: positive p/q means consumption at the node.
struct NetworkCase {
    std::vector<NodeId> nodes;
    std::vector<Line> lines;
    double v0 = 1.0;
    Eigen::VectorXd vmin;    // per node index
    Eigen::VectorXd vmax;    // per node index
    Eigen::MatrixXd load_p;  // node index x period
    Eigen::MatrixXd load_q;  // node index x period
    int horizon = 0;
    double dt = 1.0;  // hours per period

    Topology topo;  // filled by validation

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int num_lines() const { return static_cast<int>(lines.size()); }

    /// Index of a node id in `nodes`; throws UnknownNodeError.
    int node_index(NodeId id) const;
};

struct Battery {
    double p_min = 0.0;  // pu, <= 0 (discharge)
    double p_max = 0.0;  // pu, >= 0 (charge)
    double e_min = 0.0;  // pu*h
    double e_max = 0.0;
    double e0 = 0.0;

    bool present() const { return p_min < 0.0 || p_max > 0.0; }
};

struct ProsumerSpec {
    NodeId node = 0;
    Battery battery;
    Eigen::VectorXd demand;        // pu per period
    Eigen::VectorXd res;           // pu per period
    double buy_max = 0.0;          // P2G purchase limit, pu
    double sell_max = 0.0;         // P2G sale limit, pu
    std::vector<NodeId> partners;  // node ids of trading partners
    Eigen::VectorXd import_limit;  // pu per period
};

struct Thresholds {
    double chi_es = 1.5e-5;
    double chi_et = 1.5e-5;
    double chi_ds = 1.5e-5;
    double chi_dt = 1.5e-5;
};

struct MarketParams {
    Eigen::VectorXd fit;  // feed-in tariff per period, money per pu*h
    Eigen::VectorXd tou;  // time-of-use tariff per period
    Eigen::VectorXd pi;   // root energy price per period
    double rho = 1.0;
    double alpha = 0.0;
    double m0 = 1.0;
    double tau_m = 0.9;
    int scenarios = 1;
    Thresholds thresholds;
    int max_iters = 1000;
    double solver_tol = 1e-9;
    bool terminal_soc = true;
    int dso_steps = 1;
};

/// Fully validated configuration: network, prosumers and market parameters.
struct CaseConfig {
    NetworkCase network;
    std::vector<ProsumerSpec> prosumers;
    MarketParams market;

    // Derived during validation.
    std::vector<int> prosumer_node;                // node index per prosumer
    std::vector<std::vector<int>> partner_index;  // prosumer indices, sorted

    int num_prosumers() const { return static_cast<int>(prosumers.size()); }
    int horizon() const { return network.horizon; }
    /// Prosumer index located at a node id, or -1.
    int prosumer_at(NodeId id) const;
};

CaseConfig load_case(std::string_view document);
CaseConfig load_case_file(const std::filesystem::path& path);
std::string serialize_case(const CaseConfig& config);

/// Checks every invariant and fills the derived fields. load_case calls this;
/// call it again after editing a configuration in place.
void validate(CaseConfig& config);
void validate_market(const MarketParams& market, int horizon);

/// Lines on the unique path from `node` up to the root, starting with the
/// line that feeds `node`. Empty for the root.
std::vector<int> path_to_root(const NetworkCase& network, NodeId node);

}  // namespace p2p2g
