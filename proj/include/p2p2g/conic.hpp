#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace p2p2g {

using SpMat = Eigen::SparseMatrix<double>;

class ConicSolveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InfeasibleError : public ConicSolveError {
public:
    using ConicSolveError::ConicSolveError;
};

class UnboundedError : public ConicSolveError {
public:
    using ConicSolveError::ConicSolveError;
};

class SolverStallError : public ConicSolveError {
public:
    using ConicSolveError::ConicSolveError;
};

struct Term {
    int var;
    double coef;
};

/// sum(coef * x[var]) + constant
struct AffineExpr {
    std::vector<Term> terms;
    double constant = 0.0;
};

/// minimize   1/2 x'Px + c'x + c0
/// subject to Ax = b,  Gx + s = h,  s in K
///
/// K is the nonnegative orthant of dimension num_orthant followed by second
/// order cones {s : s0 >= ||s1..||} of the listed dimensions.
struct ConicProgram {
    int num_vars = 0;
    SpMat P;  // symmetric, both triangles stored
    Eigen::VectorXd c;
    double c0 = 0.0;
    SpMat A;
    Eigen::VectorXd b;
    SpMat G;
    Eigen::VectorXd h;
    int num_orthant = 0;
    std::vector<int> soc_dims;
    std::vector<int> soc_offsets;  // row of each cone in G

    int num_eq() const { return static_cast<int>(b.size()); }
    int num_ineq() const { return static_cast<int>(h.size()); }

    /// Throws std::invalid_argument when dimensions or cone indices disagree.
    void check() const;
};

/// Incremental assembly of a ConicProgram. Row handles returned by the
/// add_* functions index into ConicSolution::y (equalities), ::z (linear
/// inequalities, directly) and cone_offset() (cones).
class ProgramBuilder {
public:
    int add_variable();
    int add_variables(int count);  // returns the first index
    int num_vars() const { return num_vars_; }

    void add_linear_cost(int var, double coef);
    /// Adds coef * x[i] * x[j] to the objective; i == j gives coef * x[i]^2.
    void add_quadratic_cost(int i, int j, double coef);
    void add_constant_cost(double value) { c0_ += value; }

    /// sum(terms) == rhs
    int add_equality(const std::vector<Term>& terms, double rhs);
    /// sum(terms) <= rhs
    int add_inequality(const std::vector<Term>& terms, double rhs);
    /// lo <= x[var] <= hi, infinite bounds skipped. Returns the rows (or -1).
    std::pair<int, int> add_bounds(int var, double lo, double hi);
    /// expr[0] >= || expr[1..] ||
    int add_soc(const std::vector<AffineExpr>& expr);

    ConicProgram build() const;

    int num_eq() const { return static_cast<int>(eq_rhs_.size()); }
    int num_lin() const { return static_cast<int>(lin_rhs_.size()); }
    /// Row in z of the first entry of cone k; valid for programs from build().
    int cone_offset(int cone) const;

private:
    int num_vars_ = 0;
    std::vector<double> c_;
    double c0_ = 0.0;
    std::vector<Eigen::Triplet<double>> p_;
    std::vector<Eigen::Triplet<double>> a_;
    std::vector<double> eq_rhs_;
    std::vector<Eigen::Triplet<double>> lin_;
    std::vector<double> lin_rhs_;
    std::vector<std::vector<AffineExpr>> cones_;
};

enum class ConicStatus { Optimal, NearOptimal, Infeasible, Unbounded, Stall };

const char* to_string(ConicStatus status);

struct ConicSettings {
    double tol = 1e-9;
    double near_tol = 1e-6;  // accepted when progress stalls
    int max_iters = 100;
    double reg = 1e-10;
    int refine = 4;
    double step_fraction = 0.99;
};

struct ConicSolution {
    ConicStatus status = ConicStatus::Stall;
    Eigen::VectorXd x, y, z, s;
    double objective = 0.0;
    int iterations = 0;
    double pres = 0.0;
    double dres = 0.0;
    double gap = 0.0;
};

/// Primal-dual interior point method with Nesterov-Todd scaling and Mehrotra
/// predictor-corrector steps. Returns Optimal or NearOptimal solutions and
/// throws InfeasibleError, UnboundedError or SolverStallError otherwise.
ConicSolution solve_conic(const ConicProgram& program, const ConicSettings& settings = {});

/// Same iteration, but reports failure through the status instead of throwing.
ConicSolution solve_conic_nothrow(const ConicProgram& program, const ConicSettings& settings = {});

namespace detail {

/// Nesterov-Todd scaling of one second order cone block: W s == W^{-1} z.
struct SocScaling {
    Eigen::MatrixXd W;
    Eigen::MatrixXd Winv;
};

SocScaling soc_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z);
/// Largest alpha (possibly +inf) with x + alpha d in the cone; x interior.
double soc_max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d);
/// Jordan product and its inverse operation on one cone block.
Eigen::VectorXd soc_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v);
Eigen::VectorXd soc_divide(const Eigen::VectorXd& lambda, const Eigen::VectorXd& r);

}  // namespace detail

}  // namespace p2p2g
