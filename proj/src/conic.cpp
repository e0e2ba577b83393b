#include "p2p2g/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SparseCholesky>

namespace p2p2g {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Scaling {
    Eigen::VectorXd w;  // orthant: W = diag(w)
    std::vector<detail::SocScaling> soc;
};

class Cones {
public:
    explicit Cones(const ConicProgram& prog)
        : l_(prog.num_orthant), dims_(prog.soc_dims), offs_(prog.soc_offsets), m_(prog.num_ineq())
    {
    }

    int degree() const { return l_ + static_cast<int>(dims_.size()); }

    Eigen::VectorXd identity() const
    {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
        e.head(l_).setOnes();
        for (int off : offs_) {
            e[off] = 1.0;
        }
        return e;
    }

    /// Smallest "eigenvalue": negative when outside the cone.
    double min_eig(const Eigen::VectorXd& v) const
    {
        double out = kInf;
        if (l_ > 0) {
            out = v.head(l_).minCoeff();
        }
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            const auto blk = v.segment(offs_[k], dims_[k]);
            out = std::min(out, blk[0] - blk.tail(dims_[k] - 1).norm());
        }
        return out;
    }

    double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d) const
    {
        double alpha = kInf;
        for (int i = 0; i < l_; ++i) {
            if (d[i] < 0.0) {
                alpha = std::min(alpha, -x[i] / d[i]);
            }
        }
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            alpha = std::min(alpha, detail::soc_max_step(x.segment(offs_[k], dims_[k]), d.segment(offs_[k], dims_[k])));
        }
        return alpha;
    }

    Scaling scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z) const
    {
        Scaling sc;
        sc.w = (z.head(l_).array() / s.head(l_).array()).sqrt();
        sc.soc.reserve(dims_.size());
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            sc.soc.push_back(detail::soc_scaling(s.segment(offs_[k], dims_[k]), z.segment(offs_[k], dims_[k])));
        }
        return sc;
    }

    Scaling identity_scaling() const
    {
        Scaling sc;
        sc.w = Eigen::VectorXd::Ones(l_);
        for (int d : dims_) {
            sc.soc.push_back({Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Identity(d, d)});
        }
        return sc;
    }

    Eigen::VectorXd apply_w(const Scaling& sc, const Eigen::VectorXd& v) const
    {
        Eigen::VectorXd out(m_);
        out.head(l_) = sc.w.cwiseProduct(v.head(l_));
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            out.segment(offs_[k], dims_[k]) = sc.soc[k].W * v.segment(offs_[k], dims_[k]);
        }
        return out;
    }

    Eigen::VectorXd apply_winv(const Scaling& sc, const Eigen::VectorXd& v) const
    {
        Eigen::VectorXd out(m_);
        out.head(l_) = v.head(l_).cwiseQuotient(sc.w);
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            out.segment(offs_[k], dims_[k]) = sc.soc[k].Winv * v.segment(offs_[k], dims_[k]);
        }
        return out;
    }

    Eigen::VectorXd product(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const
    {
        Eigen::VectorXd out(m_);
        out.head(l_) = u.head(l_).cwiseProduct(v.head(l_));
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            out.segment(offs_[k], dims_[k]) =
                detail::soc_product(u.segment(offs_[k], dims_[k]), v.segment(offs_[k], dims_[k]));
        }
        return out;
    }

    Eigen::VectorXd divide(const Eigen::VectorXd& lambda, const Eigen::VectorXd& r) const
    {
        Eigen::VectorXd out(m_);
        out.head(l_) = r.head(l_).cwiseQuotient(lambda.head(l_));
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            out.segment(offs_[k], dims_[k]) =
                detail::soc_divide(lambda.segment(offs_[k], dims_[k]), r.segment(offs_[k], dims_[k]));
        }
        return out;
    }

    int l() const { return l_; }
    const std::vector<int>& dims() const { return dims_; }
    const std::vector<int>& offsets() const { return offs_; }

private:
    int l_;
    std::vector<int> dims_;
    std::vector<int> offs_;
    int m_;
};

/// Regularized quasi-definite KKT system
///   [P + dI  A'   G'          ]
///   [A       -dI  0           ]
///   [G       0    -W^-2 - dI  ]
/// with iterative refinement against the unregularized matrix.
class KktSolver {
public:
    KktSolver(const ConicProgram& prog, const Cones& cones, const ConicSettings& settings)
        : prog_(prog), cones_(cones), settings_(settings), n_(prog.num_vars), p_(prog.num_eq()), m_(prog.num_ineq())
    {
    }

    /// Retries with a stronger regularization when a pivot cancels to zero;
    /// refinement in solve() runs against the unregularized matrix.
    bool factor(const Scaling& sc)
    {
        double reg = settings_.reg;
        for (int attempt = 0; attempt < 5; ++attempt, reg *= 100.0) {
            if (factor_with(sc, reg)) {
                return true;
            }
        }
        return false;
    }

private:
    bool factor_with(const Scaling& sc, double reg)
    {
        const int dim = n_ + p_ + m_;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(prog_.P.nonZeros() + prog_.A.nonZeros() + prog_.G.nonZeros() + dim + 16 * m_);
        for (int col = 0; col < prog_.P.outerSize(); ++col) {
            for (SpMat::InnerIterator it(prog_.P, col); it; ++it) {
                if (it.row() >= it.col()) {
                    trip.emplace_back(it.row(), it.col(), it.value());
                }
            }
        }
        for (int i = 0; i < n_; ++i) {
            trip.emplace_back(i, i, reg);
        }
        for (int col = 0; col < prog_.A.outerSize(); ++col) {
            for (SpMat::InnerIterator it(prog_.A, col); it; ++it) {
                trip.emplace_back(n_ + it.row(), it.col(), it.value());
            }
        }
        for (int i = 0; i < p_; ++i) {
            trip.emplace_back(n_ + i, n_ + i, -reg);
        }
        for (int col = 0; col < prog_.G.outerSize(); ++col) {
            for (SpMat::InnerIterator it(prog_.G, col); it; ++it) {
                trip.emplace_back(n_ + p_ + it.row(), it.col(), it.value());
            }
        }
        const int base = n_ + p_;
        winv2_.clear();
        for (int i = 0; i < cones_.l(); ++i) {
            const double w = sc.w[i];
            trip.emplace_back(base + i, base + i, -1.0 / (w * w) - reg);
        }
        for (std::size_t k = 0; k < cones_.dims().size(); ++k) {
            Eigen::MatrixXd W2 = sc.soc[k].Winv * sc.soc[k].Winv;
            W2 = 0.5 * (W2 + W2.transpose());
            const int off = base + cones_.offsets()[k];
            for (int a = 0; a < W2.rows(); ++a) {
                for (int b = 0; b <= a; ++b) {
                    trip.emplace_back(off + a, off + b, -W2(a, b) - (a == b ? reg : 0.0));
                }
            }
            winv2_.push_back(std::move(W2));
        }
        winv2_orth_ = sc.w.cwiseProduct(sc.w).cwiseInverse();
        SpMat K(dim, dim);
        K.setFromTriplets(trip.begin(), trip.end());
        if (!analyzed_) {
            ldlt_.analyzePattern(K);
            analyzed_ = true;
        }
        ldlt_.factorize(K);
        return ldlt_.info() == Eigen::Success;
    }

public:
    /// Solves K [dx; dy; dz] = [rx; ry; rz].
    bool solve(const Eigen::VectorXd& rhs, Eigen::VectorXd& sol) const
    {
        sol = ldlt_.solve(rhs);
        for (int it = 0; it < settings_.refine; ++it) {
            const Eigen::VectorXd res = rhs - multiply(sol);
            if (!res.allFinite()) {
                return false;
            }
            if (res.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
                break;
            }
            sol += ldlt_.solve(res);
        }
        return sol.allFinite();
    }

private:
    Eigen::VectorXd multiply(const Eigen::VectorXd& v) const
    {
        const auto vx = v.head(n_);
        const auto vy = v.segment(n_, p_);
        const auto vz = v.tail(m_);
        Eigen::VectorXd out(n_ + p_ + m_);
        out.head(n_) = prog_.P * vx + prog_.A.transpose() * vy + prog_.G.transpose() * vz;
        out.segment(n_, p_) = prog_.A * vx;
        Eigen::VectorXd bz = prog_.G * vx;
        bz.head(cones_.l()) -= winv2_orth_.cwiseProduct(vz.head(cones_.l()));
        for (std::size_t k = 0; k < cones_.dims().size(); ++k) {
            const int off = cones_.offsets()[k];
            const int d = cones_.dims()[k];
            bz.segment(off, d) -= winv2_[k] * vz.segment(off, d);
        }
        out.tail(m_) = bz;
        return out;
    }

    const ConicProgram& prog_;
    const Cones& cones_;
    const ConicSettings& settings_;
    int n_, p_, m_;
    bool analyzed_ = false;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    std::vector<Eigen::MatrixXd> winv2_;
    Eigen::VectorXd winv2_orth_;
};

double objective_of(const ConicProgram& prog, const Eigen::VectorXd& x)
{
    return 0.5 * x.dot(prog.P * x) + prog.c.dot(x) + prog.c0;
}

struct Metrics {
    double pres = kInf;
    double dres = kInf;
    double gap = kInf;
    double relgap = kInf;
    double pobj = 0.0;
    double score() const { return std::max({pres, dres, relgap}); }
};

}  // namespace

namespace detail {

SocScaling soc_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z)
{
    const int d = static_cast<int>(s.size());
    const double sres = s[0] * s[0] - s.tail(d - 1).squaredNorm();
    const double zres = z[0] * z[0] - z.tail(d - 1).squaredNorm();
    const Eigen::VectorXd sb = s / std::sqrt(sres);
    const Eigen::VectorXd zb = z / std::sqrt(zres);
    const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
    const double a = (sb[0] + zb[0]) / (2.0 * gamma);
    const Eigen::VectorXd q = (zb.tail(d - 1) - sb.tail(d - 1)) / (2.0 * gamma);
    const double eta = std::pow(zres / sres, 0.25);

    SocScaling out;
    out.W.resize(d, d);
    out.W(0, 0) = a;
    out.W.block(0, 1, 1, d - 1) = q.transpose();
    out.W.block(1, 0, d - 1, 1) = q;
    out.W.block(1, 1, d - 1, d - 1) = Eigen::MatrixXd::Identity(d - 1, d - 1) + q * q.transpose() / (1.0 + a);
    out.Winv = out.W;
    out.Winv.block(0, 1, 1, d - 1) *= -1.0;
    out.Winv.block(1, 0, d - 1, 1) *= -1.0;
    out.W *= eta;
    out.Winv /= eta;
    return out;
}

double soc_max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d)
{
    const int n = static_cast<int>(x.size());
    const double d1n = d.tail(n - 1).norm();
    if (d[0] >= d1n) {
        return kInf;
    }
    const double qa = d[0] * d[0] - d1n * d1n;
    const double qb = x[0] * d[0] - x.tail(n - 1).dot(d.tail(n - 1));
    const double qc = std::max(0.0, x[0] * x[0] - x.tail(n - 1).squaredNorm());
    const double disc = std::max(0.0, qb * qb - qa * qc);
    const double denom = std::sqrt(disc) - qb;
    if (denom <= 0.0) {
        return kInf;
    }
    return qc / denom;
}

Eigen::VectorXd soc_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v)
{
    const int n = static_cast<int>(u.size());
    Eigen::VectorXd out(n);
    out[0] = u.dot(v);
    out.tail(n - 1) = u[0] * v.tail(n - 1) + v[0] * u.tail(n - 1);
    return out;
}

Eigen::VectorXd soc_divide(const Eigen::VectorXd& lambda, const Eigen::VectorXd& r)
{
    const int n = static_cast<int>(lambda.size());
    const double rho = lambda[0] * lambda[0] - lambda.tail(n - 1).squaredNorm();
    const double nu = lambda.tail(n - 1).dot(r.tail(n - 1));
    Eigen::VectorXd out(n);
    out[0] = (lambda[0] * r[0] - nu) / rho;
    out.tail(n - 1) = (r.tail(n - 1) - out[0] * lambda.tail(n - 1)) / lambda[0];
    return out;
}

}  // namespace detail

void ConicProgram::check() const
{
    auto fail = [](const std::string& msg) { throw std::invalid_argument("conic program: " + msg); };
    if (num_vars < 0 || c.size() != num_vars) {
        fail("objective length does not match variable count");
    }
    if (P.rows() != num_vars || P.cols() != num_vars) {
        fail("P must be square in the variable count");
    }
    if (A.cols() != num_vars || A.rows() != b.size()) {
        fail("A/b dimensions disagree");
    }
    if (G.cols() != num_vars || G.rows() != h.size()) {
        fail("G/h dimensions disagree");
    }
    if (soc_dims.size() != soc_offsets.size()) {
        fail("cone offsets and dimensions disagree");
    }
    int row = num_orthant;
    for (std::size_t k = 0; k < soc_dims.size(); ++k) {
        if (soc_dims[k] < 2) {
            fail("second order cones need dimension >= 2");
        }
        if (soc_offsets[k] != row) {
            fail("cone " + std::to_string(k) + " does not start where the previous block ends");
        }
        row += soc_dims[k];
    }
    if (row != h.size()) {
        fail("cone blocks do not cover every inequality row");
    }
    if (!c.allFinite() || !b.allFinite() || !h.allFinite()) {
        fail("non-finite data");
    }
}

int ProgramBuilder::add_variable()
{
    c_.push_back(0.0);
    return num_vars_++;
}

int ProgramBuilder::add_variables(int count)
{
    const int first = num_vars_;
    for (int i = 0; i < count; ++i) {
        add_variable();
    }
    return first;
}

void ProgramBuilder::add_linear_cost(int var, double coef) { c_.at(var) += coef; }

void ProgramBuilder::add_quadratic_cost(int i, int j, double coef)
{
    if (i == j) {
        p_.emplace_back(i, i, 2.0 * coef);
    } else {
        p_.emplace_back(i, j, coef);
        p_.emplace_back(j, i, coef);
    }
}

int ProgramBuilder::add_equality(const std::vector<Term>& terms, double rhs)
{
    const int row = num_eq();
    for (const Term& t : terms) {
        a_.emplace_back(row, t.var, t.coef);
    }
    eq_rhs_.push_back(rhs);
    return row;
}

int ProgramBuilder::add_inequality(const std::vector<Term>& terms, double rhs)
{
    const int row = num_lin();
    for (const Term& t : terms) {
        lin_.emplace_back(row, t.var, t.coef);
    }
    lin_rhs_.push_back(rhs);
    return row;
}

std::pair<int, int> ProgramBuilder::add_bounds(int var, double lo, double hi)
{
    int lo_row = -1;
    int hi_row = -1;
    if (std::isfinite(lo)) {
        lo_row = add_inequality({{var, -1.0}}, -lo);
    }
    if (std::isfinite(hi)) {
        hi_row = add_inequality({{var, 1.0}}, hi);
    }
    return {lo_row, hi_row};
}

int ProgramBuilder::add_soc(const std::vector<AffineExpr>& expr)
{
    cones_.push_back(expr);
    return static_cast<int>(cones_.size()) - 1;
}

int ProgramBuilder::cone_offset(int cone) const
{
    int off = num_lin();
    for (int k = 0; k < cone; ++k) {
        off += static_cast<int>(cones_[k].size());
    }
    return off;
}

ConicProgram ProgramBuilder::build() const
{
    ConicProgram prog;
    const int n = num_vars_;
    prog.num_vars = n;
    prog.c = Eigen::Map<const Eigen::VectorXd>(c_.data(), n);
    prog.c0 = c0_;
    prog.P.resize(n, n);
    prog.P.setFromTriplets(p_.begin(), p_.end());
    prog.A.resize(num_eq(), n);
    prog.A.setFromTriplets(a_.begin(), a_.end());
    prog.b = Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(), num_eq());

    std::vector<Eigen::Triplet<double>> g = lin_;
    std::vector<double> h = lin_rhs_;
    prog.num_orthant = num_lin();
    int row = num_lin();
    for (const auto& cone : cones_) {
        prog.soc_offsets.push_back(row);
        prog.soc_dims.push_back(static_cast<int>(cone.size()));
        for (const AffineExpr& e : cone) {
            for (const Term& t : e.terms) {
                g.emplace_back(row, t.var, -t.coef);
            }
            h.push_back(e.constant);
            ++row;
        }
    }
    prog.G.resize(row, n);
    prog.G.setFromTriplets(g.begin(), g.end());
    prog.h = Eigen::Map<const Eigen::VectorXd>(h.data(), row);
    return prog;
}

const char* to_string(ConicStatus status)
{
    switch (status) {
    case ConicStatus::Optimal:
        return "optimal";
    case ConicStatus::NearOptimal:
        return "near-optimal";
    case ConicStatus::Infeasible:
        return "infeasible";
    case ConicStatus::Unbounded:
        return "unbounded";
    case ConicStatus::Stall:
        return "stall";
    }
    return "unknown";
}

ConicSolution solve_conic_nothrow(const ConicProgram& prog, const ConicSettings& settings)
{
    prog.check();
    const int n = prog.num_vars;
    const int p = prog.num_eq();
    const int m = prog.num_ineq();
    const Cones cones(prog);
    KktSolver kkt(prog, cones, settings);

    ConicSolution sol;
    sol.x = Eigen::VectorXd::Zero(n);
    sol.y = Eigen::VectorXd::Zero(p);
    sol.z = Eigen::VectorXd::Zero(m);
    sol.s = Eigen::VectorXd::Zero(m);

    const double cnorm = std::max(1.0, prog.c.norm());
    const double bnorm = std::max(1.0, prog.b.norm());
    const double hnorm = std::max(1.0, prog.h.norm());

    Eigen::VectorXd rhs(n + p + m);
    Eigen::VectorXd d;
    const Scaling unit = cones.identity_scaling();
    if (!kkt.factor(unit)) {
        sol.status = ConicStatus::Stall;
        return sol;
    }
    rhs << -prog.c, prog.b, prog.h;
    if (!kkt.solve(rhs, d)) {
        sol.status = ConicStatus::Stall;
        return sol;
    }
    Eigen::VectorXd x = d.head(n);
    Eigen::VectorXd y = d.segment(n, p);
    Eigen::VectorXd z = d.tail(m);

    if (m == 0) {
        sol.x = x;
        sol.y = y;
        sol.objective = objective_of(prog, x);
        sol.pres = (prog.A * x - prog.b).norm() / bnorm;
        sol.dres = (prog.P * x + prog.c + prog.A.transpose() * y).norm() / cnorm;
        sol.gap = 0.0;
        sol.status = std::max(sol.pres, sol.dres) <= settings.tol ? ConicStatus::Optimal : ConicStatus::Stall;
        return sol;
    }

    const Eigen::VectorXd e = cones.identity();
    Eigen::VectorXd s = -z;
    {
        const double ts = -cones.min_eig(s);
        if (ts >= -1e-8 * std::max(1.0, s.norm())) {
            s += (1.0 + std::max(ts, 0.0)) * e;
        }
        const double tz = -cones.min_eig(z);
        if (tz >= -1e-8 * std::max(1.0, z.norm())) {
            z += (1.0 + std::max(tz, 0.0)) * e;
        }
    }

    const double nu = cones.degree();
    Metrics best;
    ConicSolution best_sol = sol;

    auto record = [&](const Metrics& met, int iter) {
        if (met.score() < best.score()) {
            best = met;
            best_sol.x = x;
            best_sol.y = y;
            best_sol.z = z;
            best_sol.s = s;
            best_sol.objective = met.pobj + prog.c0;
            best_sol.iterations = iter;
            best_sol.pres = met.pres;
            best_sol.dres = met.dres;
            best_sol.gap = met.gap;
        }
    };

    auto certificates = [&](double thresh) -> ConicStatus {
        const double hzby = prog.h.dot(z) + prog.b.dot(y);
        if (hzby < 0.0) {
            const double ratio = (prog.A.transpose() * y + prog.G.transpose() * z).norm() / (-hzby);
            if (ratio <= thresh && best.pres > settings.near_tol) {
                return ConicStatus::Infeasible;
            }
        }
        const double cx = prog.c.dot(x);
        if (cx < 0.0) {
            const double ratio =
                std::max({(prog.P * x).norm(), (prog.A * x).norm(), (prog.G * x + s).norm()}) / (-cx);
            if (ratio <= thresh && best.dres > settings.near_tol) {
                return ConicStatus::Unbounded;
            }
        }
        return ConicStatus::Stall;
    };

    auto finish_stalled = [&](int iter) {
        const ConicStatus cert = certificates(1e-5);
        if (cert != ConicStatus::Stall) {
            sol = best_sol;
            sol.status = cert;
            sol.iterations = iter;
            return sol;
        }
        sol = best_sol;
        sol.iterations = iter;
        sol.status = best.score() <= settings.near_tol ? ConicStatus::NearOptimal : ConicStatus::Stall;
        return sol;
    };

    for (int iter = 0; iter <= settings.max_iters; ++iter) {
        const Eigen::VectorXd Px = prog.P * x;
        const Eigen::VectorXd rx = Px + prog.c + prog.A.transpose() * y + prog.G.transpose() * z;
        const Eigen::VectorXd ry = prog.A * x - prog.b;
        const Eigen::VectorXd rz = prog.G * x + s - prog.h;
        const double gap = s.dot(z);
        const double mu = gap / nu;

        Metrics met;
        met.pobj = 0.5 * x.dot(Px) + prog.c.dot(x);
        met.pres = std::max(ry.norm() / bnorm, rz.norm() / hnorm);
        met.dres = rx.norm() / cnorm;
        met.gap = gap;
        met.relgap = gap / std::max(1.0, std::abs(met.pobj + prog.c0));
        if (!std::isfinite(met.score())) {
            return finish_stalled(iter);
        }
        record(met, iter);

        if (met.pres <= settings.tol && met.dres <= settings.tol && met.relgap <= settings.tol) {
            sol = best_sol;
            sol.x = x;
            sol.y = y;
            sol.z = z;
            sol.s = s;
            sol.objective = met.pobj + prog.c0;
            sol.iterations = iter;
            sol.pres = met.pres;
            sol.dres = met.dres;
            sol.gap = met.gap;
            sol.status = ConicStatus::Optimal;
            return sol;
        }
        const ConicStatus cert = certificates(1e-8);
        if (cert != ConicStatus::Stall) {
            sol = best_sol;
            sol.status = cert;
            sol.iterations = iter;
            return sol;
        }
        if (iter == settings.max_iters) {
            break;
        }

        const Scaling sc = cones.scaling(s, z);
        const Eigen::VectorXd lambda = cones.apply_w(sc, s);
        if (!kkt.factor(sc)) {
            return finish_stalled(iter);
        }

        // Predictor.
        rhs << -rx, -ry, -rz + s;
        if (!kkt.solve(rhs, d)) {
            return finish_stalled(iter);
        }
        const Eigen::VectorXd dz_a = d.tail(m);
        const Eigen::VectorXd ds_a = -s - cones.apply_winv(sc, cones.apply_winv(sc, dz_a));
        const double alpha_a = std::min({1.0, cones.max_step(s, ds_a), cones.max_step(z, dz_a)});
        const double ratio = (s + alpha_a * ds_a).dot(z + alpha_a * dz_a) / gap;
        const double sigma = std::pow(std::clamp(ratio, 0.0, 1.0), 3);

        // Corrector.
        const Eigen::VectorXd rc =
            cones.product(lambda, lambda) +
            cones.product(cones.apply_w(sc, ds_a), cones.apply_winv(sc, dz_a)) - sigma * mu * e;
        const Eigen::VectorXd u = cones.divide(lambda, -rc);
        const Eigen::VectorXd winv_u = cones.apply_winv(sc, u);
        rhs << -rx, -ry, -rz - winv_u;
        if (!kkt.solve(rhs, d)) {
            return finish_stalled(iter);
        }
        const Eigen::VectorXd dx = d.head(n);
        const Eigen::VectorXd dy = d.segment(n, p);
        const Eigen::VectorXd dz = d.tail(m);
        const Eigen::VectorXd ds = winv_u - cones.apply_winv(sc, cones.apply_winv(sc, dz));

        const double alpha =
            std::min(1.0, settings.step_fraction * std::min(cones.max_step(s, ds), cones.max_step(z, dz)));
        if (!(alpha > 1e-12)) {
            return finish_stalled(iter);
        }
        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
    }
    return finish_stalled(settings.max_iters);
}

ConicSolution solve_conic(const ConicProgram& prog, const ConicSettings& settings)
{
    ConicSolution sol = solve_conic_nothrow(prog, settings);
    std::ostringstream msg;
    msg << "conic solve " << to_string(sol.status) << " after " << sol.iterations << " iterations (pres "
        << sol.pres << ", dres " << sol.dres << ", gap " << sol.gap << ")";
    switch (sol.status) {
    case ConicStatus::Optimal:
    case ConicStatus::NearOptimal:
        return sol;
    case ConicStatus::Infeasible:
        throw InfeasibleError(msg.str());
    case ConicStatus::Unbounded:
        throw UnboundedError(msg.str());
    case ConicStatus::Stall:
        break;
    }
    throw SolverStallError(msg.str());
}

}  // namespace p2p2g
