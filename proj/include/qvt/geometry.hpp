#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "qvt/rng.hpp"

// Local transfer geometry of donor patching, in f64.
//
// Near the receiver's own quantization vector rho_R the post-quantization
// objective is modelled as
//
//     g(delta) = g0 + 1/2 (delta - rho_R)^T H (delta - rho_R),   H SPD,
//
// optionally plus a cubic perturbation with Hessian-Lipschitz constant L.
// The best scaled donor patch lambda* rho_D is the H-projection of rho_R onto
// the donor line, and the fraction of the receiver-side gain it recovers is
// cos_H^2(rho_D, rho_R).
namespace qvt::geometry {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class QuadraticModel {
public:
    // Throws ValidationError unless H is square, matches rho_R, is symmetric
    // within 1e-12 (relative to its largest entry) and admits a Cholesky
    // factorization.
    QuadraticModel(Mat hessian, Vec rho_r, double g0 = 0.0);

    const Mat & hessian() const noexcept { return hessian_; }
    const Vec & rho_r() const noexcept { return rho_r_; }
    double      g0() const noexcept { return g0_; }
    Eigen::Index dim() const noexcept { return rho_r_.size(); }

    // Same H and g0, receiver vector replaced.
    QuadraticModel with_receiver(Vec rho_r) const { return QuadraticModel(hessian_, std::move(rho_r), g0_); }

    // u^T H v
    double inner(const Vec & u, const Vec & v) const { return u.dot(hessian_ * v); }

private:
    Mat    hessian_;
    Vec    rho_r_;
    double g0_;
};

double quadratic_objective(const QuadraticModel & m, const Vec & delta);

// lambda* = (rho_D^T H rho_R) / (rho_D^T H rho_D).
double optimal_lambda(const QuadraticModel & m, const Vec & rho_d);

// cos_H^2(rho_D, rho_R).
double h_cos_sq(const QuadraticModel & m, const Vec & rho_d);

// [g(0) - g(lambda* rho_D)] / [g(0) - g(rho_R)] by direct evaluation of the
// objective.
double recovered_fraction(const QuadraticModel & m, const Vec & rho_d);

struct LineSearchResult {
    double lambda      = 0.0;
    double value       = 0.0;
    // The minimizer sits on the bracket boundary, i.e. the bracket does not
    // contain an interior minimum.
    bool   at_boundary = false;
    int    iterations  = 0;
};

// Golden-section minimization of a unimodal function on [lo, hi]; stops
// once the bracket is narrower than `tol`.
LineSearchResult line_search_lambda(const std::function<double(double)> & objective, double lo, double hi,
                                    double tol);

// Base quadratic plus (L/6) sum_k c_k (u_k^T (delta - rho_R))^3 with unit
// u_k and sum_k |c_k| = 1. Its Hessian is L sum_k c_k (u_k^T e) u_k u_k^T,
// which is L-Lipschitz in the spectral norm.
class CubicModel {
public:
    // Throws ValidationError on negative L, non-unit directions, coefficient
    // magnitudes that do not sum to 1, or dimension mismatches.
    CubicModel(QuadraticModel base, double lipschitz, std::vector<Vec> directions, std::vector<double> coeffs);

    const QuadraticModel &      base() const noexcept { return base_; }
    double                      lipschitz() const noexcept { return lipschitz_; }
    const std::vector<Vec> &    directions() const noexcept { return directions_; }
    const std::vector<double> & coeffs() const noexcept { return coeffs_; }

    CubicModel with_receiver(Vec rho_r) const {
        return CubicModel(base_.with_receiver(std::move(rho_r)), lipschitz_, directions_, coeffs_);
    }

    // Cubic perturbation r(delta) alone.
    double remainder(const Vec & delta) const;

private:
    QuadraticModel      base_;
    double              lipschitz_;
    std::vector<Vec>    directions_;
    std::vector<double> coeffs_;
};

double cubic_objective(const CubicModel & m, const Vec & delta);

struct Deviation {
    double epsilon = 0.0;  // gain(lambda* rho_D) - cos_H^2 * gain(rho_R), on the cubic model
    double bound   = 0.0;  // (L/6)(|rho_R|^3 + |lambda* rho_D - rho_R|^3), Euclidean norms
};

// lambda* and cos_H^2 come from the base quadratic (H is the Hessian at rho_R).
Deviation second_order_deviation(const CubicModel & m, const Vec & rho_d);

// --- seeded instance generators -------------------------------------------

// H = A^T A + 1e-3 d I with standard-normal A, eigenvalues clipped from
// below so that cond(H) <= max_condition.
Mat random_spd(Eigen::Index d, Rng & rng, double max_condition = 1e4);

Vec random_normal(Eigen::Index d, Rng & rng);

// A donor vector H-orthogonal to rho (Gram-Schmidt in the H inner product).
Vec h_orthogonal_to(const QuadraticModel & m, const Vec & v);

// Cubic model around a random SPD quadratic with 1-3 random unit directions
// and signed coefficients normalised to sum |c_k| = 1.
CubicModel random_cubic(Eigen::Index d, double lipschitz, Rng & rng);

// --- batch verification (drives the verify-geometry command) --------------

struct InstanceRecord {
    std::int64_t index        = 0;
    std::int64_t dim          = 0;
    std::string  kind;          // "generic", "collinear" or "h_orthogonal"
    double       lambda_star  = 0.0;
    double       lambda_line  = 0.0;
    double       cos_sq       = 0.0;
    double       fraction     = 0.0;
    double       lipschitz    = 0.0;
    double       epsilon      = 0.0;
    double       bound        = 0.0;
    bool         pass         = false;
};

struct VerificationSummary {
    std::vector<InstanceRecord> records;
    std::int64_t                failures                = 0;
    double                      max_identity_error      = 0.0;  // |fraction - cos^2|
    double                      max_lambda_error        = 0.0;  // |lambda* - golden section|
    double                      max_bound_ratio         = 0.0;  // |eps| / bound over L > 0
    double                      min_cubic_slope         = 0.0;  // log-log slope of |eps| vs scale
};

// Tolerances: identity 1e-9, line search 1e-6, collinear fraction 1 +- 1e-10,
// H-orthogonal fraction <= 1e-10, |eps| <= bound (<= 1e-10 when L = 0),
// cubic slope >= 2.9.
VerificationSummary verify_geometry(std::int64_t instances, const std::vector<std::int64_t> & dims,
                                    std::uint64_t seed);

}  // namespace qvt::geometry
