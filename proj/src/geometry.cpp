#include "qvt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "qvt/errors.hpp"

namespace qvt::geometry {

namespace {

void require_dim(const QuadraticModel & m, const Vec & v, const char * what) {
    if (v.size() != m.dim()) {
        throw ValidationError(std::string(what) + " has dimension " + std::to_string(v.size()) + ", model has " +
                              std::to_string(m.dim()));
    }
}

void require_nonzero(const Vec & v, const char * what) {
    if (v.squaredNorm() == 0.0) {
        throw ValidationError(std::string(what) + " must be nonzero");
    }
}

}  // namespace

QuadraticModel::QuadraticModel(Mat hessian, Vec rho_r, double g0)
    : hessian_(std::move(hessian)), rho_r_(std::move(rho_r)), g0_(g0) {
    if (hessian_.rows() != hessian_.cols() || hessian_.rows() != rho_r_.size() || rho_r_.size() == 0) {
        throw ValidationError("quadratic model needs a square Hessian matching the receiver vector");
    }
    const double scale = std::max(1.0, hessian_.cwiseAbs().maxCoeff());
    if ((hessian_ - hessian_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ValidationError("Hessian is not symmetric");
    }
    Eigen::LLT<Mat> llt(hessian_);
    if (llt.info() != Eigen::Success) {
        throw ValidationError("Hessian is not positive definite");
    }
}

double quadratic_objective(const QuadraticModel & m, const Vec & delta) {
    require_dim(m, delta, "delta");
    const Vec e = delta - m.rho_r();
    return m.g0() + 0.5 * m.inner(e, e);
}

double optimal_lambda(const QuadraticModel & m, const Vec & rho_d) {
    require_dim(m, rho_d, "donor vector");
    require_nonzero(rho_d, "donor vector");
    return m.inner(rho_d, m.rho_r()) / m.inner(rho_d, rho_d);
}

double h_cos_sq(const QuadraticModel & m, const Vec & rho_d) {
    require_dim(m, rho_d, "donor vector");
    require_nonzero(rho_d, "donor vector");
    require_nonzero(m.rho_r(), "receiver vector");
    const double dr = m.inner(rho_d, m.rho_r());
    return (dr * dr) / (m.inner(rho_d, rho_d) * m.inner(m.rho_r(), m.rho_r()));
}

double recovered_fraction(const QuadraticModel & m, const Vec & rho_d) {
    require_nonzero(m.rho_r(), "receiver vector");
    const double lambda   = optimal_lambda(m, rho_d);
    const Vec    zero     = Vec::Zero(m.dim());
    const double g_zero   = quadratic_objective(m, zero);
    const double full_gap = g_zero - quadratic_objective(m, m.rho_r());
    if (full_gap == 0.0) {
        throw ValidationError("receiver-side gain g(0) - g(rho_R) is zero");
    }
    return (g_zero - quadratic_objective(m, lambda * rho_d)) / full_gap;
}

LineSearchResult line_search_lambda(const std::function<double(double)> & objective, double lo, double hi,
                                    double tol) {
    if (!(lo < hi) || !(tol > 0.0)) {
        throw ValidationError("line search needs lo < hi and tol > 0");
    }
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double       a = lo, b = hi;
    double       c = b - inv_phi * (b - a);
    double       d = a + inv_phi * (b - a);
    double       fc = objective(c), fd = objective(d);
    int          iter = 0;
    while (b - a > tol && iter < 1000) {
        if (fc <= fd) {
            b  = d;
            d  = c;
            fd = fc;
            c  = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a  = c;
            c  = d;
            fc = fd;
            d  = a + inv_phi * (b - a);
            fd = objective(d);
        }
        ++iter;
    }
    LineSearchResult out;
    out.lambda      = 0.5 * (a + b);
    out.value       = objective(out.lambda);
    out.iterations  = iter;
    out.at_boundary = (out.lambda - lo) <= tol || (hi - out.lambda) <= tol;
    return out;
}

CubicModel::CubicModel(QuadraticModel base, double lipschitz, std::vector<Vec> directions, std::vector<double> coeffs)
    : base_(std::move(base)), lipschitz_(lipschitz), directions_(std::move(directions)), coeffs_(std::move(coeffs)) {
    if (!(lipschitz_ >= 0.0) || !std::isfinite(lipschitz_)) {
        throw ValidationError("Hessian-Lipschitz constant must be finite and >= 0");
    }
    if (directions_.size() != coeffs_.size()) {
        throw ValidationError("cubic model needs one coefficient per direction");
    }
    double abs_sum = 0.0;
    for (std::size_t k = 0; k < directions_.size(); ++k) {
        if (directions_[k].size() != base_.dim()) {
            throw ValidationError("cubic direction has the wrong dimension");
        }
        if (std::abs(directions_[k].norm() - 1.0) > 1e-12) {
            throw ValidationError("cubic directions must be unit vectors");
        }
        abs_sum += std::abs(coeffs_[k]);
    }
    if (!directions_.empty() && std::abs(abs_sum - 1.0) > 1e-12) {
        throw ValidationError("cubic coefficients must satisfy sum |c_k| = 1");
    }
}

double CubicModel::remainder(const Vec & delta) const {
    if (lipschitz_ == 0.0) return 0.0;
    const Vec e   = delta - base_.rho_r();
    double    sum = 0.0;
    for (std::size_t k = 0; k < directions_.size(); ++k) {
        const double p = directions_[k].dot(e);
        sum += coeffs_[k] * p * p * p;
    }
    return lipschitz_ / 6.0 * sum;
}

double cubic_objective(const CubicModel & m, const Vec & delta) {
    return quadratic_objective(m.base(), delta) + m.remainder(delta);
}

Deviation second_order_deviation(const CubicModel & m, const Vec & rho_d) {
    const QuadraticModel & q      = m.base();
    const double           lambda = optimal_lambda(q, rho_d);
    const double           cos_sq = h_cos_sq(q, rho_d);
    const Vec              zero   = Vec::Zero(q.dim());
    const Vec              patch  = lambda * rho_d;

    const double g_zero     = cubic_objective(m, zero);
    const double donor_gain = g_zero - cubic_objective(m, patch);
    const double full_gain  = g_zero - cubic_objective(m, q.rho_r());

    Deviation out;
    out.epsilon            = donor_gain - cos_sq * full_gain;
    const double rho_norm  = q.rho_r().norm();
    const double miss_norm = (patch - q.rho_r()).norm();
    out.bound = m.lipschitz() / 6.0 * (rho_norm * rho_norm * rho_norm + miss_norm * miss_norm * miss_norm);
    return out;
}

Mat random_spd(Eigen::Index d, Rng & rng, double max_condition) {
    Mat a(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) a(i, j) = rng.normal();
    }
    Mat h = a.transpose() * a;
    h.diagonal().array() += 1e-3 * static_cast<double>(d);

    Eigen::SelfAdjointEigenSolver<Mat> eig(h);
    Vec          values = eig.eigenvalues();
    const double floor  = values.maxCoeff() / max_condition;
    bool         clipped = false;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] < floor) {
            values[i] = floor;
            clipped   = true;
        }
    }
    if (clipped) {
        h = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    }
    return 0.5 * (h + h.transpose());
}

Vec random_normal(Eigen::Index d, Rng & rng) {
    Vec v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
    return v;
}

Vec h_orthogonal_to(const QuadraticModel & m, const Vec & v) {
    const Vec & r = m.rho_r();
    return v - (m.inner(v, r) / m.inner(r, r)) * r;
}

CubicModel random_cubic(Eigen::Index d, double lipschitz, Rng & rng) {
    Mat          h     = random_spd(d, rng);
    Vec          rho   = random_normal(d, rng);
    const double g0    = rng.uniform(-1.0, 1.0);
    const auto   count = static_cast<std::size_t>(1 + rng.below(3));

    std::vector<Vec>    dirs;
    std::vector<double> coeffs;
    double              abs_sum = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        Vec u;
        do {
            u = random_normal(d, rng);
        } while (u.norm() == 0.0);
        dirs.push_back(u / u.norm());
        double c;
        do {
            c = rng.normal();
        } while (c == 0.0);
        coeffs.push_back(c);
        abs_sum += std::abs(c);
    }
    for (double & c : coeffs) c /= abs_sum;
    return CubicModel(QuadraticModel(std::move(h), std::move(rho), g0), lipschitz, std::move(dirs),
                      std::move(coeffs));
}

namespace {

// Least-squares slope of log|y| against log x.
double log_log_slope(const std::vector<double> & x, const std::vector<double> & y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(std::abs(y[i]));
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        num += dx * (std::log(std::abs(y[i])) - my);
        den += dx * dx;
    }
    return num / den;
}

}  // namespace

VerificationSummary verify_geometry(std::int64_t instances, const std::vector<std::int64_t> & dims,
                                    std::uint64_t seed) {
    if (instances <= 0 || dims.empty()) {
        throw ValidationError("verify_geometry needs a positive instance count and at least one dimension");
    }
    for (auto d : dims) {
        if (d < 2) throw ValidationError("geometry dimensions must be >= 2");
    }

    VerificationSummary summary;
    summary.min_cubic_slope = std::numeric_limits<double>::infinity();
    const std::vector<double> scales = {0.1, 0.05, 0.025};

    for (std::int64_t i = 0; i < instances; ++i) {
        Rng                rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const Eigen::Index d    = dims[static_cast<std::size_t>(i) % dims.size()];
        const double       lip  = (i % 10 == 0) ? 0.0 : rng.uniform(0.05, 5.0);
        const CubicModel   cm   = random_cubic(d, lip, rng);
        const auto &       q    = cm.base();

        InstanceRecord rec;
        rec.index     = i;
        rec.dim       = d;
        rec.lipschitz = lip;
        Vec rho_d;
        switch (i % 10) {
            case 3:
                rec.kind = "collinear";
                rho_d    = rng.uniform(0.25, 4.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0) * q.rho_r();
                break;
            case 7:
                rec.kind = "h_orthogonal";
                rho_d    = h_orthogonal_to(q, random_normal(d, rng));
                break;
            default:
                rec.kind = "generic";
                rho_d    = random_normal(d, rng);
                break;
        }

        rec.lambda_star = optimal_lambda(q, rho_d);
        rec.cos_sq      = h_cos_sq(q, rho_d);
        rec.fraction    = recovered_fraction(q, rho_d);

        // Cauchy-Schwarz bracket: |lambda*| <= |rho_R|_H / |rho_D|_H.
        const double reach = std::sqrt(q.inner(q.rho_r(), q.rho_r()) / q.inner(rho_d, rho_d));
        const auto   ls    = line_search_lambda([&](double l) { return quadratic_objective(q, l * rho_d); },
                                                -2.0 * reach - 1.0, 2.0 * reach + 1.0, 1e-10);
        rec.lambda_line    = ls.lambda;

        const Deviation dev = second_order_deviation(cm, rho_d);
        rec.epsilon         = dev.epsilon;
        rec.bound           = dev.bound;

        const double identity_err = std::abs(rec.fraction - rec.cos_sq);
        const double lambda_err   = std::abs(rec.lambda_star - rec.lambda_line);
        summary.max_identity_error = std::max(summary.max_identity_error, identity_err);
        summary.max_lambda_error   = std::max(summary.max_lambda_error, lambda_err);

        bool ok = identity_err <= 1e-9 && lambda_err <= 1e-6 && rec.cos_sq >= 0.0 && rec.cos_sq <= 1.0 + 1e-12;
        if (rec.kind == "collinear") ok = ok && std::abs(rec.fraction - 1.0) <= 1e-10;
        if (rec.kind == "h_orthogonal") ok = ok && rec.fraction <= 1e-10;
        if (lip == 0.0) {
            ok = ok && std::abs(rec.epsilon) <= 1e-10;
        } else {
            ok = ok && std::abs(rec.epsilon) <= rec.bound;
            summary.max_bound_ratio = std::max(summary.max_bound_ratio, std::abs(rec.epsilon) / rec.bound);
        }

        if (rec.kind == "generic" && lip > 0.0) {
            std::vector<double> eps;
            for (double t : scales) {
                eps.push_back(second_order_deviation(cm.with_receiver(t * q.rho_r()), rho_d).epsilon);
            }
            const double slope      = log_log_slope(scales, eps);
            summary.min_cubic_slope = std::min(summary.min_cubic_slope, slope);
            ok                      = ok && slope >= 2.9;
        }

        rec.pass = ok;
        if (!ok) ++summary.failures;
        summary.records.push_back(std::move(rec));
    }
    if (!std::isfinite(summary.min_cubic_slope)) summary.min_cubic_slope = 0.0;
    return summary;
}

}  // namespace qvt::geometry
