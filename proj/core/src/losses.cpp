#include "cdra/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cdra/error.hpp"

namespace cdra {

double cosine_similarity(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cosine similarity of unequal vectors");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::UndefinedSimilarity, "zero-norm vector");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace {

void check_pair(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorCode::DimensionMismatch, "paired matrices differ in shape");
}

// Row-normalized copy; throws on zero rows.
Matrix normalize_rows(const Matrix& m, Vector& norms) {
    norms = m.rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
        if (norms(i) == 0.0) throw Error(ErrorCode::UndefinedSimilarity, "zero-norm row " + std::to_string(i));
    }
    return norms.cwiseInverse().asDiagonal() * m;
}

// Backpropagates through x_hat = x / |x| row-wise.
Matrix normalize_backward(const Matrix& unit, const Vector& norms, const Matrix& d_unit) {
    Vector dots = unit.cwiseProduct(d_unit).rowwise().sum();
    Matrix out = d_unit - dots.asDiagonal() * unit;
    return norms.cwiseInverse().asDiagonal() * out;
}

// Row-wise softmax and log-sum-exp of a logits matrix.
Matrix row_softmax(const Matrix& logits, Vector& lse) {
    lse.resize(logits.rows());
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const auto e = (logits.row(i).array() - m).exp();
        const double s = e.sum();
        lse(i) = m + std::log(s);
        p.row(i) = e / s;
    }
    return p;
}

}  // namespace

double contrastive_loss(const Matrix& up_x, const Matrix& up_y, double tau, PairGrad* grad) {
    check_pair(up_x, up_y);
    if (up_x.rows() < 2) throw Error(ErrorCode::InvalidArgument, "contrastive loss needs at least two rows");
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");

    Vector nx;
    Vector ny;
    const Matrix ux = normalize_rows(up_x, nx);
    const Matrix uy = normalize_rows(up_y, ny);
    const Matrix logits = (ux * uy.transpose()) / tau;
    const Matrix logits_t = logits.transpose();

    Vector lse_xy;
    Vector lse_yx;
    const Matrix p_xy = row_softmax(logits, lse_xy);
    const Matrix p_yx = row_softmax(logits_t, lse_yx);
    const auto n = static_cast<double>(up_x.rows());
    const Vector diag = logits.diagonal();
    const double loss = 0.5 * ((lse_xy - diag).sum() + (lse_yx - diag).sum()) / n;

    if (grad) {
        const auto identity = Matrix::Identity(logits.rows(), logits.cols());
        const Matrix d_logits = (0.5 / n) * ((p_xy - identity) + (p_yx - identity).transpose());
        const Matrix d_sim = d_logits / tau;
        grad->d_x = normalize_backward(ux, nx, d_sim * uy);
        grad->d_y = normalize_backward(uy, ny, d_sim.transpose() * ux);
    }
    return loss;
}

double scale_alignment_loss(const Matrix& up_x, const Matrix& up_y, const AffineMap& f1, const AffineMap& f2,
                            ScaleGrad* grad) {
    check_pair(up_x, up_y);
    if (up_x.rows() < 1) throw Error(ErrorCode::InvalidArgument, "scale alignment needs at least one row");
    const Matrix r1 = apply(f1, up_x) - up_y;
    const Matrix r2 = apply(f2, up_y) - up_x;
    const Vector n1 = r1.rowwise().norm();
    const Vector n2 = r2.rowwise().norm();
    const auto n = static_cast<double>(up_x.rows());
    const double loss = (n1.sum() + n2.sum()) / n;

    if (grad) {
        // Subgradient 0 where a residual vanishes.
        auto unit_rows = [n](const Matrix& r, const Vector& norms) {
            Matrix g = Matrix::Zero(r.rows(), r.cols());
            for (Eigen::Index i = 0; i < r.rows(); ++i)
                if (norms(i) > 0.0) g.row(i) = r.row(i) / (norms(i) * n);
            return g;
        };
        const Matrix g1 = unit_rows(r1, n1);
        const Matrix g2 = unit_rows(r2, n2);
        grad->d_f1 = zeros_like(f1);
        grad->d_f2 = zeros_like(f2);
        grad->d_f1.alpha = g1.transpose() * up_x;
        grad->d_f1.beta = g1.colwise().sum().transpose();
        grad->d_f2.alpha = g2.transpose() * up_y;
        grad->d_f2.beta = g2.colwise().sum().transpose();
        if (f1.diagonal) grad->d_f1.alpha = Matrix(grad->d_f1.alpha.diagonal().asDiagonal());
        if (f2.diagonal) grad->d_f2.alpha = Matrix(grad->d_f2.alpha.diagonal().asDiagonal());
        grad->d_x = g1 * f1.alpha - g2;
        grad->d_y = g2 * f2.alpha - g1;
    }
    return loss;
}

double mean_row_distance(const Matrix& reference, const Matrix& approx, Matrix* d_approx) {
    check_pair(reference, approx);
    if (reference.rows() < 1) throw Error(ErrorCode::InvalidArgument, "distance over zero rows");
    const Matrix diff = approx - reference;
    const Vector norms = diff.rowwise().norm();
    const auto n = static_cast<double>(reference.rows());
    if (d_approx) {
        *d_approx = Matrix::Zero(diff.rows(), diff.cols());
        for (Eigen::Index i = 0; i < diff.rows(); ++i)
            if (norms(i) > 0.0) d_approx->row(i) = diff.row(i) / (norms(i) * n);
    }
    return norms.sum() / n;
}

double reconstruction_loss(const Matrix& u_x, const Matrix& u_x_hat, const Matrix& u_y, const Matrix& u_y_hat,
                           ReconstructionGrad* grad) {
    const double lx = mean_row_distance(u_x, u_x_hat, grad ? &grad->d_x_hat : nullptr);
    const double ly = mean_row_distance(u_y, u_y_hat, grad ? &grad->d_y_hat : nullptr);
    return lx + ly;
}

LossBreakdown total_loss(double l1, double l2, double l3, const Lambdas& lambdas) {
    return {l1, l2, l3, lambdas.l1 * l1 + lambdas.l2 * l2 + lambdas.l3 * l3};
}

}  // namespace cdra
