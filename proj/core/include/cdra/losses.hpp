#pragma once

#include "cdra/linalg.hpp"
#include "cdra/network.hpp"

namespace cdra {

double cosine_similarity(const Vector& a, const Vector& b);

struct PairGrad {
    Matrix d_x;
    Matrix d_y;
};

// Symmetrized in-batch InfoNCE over cosine similarity. Row i of up_x and
// row i of up_y form the positive pair; every other row of the opposite
// side is a negative. Each direction is the mean over rows of
//   -log( exp(s_ii / tau) / sum_j exp(s_ij / tau) )
// and the result averages the X->Y and Y->X directions.
double contrastive_loss(const Matrix& up_x, const Matrix& up_y, double tau, PairGrad* grad = nullptr);

struct ScaleGrad {
    Matrix d_x;
    Matrix d_y;
    AffineMap d_f1;
    AffineMap d_f2;
};

// Mean over rows of |F1(x_i) - y_i| + |F2(y_i) - x_i| (Euclidean norms).
double scale_alignment_loss(const Matrix& up_x, const Matrix& up_y, const AffineMap& f1, const AffineMap& f2,
                            ScaleGrad* grad = nullptr);

// Mean Euclidean distance between paired rows. Gradient is taken with
// respect to `approx`.
double mean_row_distance(const Matrix& reference, const Matrix& approx, Matrix* d_approx = nullptr);

struct ReconstructionGrad {
    Matrix d_x_hat;
    Matrix d_y_hat;
};

// Sum of both domains' mean round-trip distances.
double reconstruction_loss(const Matrix& u_x, const Matrix& u_x_hat, const Matrix& u_y, const Matrix& u_y_hat,
                           ReconstructionGrad* grad = nullptr);

struct Lambdas {
    double l1 = 1.0;
    double l2 = 1.0;
    double l3 = 1.0;
    friend bool operator==(const Lambdas&, const Lambdas&) = default;
};

struct LossBreakdown {
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
    double total = 0.0;
};

LossBreakdown total_loss(double l1, double l2, double l3, const Lambdas& lambdas);

}  // namespace cdra
