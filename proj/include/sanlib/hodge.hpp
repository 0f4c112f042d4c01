#pragma once

#include <Eigen/Dense>

#include "sanlib/complex.hpp"

namespace san {

using Mat = Eigen::MatrixXd;

struct HodgeParts {
    Vec irrotational;  // projection onto im(B_k^T), the gradient space
    Vec solenoidal;    // projection onto im(B_{k+1}), the curl space
    Vec harmonic;      // remainder, lives in ker(L_k)
};

/// Splits a k-signal into its three orthogonal components. Projections are
/// computed by conjugate gradient on the normal equations of the two
/// Laplacian terms (tolerance 1e-12), not by explicit pseudo-inverses.
HodgeParts hodge_decompose(const Vec& x, const SpMat& L_down, const SpMat& L_up);

Vec divergence(const SpMat& B1, const Vec& edge_signal);  // B_1 x
Vec curl(const SpMat& B2, const Vec& edge_signal);        // B_2^T x

/// Largest eigenvalue estimate by power iteration (200 iterations,
/// tolerance 1e-8), inflated by 1% as a safety factor.
double lambda_max_estimate(const SpMat& L);

struct SpectralBasis {
    Vec eigenvalues;   // ascending
    Mat eigenvectors;  // orthonormal columns
    int harmonic_dim = 0;
};

/// Full eigendecomposition of a symmetric PSD Laplacian; harmonic_dim counts
/// eigenvalues below zero_tol. zero_tol <= 0 selects the default
/// 1e-8 * lambda_max.
SpectralBasis spectral_basis(const SpMat& L, double zero_tol = -1.0);

/// Dense projector P = U~ U~^T onto ker(L).
Mat exact_harmonic_projector(const SpMat& L, double zero_tol = -1.0);

struct ProjectorSpec {
    double epsilon = 0.0;  // step, must satisfy 0 < eps <= 2/lambda_max(L)
    int j_h = 0;           // power J^(h); 0 yields the identity
};

/// Sparse approximate projector (I - eps L)^{J^(h)}. Falls back to a dense
/// product internally once fill-in exceeds 50%; the result is re-exported
/// sparse with exact zeros pruned.
SpMat sparse_harmonic_projector(const SpMat& L, const ProjectorSpec& spec);

} // namespace san
