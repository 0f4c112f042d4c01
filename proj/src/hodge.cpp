#include "sanlib/hodge.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace san {

// CG on the consistent system A^2 z = A x; the projection of x onto im(A)
// is then A z. A is symmetric PSD.
static Vec project_onto_range(const SpMat& A, const Vec& x, double tol = 1e-12) {
    const int n = static_cast<int>(A.rows());
    if (A.nonZeros() == 0) return Vec::Zero(n);
    Vec b = A * x;
    Vec z = Vec::Zero(n);
    Vec r = b;  // b - A^2 z with z = 0
    Vec p = r;
    double rs = r.squaredNorm();
    const double b2 = b.squaredNorm();
    if (b2 == 0.0) return Vec::Zero(n);
    const int max_iter = 20 * n + 100;
    for (int it = 0; it < max_iter && rs > tol * tol * b2; ++it) {
        Vec Ap = A * (A * p).eval();
        double denom = p.dot(Ap);
        if (denom <= 0.0) break;
        double alpha = rs / denom;
        z += alpha * p;
        r -= alpha * Ap;
        double rs_new = r.squaredNorm();
        p = r + (rs_new / rs) * p;
        rs = rs_new;
    }
    return A * z;
}

HodgeParts hodge_decompose(const Vec& x, const SpMat& L_down, const SpMat& L_up) {
    if (L_down.rows() != x.size() || L_up.rows() != x.size() ||
        L_down.cols() != x.size() || L_up.cols() != x.size())
        throw DimensionMismatch("hodge_decompose: signal/Laplacian size mismatch");
    HodgeParts parts;
    parts.irrotational = project_onto_range(L_down, x);
    parts.solenoidal = project_onto_range(L_up, x);
    parts.harmonic = x - parts.irrotational - parts.solenoidal;
    return parts;
}

Vec divergence(const SpMat& B1, const Vec& edge_signal) {
    if (B1.cols() != edge_signal.size())
        throw DimensionMismatch("divergence: signal length != edge count");
    return B1 * edge_signal;
}

Vec curl(const SpMat& B2, const Vec& edge_signal) {
    if (B2.rows() != edge_signal.size())
        throw DimensionMismatch("curl: signal length != edge count");
    return B2.transpose() * edge_signal;
}

double lambda_max_estimate(const SpMat& L) {
    const int n = static_cast<int>(L.rows());
    if (n == 0 || L.nonZeros() == 0) return 0.0;
    // deterministic start vector; perturbed index pattern avoids landing in
    // an invariant subspace of structured Laplacians
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * ((i * 2654435761u) % 97);
    v.normalize();
    double lam = 0.0;
    for (int it = 0; it < 200; ++it) {
        Vec w = L * v;
        double nw = w.norm();
        if (nw == 0.0) return 0.0;
        w /= nw;
        double lam_new = w.dot(L * w);
        if (std::abs(lam_new - lam) <= 1e-8 * std::max(1.0, std::abs(lam_new))) {
            lam = lam_new;
            break;
        }
        lam = lam_new;
        v = w;
    }
    return lam * 1.01;
}

SpectralBasis spectral_basis(const SpMat& L, double zero_tol) {
    Mat dense = Mat(L);
    Eigen::SelfAdjointEigenSolver<Mat> es(dense);
    if (es.info() != Eigen::Success)
        throw EigenFailure("spectral_basis: eigensolver did not converge");
    SpectralBasis b;
    b.eigenvalues = es.eigenvalues();
    b.eigenvectors = es.eigenvectors();
    double lam_max = b.eigenvalues.size() ? b.eigenvalues[b.eigenvalues.size() - 1] : 0.0;
    if (zero_tol <= 0.0) zero_tol = 1e-8 * std::max(lam_max, 1.0);
    b.harmonic_dim = 0;
    for (int i = 0; i < b.eigenvalues.size(); ++i)
        if (b.eigenvalues[i] < zero_tol) ++b.harmonic_dim;
    return b;
}

Mat exact_harmonic_projector(const SpMat& L, double zero_tol) {
    SpectralBasis b = spectral_basis(L, zero_tol);
    const int n = static_cast<int>(L.rows());
    if (b.harmonic_dim == 0) return Mat::Zero(n, n);
    Mat U = b.eigenvectors.leftCols(b.harmonic_dim);
    return U * U.transpose();
}

SpMat sparse_harmonic_projector(const SpMat& L, const ProjectorSpec& spec) {
    const int n = static_cast<int>(L.rows());
    double lam = lambda_max_estimate(L);
    if (spec.epsilon <= 0.0 || (lam > 0.0 && spec.epsilon > 2.0 / lam * (1.0 + 1e-12)))
        throw EpsilonOutOfRange("sparse_harmonic_projector: epsilon " +
                                std::to_string(spec.epsilon) + " outside (0, 2/lambda_max]");
    SpMat I(n, n);
    I.setIdentity();
    if (spec.j_h == 0) return I;
    SpMat M = I - spec.epsilon * L;
    M.prune(0.0);

    // repeated squaring in sparse form; switch to dense past 50% fill
    SpMat acc = I;
    SpMat base = M;
    int e = spec.j_h;
    bool dense_mode = false;
    Mat acc_d, base_d;
    auto densify = [&]() {
        acc_d = Mat(acc);
        base_d = Mat(base);
        dense_mode = true;
    };
    while (e > 0) {
        if (!dense_mode &&
            (acc.nonZeros() > 0.5 * n * n || base.nonZeros() > 0.5 * n * n))
            densify();
        if (e & 1) {
            if (dense_mode) acc_d = acc_d * base_d;
            else acc = SpMat(acc * base);
        }
        e >>= 1;
        if (e > 0) {
            if (dense_mode) base_d = base_d * base_d;
            else base = SpMat(base * base);
        }
    }
    SpMat out = dense_mode ? acc_d.sparseView(1.0, 0.0) : acc;
    out.prune(0.0);
    out.makeCompressed();
    return out;
}

} // namespace san
