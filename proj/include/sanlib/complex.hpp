#pragma once

#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "sanlib/errors.hpp"

namespace san {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

/// A k-simplex stored with ascending vertex ids; the ascending order is the
/// reference orientation for all incidence signs.
struct Simplex {
    std::vector<int> vertices;

    int order() const { return static_cast<int>(vertices.size()) - 1; }
    bool operator==(const Simplex&) const = default;
    bool operator<(const Simplex& o) const { return vertices < o.vertices; }
};

/// Simplicial complex closed under taking faces. Simplices of each order are
/// kept in lexicographic order; all matrices index against that ordering.
/// Immutable after construction.
class SimplicialComplex {
public:
    int max_order() const { return static_cast<int>(by_order_.size()) - 1; }
    int count(int k) const {
        return (k >= 0 && k <= max_order()) ? static_cast<int>(by_order_[k].size()) : 0;
    }
    const std::vector<Simplex>& simplices(int k) const;
    /// Index of a simplex within its order, -1 if absent.
    int index_of(const Simplex& s) const;

    static SimplicialComplex from_top_simplices(const std::vector<std::vector<int>>& tops);

private:
    std::vector<std::vector<Simplex>> by_order_;
};

SimplicialComplex build_complex(const std::vector<std::vector<int>>& top_simplices);

/// Signed incidence matrix B_k (N_{k-1} x N_k); face omitting the j-th vertex
/// of an ascending k-simplex gets sign (-1)^j. Built in integer arithmetic.
SpMat incidence_matrix(const SimplicialComplex& X, int k);

struct Laplacians {
    SpMat down;  // B_k^T B_k      (zero matrix at k = 0)
    SpMat up;    // B_{k+1} B_{k+1}^T (zero matrix at k = K)
    SpMat full;  // down + up
};

Laplacians laplacian(const SimplicialComplex& X, int k);

/// Upper/lower neighbor index lists per k-simplex, read off the nonzero
/// patterns of the two Laplacian terms. Self-inclusive: i is always in its
/// own neighborhood, so attention softmax rows are never empty.
struct NeighborhoodTable {
    int order = 0;
    bool self_inclusive = true;
    std::vector<std::vector<int>> upper;
    std::vector<std::vector<int>> lower;
};

NeighborhoodTable neighborhoods(const SimplicialComplex& X, int k);
NeighborhoodTable neighborhoods(const Laplacians& lap);

/// Text format: one simplex per line, `k v0 v1 ... vk`, '#' comments.
/// Only top simplices need listing; closure is computed on load.
SimplicialComplex load_complex(const std::string& path);
void save_complex(const SimplicialComplex& X, const std::string& path);

/// FNV-1a hash of a file's bytes, hex-encoded; used as complex fingerprint.
std::string file_fingerprint(const std::string& path);

} // namespace san
