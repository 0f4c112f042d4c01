#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sanlib/errors.hpp"

namespace san {

using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Sparsity pattern of an attentional Laplacian: square, entries grouped by
/// row, diagonal always present. Built once per complex order and shared.
struct Pattern {
    int n = 0;
    std::vector<int> rows;       // entry -> i
    std::vector<int> cols;       // entry -> j
    std::vector<int> row_begin;  // size n+1, entries of row i are [row_begin[i], row_begin[i+1])

    int nnz() const { return static_cast<int>(rows.size()); }
    static Pattern from_neighbor_lists(const std::vector<std::vector<int>>& nbrs);
};

/// Reverse-mode differentiation tape over dense matrix values. Node ids are
/// indices into the tape; creation order is topological order. Sparse
/// matrices appear only as constant operands.
class Tape {
public:
    using NodeId = int;

    NodeId constant(Mat v);
    /// Leaf that participates in differentiation; param_key identifies the
    /// external parameter slot the gradient belongs to.
    NodeId param(Mat v, int param_key);

    NodeId matmul(NodeId a, NodeId b);
    NodeId sparse_matmul(const SpMat& S, NodeId b);  // S is constant
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_rowvec(NodeId a, NodeId row);  // broadcast a 1 x F row over rows of a
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId leaky_relu(NodeId a, double slope);
    NodeId relu(NodeId a);
    NodeId tanh(NodeId a);
    NodeId identity(NodeId a) { return a; }
    NodeId mean_rows(NodeId a);  // N x F -> 1 x F column means
    NodeId sum(NodeId a);        // 1 x 1

    /// Inverted dropout: training mode scales survivors by 1/(1-p);
    /// evaluation mode is the identity.
    NodeId dropout(NodeId a, double p, bool training, std::mt19937_64& rng);

    /// Pairwise attention scores over a pattern: for entry (i, j),
    /// e = [H_i || H_j]^T a with a of length 2 * cols(H). Result is nnz x 1.
    NodeId pair_scores(NodeId H, NodeId a, const Pattern& pat);
    /// Row-grouped softmax of per-entry scores (nnz x 1 -> nnz x 1).
    NodeId softmax_over_sets(NodeId scores, const Pattern& pat);
    /// Y = A(values) * Z where A has the given pattern; never materializes A.
    NodeId pattern_matmul(NodeId values, const Pattern& pat, NodeId Z);

    NodeId cross_entropy(NodeId logits, int label);  // logits 1 x C
    NodeId masked_l1(NodeId pred, const Mat& target, const std::vector<uint8_t>& mask);

    const Mat& value(NodeId id) const { return nodes_[id].value; }
    int rows(NodeId id) const { return static_cast<int>(nodes_[id].value.rows()); }
    int cols(NodeId id) const { return static_cast<int>(nodes_[id].value.cols()); }

    /// Reverse pass from a scalar loss node. Returns (param_key, gradient)
    /// pairs; intermediate storage is released afterwards.
    std::vector<std::pair<int, Mat>> backward(NodeId loss);

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        int param_key = -1;
        std::function<void(Tape&, Node&)> back;
    };

    NodeId push(Mat v, bool needs_grad, std::function<void(Tape&, Node&)> back);
    Mat& grad(NodeId id);
    void accumulate(NodeId id, const Mat& g);

    std::vector<Node> nodes_;
    friend struct TapeTestAccess;
};

} // namespace san
