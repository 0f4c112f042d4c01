#include "sanlib/tape.hpp"

#include <cmath>

namespace san {

Pattern Pattern::from_neighbor_lists(const std::vector<std::vector<int>>& nbrs) {
    Pattern p;
    p.n = static_cast<int>(nbrs.size());
    p.row_begin.resize(p.n + 1, 0);
    for (int i = 0; i < p.n; ++i) {
        p.row_begin[i] = static_cast<int>(p.rows.size());
        for (int j : nbrs[i]) {
            p.rows.push_back(i);
            p.cols.push_back(j);
        }
    }
    p.row_begin[p.n] = static_cast<int>(p.rows.size());
    return p;
}

Tape::NodeId Tape::push(Mat v, bool needs_grad, std::function<void(Tape&, Node&)> back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Mat& Tape::grad(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::accumulate(NodeId id, const Mat& g) {
    if (!nodes_[id].needs_grad) return;
    grad(id) += g;
}

Tape::NodeId Tape::constant(Mat v) { return push(std::move(v), false, nullptr); }

Tape::NodeId Tape::param(Mat v, int param_key) {
    NodeId id = push(std::move(v), true, nullptr);
    nodes_[id].param_key = param_key;
    return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    if (cols(a) != rows(b)) throw ShapeMismatch("matmul: inner dimensions differ");
    Mat v = nodes_[a].value * nodes_[b].value;
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(v), ng, [a, b](Tape& t, Node& self) {
        t.accumulate(a, self.grad * t.nodes_[b].value.transpose());
        t.accumulate(b, t.nodes_[a].value.transpose() * self.grad);
    });
}

Tape::NodeId Tape::sparse_matmul(const SpMat& S, NodeId b) {
    if (S.cols() != rows(b)) throw ShapeMismatch("sparse_matmul: inner dimensions differ");
    Mat v = S * nodes_[b].value;
    // capture S by value: cheap copy-on-write of the shared storage is not
    // guaranteed, but operands here are small per-complex matrices
    SpMat St = S.transpose();
    return push(std::move(v), nodes_[b].needs_grad,
                [b, St = std::move(St)](Tape& t, Node& self) {
                    t.accumulate(b, St * self.grad);
                });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    if (rows(a) != rows(b) || cols(a) != cols(b)) throw ShapeMismatch("add: shapes differ");
    Mat v = nodes_[a].value + nodes_[b].value;
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(v), ng, [a, b](Tape& t, Node& self) {
        t.accumulate(a, self.grad);
        t.accumulate(b, self.grad);
    });
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    Mat v = c * nodes_[a].value;
    return push(std::move(v), nodes_[a].needs_grad, [a, c](Tape& t, Node& self) {
        t.accumulate(a, c * self.grad);
    });
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId row) {
    if (rows(row) != 1 || cols(row) != cols(a))
        throw ShapeMismatch("add_rowvec: bias must be 1 x cols(a)");
    Mat v = nodes_[a].value.rowwise() + nodes_[row].value.row(0);
    bool ng = nodes_[a].needs_grad || nodes_[row].needs_grad;
    return push(std::move(v), ng, [a, row](Tape& t, Node& self) {
        t.accumulate(a, self.grad);
        t.accumulate(row, self.grad.colwise().sum());
    });
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: no operands");
    int r = rows(parts[0]), c = 0;
    bool ng = false;
    for (NodeId p : parts) {
        if (rows(p) != r) throw ShapeMismatch("concat_cols: row counts differ");
        c += cols(p);
        ng = ng || nodes_[p].needs_grad;
    }
    Mat v(r, c);
    int off = 0;
    for (NodeId p : parts) {
        v.middleCols(off, cols(p)) = nodes_[p].value;
        off += cols(p);
    }
    return push(std::move(v), ng, [parts](Tape& t, Node& self) {
        int off2 = 0;
        for (NodeId p : parts) {
            int w = t.cols(p);
            t.accumulate(p, self.grad.middleCols(off2, w));
            off2 += w;
        }
    });
}

Tape::NodeId Tape::leaky_relu(NodeId a, double slope) {
    const Mat& x = nodes_[a].value;
    Mat v = x.unaryExpr([slope](double t) { return t >= 0.0 ? t : slope * t; });
    return push(std::move(v), nodes_[a].needs_grad, [a, slope](Tape& t, Node& self) {
        const Mat& x2 = t.nodes_[a].value;
        Mat g = self.grad.cwiseProduct(
            x2.unaryExpr([slope](double u) { return u >= 0.0 ? 1.0 : slope; }));
        t.accumulate(a, g);
    });
}

Tape::NodeId Tape::relu(NodeId a) { return leaky_relu(a, 0.0); }

Tape::NodeId Tape::tanh(NodeId a) {
    Mat v = nodes_[a].value.array().tanh();
    return push(std::move(v), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
        Mat g = self.grad.cwiseProduct(
            (1.0 - self.value.array().square()).matrix());
        t.accumulate(a, g);
    });
}

Tape::NodeId Tape::mean_rows(NodeId a) {
    int r = rows(a);
    Mat v = nodes_[a].value.colwise().mean();
    return push(std::move(v), nodes_[a].needs_grad, [a, r](Tape& t, Node& self) {
        Mat g = Mat::Ones(r, 1) * self.grad / static_cast<double>(r);
        t.accumulate(a, g);
    });
}

Tape::NodeId Tape::sum(NodeId a) {
    Mat v(1, 1);
    v(0, 0) = nodes_[a].value.sum();
    return push(std::move(v), nodes_[a].needs_grad, [a](Tape& t, Node& self) {
        t.accumulate(a, Mat::Constant(t.rows(a), t.cols(a), self.grad(0, 0)));
    });
}

Tape::NodeId Tape::dropout(NodeId a, double p, bool training, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw ShapeMismatch("dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return a;
    const Mat& x = nodes_[a].value;
    Mat mask(x.rows(), x.cols());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double inv_keep = 1.0 / (1.0 - p);
    for (int i = 0; i < mask.rows(); ++i)
        for (int j = 0; j < mask.cols(); ++j)
            mask(i, j) = uni(rng) < p ? 0.0 : inv_keep;
    Mat v = x.cwiseProduct(mask);
    return push(std::move(v), nodes_[a].needs_grad,
                [a, mask = std::move(mask)](Tape& t, Node& self) {
                    t.accumulate(a, self.grad.cwiseProduct(mask));
                });
}

Tape::NodeId Tape::pair_scores(NodeId H, NodeId a, const Pattern& pat) {
    const Mat& Hv = nodes_[H].value;
    const Mat& av = nodes_[a].value;
    const int D = static_cast<int>(Hv.cols());
    if (pat.n != Hv.rows()) throw ShapeMismatch("pair_scores: pattern size != rows(H)");
    if (av.rows() != 2 * D || av.cols() != 1)
        throw ShapeMismatch("pair_scores: attention vector must be 2*cols(H) x 1");
    const int m = pat.nnz();
    Mat e(m, 1);
    for (int k = 0; k < m; ++k)
        e(k, 0) = Hv.row(pat.rows[k]).dot(av.col(0).head(D).transpose()) +
                  Hv.row(pat.cols[k]).dot(av.col(0).tail(D).transpose());
    bool ng = nodes_[H].needs_grad || nodes_[a].needs_grad;
    const Pattern* pp = &pat;
    return push(std::move(e), ng, [H, a, pp, D](Tape& t, Node& self) {
        const Mat& Hv2 = t.nodes_[H].value;
        const Mat& av2 = t.nodes_[a].value;
        Mat gH = Mat::Zero(Hv2.rows(), Hv2.cols());
        Mat ga = Mat::Zero(av2.rows(), 1);
        for (int k = 0; k < pp->nnz(); ++k) {
            const double de = self.grad(k, 0);
            if (de == 0.0) continue;
            const int i = pp->rows[k], j = pp->cols[k];
            gH.row(i) += de * av2.col(0).head(D).transpose();
            gH.row(j) += de * av2.col(0).tail(D).transpose();
            ga.col(0).head(D) += de * Hv2.row(i).transpose();
            ga.col(0).tail(D) += de * Hv2.row(j).transpose();
        }
        t.accumulate(H, gH);
        t.accumulate(a, ga);
    });
}

Tape::NodeId Tape::softmax_over_sets(NodeId scores, const Pattern& pat) {
    const Mat& e = nodes_[scores].value;
    if (e.rows() != pat.nnz() || e.cols() != 1)
        throw ShapeMismatch("softmax_over_sets: scores must be nnz x 1");
    Mat alpha(e.rows(), 1);
    for (int i = 0; i < pat.n; ++i) {
        const int b = pat.row_begin[i], end = pat.row_begin[i + 1];
        if (b == end) continue;
        double mx = -1e300;
        for (int k = b; k < end; ++k) mx = std::max(mx, e(k, 0));
        double z = 0.0;
        for (int k = b; k < end; ++k) z += std::exp(e(k, 0) - mx);
        for (int k = b; k < end; ++k) alpha(k, 0) = std::exp(e(k, 0) - mx) / z;
    }
    const Pattern* pp = &pat;
    return push(std::move(alpha), nodes_[scores].needs_grad,
                [scores, pp](Tape& t, Node& self) {
                    Mat g = Mat::Zero(self.value.rows(), 1);
                    for (int i = 0; i < pp->n; ++i) {
                        const int b = pp->row_begin[i], end = pp->row_begin[i + 1];
                        double dot = 0.0;
                        for (int k = b; k < end; ++k) dot += self.grad(k, 0) * self.value(k, 0);
                        for (int k = b; k < end; ++k)
                            g(k, 0) = self.value(k, 0) * (self.grad(k, 0) - dot);
                    }
                    t.accumulate(scores, g);
                });
}

Tape::NodeId Tape::pattern_matmul(NodeId values, const Pattern& pat, NodeId Z) {
    const Mat& v = nodes_[values].value;
    const Mat& Zv = nodes_[Z].value;
    if (v.rows() != pat.nnz() || v.cols() != 1)
        throw ShapeMismatch("pattern_matmul: values must be nnz x 1");
    if (Zv.rows() != pat.n) throw ShapeMismatch("pattern_matmul: rows(Z) != pattern size");
    Mat y = Mat::Zero(pat.n, Zv.cols());
    for (int k = 0; k < pat.nnz(); ++k)
        y.row(pat.rows[k]) += v(k, 0) * Zv.row(pat.cols[k]);
    bool ng = nodes_[values].needs_grad || nodes_[Z].needs_grad;
    const Pattern* pp = &pat;
    return push(std::move(y), ng, [values, Z, pp](Tape& t, Node& self) {
        const Mat& v2 = t.nodes_[values].value;
        const Mat& Zv2 = t.nodes_[Z].value;
        Mat gv = Mat::Zero(pp->nnz(), 1);
        Mat gZ = Mat::Zero(Zv2.rows(), Zv2.cols());
        for (int k = 0; k < pp->nnz(); ++k) {
            const int i = pp->rows[k], j = pp->cols[k];
            gv(k, 0) = self.grad.row(i).dot(Zv2.row(j));
            gZ.row(j) += v2(k, 0) * self.grad.row(i);
        }
        t.accumulate(values, gv);
        t.accumulate(Z, gZ);
    });
}

Tape::NodeId Tape::cross_entropy(NodeId logits, int label) {
    const Mat& z = nodes_[logits].value;
    if (z.rows() != 1) throw ShapeMismatch("cross_entropy: logits must be 1 x C");
    if (label < 0 || label >= z.cols()) throw ShapeMismatch("cross_entropy: label out of range");
    double mx = z.row(0).maxCoeff();
    double lse = mx + std::log((z.row(0).array() - mx).exp().sum());
    Mat v(1, 1);
    v(0, 0) = lse - z(0, label);
    return push(std::move(v), nodes_[logits].needs_grad, [logits, label](Tape& t, Node& self) {
        const Mat& z2 = t.nodes_[logits].value;
        double mx2 = z2.row(0).maxCoeff();
        Eigen::ArrayXd p = (z2.row(0).array() - mx2).exp();
        p /= p.sum();
        Mat g = p.matrix().transpose();
        g(0, label) -= 1.0;
        t.accumulate(logits, self.grad(0, 0) * g);
    });
}

Tape::NodeId Tape::masked_l1(NodeId pred, const Mat& target, const std::vector<uint8_t>& mask) {
    const Mat& p = nodes_[pred].value;
    if (p.rows() != target.rows() || p.cols() != target.cols())
        throw ShapeMismatch("masked_l1: prediction/target shapes differ");
    if (static_cast<int>(mask.size()) != p.rows())
        throw ShapeMismatch("masked_l1: mask length != rows");
    int m = 0;
    double acc = 0.0;
    for (int i = 0; i < p.rows(); ++i)
        if (mask[i]) {
            ++m;
            for (int j = 0; j < p.cols(); ++j) acc += std::abs(p(i, j) - target(i, j));
        }
    if (m == 0) throw EmptyMask("masked_l1: mask selects no entries");
    Mat v(1, 1);
    v(0, 0) = acc / m;
    return push(std::move(v), nodes_[pred].needs_grad,
                [pred, target, mask, m](Tape& t, Node& self) {
                    const Mat& p2 = t.nodes_[pred].value;
                    Mat g = Mat::Zero(p2.rows(), p2.cols());
                    for (int i = 0; i < p2.rows(); ++i)
                        if (mask[i])
                            for (int j = 0; j < p2.cols(); ++j) {
                                double d = p2(i, j) - target(i, j);
                                g(i, j) = (d > 0.0) - (d < 0.0);
                            }
                    t.accumulate(pred, self.grad(0, 0) * g / m);
                });
}

std::vector<std::pair<int, Mat>> Tape::backward(NodeId loss) {
    Node& ln = nodes_[loss];
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
        throw NonScalarLoss("backward: loss node is not scalar");
    grad(loss)(0, 0) = 1.0;
    for (int id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
        n.back(*this, n);
    }
    std::vector<std::pair<int, Mat>> out;
    for (Node& n : nodes_) {
        if (n.param_key >= 0) {
            if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
            out.emplace_back(n.param_key, std::move(n.grad));
        }
        n.grad.resize(0, 0);
        if (n.param_key < 0) n.back = nullptr;
    }
    return out;
}

} // namespace san
