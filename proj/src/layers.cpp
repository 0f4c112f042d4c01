#include "sanlib/layers.hpp"

#include <map>

namespace san {

Mat apply_nonlinearity(Nonlinearity s, const Mat& x) {
    switch (s) {
        case Nonlinearity::Identity: return x;
        case Nonlinearity::Relu: return x.cwiseMax(0.0);
        case Nonlinearity::Tanh: return x.array().tanh();
    }
    return x;
}

static Tape::NodeId apply_sigma(Tape& t, Nonlinearity s, Tape::NodeId x) {
    switch (s) {
        case Nonlinearity::Identity: return x;
        case Nonlinearity::Relu: return t.relu(x);
        case Nonlinearity::Tanh: return t.tanh(x);
    }
    return x;
}

void SanLayerConfig::validate() const {
    if (f_in < 1 || f_out < 1) throw ConfigError("layer: feature counts must be >= 1");
    if (j_down < 0 || j_up < 0) throw ConfigError("layer: filter orders must be >= 0");
    if (heads < 1) throw ConfigError("layer: head count must be >= 1");
    if (tied_filters && j_down != j_up)
        throw ConfigError("layer: tied filters require j_down == j_up");
}

long param_count(const SanLayerConfig& cfg) {
    cfg.validate();
    long per_head = 0;
    // filter weights
    long filter_stacks = cfg.tied_filters ? cfg.j_down : cfg.j_down + cfg.j_up;
    per_head += filter_stacks * static_cast<long>(cfg.f_in) * cfg.f_out;
    // harmonic weight
    if (cfg.harmonic != HarmonicMode::None)
        per_head += static_cast<long>(cfg.f_in) * cfg.f_out;
    // attention vectors
    if (cfg.attention_enabled) {
        if (cfg.shared_attention) {
            per_head += 2L * cfg.j_down * cfg.f_out;
        } else {
            if (cfg.j_down > 0) per_head += 2L * cfg.j_down * cfg.f_out;
            if (cfg.j_up > 0) per_head += 2L * cfg.j_up * cfg.f_out;
        }
    }
    return per_head * cfg.heads;
}

SanLayerParams allocate_layer_params(const SanLayerConfig& cfg, ParamStore& store,
                                     const std::string& prefix, double init_gain,
                                     std::mt19937_64& rng) {
    cfg.validate();
    SanLayerParams params;
    for (int h = 0; h < cfg.heads; ++h) {
        SanLayerParams::Head head;
        std::string hp = prefix + ".h" + std::to_string(h);
        for (int p = 0; p < cfg.j_down; ++p)
            head.w_down.push_back(store.add(
                hp + ".w_down" + std::to_string(p + 1),
                xavier_uniform_init(cfg.f_in, cfg.f_out, init_gain, rng)));
        if (cfg.tied_filters) {
            head.w_up = head.w_down;
        } else {
            for (int p = 0; p < cfg.j_up; ++p)
                head.w_up.push_back(store.add(
                    hp + ".w_up" + std::to_string(p + 1),
                    xavier_uniform_init(cfg.f_in, cfg.f_out, init_gain, rng)));
        }
        if (cfg.harmonic != HarmonicMode::None)
            head.w_h = store.add(hp + ".w_h",
                                 xavier_uniform_init(cfg.f_in, cfg.f_out, init_gain, rng));
        if (cfg.attention_enabled) {
            // attention vectors start near zero so the softmax is close to
            // uniform; large random logits saturate early training
            const double attn_scale = 0.01;
            if (cfg.j_down > 0)
                head.a_down = store.add(
                    hp + ".a_down",
                    attn_scale * xavier_uniform_init(2 * cfg.j_down * cfg.f_out, 1, init_gain, rng));
            if (cfg.shared_attention) {
                head.a_up = head.a_down;
            } else if (cfg.j_up > 0) {
                head.a_up = store.add(
                    hp + ".a_up",
                    attn_scale * xavier_uniform_init(2 * cfg.j_up * cfg.f_out, 1, init_gain, rng));
            }
        }
        params.heads.push_back(std::move(head));
    }
    return params;
}

ComplexOps ComplexOps::build(const Laplacians& lap, const SpMat& P_hat) {
    ComplexOps ops;
    ops.L_down = lap.down;
    ops.L_up = lap.up;
    ops.P_hat = P_hat;
    NeighborhoodTable t = neighborhoods(lap);
    ops.down_pat = Pattern::from_neighbor_lists(t.lower);
    ops.up_pat = Pattern::from_neighbor_lists(t.upper);
    return ops;
}

static SpMat conjugate(const SpMat& M, const std::vector<int>& s) {
    SpMat out = M;
    for (int c = 0; c < out.outerSize(); ++c)
        for (SpMat::InnerIterator it(out, c); it; ++it)
            it.valueRef() *= s[it.row()] * s[it.col()];
    return out;
}

ComplexOps conjugate_ops(const ComplexOps& ops, const std::vector<int>& signs) {
    ComplexOps out = ops;
    out.L_down = conjugate(ops.L_down, signs);
    out.L_up = conjugate(ops.L_up, signs);
    out.P_hat = conjugate(ops.P_hat, signs);
    return out;
}

BoundLayer bind_layer(Tape& tape, const SanLayerParams& params, const ParamStore& store) {
    BoundLayer bound;
    std::map<int, Tape::NodeId> seen;  // tied slots bind once
    auto bind = [&](int slot) -> Tape::NodeId {
        if (slot < 0) return -1;
        auto it = seen.find(slot);
        if (it != seen.end()) return it->second;
        Tape::NodeId id = tape.param(store.values[slot], slot);
        seen.emplace(slot, id);
        return id;
    };
    for (const auto& h : params.heads) {
        BoundLayer::Head bh;
        for (int s : h.w_down) bh.w_down.push_back(bind(s));
        for (int s : h.w_up) bh.w_up.push_back(bind(s));
        bh.w_h = bind(h.w_h);
        bh.a_down = bind(h.a_down);
        bh.a_up = bind(h.a_up);
        bound.heads.push_back(std::move(bh));
    }
    return bound;
}

Tape::NodeId transform_features(Tape& tape, Tape::NodeId z,
                                const std::vector<Tape::NodeId>& w_stack) {
    std::vector<Tape::NodeId> parts;
    parts.reserve(w_stack.size());
    for (Tape::NodeId w : w_stack) parts.push_back(tape.matmul(z, w));
    return tape.concat_cols(parts);
}

Tape::NodeId attention_values(Tape& tape, Tape::NodeId h, Tape::NodeId a,
                              const Pattern& pat, double leaky_slope) {
    Tape::NodeId e = tape.pair_scores(h, a, pat);
    e = tape.leaky_relu(e, leaky_slope);
    return tape.softmax_over_sets(e, pat);
}

SpMat attention_matrix(const Tape& tape, Tape::NodeId alpha, const Pattern& pat) {
    const Mat& v = tape.value(alpha);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(pat.nnz());
    for (int k = 0; k < pat.nnz(); ++k)
        trips.emplace_back(pat.rows[k], pat.cols[k], v(k, 0));
    SpMat A(pat.n, pat.n);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

// One filter branch: sum_p (A)^p Z W_p, with A either the attentional values
// on a pattern or a fixed sparse Laplacian.
static Tape::NodeId branch(Tape& tape, Tape::NodeId z,
                           const std::vector<Tape::NodeId>& w_stack,
                           Tape::NodeId attn_alpha, const Pattern& pat,
                           const SpMat* fixed, Tape::NodeId& acc) {
    Tape::NodeId shifted = z;
    for (size_t p = 0; p < w_stack.size(); ++p) {
        shifted = fixed ? tape.sparse_matmul(*fixed, shifted)
                        : tape.pattern_matmul(attn_alpha, pat, shifted);
        Tape::NodeId term = tape.matmul(shifted, w_stack[p]);
        acc = acc < 0 ? term : tape.add(acc, term);
    }
    return acc;
}

static Tape::NodeId head_preactivation(Tape& tape, Tape::NodeId z, const ComplexOps& ops,
                                       const BoundLayer::Head& h, const SanLayerConfig& cfg) {
    Tape::NodeId acc = -1;
    if (cfg.j_down > 0) {
        if (cfg.attention_enabled) {
            Tape::NodeId hd = transform_features(tape, z, h.w_down);
            Tape::NodeId alpha = attention_values(tape, hd, h.a_down, ops.down_pat);
            branch(tape, z, h.w_down, alpha, ops.down_pat, nullptr, acc);
        } else {
            branch(tape, z, h.w_down, -1, ops.down_pat, &ops.L_down, acc);
        }
    }
    if (cfg.j_up > 0) {
        if (cfg.attention_enabled) {
            Tape::NodeId hu = transform_features(tape, z, h.w_up);
            Tape::NodeId alpha = attention_values(tape, hu, h.a_up, ops.up_pat);
            branch(tape, z, h.w_up, alpha, ops.up_pat, nullptr, acc);
        } else {
            branch(tape, z, h.w_up, -1, ops.up_pat, &ops.L_up, acc);
        }
    }
    if (cfg.harmonic == HarmonicMode::Projector) {
        Tape::NodeId term = tape.matmul(tape.sparse_matmul(ops.P_hat, z), h.w_h);
        acc = acc < 0 ? term : tape.add(acc, term);
    } else if (cfg.harmonic == HarmonicMode::Skip) {
        Tape::NodeId term = tape.matmul(z, h.w_h);
        acc = acc < 0 ? term : tape.add(acc, term);
    }
    if (acc < 0) acc = tape.constant(Mat::Zero(tape.rows(z), cfg.f_out));
    return acc;
}

Tape::NodeId san_layer_forward(Tape& tape, Tape::NodeId z, const ComplexOps& ops,
                               const BoundLayer& bound, const SanLayerConfig& cfg) {
    cfg.validate();
    if (tape.cols(z) != cfg.f_in) throw ShapeMismatch("layer: input width != f_in");
    std::vector<Tape::NodeId> pre;
    pre.reserve(bound.heads.size());
    for (const auto& h : bound.heads)
        pre.push_back(head_preactivation(tape, z, ops, h, cfg));

    if (cfg.combine == HeadCombine::Concat) {
        std::vector<Tape::NodeId> act;
        act.reserve(pre.size());
        for (Tape::NodeId p : pre) act.push_back(apply_sigma(tape, cfg.sigma, p));
        return act.size() == 1 ? act[0] : tape.concat_cols(act);
    }
    Tape::NodeId mean = pre[0];
    for (size_t i = 1; i < pre.size(); ++i) mean = tape.add(mean, pre[i]);
    if (pre.size() > 1) mean = tape.scale(mean, 1.0 / static_cast<double>(pre.size()));
    return apply_sigma(tape, cfg.sigma, mean);
}

Tape::NodeId scn_layer_forward(Tape& tape, Tape::NodeId z, const ComplexOps& ops,
                               const BoundLayer& bound, const SanLayerConfig& cfg) {
    SanLayerConfig c = cfg;
    c.attention_enabled = false;
    return san_layer_forward(tape, z, ops, bound, c);
}

ReductionTarget reduction_from_string(const std::string& s) {
    if (s == "san") return ReductionTarget::SAN;
    if (s == "snn") return ReductionTarget::SNN;
    if (s == "scnn") return ReductionTarget::SCNN;
    if (s == "sat") return ReductionTarget::SAT;
    if (s == "gat") return ReductionTarget::GAT;
    if (s == "san-nh") return ReductionTarget::SANNoHarmonic;
    throw ConfigError("unknown architecture: " + s);
}

std::string to_string(ReductionTarget t) {
    switch (t) {
        case ReductionTarget::SAN: return "san";
        case ReductionTarget::SNN: return "snn";
        case ReductionTarget::SCNN: return "scnn";
        case ReductionTarget::SAT: return "sat";
        case ReductionTarget::GAT: return "gat";
        case ReductionTarget::SANNoHarmonic: return "san-nh";
    }
    return "?";
}

SanLayerConfig reduction_config(ReductionTarget target, SanLayerConfig base) {
    switch (target) {
        case ReductionTarget::SAN:
            break;
        case ReductionTarget::SNN:
            base.attention_enabled = false;
            base.harmonic = HarmonicMode::None;
            base.tied_filters = true;
            base.j_down = base.j_up = 1;
            break;
        case ReductionTarget::SCNN:
            base.attention_enabled = false;
            base.harmonic = HarmonicMode::Skip;  // J^(h) = 0
            break;
        case ReductionTarget::SAT:
            base.j_down = base.j_up = 1;
            base.harmonic = HarmonicMode::None;
            base.shared_attention = true;
            break;
        case ReductionTarget::GAT:
            base.j_down = 0;  // node signals have no lower branch
            base.j_up = 1;
            base.harmonic = HarmonicMode::None;
            break;
        case ReductionTarget::SANNoHarmonic:
            base.harmonic = HarmonicMode::Skip;
            break;
    }
    return base;
}

ReadoutParams allocate_readout(ReadoutMode mode, int f_in, int hidden, int n_classes,
                               ParamStore& store, std::mt19937_64& rng) {
    ReadoutParams ro;
    ro.mode = mode;
    if (mode == ReadoutMode::SumPoolMlp) {
        ro.w1 = store.add("readout.w1", xavier_uniform_init(f_in, hidden, 1.0, rng));
        ro.b1 = store.add("readout.b1", Mat::Zero(1, hidden), /*l2=*/false);
        ro.w2 = store.add("readout.w2", xavier_uniform_init(hidden, n_classes, 1.0, rng));
        ro.b2 = store.add("readout.b2", Mat::Zero(1, n_classes), /*l2=*/false);
    }
    return ro;
}

Tape::NodeId readout_forward(Tape& tape, Tape::NodeId z, const ReadoutParams& ro,
                             const ParamStore& store, const LayerDropout& drop) {
    if (ro.mode == ReadoutMode::PerSimplexLinear) return z;
    Tape::NodeId w1 = tape.param(store.values[ro.w1], ro.w1);
    Tape::NodeId b1 = tape.param(store.values[ro.b1], ro.b1);
    Tape::NodeId w2 = tape.param(store.values[ro.w2], ro.w2);
    Tape::NodeId b2 = tape.param(store.values[ro.b2], ro.b2);
    // sum over simplices (mean times N): keeps the pooled signal, and hence
    // the data gradient, from vanishing against L2 decay on large complexes
    Tape::NodeId pooled = tape.scale(tape.mean_rows(z), static_cast<double>(tape.rows(z)));
    Tape::NodeId hid = tape.relu(tape.add_rowvec(tape.matmul(pooled, w1), b1));
    if (drop.active()) hid = tape.dropout(hid, drop.p, true, *drop.rng);
    return tape.add_rowvec(tape.matmul(hid, w2), b2);
}

} // namespace san
