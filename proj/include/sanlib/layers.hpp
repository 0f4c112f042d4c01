#pragma once

#include "sanlib/complex.hpp"
#include "sanlib/hodge.hpp"
#include "sanlib/optim.hpp"
#include "sanlib/tape.hpp"

namespace san {

enum class Nonlinearity { Identity, Relu, Tanh };
enum class HeadCombine { Concat, Average };
/// Harmonic branch handling: projector term P_hat Z W_h, a plain skip
/// connection Z W_h (the J^(h)=0 case), or no harmonic term at all.
enum class HarmonicMode { Projector, Skip, None };

Mat apply_nonlinearity(Nonlinearity s, const Mat& x);

struct SanLayerConfig {
    int f_in = 1;
    int f_out = 1;
    int j_down = 1;
    int j_up = 1;
    HarmonicMode harmonic = HarmonicMode::Projector;
    Nonlinearity sigma = Nonlinearity::Identity;
    int heads = 1;
    HeadCombine combine = HeadCombine::Concat;
    bool attention_enabled = true;
    bool shared_attention = false;  // SAT: one attention vector for both branches
    bool tied_filters = false;      // SNN: W_down and W_up share storage

    int out_width() const {
        return combine == HeadCombine::Concat ? heads * f_out : f_out;
    }
    void validate() const;
};

/// Slot indices into a ParamStore, one set per head.
struct SanLayerParams {
    struct Head {
        std::vector<int> w_down;  // J^(d) matrices f_in x f_out
        std::vector<int> w_up;    // J^(u) matrices
        int w_h = -1;             // f_in x f_out, when harmonic != None
        int a_down = -1;          // 2 * J^(d) * f_out column vector
        int a_up = -1;            // 2 * J^(u) * f_out column vector
    };
    std::vector<Head> heads;
};

/// Number of scalars a layer registers; for a plain SAN layer this is
/// K * (2 J^(d) F' + 2 J^(u) F' + (J^(d) + J^(u)) F F' + F F').
long param_count(const SanLayerConfig& cfg);

SanLayerParams allocate_layer_params(const SanLayerConfig& cfg, ParamStore& store,
                                     const std::string& prefix, double init_gain,
                                     std::mt19937_64& rng);

/// Per-order structural operands for a layer: fixed Laplacians, the harmonic
/// projector, and the attention sparsity patterns (self-inclusive).
struct ComplexOps {
    SpMat L_down;
    SpMat L_up;
    SpMat P_hat;  // used only in HarmonicMode::Projector
    Pattern down_pat;
    Pattern up_pat;

    static ComplexOps build(const Laplacians& lap, const SpMat& P_hat);
};

/// Signed orientation-flip conjugation: L -> D L D, P -> D P D for a
/// diagonal of +-1 signs. Used when evaluating on re-oriented complexes.
ComplexOps conjugate_ops(const ComplexOps& ops, const std::vector<int>& signs);

struct BoundLayer {
    struct Head {
        std::vector<Tape::NodeId> w_down, w_up;
        Tape::NodeId w_h = -1, a_down = -1, a_up = -1;
    };
    std::vector<Head> heads;
};

/// Creates param nodes on the tape for every slot the layer uses.
BoundLayer bind_layer(Tape& tape, const SanLayerParams& params, const ParamStore& store);

/// Stacked transformed features [Z W_1 | ... | Z W_J]  (N x J*f_out).
Tape::NodeId transform_features(Tape& tape, Tape::NodeId z,
                                const std::vector<Tape::NodeId>& w_stack);

/// Softmax-normalized attention values on a pattern (nnz x 1 node):
/// alpha_ij = softmax_j(LeakyReLU([h_i || h_j]^T a)).
Tape::NodeId attention_values(Tape& tape, Tape::NodeId h, Tape::NodeId a,
                              const Pattern& pat, double leaky_slope = 0.2);

/// Materializes attention values into a sparse attentional Laplacian.
SpMat attention_matrix(const Tape& tape, Tape::NodeId alpha, const Pattern& pat);

/// Where regularization dropout lands: on hidden activations (the readout
/// hidden layer and between-layer features), never on the raw input signal
/// (sparse flow inputs would lose most of their support) and never on the
/// attention coefficients (randomizing the learned Laplacian destabilizes
/// the low-SNR pooled statistics the readout depends on).
struct LayerDropout {
    double p = 0.0;
    bool training = false;
    std::mt19937_64* rng = nullptr;

    bool active() const { return p > 0.0 && training && rng != nullptr; }
};

/// SAN layer: sigma( sum_p (L_att^(d))^p Z W_p^(d)
///   + sum_p (L_att^(u))^p Z W_p^(u) + harmonic term ). With attention
/// disabled the fixed Laplacians are used instead (SCN layer). Powers are
/// applied recursively against Z; L^p is never materialized.
Tape::NodeId san_layer_forward(Tape& tape, Tape::NodeId z, const ComplexOps& ops,
                               const BoundLayer& bound, const SanLayerConfig& cfg);

Tape::NodeId scn_layer_forward(Tape& tape, Tape::NodeId z, const ComplexOps& ops,
                               const BoundLayer& bound, const SanLayerConfig& cfg);

enum class ReductionTarget { SAN, SNN, SCNN, SAT, GAT, SANNoHarmonic };

ReductionTarget reduction_from_string(const std::string& s);
std::string to_string(ReductionTarget t);

/// Rewrites a base SAN layer config into the requested reduced architecture.
SanLayerConfig reduction_config(ReductionTarget target, SanLayerConfig base);

enum class ReadoutMode { SumPoolMlp, PerSimplexLinear };

struct ReadoutParams {
    ReadoutMode mode = ReadoutMode::SumPoolMlp;
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;  // slots; unused for PerSimplexLinear
};

ReadoutParams allocate_readout(ReadoutMode mode, int f_in, int hidden, int n_classes,
                               ParamStore& store, std::mt19937_64& rng);

/// SumPoolMlp: column-sum over simplices then a one-hidden-layer MLP to
/// class logits. PerSimplexLinear: pass-through of the final feature.
Tape::NodeId readout_forward(Tape& tape, Tape::NodeId z, const ReadoutParams& ro,
                             const ParamStore& store, const LayerDropout& drop = {});

} // namespace san
