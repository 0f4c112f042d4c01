#pragma once

#include <optional>

#include "sanlib/data.hpp"
#include "sanlib/layers.hpp"

namespace san {

Nonlinearity sigma_from_string(const std::string& s);
std::string to_string(Nonlinearity s);

struct ModelConfig {
    std::string task = "trajectory";  // "trajectory" | "mdi"
    ReductionTarget arch = ReductionTarget::SAN;
    int n_layers = 1;
    int features = 4;  // output width of every non-final layer
    int j = 3;         // j_down = j_up before reduction
    int heads = 1;
    HeadCombine combine = HeadCombine::Concat;
    Nonlinearity sigma = Nonlinearity::Tanh;
    double epsilon = 0.9;  // harmonic projector step (clamped to the bound)
    int j_h = 5;           // projector power; 0 selects the skip connection
    int n_classes = 2;
    double init_gain = std::sqrt(2.0);

    // optimizer block
    double lr = 0.01;
    double l2_lambda = 0.003;
    double dropout_p = 0.6;
    double plateau_factor = 0.77;
    int plateau_patience = 10;
    int early_stop_patience = 100;
    int max_epochs = 300;
    std::uint64_t seed = 0;
};

class Model {
public:
    Model(const ModelConfig& cfg, int f_in);

    /// Forward pass to the task output: 1 x n_classes logits for trajectory,
    /// N x 1 predictions for mdi.
    Tape::NodeId forward(Tape& tape, const Mat& input, const ComplexOps& ops,
                         bool training, std::mt19937_64& rng) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }
    const std::vector<SanLayerConfig>& layer_configs() const { return layer_cfgs_; }

    void save_checkpoint(const std::string& path, const std::string& fingerprint) const;
    /// Restores parameters; throws ConfigError on schema mismatch. Returns
    /// the fingerprint the checkpoint was trained against.
    static std::pair<Model, std::string> load_checkpoint(const std::string& path);

private:
    ModelConfig cfg_;
    std::vector<SanLayerConfig> layer_cfgs_;
    std::vector<SanLayerParams> layer_params_;
    ReadoutParams readout_;
    ParamStore store_;
};

/// Builds the per-order operands a model needs: Laplacians, attention
/// patterns, and the harmonic projector with epsilon clamped into
/// (0, 2/lambda_max]. warn receives a message when clamping occurs.
ComplexOps build_model_ops(const Laplacians& lap, const ModelConfig& cfg,
                           std::string* warning = nullptr);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int stopped_epoch = 0;
    bool early_stopped = false;
};

/// Full-batch training on labeled trajectories; cross-entropy plus L2.
/// Aborts with DivergedLoss on non-finite or runaway loss.
TrainResult train_trajectory(Model& model, const ComplexOps& ops,
                             const std::vector<TrajectoryInstance>& train,
                             const std::vector<TrajectoryInstance>& test);

double eval_trajectory_accuracy(const Model& model, const ComplexOps& ops,
                                const std::vector<TrajectoryInstance>& insts);

/// Transductive MDI training with masked l1 on known entries; test accuracy
/// is the fraction of hidden entries predicted within +-5% of truth.
TrainResult train_mdi(Model& model, const ComplexOps& ops, const MdiInstance& inst);

double eval_mdi_accuracy(const Model& model, const ComplexOps& ops, const MdiInstance& inst);

struct GradCheckReport {
    struct Group {
        std::string name;
        double max_rel_error = 0.0;
        bool pass = false;
    };
    std::vector<Group> groups;
    bool all_pass = true;
};

/// Central-difference verification of every parameter tensor against the
/// tape gradients of a single-instance loss.
GradCheckReport gradient_check(Model& model, const ComplexOps& ops, const Mat& input,
                               int label_or_ignored, const MdiInstance* mdi,
                               double fd_step = 1e-5, double tolerance = 1e-4);

void write_metrics_csv(const std::vector<EpochRecord>& history, const std::string& path);

} // namespace san
