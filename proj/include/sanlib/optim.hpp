#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sanlib/errors.hpp"

namespace san {

using Mat = Eigen::MatrixXd;

/// Named parameter storage; the tape binds slots by index and training
/// updates them in place. Slot order is the canonical checkpoint order.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Mat> values;
    /// Slots subject to L2 regularization (filter and attention weights;
    /// readout biases are exempt).
    std::vector<uint8_t> regularized;

    int add(std::string name, Mat v, bool l2 = true) {
        names.push_back(std::move(name));
        values.push_back(std::move(v));
        regularized.push_back(l2 ? 1 : 0);
        return static_cast<int>(values.size()) - 1;
    }
    int size() const { return static_cast<int>(values.size()); }
    long scalar_count() const {
        long n = 0;
        for (const Mat& m : values) n += m.size();
        return n;
    }
};

/// Samples uniform(-b, b) with b = gain * sqrt(6 / (fan_in + fan_out)).
Mat xavier_uniform_init(int rows, int cols, double gain, std::mt19937_64& rng);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<Mat> m;  // first moments, aligned with the ParamStore
    std::vector<Mat> v;  // second moments

    void init(const ParamStore& params);
    void step(ParamStore& params, const std::vector<Mat>& grads);
};

/// Reduce-on-plateau schedule plus early stopping, both driven by the same
/// monitored metric (lower is better).
struct TrainControl {
    double factor = 0.77;
    int plateau_patience = 10;
    int early_stop_patience = 100;
    double l2_lambda = 0.0;
    double dropout_p = 0.0;

    double best_metric = std::numeric_limits<double>::infinity();
    int epochs_since_plateau_best = 0;
    int epochs_since_stop_best = 0;

    /// Returns true when the learning rate was reduced this epoch.
    bool scheduler_step(AdamState& opt, double epoch_metric);
    bool early_stop() const { return epochs_since_stop_best >= early_stop_patience; }
};

} // namespace san
