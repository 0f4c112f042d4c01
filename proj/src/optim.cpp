#include "sanlib/optim.hpp"

#include <cmath>

namespace san {

Mat xavier_uniform_init(int rows, int cols, double gain, std::mt19937_64& rng) {
    if (rows <= 0 || cols <= 0) throw ShapeMismatch("xavier_uniform_init: non-positive dims");
    const double bound = gain * std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Mat out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = uni(rng);
    return out;
}

void AdamState::init(const ParamStore& params) {
    step_count = 0;
    m.clear();
    v.clear();
    for (const Mat& p : params.values) {
        m.push_back(Mat::Zero(p.rows(), p.cols()));
        v.push_back(Mat::Zero(p.rows(), p.cols()));
    }
}

void AdamState::step(ParamStore& params, const std::vector<Mat>& grads) {
    if (grads.size() != params.values.size() || m.size() != params.values.size())
        throw ShapeMismatch("adam_step: parameter/gradient count mismatch");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t i = 0; i < params.values.size(); ++i) {
        Mat& p = params.values[i];
        const Mat& g = grads[i];
        if (g.rows() != p.rows() || g.cols() != p.cols())
            throw ShapeMismatch("adam_step: gradient shape mismatch at slot " +
                                std::to_string(i));
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i].array().matrix() + (1.0 - beta2) * g.cwiseProduct(g);
        Mat m_hat = m[i] / bc1;
        Mat v_hat = v[i] / bc2;
        p.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
    }
}

bool TrainControl::scheduler_step(AdamState& opt, double epoch_metric) {
    if (epoch_metric < best_metric) {
        best_metric = epoch_metric;
        epochs_since_plateau_best = 0;
        epochs_since_stop_best = 0;
        return false;
    }
    ++epochs_since_plateau_best;
    ++epochs_since_stop_best;
    if (epochs_since_plateau_best >= plateau_patience) {
        opt.lr *= factor;
        epochs_since_plateau_best = 0;
        return true;
    }
    return false;
}

} // namespace san
