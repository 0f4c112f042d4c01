// End-to-end acceptance checks. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails. Heavier criteria
// (5 and 6) train full desk-scale models and dominate the runtime.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "sanlib/model.hpp"

using namespace san;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat random_mat(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = gauss(rng);
    return m;
}

SimplicialComplex random_complex(std::mt19937_64& rng, int n_vertices,
                                 double edge_p = 0.4, double tri_p = 0.5) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::set<std::pair<int, int>> edges;
        for (int u = 0; u < n_vertices; ++u)
            for (int v = u + 1; v < n_vertices; ++v)
                if (uni(rng) < edge_p) edges.insert({u, v});
        std::vector<std::vector<int>> tops;
        for (auto [u, v] : edges) tops.push_back({u, v});
        for (int a = 0; a < n_vertices; ++a)
            for (int b = a + 1; b < n_vertices; ++b)
                for (int c = b + 1; c < n_vertices; ++c)
                    if (edges.count({a, b}) && edges.count({a, c}) && edges.count({b, c}) &&
                        uni(rng) < tri_p)
                        tops.push_back({a, b, c});
        if (tops.empty()) continue;
        SimplicialComplex X = build_complex(tops);
        if (X.max_order() >= 1 && X.count(1) >= 2 && X.count(1) <= 50 && X.count(2) <= 20)
            return X;
    }
    return build_complex({{0, 1, 2}, {1, 2, 3}});
}

// scalar-loop attention reference, independent of the tape implementation
Mat scalar_attention(const Mat& H, const Vec& a, const std::vector<std::vector<int>>& nbrs,
                     double slope = 0.2) {
    const int n = static_cast<int>(H.rows());
    const int D = static_cast<int>(H.cols());
    Mat alpha = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        std::vector<double> e;
        for (int j : nbrs[i]) {
            double s = 0.0;
            for (int d = 0; d < D; ++d) s += H(i, d) * a[d] + H(j, d) * a[D + d];
            e.push_back(s >= 0.0 ? s : slope * s);
        }
        double mx = *std::max_element(e.begin(), e.end());
        double z = 0.0;
        for (double v : e) z += std::exp(v - mx);
        for (size_t k = 0; k < nbrs[i].size(); ++k)
            alpha(i, nbrs[i][k]) = std::exp(e[k] - mx) / z;
    }
    return alpha;
}

// the near-zero attention init parks pair scores on the LeakyReLU kink where
// central differences are meaningless; inflate before finite-differencing
void inflate_attention(Model& model) {
    for (int i = 0; i < model.params().size(); ++i)
        if (model.params().names[i].find(".a_") != std::string::npos)
            model.params().values[i] *= 100.0;
}

int failures = 0;

void report(int idx, const char* what, bool ok, double secs, const std::string& detail = "") {
    std::printf("criterion %d (%s): %s  [%.1fs]%s%s\n", idx, what, ok ? "PASS" : "FAIL", secs,
                detail.empty() ? "" : "  ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

// ---------------------------------------------------------------------------

void criterion_1() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
        SimplicialComplex X = random_complex(rng, 8 + trial % 5);
        if (X.count(2) > 0) {
            SpMat prod = incidence_matrix(X, 1) * incidence_matrix(X, 2);
            for (int k = 0; k < prod.outerSize(); ++k)
                for (SpMat::InnerIterator it(prod, k); it; ++it)
                    if (it.value() != 0.0) ok = false;
        }
        Laplacians lap = laplacian(X, 1);
        Vec x = random_mat(X.count(1), 1, rng);
        HodgeParts h = hodge_decompose(x, lap.down, lap.up);
        Vec recon = h.irrotational + h.solenoidal + h.harmonic;
        if ((x - recon).cwiseAbs().maxCoeff() > 1e-10) ok = false;
        if (std::abs(h.irrotational.dot(h.solenoidal)) > 1e-10) ok = false;
        if (std::abs(h.irrotational.dot(h.harmonic)) > 1e-10) ok = false;
        if (std::abs(h.solenoidal.dot(h.harmonic)) > 1e-10) ok = false;
        if ((lap.full * h.harmonic).cwiseAbs().maxCoeff() > 1e-8) ok = false;
    }
    double secs = seconds_since(t0);
    report(1, "algebraic invariants", ok && secs < 10.0, secs);
}

void criterion_2() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    bool ok = true;
    std::vector<SimplicialComplex> complexes;
    complexes.push_back(build_complex({{0, 1}, {0, 2}, {1, 2}}));  // hollow triangle
    // convergence at J = 50 with eps = 1/lambda_max needs a spectral gap:
    // the slowest non-kernel mode decays like (1 - gap)^50, so only accept
    // complexes whose lambda_min+ / lambda_max ratio makes 1e-3 reachable
    std::uniform_int_distribution<int> nv(5, 9);
    while (complexes.size() < 21) {
        SimplicialComplex X = random_complex(rng, nv(rng), 0.5, 0.6);
        Laplacians lap = laplacian(X, 1);
        SpectralBasis sb = spectral_basis(lap.full);
        if (sb.harmonic_dim == 0) continue;
        double lmax = sb.eigenvalues(sb.eigenvalues.size() - 1);
        double lminp = -1.0;
        for (int i = 0; i < sb.eigenvalues.size(); ++i)
            if (sb.eigenvalues(i) > 1e-8 * lmax) {
                lminp = sb.eigenvalues(i);
                break;
            }
        if (lminp > 0 && lminp / lmax >= 0.16) complexes.push_back(std::move(X));
    }
    const int powers[] = {1, 2, 5, 10, 50};
    for (const SimplicialComplex& X : complexes) {
        Laplacians lap = laplacian(X, 1);
        SpectralBasis sb = spectral_basis(lap.full);
        Mat P = exact_harmonic_projector(lap.full);
        double eps = 1.0 / sb.eigenvalues(sb.eigenvalues.size() - 1);
        double prev = std::numeric_limits<double>::infinity();
        double last = 0.0;
        for (int J : powers) {
            SpMat Phat = sparse_harmonic_projector(lap.full, {eps, J});
            double err = (Mat(Phat) - P).norm();
            if (err > prev + 1e-12) ok = false;
            prev = err;
            last = err;
        }
        if (last >= 1e-3) ok = false;
    }
    double secs = seconds_since(t0);
    report(2, "projector convergence", ok && secs < 5.0, secs);
}

void criterion_3() {
    auto t0 = Clock::now();
    bool ok = true;
    std::mt19937_64 rng(303);
    SimplicialComplex X = random_complex(rng, 8);  // well under 30 edges
    // pooled-MLP readout through the trajectory loss, every nonlinearity
    for (Nonlinearity sigma : {Nonlinearity::Identity, Nonlinearity::Relu, Nonlinearity::Tanh}) {
        ModelConfig cfg;
        cfg.task = "trajectory";
        cfg.n_layers = 1;
        cfg.features = 2;
        cfg.j = 2;
        cfg.j_h = 2;
        cfg.sigma = sigma;
        cfg.dropout_p = 0.0;
        cfg.seed = 7;
        Model model(cfg, 1);
        inflate_attention(model);
        ComplexOps ops = build_model_ops(laplacian(X, 1), cfg);
        Vec signal = Vec::Zero(X.count(1));
        std::uniform_int_distribution<int> tri(-1, 1);
        for (int i = 0; i < signal.size(); ++i) signal(i) = tri(rng);
        GradCheckReport rep = gradient_check(model, ops, Mat(signal), 0, nullptr, 1e-5, 1e-4);
        if (!rep.all_pass) ok = false;
    }
    // per-simplex readout through the masked-l1 mdi loss
    for (Nonlinearity sigma : {Nonlinearity::Identity, Nonlinearity::Relu, Nonlinearity::Tanh}) {
        ModelConfig cfg;
        cfg.task = "mdi";
        cfg.n_layers = 2;
        cfg.features = 3;
        cfg.j = 2;
        cfg.j_h = 0;
        cfg.sigma = sigma;
        cfg.dropout_p = 0.0;
        cfg.seed = 7;
        Model model(cfg, 1);
        inflate_attention(model);
        ComplexOps ops = build_model_ops(laplacian(X, 1), cfg);
        MdiSpec mspec;
        mspec.seed = 5;
        MdiInstance inst = generate_mdi_instance(X, mspec);
        Mat input = inst.input_features.unaryExpr([](double v) { return std::log1p(v); });
        // l1 gradients through two tanh layers are small; a larger step
        // keeps the central difference above cancellation noise
        GradCheckReport rep = gradient_check(model, ops, input, 0, &inst, 3e-4, 1e-4);
        if (!rep.all_pass) ok = false;
    }
    double secs = seconds_since(t0);
    report(3, "gradient oracle", ok && secs < 30.0, secs);
}

void criterion_4() {
    auto t0 = Clock::now();
    bool ok = true;
    SanLayerConfig base;
    base.f_in = 2;
    base.f_out = 3;
    base.j_down = base.j_up = 2;
    base.harmonic = HarmonicMode::Projector;

    auto forward = [](const SimplicialComplex& X, const SanLayerConfig& cfg,
                      const ParamStore& store, const SanLayerParams& params, const Mat& Z) {
        Laplacians lap = laplacian(X, 1);
        ComplexOps ops = ComplexOps::build(lap, SpMat(lap.full.rows(), lap.full.cols()));
        Tape tape;
        BoundLayer bound = bind_layer(tape, params, store);
        return tape.value(san_layer_forward(tape, tape.constant(Z), ops, bound, cfg));
    };

    {  // SNN: single tied filter against the full Laplacian
        std::mt19937_64 rng(404);
        SimplicialComplex X = build_complex({{0, 1, 2}, {1, 2, 3}, {2, 3, 4}});
        SanLayerConfig cfg = reduction_config(ReductionTarget::SNN, base);
        ParamStore store;
        SanLayerParams params = allocate_layer_params(cfg, store, "l", 1.0, rng);
        Mat Z = random_mat(X.count(1), 2, rng);
        Mat out = forward(X, cfg, store, params, Z);
        Mat ref = Mat(laplacian(X, 1).full) * Z * store.values[params.heads[0].w_down[0]];
        if ((out - ref).cwiseAbs().maxCoeff() >= 1e-12) ok = false;
    }
    {  // SCNN: fixed-Laplacian polynomial filters plus the skip harmonic
        std::mt19937_64 rng(405);
        SimplicialComplex X = build_complex({{0, 1, 2}, {1, 2, 3}});
        SanLayerConfig cfg = reduction_config(ReductionTarget::SCNN, base);
        ParamStore store;
        SanLayerParams params = allocate_layer_params(cfg, store, "l", 1.0, rng);
        Mat Z = random_mat(X.count(1), 2, rng);
        Mat out = forward(X, cfg, store, params, Z);
        Laplacians lap = laplacian(X, 1);
        Mat Ld = Mat(lap.down), Lu = Mat(lap.up);
        Mat ref = Mat::Zero(Z.rows(), 3);
        Mat pw = Mat::Identity(Ld.rows(), Ld.cols());
        for (int p = 0; p < cfg.j_down; ++p) {
            pw = pw * Ld;
            ref += pw * Z * store.values[params.heads[0].w_down[p]];
        }
        pw = Mat::Identity(Lu.rows(), Lu.cols());
        for (int p = 0; p < cfg.j_up; ++p) {
            pw = pw * Lu;
            ref += pw * Z * store.values[params.heads[0].w_up[p]];
        }
        ref += Z * store.values[params.heads[0].w_h];
        if ((out - ref).cwiseAbs().maxCoeff() >= 1e-12) ok = false;
    }
    {  // GAT on the 4-node path graph against the hand-coded scalar oracle
        std::mt19937_64 rng(406);
        SimplicialComplex X = build_complex({{0, 1}, {1, 2}, {2, 3}});
        SanLayerConfig cfg = reduction_config(ReductionTarget::GAT, base);
        Laplacians lap = laplacian(X, 0);
        ComplexOps ops = ComplexOps::build(lap, SpMat(4, 4));
        ParamStore store;
        SanLayerParams params = allocate_layer_params(cfg, store, "l", 1.0, rng);
        Mat Z = random_mat(4, 2, rng);
        Tape tape;
        BoundLayer bound = bind_layer(tape, params, store);
        Mat out = tape.value(san_layer_forward(tape, tape.constant(Z), ops, bound, cfg));
        NeighborhoodTable nb = neighborhoods(lap);
        const Mat& W = store.values[params.heads[0].w_up[0]];
        Vec a = store.values[params.heads[0].a_up].col(0);
        Mat ref = scalar_attention(Z * W, a, nb.upper) * (Z * W);
        if ((out - ref).cwiseAbs().maxCoeff() >= 1e-10) ok = false;
    }
    double secs = seconds_since(t0);
    report(4, "reduction equivalence", ok, secs);
}

void criterion_5() {
    auto t0 = Clock::now();
    bool ok = true;
    auto run = [&ok](std::uint64_t seed, int j_h) {
        auto rt0 = Clock::now();
        ModelConfig cfg;
        cfg.task = "trajectory";
        cfg.n_layers = 1;
        cfg.features = 4;
        cfg.j = 3;
        cfg.epsilon = 0.9;  // clamped against 2 / lambda_max inside the builder
        cfg.j_h = j_h;
        cfg.lr = 0.01;
        cfg.l2_lambda = 0.003;
        cfg.dropout_p = 0.6;
        cfg.seed = seed;
        SyntheticFlowSpec spec;
        spec.n_points = 100;
        spec.n_train = 200;
        spec.n_test = 50;
        spec.seed = seed;
        SyntheticFlowData data = generate_synthetic_flow(spec);
        ComplexOps ops = build_model_ops(laplacian(data.complex, 1), cfg);
        Model model(cfg, 1);
        train_trajectory(model, ops, data.train, data.test);
        double acc = eval_trajectory_accuracy(model, ops, data.test);
        if (seconds_since(rt0) >= 600.0) ok = false;
        return acc;
    };
    double san_mean = 0.0, noharm_mean = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        san_mean += run(seed, 5) / 3.0;
        noharm_mean += run(seed, 0) / 3.0;
    }
    if (san_mean < 0.95) ok = false;
    if (san_mean < noharm_mean) ok = false;  // ties allowed
    char buf[96];
    std::snprintf(buf, sizeof(buf), "mean=%.3f no-harmonic=%.3f", san_mean, noharm_mean);
    report(5, "trajectory desk-scale", ok, seconds_since(t0), buf);
}

void criterion_6() {
    auto t0 = Clock::now();
    bool ok = true;
    // fixed point cloud -> a 2-order complex of roughly 300 simplices
    std::mt19937_64 prng(0x5851f42d4c957f2dull);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Point> pts(60);
    for (auto& p : pts) p = {uni(prng), uni(prng)};
    auto tris = delaunay_triangulate(pts);
    std::vector<std::vector<int>> tops;
    for (const auto& t : tris) tops.push_back({t[0], t[1], t[2]});
    SimplicialComplex X = build_complex(tops);

    double san_mean = 0.0, scnn_mean = 0.0;
    for (int mask = 0; mask < 10; ++mask) {
        MdiSpec mspec;
        mspec.order = 1;
        mspec.missing_fraction = 0.3;
        mspec.seed = mask;
        MdiInstance inst = generate_mdi_instance(X, mspec);
        for (ReductionTarget arch : {ReductionTarget::SAN, ReductionTarget::SCNN}) {
            ModelConfig cfg;
            cfg.task = "mdi";
            cfg.arch = arch;
            cfg.n_layers = 4;
            cfg.features = 256;
            cfg.j = 2;
            cfg.j_h = 0;  // skip harmonic
            cfg.sigma = Nonlinearity::Relu;
            cfg.lr = 0.01;
            cfg.l2_lambda = 0.0;
            cfg.dropout_p = 0.0;
            cfg.plateau_patience = 100;
            cfg.early_stop_patience = 500;
            cfg.max_epochs = 250;
            cfg.seed = mask;
            Model model(cfg, 1);
            ComplexOps ops = build_model_ops(laplacian(X, 1), cfg);
            train_mdi(model, ops, inst);
            double acc = eval_mdi_accuracy(model, ops, inst);
            (arch == ReductionTarget::SAN ? san_mean : scnn_mean) += acc / 10.0;
        }
    }
    double secs = seconds_since(t0);
    if (!(san_mean > scnn_mean)) ok = false;  // strictly higher
    if (secs >= 1200.0) ok = false;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "san=%.3f scnn=%.3f", san_mean, scnn_mean);
    report(6, "mdi desk-scale", ok, secs, buf);
}

void criterion_7() {
    auto t0 = Clock::now();
    bool ok = true;
    std::mt19937_64 rng(707);
    std::uniform_int_distribution<int> dim(1, 5), pow(0, 3), coin(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        SanLayerConfig cfg;
        cfg.f_in = dim(rng);
        cfg.f_out = dim(rng);
        cfg.j_down = pow(rng);
        cfg.j_up = pow(rng);
        cfg.heads = 1 + coin(rng);
        cfg.attention_enabled = coin(rng) != 0;
        cfg.harmonic = coin(rng) ? HarmonicMode::Projector : HarmonicMode::None;
        if (coin(rng)) {
            cfg.tied_filters = true;
            cfg.j_up = cfg.j_down;
        }
        if (cfg.attention_enabled && coin(rng) && cfg.j_down == cfg.j_up && cfg.j_down > 0)
            cfg.shared_attention = true;
        ParamStore store;
        allocate_layer_params(cfg, store, "l", 1.0, rng);
        if (param_count(cfg) != store.scalar_count()) ok = false;
    }
    // desk-scale trajectory layer at one input feature
    SanLayerConfig traj;
    traj.f_in = 1;
    traj.f_out = 4;
    traj.j_down = traj.j_up = 3;
    traj.harmonic = HarmonicMode::Projector;
    if (param_count(traj) != 76) ok = false;
    report(7, "parameter accounting", ok, seconds_since(t0));
}

void criterion_8() {
    auto t0 = Clock::now();
    bool ok = true;
    SyntheticFlowSpec spec;
    spec.n_points = 40;
    spec.n_train = 24;
    spec.n_test = 8;
    spec.seed = 11;
    SyntheticFlowData data = generate_synthetic_flow(spec);
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "san_acceptance";
    fs::create_directories(dir);
    std::vector<std::string> paths;
    for (int rep = 0; rep < 2; ++rep) {
        ModelConfig cfg;
        cfg.task = "trajectory";
        cfg.n_layers = 1;
        cfg.features = 2;
        cfg.j = 2;
        cfg.j_h = 2;
        cfg.max_epochs = 30;
        cfg.seed = 11;
        ComplexOps ops = build_model_ops(laplacian(data.complex, 1), cfg);
        Model model(cfg, 1);
        TrainResult r = train_trajectory(model, ops, data.train, data.test);
        std::string path = (dir / ("metrics" + std::to_string(rep) + ".csv")).string();
        write_metrics_csv(r.history, path);
        paths.push_back(path);
    }
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    std::string a = slurp(paths[0]), b = slurp(paths[1]);
    if (a.empty() || a != b) ok = false;
    report(8, "determinism", ok, seconds_since(t0));
}

} // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_7();
    criterion_8();
    criterion_5();
    criterion_6();
    std::printf(failures == 0 ? "acceptance: all criteria pass\n"
                              : "acceptance: %d criteria failed\n",
                failures);
    return failures == 0 ? 0 : 1;
}
