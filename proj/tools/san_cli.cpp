// san: generate, inspect, train, and evaluate simplicial attention networks.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "sanlib/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace san;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw ConfigError(path + ": config root must be an object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

/// Flag values already set on the command line win over config-file fields.
template <typename T>
void resolve(const json& cfg, const char* key, T& slot, bool flag_given) {
    if (flag_given || !cfg.contains(key)) return;
    try {
        slot = cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

ModelConfig model_config_from(const json& cfg, CLI::App* cmd, const GlobalOpts& g) {
    ModelConfig m;
    (void)cmd;
    resolve(cfg, "task", m.task, false);
    std::string arch = "san", sigma = "tanh", combine = "concat";
    resolve(cfg, "arch", arch, false);
    resolve(cfg, "sigma", sigma, false);
    resolve(cfg, "combine", combine, false);
    resolve(cfg, "n_layers", m.n_layers, false);
    resolve(cfg, "features", m.features, false);
    resolve(cfg, "j", m.j, false);
    resolve(cfg, "heads", m.heads, false);
    resolve(cfg, "epsilon", m.epsilon, false);
    resolve(cfg, "j_h", m.j_h, false);
    resolve(cfg, "n_classes", m.n_classes, false);
    resolve(cfg, "init_gain", m.init_gain, false);
    resolve(cfg, "lr", m.lr, false);
    resolve(cfg, "l2_lambda", m.l2_lambda, false);
    resolve(cfg, "dropout_p", m.dropout_p, false);
    resolve(cfg, "plateau_factor", m.plateau_factor, false);
    resolve(cfg, "plateau_patience", m.plateau_patience, false);
    resolve(cfg, "early_stop_patience", m.early_stop_patience, false);
    resolve(cfg, "max_epochs", m.max_epochs, false);
    resolve(cfg, "seed", m.seed, g.seed.has_value());
    if (g.seed) m.seed = *g.seed;
    m.arch = reduction_from_string(arch);
    m.sigma = sigma_from_string(sigma);
    if (combine == "concat")
        m.combine = HeadCombine::Concat;
    else if (combine == "average")
        m.combine = HeadCombine::Average;
    else
        throw ConfigError("combine must be 'concat' or 'average'");
    if (m.task != "trajectory" && m.task != "mdi")
        throw ConfigError("task must be 'trajectory' or 'mdi'");
    if (m.n_layers < 1 || m.features < 1 || m.j < 0 || m.j_h < 0 || m.heads < 1)
        throw ConfigError("architecture fields out of range");
    if (m.lr <= 0 || m.l2_lambda < 0 || m.dropout_p < 0 || m.dropout_p >= 1 ||
        m.plateau_factor <= 0 || m.plateau_factor >= 1 || m.max_epochs < 1)
        throw ConfigError("optimizer fields out of range");
    return m;
}

json model_config_to_json(const ModelConfig& m) {
    json c;
    c["task"] = m.task;
    c["arch"] = to_string(m.arch);
    c["n_layers"] = m.n_layers;
    c["features"] = m.features;
    c["j"] = m.j;
    c["heads"] = m.heads;
    c["combine"] = m.combine == HeadCombine::Concat ? "concat" : "average";
    c["sigma"] = to_string(m.sigma);
    c["epsilon"] = m.epsilon;
    c["j_h"] = m.j_h;
    c["n_classes"] = m.n_classes;
    c["init_gain"] = m.init_gain;
    c["lr"] = m.lr;
    c["l2_lambda"] = m.l2_lambda;
    c["dropout_p"] = m.dropout_p;
    c["plateau_factor"] = m.plateau_factor;
    c["plateau_patience"] = m.plateau_patience;
    c["early_stop_patience"] = m.early_stop_patience;
    c["max_epochs"] = m.max_epochs;
    c["seed"] = m.seed;
    return c;
}

// ---------------- gen ----------------

int cmd_gen(const GlobalOpts& g, CLI::App* cmd, const std::string& task, int points,
            int n_train, int n_test, double hole_radius, bool random_test_orientation,
            double miss, int order, const std::string& complex_in) {
    json cfg = load_config_file(g.config_path);
    fs::create_directories(g.out_dir);
    std::uint64_t seed = g.seed.value_or(cfg.value("seed", 0ull));
    json manifest;
    manifest["command"] = "gen";
    manifest["task"] = task;
    manifest["seed"] = seed;

    if (task == "trajectory") {
        SyntheticFlowSpec spec;
        spec.n_points = points;
        spec.n_train = n_train;
        spec.n_test = n_test;
        spec.hole_radius = hole_radius;
        spec.random_test_orientation = random_test_orientation;
        spec.seed = seed;
        SyntheticFlowData data = generate_synthetic_flow(spec);
        fs::path dir(g.out_dir);
        save_complex(data.complex, (dir / "complex.txt").string());
        save_trajectories(data.train, (dir / "train.txt").string());
        save_trajectories(data.test, (dir / "test.txt").string());
        manifest["n_points"] = spec.n_points;
        manifest["n_train"] = spec.n_train;
        manifest["n_test"] = spec.n_test;
        manifest["hole_radius"] = spec.hole_radius;
        manifest["hole_a"] = {spec.hole_a.x, spec.hole_a.y};
        manifest["hole_b"] = {spec.hole_b.x, spec.hole_b.y};
        manifest["random_test_orientation"] = spec.random_test_orientation;
        manifest["edges"] = data.complex.count(1);
        manifest["triangles"] = data.complex.count(2);
        manifest["complex_fingerprint"] = file_fingerprint((dir / "complex.txt").string());
    } else if (task == "mdi") {
        SimplicialComplex X = [&] {
            if (!complex_in.empty()) return load_complex(complex_in);
            // synthesize a 2-order complex: Delaunay over uniform points
            std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dull);
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            std::vector<Point> pts(points);
            for (auto& p : pts) p = {uni(rng), uni(rng)};
            auto tris = delaunay_triangulate(pts);
            std::vector<std::vector<int>> tops;
            for (const auto& t : tris) tops.push_back({t[0], t[1], t[2]});
            return build_complex(tops);
        }();
        MdiSpec spec;
        spec.order = order;
        spec.missing_fraction = miss;
        spec.seed = seed;
        MdiInstance inst = generate_mdi_instance(X, spec);
        fs::path dir(g.out_dir);
        save_complex(X, (dir / "complex.txt").string());
        save_mdi(inst, (dir / "mdi.txt").string());
        manifest["points"] = points;
        manifest["order"] = spec.order;
        manifest["missing_fraction"] = spec.missing_fraction;
        manifest["simplices_at_order"] = X.count(order);
        manifest["complex_fingerprint"] = file_fingerprint((dir / "complex.txt").string());
    } else {
        throw ConfigError("gen: task must be 'trajectory' or 'mdi'");
    }
    (void)cmd;
    write_json(manifest, fs::path(g.out_dir) / "manifest.json");
    return 0;
}

// ---------------- inspect ----------------

int cmd_inspect(const std::string& complex_path) {
    SimplicialComplex X = load_complex(complex_path);
    json report;
    report["path"] = complex_path;
    report["max_order"] = X.max_order();
    json orders = json::array();
    for (int k = 0; k <= X.max_order(); ++k) {
        Laplacians lap = laplacian(X, k);
        SpectralBasis b = spectral_basis(lap.full);
        json o;
        o["order"] = k;
        o["count"] = X.count(k);
        o["lambda_min"] = b.eigenvalues[0];
        o["lambda_max"] = b.eigenvalues[b.eigenvalues.size() - 1];
        o["harmonic_dim"] = b.harmonic_dim;
        orders.push_back(std::move(o));
    }
    report["orders"] = std::move(orders);
    std::cout << report.dump(2) << '\n';
    return 0;
}

// ---------------- train ----------------

int cmd_train(const GlobalOpts& g, CLI::App* cmd, const std::string& complex_path,
              const std::string& train_path, const std::string& test_path,
              const std::string& mdi_path, const std::string& arch_override) {
    json cfg = load_config_file(g.config_path);
    if (!arch_override.empty()) cfg["arch"] = arch_override;
    ModelConfig mc = model_config_from(cfg, cmd, g);
    std::string cpath = complex_path, trpath = train_path, tepath = test_path,
                mpath = mdi_path;
    resolve(cfg, "complex", cpath, !cpath.empty());
    resolve(cfg, "train_data", trpath, !trpath.empty());
    resolve(cfg, "test_data", tepath, !tepath.empty());
    resolve(cfg, "mdi_data", mpath, !mpath.empty());
    if (cpath.empty()) throw ConfigError("train: a complex file is required");

    fs::create_directories(g.out_dir);
    SimplicialComplex X = load_complex(cpath);
    std::string fingerprint = file_fingerprint(cpath);
    std::string warning;
    ComplexOps ops = build_model_ops(laplacian(X, 1), mc, &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << '\n';

    TrainResult result;
    fs::path dir(g.out_dir);
    if (mc.task == "trajectory") {
        if (trpath.empty() || tepath.empty())
            throw ConfigError("train: trajectory task needs train and test files");
        auto train_set = load_trajectories(trpath, X.count(1));
        auto test_set = load_trajectories(tepath, X.count(1));
        Model model(mc, 1);
        result = train_trajectory(model, ops, train_set, test_set);
        model.save_checkpoint((dir / "checkpoint.json").string(), fingerprint);
    } else {
        if (mpath.empty()) throw ConfigError("train: mdi task needs an mdi file");
        MdiInstance inst = load_mdi(mpath, X);
        Model model(mc, 1);
        result = train_mdi(model, ops, inst);
        model.save_checkpoint((dir / "checkpoint.json").string(), fingerprint);
    }
    write_metrics_csv(result.history, (dir / "metrics.csv").string());

    json manifest;
    manifest["command"] = "train";
    manifest["config"] = model_config_to_json(mc);
    manifest["complex"] = cpath;
    manifest["complex_fingerprint"] = fingerprint;
    if (!trpath.empty()) manifest["train_data"] = trpath;
    if (!tepath.empty()) manifest["test_data"] = tepath;
    if (!mpath.empty()) manifest["mdi_data"] = mpath;
    manifest["epochs_run"] = result.stopped_epoch;
    manifest["early_stopped"] = result.early_stopped;
    if (!result.history.empty()) {
        manifest["final_loss"] = result.history.back().loss;
        manifest["final_train_acc"] = result.history.back().train_acc;
        manifest["final_test_acc"] = result.history.back().test_acc;
    }
    if (!warning.empty()) manifest["warning"] = warning;
    write_json(manifest, dir / "manifest.json");
    return 0;
}

// ---------------- eval ----------------

int cmd_eval(const GlobalOpts& g, const std::string& checkpoint_path,
             const std::string& complex_path, const std::string& data_path) {
    auto [model, expected_fp] = Model::load_checkpoint(checkpoint_path);
    std::string fp = file_fingerprint(complex_path);
    if (!expected_fp.empty() && fp != expected_fp)
        throw FingerprintMismatch("checkpoint was trained against a different complex (" +
                                  expected_fp + " != " + fp + ")");
    SimplicialComplex X = load_complex(complex_path);
    ComplexOps ops = build_model_ops(laplacian(X, 1), model.config());

    json report;
    report["command"] = "eval";
    report["checkpoint"] = checkpoint_path;
    report["complex_fingerprint"] = fp;
    if (model.config().task == "trajectory") {
        auto insts = load_trajectories(data_path, X.count(1));
        report["n_instances"] = insts.size();
        report["accuracy"] = eval_trajectory_accuracy(model, ops, insts);
    } else {
        MdiInstance inst = load_mdi(data_path, X);
        report["accuracy"] = eval_mdi_accuracy(model, ops, inst);
    }
    std::cout << report.dump(2) << '\n';
    fs::create_directories(g.out_dir);
    write_json(report, fs::path(g.out_dir) / "eval.json");
    return 0;
}

// ---------------- gradcheck ----------------

int cmd_gradcheck(const GlobalOpts& g, CLI::App* cmd, const std::string& complex_path,
                  double tolerance) {
    json cfg = load_config_file(g.config_path);
    ModelConfig mc = model_config_from(cfg, cmd, g);
    mc.dropout_p = 0.0;  // dropout resampling would break finite differences

    SimplicialComplex X = complex_path.empty()
                              ? build_complex({{0, 1, 2}, {1, 2, 3}, {2, 3, 4}, {0, 4}})
                              : load_complex(complex_path);
    if (X.count(1) > 30)
        throw ConfigError("gradcheck: complex too large (" + std::to_string(X.count(1)) +
                          " edges; limit 30)");
    ComplexOps ops = build_model_ops(laplacian(X, 1), mc);

    std::mt19937_64 rng(mc.seed);
    // the near-zero attention init parks the pair scores on the LeakyReLU
    // kink, where central differences are meaningless; inflate them first
    auto inflate_attention = [](Model& model) {
        for (int i = 0; i < model.params().size(); ++i)
            if (model.params().names[i].find(".a_") != std::string::npos)
                model.params().values[i] *= 100.0;
    };
    GradCheckReport rep;
    if (mc.task == "trajectory") {
        Model model(mc, 1);
        inflate_attention(model);
        Vec x = Vec::Zero(X.count(1));
        std::uniform_int_distribution<int> sign(0, 2);
        for (int i = 0; i < x.size(); ++i) x[i] = sign(rng) - 1;
        rep = gradient_check(model, ops, x, 0, nullptr, 1e-5, tolerance);
    } else {
        Model model(mc, 1);
        inflate_attention(model);
        MdiSpec spec;
        spec.seed = mc.seed;
        MdiInstance inst = generate_mdi_instance(X, spec);
        // log inputs, matching how the trainer feeds count data
        Mat x = inst.input_features.unaryExpr([](double v) { return std::log1p(v); });
        rep = gradient_check(model, ops, x, 0, &inst, 1e-4, tolerance);
    }
    for (const auto& grp : rep.groups)
        std::cout << (grp.pass ? "PASS " : "FAIL ") << grp.name << " max_rel_error="
                  << grp.max_rel_error << '\n';
    std::cout << (rep.all_pass ? "PASS" : "FAIL") << " all parameter groups\n";
    return rep.all_pass ? 0 : kExitNumeric;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"simplicial attention network toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name
    GlobalOpts g;
    std::uint64_t seed_flag = 0;
    app.add_option("--config", g.config_path, "JSON config file");
    auto* seed_opt = app.add_option("--seed", seed_flag, "RNG seed (overrides config)");
    app.add_option("--out-dir", g.out_dir, "output directory");
    app.add_option("--threads", g.threads, "worker threads (1 = deterministic)");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_task = "trajectory", gen_complex;
    int gen_points = 100, gen_train = 200, gen_test = 50, gen_order = 1;
    double gen_hole_radius = 0.15, gen_miss = 0.3;
    bool gen_flip = false;
    gen->add_option("--task", gen_task, "trajectory | mdi");
    gen->add_option("--points", gen_points, "points in the unit square");
    gen->add_option("--n-train", gen_train, "training trajectories");
    gen->add_option("--n-test", gen_test, "test trajectories");
    gen->add_option("--hole-radius", gen_hole_radius, "hole disk radius");
    gen->add_flag("--random-test-orientation", gen_flip, "re-orient test edges randomly");
    gen->add_option("--miss", gen_miss, "mdi missing fraction");
    gen->add_option("--order", gen_order, "mdi simplex order");
    gen->add_option("--complex", gen_complex, "mdi: reuse an existing complex file");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "report complex statistics");
    std::string inspect_path;
    inspect->add_option("complex", inspect_path, "complex file")->required();

    // train
    auto* train = app.add_subcommand("train", "train a model");
    std::string train_complex, train_train, train_test, train_mdi_path, train_arch;
    train->add_option("--complex", train_complex, "complex file");
    train->add_option("--train-data", train_train, "trajectory training file");
    train->add_option("--test-data", train_test, "trajectory test file");
    train->add_option("--mdi-data", train_mdi_path, "mdi instance file");
    train->add_option("--arch", train_arch, "san | scnn | snn | sat | gat | san-nh");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_complex, eval_data;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--complex", eval_complex, "complex file")->required();
    eval->add_option("--data", eval_data, "trajectory or mdi data file")->required();

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::string gc_complex;
    double gc_tol = 1e-4;
    gradcheck->add_option("--complex", gc_complex, "small complex file (<= 30 edges)");
    gradcheck->add_option("--tolerance", gc_tol, "max relative error allowed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    if (seed_opt->count() > 0) g.seed = seed_flag;
    if (g.threads < 1) {
        std::cerr << "error: --threads must be >= 1\n";
        return kExitConfig;
    }

    try {
        if (gen->parsed())
            return cmd_gen(g, gen, gen_task, gen_points, gen_train, gen_test, gen_hole_radius,
                           gen_flip, gen_miss, gen_order, gen_complex);
        if (inspect->parsed()) return cmd_inspect(inspect_path);
        if (train->parsed())
            return cmd_train(g, train, train_complex, train_train, train_test,
                             train_mdi_path, train_arch);
        if (eval->parsed()) return cmd_eval(g, eval_ckpt, eval_complex, eval_data);
        if (gradcheck->parsed()) return cmd_gradcheck(g, gradcheck, gc_complex, gc_tol);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergedLoss& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const EigenFailure& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const EpsilonOutOfRange& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
