#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sanlib/complex.hpp"

namespace san {

struct Point {
    double x = 0.0, y = 0.0;
};

/// Bowyer-Watson Delaunay triangulation over the given points. Returns
/// triangles as ascending point-index triples. In-circle and orientation
/// tests fall back to extended precision near the 1e-12 decision boundary.
std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Point>& pts);

struct TrajectoryInstance {
    Vec edge_signal;  // entries in {-1, 0, +1} against the canonical orientation
    int label = 0;    // index of the hole the path passes
    /// Per-edge orientation signs for this instance's complex copy; empty
    /// means canonical. Laplacians are conjugated by these signs at eval.
    std::vector<int> orientation;
};

struct SyntheticFlowSpec {
    int n_points = 100;
    Point hole_a{0.3, 0.3};  // bottom-left hole
    Point hole_b{0.7, 0.7};  // top-right hole
    double hole_radius = 0.15;
    int n_train = 200;
    int n_test = 50;
    std::uint64_t seed = 0;
    bool random_test_orientation = false;
};

struct SyntheticFlowData {
    SimplicialComplex complex;
    std::vector<Point> points;  // indexed by vertex id
    std::vector<TrajectoryInstance> train;
    std::vector<TrajectoryInstance> test;
};

/// Uniform points in the unit square, Delaunay triangulation, two holes
/// punched by deleting triangles whose circumcenter falls inside either
/// disk, then labeled corner-to-corner edge paths routed past one hole.
SyntheticFlowData generate_synthetic_flow(const SyntheticFlowSpec& spec);

struct MdiInstance {
    int order = 0;
    Vec values;                  // ground-truth per-simplex counts
    std::vector<uint8_t> known;  // false = hidden by the mask
    Vec input_features;          // values with hidden entries median-filled
};

struct MdiSpec {
    int order = 1;
    double missing_fraction = 0.3;
    double lognormal_mu = 4.0;
    double lognormal_sigma = 1.0;
    std::uint64_t seed = 0;
};

MdiInstance generate_mdi_instance(const SimplicialComplex& X, const MdiSpec& spec);

/// Trajectory file: one line per instance, `label e_idx:sign ...`.
void save_trajectories(const std::vector<TrajectoryInstance>& v, const std::string& path);
std::vector<TrajectoryInstance> load_trajectories(const std::string& path, int n_edges);

/// MDI file: `k n_simplices` header then `simplex_idx value known_flag` lines.
void save_mdi(const MdiInstance& inst, const std::string& path);
MdiInstance load_mdi(const std::string& path, const SimplicialComplex& X);

/// Fresh +-1 orientation signs, one per k-simplex.
std::vector<int> random_orientation(int n, std::mt19937_64& rng);

} // namespace san
