#include "sanlib/data.hpp"

#include "sanlib/hodge.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace san {

namespace {

double orient2d(const Point& a, const Point& b, const Point& c) {
    double det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    double mag = std::abs((b.x - a.x) * (c.y - a.y)) + std::abs((b.y - a.y) * (c.x - a.x));
    if (std::abs(det) > 1e-12 * mag) return det;
    long double dl = (static_cast<long double>(b.x) - a.x) * (static_cast<long double>(c.y) - a.y) -
                     (static_cast<long double>(b.y) - a.y) * (static_cast<long double>(c.x) - a.x);
    return static_cast<double>(dl);
}

// > 0 when d lies inside the circumcircle of ccw triangle (a, b, c)
double incircle(const Point& a, const Point& b, const Point& c, const Point& d) {
    auto row = [&](const Point& p, double& x, double& y, double& w) {
        x = p.x - d.x;
        y = p.y - d.y;
        w = x * x + y * y;
    };
    double ax, ay, aw, bx, by, bw, cx, cy, cw;
    row(a, ax, ay, aw);
    row(b, bx, by, bw);
    row(c, cx, cy, cw);
    double det = ax * (by * cw - bw * cy) - ay * (bx * cw - bw * cx) + aw * (bx * cy - by * cx);
    double mag = std::abs(ax * by * cw) + std::abs(ax * bw * cy) + std::abs(ay * bx * cw) +
                 std::abs(ay * bw * cx) + std::abs(aw * bx * cy) + std::abs(aw * by * cx);
    if (std::abs(det) > 1e-12 * mag) return det;
    auto rowl = [&](const Point& p, long double& x, long double& y, long double& w) {
        x = static_cast<long double>(p.x) - d.x;
        y = static_cast<long double>(p.y) - d.y;
        w = x * x + y * y;
    };
    long double lax, lay, law, lbx, lby, lbw, lcx, lcy, lcw;
    rowl(a, lax, lay, law);
    rowl(b, lbx, lby, lbw);
    rowl(c, lcx, lcy, lcw);
    long double dl = lax * (lby * lcw - lbw * lcy) - lay * (lbx * lcw - lbw * lcx) +
                     law * (lbx * lcy - lby * lcx);
    return static_cast<double>(dl);
}

Point circumcenter(const Point& a, const Point& b, const Point& c) {
    double d = 2.0 * ((a.x * (b.y - c.y)) + (b.x * (c.y - a.y)) + (c.x * (a.y - b.y)));
    if (std::abs(d) < 1e-300) throw DegenerateTriangulation("circumcenter of collinear triangle");
    double a2 = a.x * a.x + a.y * a.y;
    double b2 = b.x * b.x + b.y * b.y;
    double c2 = c.x * c.x + c.y * c.y;
    Point p;
    p.x = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
    p.y = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
    return p;
}

} // namespace

std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Point>& pts) {
    const int n = static_cast<int>(pts.size());
    if (n < 3) throw DegenerateTriangulation("delaunay: fewer than 3 points");
    bool any_area = false;
    for (int i = 2; i < n && !any_area; ++i)
        any_area = std::abs(orient2d(pts[0], pts[1], pts[i])) > 0.0;
    if (!any_area) throw DegenerateTriangulation("delaunay: collinear point set");

    // bounding super-triangle
    double minx = pts[0].x, maxx = pts[0].x, miny = pts[0].y, maxy = pts[0].y;
    for (const Point& p : pts) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    double cx = (minx + maxx) / 2, cy = (miny + maxy) / 2;
    double span = std::max(maxx - minx, maxy - miny) * 64.0 + 1.0;
    std::vector<Point> all = pts;
    all.push_back({cx - span, cy - span});
    all.push_back({cx + span, cy - span});
    all.push_back({cx, cy + span});
    const int s0 = n, s1 = n + 1, s2 = n + 2;

    struct Tri {
        int a, b, c;  // ccw
    };
    std::vector<Tri> tris{{s0, s1, s2}};

    for (int ip = 0; ip < n; ++ip) {
        const Point& p = all[ip];
        std::vector<int> bad;
        for (int t = 0; t < static_cast<int>(tris.size()); ++t)
            if (incircle(all[tris[t].a], all[tris[t].b], all[tris[t].c], p) > 0.0)
                bad.push_back(t);
        // boundary polygon: edges of bad triangles that appear exactly once
        std::map<std::pair<int, int>, int> edge_count;
        auto note = [&](int u, int v) { edge_count[{std::min(u, v), std::max(u, v)}]++; };
        for (int t : bad) {
            note(tris[t].a, tris[t].b);
            note(tris[t].b, tris[t].c);
            note(tris[t].c, tris[t].a);
        }
        std::vector<std::pair<int, int>> boundary;
        for (int t : bad) {
            auto consider = [&](int u, int v) {
                if (edge_count[{std::min(u, v), std::max(u, v)}] == 1)
                    boundary.emplace_back(u, v);  // keep ccw order from the bad triangle
            };
            consider(tris[t].a, tris[t].b);
            consider(tris[t].b, tris[t].c);
            consider(tris[t].c, tris[t].a);
        }
        std::sort(bad.rbegin(), bad.rend());
        for (int t : bad) {
            tris[t] = tris.back();
            tris.pop_back();
        }
        for (auto [u, v] : boundary) {
            Tri nt{u, v, ip};
            if (orient2d(all[nt.a], all[nt.b], all[nt.c]) < 0.0) std::swap(nt.b, nt.c);
            tris.push_back(nt);
        }
    }

    std::vector<std::array<int, 3>> out;
    for (const Tri& t : tris) {
        if (t.a >= n || t.b >= n || t.c >= n) continue;
        std::array<int, 3> tri{t.a, t.b, t.c};
        std::sort(tri.begin(), tri.end());
        out.push_back(tri);
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw DegenerateTriangulation("delaunay: no triangles produced");
    return out;
}

namespace {

struct Skeleton {
    std::map<int, std::vector<int>> adj;  // vertex -> sorted neighbor vertices
    std::map<std::pair<int, int>, int> edge_index;
};

Skeleton build_skeleton(const SimplicialComplex& X) {
    Skeleton sk;
    const auto& edges = X.simplices(1);
    for (size_t e = 0; e < edges.size(); ++e) {
        int u = edges[e].vertices[0], v = edges[e].vertices[1];
        sk.adj[u].push_back(v);
        sk.adj[v].push_back(u);
        sk.edge_index[{u, v}] = static_cast<int>(e);
    }
    for (auto& [v, nb] : sk.adj) std::sort(nb.begin(), nb.end());
    return sk;
}

// BFS shortest path with deterministic tie-breaking (ascending neighbor ids)
std::vector<int> bfs_path(const Skeleton& sk, int src, int dst) {
    std::map<int, int> prev;
    prev[src] = src;
    std::deque<int> q{src};
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        if (u == dst) break;
        auto it = sk.adj.find(u);
        if (it == sk.adj.end()) continue;
        for (int v : it->second)
            if (!prev.count(v)) {
                prev[v] = u;
                q.push_back(v);
            }
    }
    if (!prev.count(dst)) return {};
    std::vector<int> path{dst};
    while (path.back() != src) path.push_back(prev[path.back()]);
    std::reverse(path.begin(), path.end());
    return path;
}

// Dijkstra with jittered Euclidean edge weights: per-instance jitter keeps
// sampled trajectories diverse instead of collapsing onto one canonical path
std::vector<int> weighted_path(const Skeleton& sk, const std::vector<Point>& pts, int src,
                               int dst, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::map<std::pair<int, int>, double> wt;
    for (const auto& [e, idx] : sk.edge_index) {
        double dx = pts[e.first].x - pts[e.second].x, dy = pts[e.first].y - pts[e.second].y;
        wt[e] = std::sqrt(dx * dx + dy * dy) * (1.0 + 0.5 * uni(rng));
    }
    std::map<int, double> dist;
    std::map<int, int> prev;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> q;
    dist[src] = 0.0;
    prev[src] = src;
    q.push({0.0, src});
    while (!q.empty()) {
        auto [d, u] = q.top();
        q.pop();
        if (d > dist[u] + 1e-15) continue;
        if (u == dst) break;
        auto it = sk.adj.find(u);
        if (it == sk.adj.end()) continue;
        for (int v : it->second) {
            double w = wt[{std::min(u, v), std::max(u, v)}];
            auto dv = dist.find(v);
            if (dv == dist.end() || d + w < dv->second) {
                dist[v] = d + w;
                prev[v] = u;
                q.push({d + w, v});
            }
        }
    }
    if (!prev.count(dst)) return {};
    std::vector<int> path{dst};
    while (path.back() != src) path.push_back(prev[path.back()]);
    std::reverse(path.begin(), path.end());
    return path;
}

// removes revisit loops so the final walk is a simple path
std::vector<int> loop_erase(const std::vector<int>& walk) {
    std::vector<int> out;
    std::map<int, int> pos;
    for (int v : walk) {
        auto it = pos.find(v);
        if (it != pos.end()) {
            while (static_cast<int>(out.size()) > it->second + 1) {
                pos.erase(out.back());
                out.pop_back();
            }
        } else {
            pos[v] = static_cast<int>(out.size());
            out.push_back(v);
        }
    }
    return out;
}

int nearest_vertex(const std::vector<Point>& pts, const std::vector<int>& ids, Point target) {
    int best = ids[0];
    double bd = 1e300;
    for (int v : ids) {
        double dx = pts[v].x - target.x, dy = pts[v].y - target.y;
        double d = dx * dx + dy * dy;
        if (d < bd) {
            bd = d;
            best = v;
        }
    }
    return best;
}

} // namespace

SyntheticFlowData generate_synthetic_flow(const SyntheticFlowSpec& spec) {
    if (spec.n_points < 20) throw ConfigError("synthetic flow: need at least 20 points");
    auto inside_square = [](const Point& c, double r) {
        return c.x - r > 0.0 && c.x + r < 1.0 && c.y - r > 0.0 && c.y + r < 1.0;
    };
    if (!inside_square(spec.hole_a, spec.hole_radius) ||
        !inside_square(spec.hole_b, spec.hole_radius))
        throw ConfigError("synthetic flow: holes must lie inside the unit square");
    double dx = spec.hole_a.x - spec.hole_b.x, dy = spec.hole_a.y - spec.hole_b.y;
    if (std::sqrt(dx * dx + dy * dy) <= 2.0 * spec.hole_radius)
        throw ConfigError("synthetic flow: holes overlap");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Point> pts(spec.n_points);
    for (Point& p : pts) {
        p.x = uni(rng);
        p.y = uni(rng);
    }

    auto tris = delaunay_triangulate(pts);
    auto in_hole = [&](const Point& c) {
        auto d2 = [&](const Point& h) {
            double ddx = c.x - h.x, ddy = c.y - h.y;
            return ddx * ddx + ddy * ddy;
        };
        double r2 = spec.hole_radius * spec.hole_radius;
        return d2(spec.hole_a) < r2 || d2(spec.hole_b) < r2;
    };
    std::vector<std::vector<int>> keep;
    for (const auto& t : tris) {
        Point cc = circumcenter(pts[t[0]], pts[t[1]], pts[t[2]]);
        if (!in_hole(cc)) keep.push_back({t[0], t[1], t[2]});
    }
    if (keep.empty()) throw DisconnectedAfterHolePunch("synthetic flow: all triangles removed");

    SyntheticFlowData data;
    data.complex = build_complex(keep);
    data.points = pts;

    Skeleton sk = build_skeleton(data.complex);
    std::vector<int> vertex_ids;
    for (const auto& s : data.complex.simplices(0)) vertex_ids.push_back(s.vertices[0]);
    // connectivity of the surviving 1-skeleton
    {
        std::vector<int> comp = bfs_path(sk, vertex_ids.front(), vertex_ids.front());
        std::set<int> seen;
        std::deque<int> q{vertex_ids.front()};
        seen.insert(vertex_ids.front());
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (int v : sk.adj[u])
                if (seen.insert(v).second) q.push_back(v);
        }
        if (seen.size() != vertex_ids.size())
            throw DisconnectedAfterHolePunch("synthetic flow: skeleton disconnected");
    }

    const int start = nearest_vertex(pts, vertex_ids, {0.0, 1.0});
    const int goal = nearest_vertex(pts, vertex_ids, {1.0, 0.0});
    const int n_edges = data.complex.count(1);

    auto make_instance = [&](bool randomize_orientation) {
        TrajectoryInstance inst;
        inst.label = (uni(rng) < 0.5) ? 0 : 1;
        const Point& hole = inst.label == 0 ? spec.hole_a : spec.hole_b;
        const Point& other = inst.label == 0 ? spec.hole_b : spec.hole_a;
        // two waypoints just outside the hole disk straddling the side that
        // faces away from the other hole: the path has to wrap around the
        // hole's outer arc, which pins the winding (and hence the label);
        // a single waypoint lets both classes share the middle corridor
        double away = std::atan2(hole.y - other.y, hole.x - other.x);
        auto sample_wp = [&](double side) {
            double ang = away + side * (0.28 + 0.08 * uni(rng)) * M_PI;
            double rad = spec.hole_radius * (1.15 + 0.4 * uni(rng));
            return Point{hole.x + rad * std::cos(ang), hole.y + rad * std::sin(ang)};
        };
        Point pa = sample_wp(+1.0), pb = sample_wp(-1.0);
        int va = nearest_vertex(pts, vertex_ids, pa);
        int vb = nearest_vertex(pts, vertex_ids, pb);
        // visit the waypoint nearer to the start first
        auto d2 = [&](int v) {
            double ddx = pts[v].x - pts[start].x, ddy = pts[v].y - pts[start].y;
            return ddx * ddx + ddy * ddy;
        };
        if (d2(vb) < d2(va)) std::swap(va, vb);
        std::vector<int> walk = weighted_path(sk, pts, start, va, rng);
        std::vector<int> mid = weighted_path(sk, pts, va, vb, rng);
        std::vector<int> tail = weighted_path(sk, pts, vb, goal, rng);
        walk.insert(walk.end(), mid.begin() + 1, mid.end());
        walk.insert(walk.end(), tail.begin() + 1, tail.end());
        walk = loop_erase(walk);

        inst.edge_signal = Vec::Zero(n_edges);
        for (size_t i = 0; i + 1 < walk.size(); ++i) {
            int u = walk[i], v = walk[i + 1];
            int lo = std::min(u, v), hi = std::max(u, v);
            int e = sk.edge_index.at({lo, hi});
            inst.edge_signal[e] = (u == lo) ? 1.0 : -1.0;
        }
        if (randomize_orientation) {
            inst.orientation = random_orientation(n_edges, rng);
            for (int e = 0; e < n_edges; ++e) inst.edge_signal[e] *= inst.orientation[e];
        }
        return inst;
    };

    for (int i = 0; i < spec.n_train; ++i) data.train.push_back(make_instance(false));
    for (int i = 0; i < spec.n_test; ++i)
        data.test.push_back(make_instance(spec.random_test_orientation));
    return data;
}

MdiInstance generate_mdi_instance(const SimplicialComplex& X, const MdiSpec& spec) {
    if (spec.missing_fraction <= 0.0 || spec.missing_fraction >= 1.0)
        throw ConfigError("mdi: missing_fraction must be in (0, 1)");
    const int n = X.count(spec.order);
    if (n == 0) throw OrderOutOfRange("mdi: no simplices at order " + std::to_string(spec.order));

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    MdiInstance inst;
    inst.order = spec.order;

    // log-values come from a smoothed gaussian field on the vertices,
    // averaged over each simplex's vertices: neighboring simplices get
    // correlated counts, so hidden entries are actually recoverable from
    // their neighborhoods (i.i.d. draws would make imputation impossible)
    const int nv = X.count(0);
    Vec g(nv);
    for (int i = 0; i < nv; ++i) g[i] = gauss(rng);
    Laplacians lap0 = laplacian(X, 0);
    double lam = lambda_max_estimate(lap0.full);
    if (lam > 0.0) {
        for (int step = 0; step < 80; ++step) g -= (lap0.full * g) / lam;
    }
    Vec h(n);
    const auto& simps = X.simplices(spec.order);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int v : simps[i].vertices) s += g[v];
        h[i] = s / static_cast<double>(simps[i].vertices.size());
    }
    double mean = h.mean();
    double sd = std::sqrt((h.array() - mean).square().sum() / std::max(1, n - 1));
    if (sd > 0.0) h = spec.lognormal_mu + spec.lognormal_sigma * (h.array() - mean) / sd;

    inst.values = Vec(n);
    for (int i = 0; i < n; ++i)
        inst.values[i] = std::max(1.0, std::round(std::exp(h[i])));

    const int n_hidden = static_cast<int>(std::ceil(spec.missing_fraction * n));
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    inst.known.assign(n, 1);
    for (int i = 0; i < n_hidden; ++i) inst.known[perm[i]] = 0;

    std::vector<double> known_vals;
    for (int i = 0; i < n; ++i)
        if (inst.known[i]) known_vals.push_back(inst.values[i]);
    std::sort(known_vals.begin(), known_vals.end());
    double median = known_vals.empty()
                        ? 0.0
                        : (known_vals.size() % 2
                               ? known_vals[known_vals.size() / 2]
                               : 0.5 * (known_vals[known_vals.size() / 2 - 1] +
                                        known_vals[known_vals.size() / 2]));
    inst.input_features = inst.values;
    for (int i = 0; i < n; ++i)
        if (!inst.known[i]) inst.input_features[i] = median;
    return inst;
}

void save_trajectories(const std::vector<TrajectoryInstance>& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& inst : v) {
        out << inst.label;
        for (int e = 0; e < inst.edge_signal.size(); ++e)
            if (inst.edge_signal[e] != 0.0)
                out << ' ' << e << ':' << (inst.edge_signal[e] > 0 ? 1 : -1);
        out << '\n';
    }
}

std::vector<TrajectoryInstance> load_trajectories(const std::string& path, int n_edges) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<TrajectoryInstance> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos || line[pos] == '#') continue;
        std::istringstream ss(line);
        TrajectoryInstance inst;
        if (!(ss >> inst.label) || inst.label < 0)
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad label");
        inst.edge_signal = Vec::Zero(n_edges);
        std::string tok;
        while (ss >> tok) {
            auto colon = tok.find(':');
            if (colon == std::string::npos)
                throw ParseError(path + ":" + std::to_string(lineno) + ": expected e:sign");
            int e = std::stoi(tok.substr(0, colon));
            int s = std::stoi(tok.substr(colon + 1));
            if (e < 0 || e >= n_edges)
                throw ParseError(path + ":" + std::to_string(lineno) +
                                 ": edge index out of range");
            if (s != 1 && s != -1)
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad sign");
            inst.edge_signal[e] = s;
        }
        out.push_back(std::move(inst));
    }
    if (out.empty()) throw EmptyInput(path + ": no trajectories");
    return out;
}

void save_mdi(const MdiInstance& inst, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << inst.order << ' ' << inst.values.size() << '\n';
    for (int i = 0; i < inst.values.size(); ++i)
        out << i << ' ' << inst.values[i] << ' ' << static_cast<int>(inst.known[i]) << '\n';
}

MdiInstance load_mdi(const std::string& path, const SimplicialComplex& X) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    MdiInstance inst;
    int n = 0;
    if (!(in >> inst.order >> n)) throw ParseError(path + ":1: bad header");
    if (n != X.count(inst.order))
        throw DimensionMismatch(path + ": simplex count does not match complex");
    inst.values = Vec::Zero(n);
    inst.known.assign(n, 0);
    for (int i = 0; i < n; ++i) {
        int idx, flag;
        double v;
        if (!(in >> idx >> v >> flag) || idx < 0 || idx >= n)
            throw ParseError(path + ":" + std::to_string(i + 2) + ": bad entry");
        inst.values[idx] = v;
        inst.known[idx] = flag ? 1 : 0;
    }
    std::vector<double> kv;
    for (int i = 0; i < n; ++i)
        if (inst.known[i]) kv.push_back(inst.values[i]);
    if (kv.empty()) throw EmptyMask(path + ": no known entries");
    std::sort(kv.begin(), kv.end());
    double median = kv.size() % 2 ? kv[kv.size() / 2]
                                  : 0.5 * (kv[kv.size() / 2 - 1] + kv[kv.size() / 2]);
    inst.input_features = inst.values;
    for (int i = 0; i < n; ++i)
        if (!inst.known[i]) inst.input_features[i] = median;
    return inst;
}

std::vector<int> random_orientation(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<int> s(n);
    for (int i = 0; i < n; ++i) s[i] = uni(rng) < 0.5 ? 1 : -1;
    return s;
}

} // namespace san
