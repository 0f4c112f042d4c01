#include "sanlib/complex.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace san {

const std::vector<Simplex>& SimplicialComplex::simplices(int k) const {
    if (k < 0 || k > max_order())
        throw OrderOutOfRange("simplices: order " + std::to_string(k) + " out of range");
    return by_order_[k];
}

int SimplicialComplex::index_of(const Simplex& s) const {
    int k = s.order();
    if (k < 0 || k > max_order()) return -1;
    const auto& v = by_order_[k];
    auto it = std::lower_bound(v.begin(), v.end(), s);
    if (it != v.end() && *it == s) return static_cast<int>(it - v.begin());
    return -1;
}

SimplicialComplex SimplicialComplex::from_top_simplices(const std::vector<std::vector<int>>& tops) {
    if (tops.empty()) throw EmptyInput("build_complex: empty simplex list");

    std::vector<std::set<std::vector<int>>> levels;
    // closure: insert each simplex and, recursively, all faces
    auto insert_with_faces = [&](auto&& self, const std::vector<int>& verts) -> void {
        int k = static_cast<int>(verts.size()) - 1;
        if (static_cast<int>(levels.size()) <= k) levels.resize(k + 1);
        if (!levels[k].insert(verts).second) return;
        if (k == 0) return;
        for (size_t j = 0; j < verts.size(); ++j) {
            std::vector<int> face;
            face.reserve(verts.size() - 1);
            for (size_t m = 0; m < verts.size(); ++m)
                if (m != j) face.push_back(verts[m]);
            self(self, face);
        }
    };

    for (const auto& raw : tops) {
        if (raw.empty()) throw EmptyInput("build_complex: empty vertex list");
        std::vector<int> verts = raw;
        std::sort(verts.begin(), verts.end());
        for (int v : verts)
            if (v < 0) throw ParseError("build_complex: negative vertex id");
        for (size_t i = 1; i < verts.size(); ++i)
            if (verts[i] == verts[i - 1])
                throw DuplicateVertex("build_complex: repeated vertex " + std::to_string(verts[i]));
        insert_with_faces(insert_with_faces, verts);
    }

    SimplicialComplex X;
    X.by_order_.resize(levels.size());
    for (size_t k = 0; k < levels.size(); ++k) {
        X.by_order_[k].reserve(levels[k].size());
        for (const auto& verts : levels[k])  // std::set iterates lexicographically
            X.by_order_[k].push_back(Simplex{verts});
    }
    return X;
}

SimplicialComplex build_complex(const std::vector<std::vector<int>>& top_simplices) {
    return SimplicialComplex::from_top_simplices(top_simplices);
}

SpMat incidence_matrix(const SimplicialComplex& X, int k) {
    if (k < 1 || k > X.max_order())
        throw OrderOutOfRange("incidence_matrix: order " + std::to_string(k));
    const auto& rows = X.simplices(k - 1);
    const auto& cols = X.simplices(k);
    if (rows.empty() || cols.empty())
        throw OrderOutOfRange("incidence_matrix: empty order");

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(cols.size() * (k + 1));
    for (size_t c = 0; c < cols.size(); ++c) {
        const auto& verts = cols[c].vertices;
        int sign = 1;  // (-1)^j for the face omitting the j-th vertex
        for (size_t j = 0; j < verts.size(); ++j) {
            Simplex face;
            face.vertices.reserve(verts.size() - 1);
            for (size_t m = 0; m < verts.size(); ++m)
                if (m != j) face.vertices.push_back(verts[m]);
            int r = X.index_of(face);
            trips.emplace_back(r, static_cast<int>(c), static_cast<double>(sign));
            sign = -sign;
        }
    }
    SpMat B(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
    B.setFromTriplets(trips.begin(), trips.end());
    B.makeCompressed();
    return B;
}

Laplacians laplacian(const SimplicialComplex& X, int k) {
    if (k < 0 || k > X.max_order())
        throw OrderOutOfRange("laplacian: order " + std::to_string(k));
    int n = X.count(k);
    Laplacians lap;
    if (k == 0) {
        lap.down = SpMat(n, n);
        if (X.max_order() >= 1) {
            SpMat B1 = incidence_matrix(X, 1);
            lap.up = SpMat(B1 * SpMat(B1.transpose()));
        } else {
            lap.up = SpMat(n, n);
        }
    } else {
        SpMat Bk = incidence_matrix(X, k);
        lap.down = SpMat(SpMat(Bk.transpose()) * Bk);
        if (k < X.max_order() && X.count(k + 1) > 0) {
            SpMat Bk1 = incidence_matrix(X, k + 1);
            lap.up = SpMat(Bk1 * SpMat(Bk1.transpose()));
        } else {
            lap.up = SpMat(n, n);
        }
    }
    lap.full = lap.down + lap.up;
    lap.down.prune(0.0);
    lap.up.prune(0.0);
    lap.full.prune(0.0);
    lap.down.makeCompressed();
    lap.up.makeCompressed();
    lap.full.makeCompressed();
    return lap;
}

static std::vector<std::vector<int>> pattern_rows(const SpMat& M, int n) {
    std::vector<std::set<int>> sets(n);
    for (int i = 0; i < n; ++i) sets[i].insert(i);  // self-inclusion
    for (int c = 0; c < M.outerSize(); ++c)
        for (SpMat::InnerIterator it(M, c); it; ++it)
            if (it.value() != 0.0) sets[it.row()].insert(static_cast<int>(it.col()));
    std::vector<std::vector<int>> out(n);
    for (int i = 0; i < n; ++i) out[i].assign(sets[i].begin(), sets[i].end());
    return out;
}

NeighborhoodTable neighborhoods(const Laplacians& lap) {
    NeighborhoodTable t;
    int n = static_cast<int>(lap.full.rows());
    t.upper = pattern_rows(lap.up, n);
    t.lower = pattern_rows(lap.down, n);
    return t;
}

NeighborhoodTable neighborhoods(const SimplicialComplex& X, int k) {
    NeighborhoodTable t = neighborhoods(laplacian(X, k));
    t.order = k;
    return t;
}

SimplicialComplex load_complex(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::vector<int>> tops;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos || line[pos] == '#') continue;
        std::istringstream ss(line);
        int k;
        if (!(ss >> k) || k < 0)
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad order field");
        std::vector<int> verts(k + 1);
        for (int i = 0; i <= k; ++i)
            if (!(ss >> verts[i]) || verts[i] < 0)
                throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                                 std::to_string(k + 1) + " vertex ids");
        for (int i = 1; i <= k; ++i)
            if (verts[i] <= verts[i - 1])
                throw ParseError(path + ":" + std::to_string(lineno) +
                                 ": vertex ids must be strictly ascending");
        tops.push_back(std::move(verts));
    }
    if (tops.empty()) throw EmptyInput(path + ": no simplices");
    return build_complex(tops);
}

void save_complex(const SimplicialComplex& X, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    // list maximal simplices only; closure restores the rest
    for (int k = X.max_order(); k >= 0; --k) {
        for (const auto& s : X.simplices(k)) {
            bool covered = false;
            if (k < X.max_order()) {
                for (const auto& t : X.simplices(k + 1)) {
                    if (std::includes(t.vertices.begin(), t.vertices.end(),
                                      s.vertices.begin(), s.vertices.end())) {
                        covered = true;
                        break;
                    }
                }
            }
            if (covered) continue;
            out << k;
            for (int v : s.vertices) out << ' ' << v;
            out << '\n';
        }
    }
}

std::string file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    char buf[17];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace san
