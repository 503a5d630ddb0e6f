#include "shockfit/grid.hpp"

#include "shockfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace shockfit {

std::string to_string(EdgeTag tag) {
    switch (tag) {
        case EdgeTag::Shock: return "shock";
        case EdgeTag::SonicO: return "sonic_O";
        case EdgeTag::SonicN: return "sonic_N";
        case EdgeTag::Wedge: return "wedge";
        case EdgeTag::Symmetry: return "symmetry";
        case EdgeTag::VertexCorner: return "vertex-corner";
    }
    return "unknown";
}

bool MappedGrid::on_boundary(int node) const {
    const int i = iT_of(node), j = iS_of(node);
    return i == 0 || i == nT - 1 || j == 0 || j == nS - 1;
}

std::vector<Side> MappedGrid::sides_of(int node) const {
    std::vector<Side> out;
    const int i = iT_of(node), j = iS_of(node);
    if (j == nS - 1) out.push_back(Side::Top);
    if (j == 0) out.push_back(Side::Bottom);
    if (i == 0) out.push_back(Side::SideA);
    if (i == nT - 1) out.push_back(Side::SideB);
    return out;
}

std::vector<EdgeTag> MappedGrid::tags_of(int node) const {
    std::vector<EdgeTag> out;
    for (Side s : sides_of(node)) out.push_back(edge_tags[static_cast<int>(s)]);
    return out;
}

MappedGrid transfinite_grid(const QuadBoundary& b, const std::vector<double>& t, const std::vector<double>& s) {
    const int nT = static_cast<int>(t.size()), nS = static_cast<int>(s.size());
    if (nT < 3 || nS < 3) throw GeometryError("grid needs at least 3 nodes per direction");
    if (static_cast<int>(b.bottom.size()) != nT || static_cast<int>(b.top.size()) != nT ||
        static_cast<int>(b.side_a.size()) != nS || static_cast<int>(b.side_b.size()) != nS)
        throw GeometryError("boundary curve sizes do not match the parameter grids");

    MappedGrid g;
    g.nT = nT;
    g.nS = nS;
    g.t_param = t;
    g.s_param = s;
    g.edge_tags = b.tags;
    g.xy.resize(static_cast<size_t>(nT) * nS);

    const Vec2 qa = b.bottom.front(), qb = b.bottom.back();
    const Vec2 a = b.top.front(), bb = b.top.back();
    for (int i = 0; i < nT; ++i) {
        const double ti = t[i];
        for (int j = 0; j < nS; ++j) {
            const double sj = s[j];
            const Vec2 lin = (1.0 - sj) * b.bottom[i] + sj * b.top[i] + (1.0 - ti) * b.side_a[j] + ti * b.side_b[j];
            const Vec2 corners = (1.0 - sj) * (1.0 - ti) * qa + (1.0 - sj) * ti * qb + sj * (1.0 - ti) * a + sj * ti * bb;
            g.xy[g.index(i, j)] = lin - corners;
        }
    }
    // boundary nodes take the curve samples exactly
    for (int i = 0; i < nT; ++i) {
        g.xy[g.index(i, 0)] = b.bottom[i];
        g.xy[g.index(i, nS - 1)] = b.top[i];
    }
    for (int j = 0; j < nS; ++j) {
        g.xy[g.index(0, j)] = b.side_a[j];
        g.xy[g.index(nT - 1, j)] = b.side_b[j];
    }
    return g;
}

std::vector<double> uniform_distribution(int n) {
    std::vector<double> d(n);
    for (int k = 0; k < n; ++k) d[k] = static_cast<double>(k) / (n - 1);
    return d;
}

std::vector<double> clustered_distribution(int n, double ratio, double max_stretch) {
    const int cells = n - 1;
    const int growth = static_cast<int>(std::ceil(std::log(max_stretch) / std::log(ratio)));
    std::vector<double> h(cells);
    for (int k = 0; k < cells; ++k) h[k] = std::pow(ratio, std::min(k, growth));
    double total = 0.0;
    for (double v : h) total += v;
    std::vector<double> d(n, 0.0);
    for (int k = 0; k < cells; ++k) d[k + 1] = d[k] + h[k] / total;
    d[cells] = 1.0;
    return d;
}

std::vector<double> reversed_distribution(const std::vector<double>& d) {
    std::vector<double> r(d.size());
    for (size_t k = 0; k < d.size(); ++k) r[k] = 1.0 - d[d.size() - 1 - k];
    return r;
}

double min_cell_jacobian(const MappedGrid& g) {
    std::vector<double> det;
    det.reserve(static_cast<size_t>(g.nT - 1) * (g.nS - 1));
    double signed_sum = 0.0, abs_sum = 0.0;
    for (int i = 0; i + 1 < g.nT; ++i)
        for (int j = 0; j + 1 < g.nS; ++j) {
            const Vec2& p00 = g.xy[g.index(i, j)];
            const Vec2& p10 = g.xy[g.index(i + 1, j)];
            const Vec2& p01 = g.xy[g.index(i, j + 1)];
            const Vec2& p11 = g.xy[g.index(i + 1, j + 1)];
            // bilinear map derivatives at the cell centre
            const Vec2 dt = 0.5 * ((p10 - p00) + (p11 - p01));
            const Vec2 ds = 0.5 * ((p01 - p00) + (p11 - p10));
            det.push_back(dt.x() * ds.y() - dt.y() * ds.x());
            signed_sum += det.back();
            abs_sum += std::abs(det.back());
        }
    // orientation of (t, s) may be either way round; measure against the dominant one
    const double orient = signed_sum >= 0.0 ? 1.0 : -1.0;
    const double mean = abs_sum / static_cast<double>(det.size());
    double jmin = std::numeric_limits<double>::infinity();
    for (double d : det) jmin = std::min(jmin, orient * d / mean);
    return jmin;
}

void check_bijective(const MappedGrid& grid, double floor) {
    const double j = min_cell_jacobian(grid);
    if (!(j > floor)) {
        std::ostringstream os;
        os << "grid map is not bijective: min scaled cell Jacobian " << j;
        throw GeometryError(os.str());
    }
}

MappedGrid disk_grid(const Vec2& center, double radius, int n) {
    // four quarter arcs: bottom, right, top, left
    auto arc = [&](double a0, double a1) {
        std::vector<Vec2> p(n);
        for (int k = 0; k < n; ++k) {
            const double a = a0 + (a1 - a0) * k / (n - 1);
            p[k] = center + radius * Vec2(std::cos(a), std::sin(a));
        }
        return p;
    };
    const double pi = std::numbers::pi;
    QuadBoundary b;
    b.bottom = arc(-3.0 * pi / 4.0, -pi / 4.0);   // Q_A -> Q_B
    b.side_b = arc(-pi / 4.0, pi / 4.0);          // Q_B -> B
    b.top = arc(3.0 * pi / 4.0, pi / 4.0);        // A -> B
    b.side_a = arc(-3.0 * pi / 4.0, -5.0 * pi / 4.0);  // Q_A -> A
    b.tags = {EdgeTag::Wedge, EdgeTag::Shock, EdgeTag::Wedge, EdgeTag::Wedge};
    return transfinite_grid(b, uniform_distribution(n), uniform_distribution(n));
}

}  // namespace shockfit
