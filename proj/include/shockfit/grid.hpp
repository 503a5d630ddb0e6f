#pragma once

#include "shockfit/gas_algebra.hpp"

#include <array>
#include <string>
#include <vector>

namespace shockfit {

enum class EdgeTag { Shock, SonicO, SonicN, Wedge, Symmetry, VertexCorner };

std::string to_string(EdgeTag tag);

// Which edge of the computational square a node sits on.
enum class Side { Bottom = 0, Top = 1, SideA = 2, SideB = 3 };

// Discrete curves bounding a four-sided domain. The top edge is the shock and
// runs from corner A (iT = 0) to corner B (iT = nT - 1); the bottom edge runs
// from Q_A to Q_B; side A runs from Q_A to A and side B from Q_B to B.
struct QuadBoundary {
    std::vector<Vec2> bottom;  // nT points
    std::vector<Vec2> top;     // nT points
    std::vector<Vec2> side_a;  // nS points
    std::vector<Vec2> side_b;  // nS points
    std::array<EdgeTag, 4> tags{EdgeTag::Wedge, EdgeTag::Shock, EdgeTag::Wedge, EdgeTag::Symmetry};
};

struct MappedGrid {
    int nT = 0;
    int nS = 0;
    double T_A = 0.0;
    double T_B = 1.0;
    std::vector<double> t_param;  // computational coordinate along the shock, size nT
    std::vector<double> s_param;  // computational coordinate across, size nS
    std::vector<Vec2> xy;         // node positions, row-major in (iT, iS)
    std::array<EdgeTag, 4> edge_tags{};
    // Nodes that are special corners (vertex of the wedge, etc.) are listed here.
    std::vector<int> vertex_corners;

    int size() const { return nT * nS; }
    int index(int iT, int iS) const { return iT * nS + iS; }
    int iT_of(int node) const { return node / nS; }
    int iS_of(int node) const { return node % nS; }
    bool on_boundary(int node) const;
    // Tags of all edges the node lies on (one, or two at corners; empty inside).
    std::vector<EdgeTag> tags_of(int node) const;
    std::vector<Side> sides_of(int node) const;
};

// Transfinite (Coons) interpolation of the boundary curves at the given
// computational coordinates.
MappedGrid transfinite_grid(const QuadBoundary& boundary, const std::vector<double>& t_param,
                            const std::vector<double>& s_param);

// Distributions of computational coordinates on [0, 1].
std::vector<double> uniform_distribution(int n);
// Geometric clustering toward 0: spacing grows by `ratio` per cell until it
// reaches the uniform-like plateau.
std::vector<double> clustered_distribution(int n, double ratio, double max_stretch = 8.0);
std::vector<double> reversed_distribution(const std::vector<double>& d);

// Smallest cell-centre Jacobian determinant of the node map, divided by the
// mean cell area. Throws GeometryError if it is below `floor`.
double min_cell_jacobian(const MappedGrid& grid);
void check_bijective(const MappedGrid& grid, double floor = 1e-8);

// Structured grid over a disk, used for manufactured-solution tests.
MappedGrid disk_grid(const Vec2& center, double radius, int n);

}  // namespace shockfit
