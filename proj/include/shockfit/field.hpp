#pragma once

#include "shockfit/gas_algebra.hpp"
#include "shockfit/grid.hpp"

#include <Eigen/Core>

#include <array>
#include <iosfwd>
#include <memory>
#include <vector>

namespace shockfit {

// Order of derivative slots in a stencil.
enum Deriv { dX = 0, dY = 1, dXX = 2, dXY = 3, dYY = 4 };

// Per-node derivative weights on a 3x3 block of neighbours (one-sided near the
// boundary). Weights combine the central/one-sided index-space differences with
// discrete metric terms so the operators are exact on quadratics in (xi1, xi2).
struct NodeStencil {
    std::array<int, 9> nodes{};
    Eigen::Matrix<double, 5, 9> w = Eigen::Matrix<double, 5, 9>::Zero();
};

struct Stencils {
    std::vector<NodeStencil> at;
};

namespace kernels {
// Serial reference and OpenMP versions; results are bit-identical.
Stencils build_stencils_serial(const MappedGrid& grid);
Stencils build_stencils_omp(const MappedGrid& grid);
NodeStencil node_stencil(const MappedGrid& grid, int node);
}  // namespace kernels

Stencils build_stencils(const MappedGrid& grid);

struct Field {
    std::shared_ptr<const MappedGrid> grid;
    std::shared_ptr<const Stencils> stencils;
    Eigen::VectorXd values;      // phi - phi_upstream per node
    ConstantState upstream;
    GasParams params;
    Vec2 frame_shift = Vec2::Zero();

    int size() const { return static_cast<int>(values.size()); }
    const Vec2& xy(int node) const { return grid->xy[node]; }
};

Field make_field(std::shared_ptr<const MappedGrid> grid, const ConstantState& upstream, const GasParams& params);

Vec2 gradient(const Field& f, int node);
Eigen::Matrix2d hessian(const Field& f, int node);

// Full pseudo-potential and its gradient at a node.
double full_value(const Field& f, int node);
Vec2 full_gradient(const Field& f, int node);

namespace kernels {
Eigen::VectorXd pde_residual_serial(const Field& f);
Eigen::VectorXd pde_residual_omp(const Field& f);
}  // namespace kernels

// Non-divergence residual per node (boundary nodes included; callers mask them).
Eigen::VectorXd pde_residual(const Field& f);
Eigen::VectorXd ellipticity_map(const Field& f);
Eigen::VectorXd directional_derivative(const Field& f, const Vec2& e);

// Translate the field by xi0 (xi -> xi - xi0). The pseudo-potential equation has
// no explicit xi, so the translated field solves it at the moved points.
Field shifted(const Field& f, const Vec2& xi0);

// CSV node table: T,S,xi1,xi2,phi,|Dphi|,margin,residual (17 significant digits).
// T and S are the shock-frame coordinates xi.e_perp and xi.e.
void write_field_csv(std::ostream& os, const Field& f, const Vec2& e, const Vec2& e_perp);

// Value sampled from a constant state, relative to the field's upstream state.
Eigen::VectorXd sample_state(const Field& f, const ConstantState& s);

}  // namespace shockfit
