#include "shockfit/errors.hpp"
#include "shockfit/field.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace shockfit;

namespace {

// Annular sector with a wavy outer edge: curved in both directions, non-orthogonal.
std::shared_ptr<const MappedGrid> warped_grid(int n) {
    QuadBoundary b;
    const auto t = uniform_distribution(n), s = uniform_distribution(n);
    auto outer = [](double u) {
        const double a = 0.2 + 1.0 * u;
        const double r = 2.0 + 0.15 * std::sin(3.0 * u);
        return Vec2(r * std::cos(a), r * std::sin(a));
    };
    auto inner = [](double u) {
        const double a = 0.2 + 1.0 * u;
        return Vec2(std::cos(a), std::sin(a));
    };
    for (int i = 0; i < n; ++i) {
        b.bottom.push_back(inner(t[i]));
        b.top.push_back(outer(t[i]));
    }
    for (int j = 0; j < n; ++j) {
        b.side_a.push_back((1.0 - s[j]) * inner(0.0) + s[j] * outer(0.0));
        b.side_b.push_back((1.0 - s[j]) * inner(1.0) + s[j] * outer(1.0));
    }
    return std::make_shared<const MappedGrid>(transfinite_grid(b, t, s));
}

}  // namespace

TEST(Operators, ExactOnQuadraticsOnCurvedGrid) {
    auto g = warped_grid(17);
    Field f = make_field(g, ConstantState{}, GasParams{1.4, 1.0});
    auto q = [](const Vec2& x) { return 0.3 + 1.1 * x.x() - 0.7 * x.y() + 0.9 * x.x() * x.x() - 0.4 * x.x() * x.y() + 0.25 * x.y() * x.y(); };
    for (int k = 0; k < f.size(); ++k) f.values[k] = q(f.xy(k));
    for (int k = 0; k < f.size(); ++k) {
        const Vec2& x = f.xy(k);
        const Vec2 gr = gradient(f, k);
        EXPECT_NEAR(gr.x(), 1.1 + 1.8 * x.x() - 0.4 * x.y(), 1e-9);
        EXPECT_NEAR(gr.y(), -0.7 - 0.4 * x.x() + 0.5 * x.y(), 1e-9);
        const auto h = hessian(f, k);
        EXPECT_NEAR(h(0, 0), 1.8, 1e-9);
        EXPECT_NEAR(h(0, 1), -0.4, 1e-9);
        EXPECT_NEAR(h(1, 1), 0.5, 1e-9);
    }
}

TEST(Operators, ConstantStateGradient) {
    const GasParams p{1.4, 1.0};
    const ConstantState s = make_state(Vec2(0.3, 0.1), -0.05, p);
    Field f = make_field(warped_grid(13), make_state(Vec2::Zero(), 0.0, p), p);
    f.values = sample_state(f, s);
    for (int k = 0; k < f.size(); ++k) EXPECT_LT((full_gradient(f, k) - (s.velocity - f.xy(k))).norm(), 1e-10);
}

TEST(Operators, SecondOrderOnSmoothFunction) {
    auto fn = [](const Vec2& x) { return std::sin(x.x()) * std::cos(x.y()); };
    double err_g[2], err_h[2];
    for (int r = 0; r < 2; ++r) {
        const int n = r == 0 ? 33 : 65;
        Field f = make_field(warped_grid(n), ConstantState{}, GasParams{1.4, 1.0});
        for (int k = 0; k < f.size(); ++k) f.values[k] = fn(f.xy(k));
        double eg = 0.0, eh = 0.0;
        for (int k = 0; k < f.size(); ++k) {
            const Vec2& x = f.xy(k);
            const Vec2 exact(std::cos(x.x()) * std::cos(x.y()), -std::sin(x.x()) * std::sin(x.y()));
            eg = std::max(eg, (gradient(f, k) - exact).norm());
            if (!f.grid->on_boundary(k)) {
                const double hxx = -std::sin(x.x()) * std::cos(x.y());
                eh = std::max(eh, std::abs(hessian(f, k)(0, 0) - hxx));
            }
        }
        err_g[r] = eg;
        err_h[r] = eh;
    }
    const double order_g = std::log2(err_g[0] / err_g[1]);
    const double order_h = std::log2(err_h[0] / err_h[1]);
    EXPECT_GE(order_g, 1.9) << err_g[0] << " " << err_g[1];
    EXPECT_GE(order_h, 1.9) << err_h[0] << " " << err_h[1];
}

TEST(Operators, SerialAndParallelKernelsAgreeBitwise) {
    auto g = warped_grid(41);
    const Stencils a = kernels::build_stencils_serial(*g);
    const Stencils b = kernels::build_stencils_omp(*g);
    for (int k = 0; k < g->size(); ++k) {
        EXPECT_EQ(a.at[k].nodes, b.at[k].nodes);
        EXPECT_TRUE((a.at[k].w.array() == b.at[k].w.array()).all());
    }
    const GasParams p{1.4, 1.0};
    Field f = make_field(g, make_state(Vec2::Zero(), 0.0, p), p);
    for (int k = 0; k < f.size(); ++k) f.values[k] = 0.05 * std::sin(f.xy(k).x() + 2.0 * f.xy(k).y());
    const Eigen::VectorXd ra = kernels::pde_residual_serial(f), rb = kernels::pde_residual_omp(f);
    EXPECT_TRUE((ra.array() == rb.array()).all());
}

TEST(PdeResidual, VanishesOnConstantStatesOverSubsonicDisk) {
    const GasParams p{1.4, 1.0};
    const ConstantState up = make_state(Vec2(0.4, 0.0), -0.3, p);
    for (const ConstantState& s : {make_state(Vec2(0.1, 0.2), -0.1, p), make_state(Vec2(-0.3, 0.05), 0.2, p)}) {
        const double r = 0.9 * s.sound_speed;
        Field f = make_field(std::make_shared<const MappedGrid>(disk_grid(s.velocity, r, 65)), up, p);
        f.values = sample_state(f, s);
        const Eigen::VectorXd res = pde_residual(f);
        for (int k = 0; k < f.size(); ++k)
            if (!f.grid->on_boundary(k)) EXPECT_LT(std::abs(res[k]), 1e-10);
        const Eigen::VectorXd m = ellipticity_map(f);
        EXPECT_GT(m.minCoeff(), 0.0);
    }
}

TEST(PdeResidual, InvariantUnderFrameShiftRoundTrip) {
    const GasParams p{1.4, 1.0};
    Field f = make_field(warped_grid(21), make_state(Vec2(0.2, 0.0), -0.2, p), p);
    for (int k = 0; k < f.size(); ++k) f.values[k] = 0.02 * std::cos(f.xy(k).x()) * f.xy(k).y();
    const Eigen::VectorXd r0 = pde_residual(f);
    const Field g = shifted(f, Vec2(0.37, -0.81));
    EXPECT_LT((pde_residual(g) - r0).cwiseAbs().maxCoeff(), 1e-12);
    const Field back = shifted(g, Vec2(-0.37, 0.81));
    EXPECT_LT((back.frame_shift).norm(), 1e-15);
    EXPECT_LT((pde_residual(back) - r0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ellipticity, SupersonicStateGivesNegativeMargin) {
    const GasParams p{1.4, 1.0};
    const ConstantState s = make_state(Vec2(0.0, 0.0), 0.0, p);
    Field f = make_field(std::make_shared<const MappedGrid>(disk_grid(Vec2(2.0, 0.0), 0.3, 9)), s, p);
    EXPECT_LT(ellipticity_map(f).maxCoeff(), 0.0);
}

TEST(DirectionalDerivative, ConstantOnStateDifference) {
    const GasParams p{1.4, 1.0};
    const ConstantState up = make_state(Vec2(0.5, 0.0), -0.4, p);
    const ConstantState s = make_state(Vec2(0.2, 0.3), -0.1, p);
    Field f = make_field(warped_grid(15), up, p);
    f.values = sample_state(f, s);
    const Eigen::VectorXd d = directional_derivative(f, Vec2(1.0, 0.0));
    for (int k = 0; k < f.size(); ++k) EXPECT_NEAR(d[k], -0.3, 1e-10);
}

TEST(Grid, BijectivityCheck) {
    auto g = warped_grid(9);
    EXPECT_GT(min_cell_jacobian(*g), 0.1);
    MappedGrid bad = *g;
    std::swap(bad.xy[bad.index(4, 4)], bad.xy[bad.index(5, 5)]);
    EXPECT_THROW(check_bijective(bad), GeometryError);
}

TEST(Grid, ClusteredDistributionIsMonotone) {
    const auto d = clustered_distribution(65, 1.1);
    EXPECT_DOUBLE_EQ(d.front(), 0.0);
    EXPECT_DOUBLE_EQ(d.back(), 1.0);
    for (size_t k = 1; k + 1 < d.size(); ++k) {
        EXPECT_GT(d[k + 1] - d[k], 0.0);
        EXPECT_LE(d[k] - d[k - 1], (d[k + 1] - d[k]) * (1.0 + 1e-12));
    }
    EXPECT_NEAR((d[2] - d[1]) / (d[1] - d[0]), 1.1, 1e-12);
}

TEST(FieldCsv, HeaderAndRowCount) {
    const GasParams p{1.4, 1.0};
    Field f = make_field(warped_grid(5), make_state(Vec2::Zero(), 0.0, p), p);
    std::ostringstream os;
    write_field_csv(os, f, Vec2(1.0, 0.0), Vec2(0.0, 1.0));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "T,S,xi1,xi2,phi,|Dphi|,margin,residual");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 25);
}
