/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: tests/test_morphable_face.cpp
 *
 * Copyright 2026 The facefit authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "facefit/errors.hpp"
#include "facefit/fit_engine.hpp"
#include "facefit/model_store.hpp"
#include "facefit/morphable_face.hpp"
#include "facefit/random.hpp"
#include "support/test_support.hpp"

#include "doctest.h"

#include "Eigen/Geometry"

#include <cmath>
#include <numbers>

using namespace facefit;
using facefit::testing::uniform_matrix;
using facefit::testing::uniform_vector;

namespace {

double relative_error(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& expected)
{
    return (actual - expected).lpNorm<Eigen::Infinity>() / std::max(1.0, expected.lpNorm<Eigen::Infinity>());
}

// Triple loop over vertices, coordinates and basis columns.
Eigen::Matrix3Xd loop_combination(const Eigen::VectorXd& mean, const Eigen::MatrixXd& basis_a,
                                  const Eigen::VectorXd& coeff_a, const Eigen::MatrixXd& basis_b,
                                  const Eigen::VectorXd& coeff_b)
{
    const Eigen::Index v_count = mean.size() / 3;
    Eigen::Matrix3Xd out(3, v_count);
    for (Eigen::Index v = 0; v < v_count; ++v)
    {
        for (int c = 0; c < 3; ++c)
        {
            const Eigen::Index row = 3 * v + c;
            double acc = mean(row);
            for (Eigen::Index k = 0; k < basis_a.cols(); ++k)
            {
                acc += basis_a(row, k) * coeff_a(k);
            }
            for (Eigen::Index k = 0; k < basis_b.cols(); ++k)
            {
                acc += basis_b(row, k) * coeff_b(k);
            }
            out(c, v) = acc;
        }
    }
    return out;
}

// Latitude-longitude triangulation of the unit sphere with a vertex at each pole.
void uv_sphere(int rings, int segments, Eigen::Matrix3Xd& positions, Eigen::Matrix3Xi& triangles)
{
    const double pi = std::numbers::pi;
    const int v_count = 2 + (rings - 1) * segments;
    positions.resize(3, v_count);
    positions.col(0) = Eigen::Vector3d::UnitZ();
    positions.col(v_count - 1) = -Eigen::Vector3d::UnitZ();
    for (int r = 1; r < rings; ++r)
    {
        const double theta = pi * r / rings;
        for (int s = 0; s < segments; ++s)
        {
            const double phi = 2.0 * pi * s / segments;
            positions.col(1 + (r - 1) * segments + s) =
                Eigen::Vector3d(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
        }
    }
    const auto ring_vertex = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
    std::vector<Eigen::Vector3i> tris;
    for (int s = 0; s < segments; ++s)
    {
        tris.emplace_back(0, ring_vertex(1, s), ring_vertex(1, s + 1));
        tris.emplace_back(v_count - 1, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s));
        for (int r = 1; r + 1 < rings; ++r)
        {
            tris.emplace_back(ring_vertex(r, s), ring_vertex(r + 1, s), ring_vertex(r + 1, s + 1));
            tris.emplace_back(ring_vertex(r, s), ring_vertex(r + 1, s + 1), ring_vertex(r, s + 1));
        }
    }
    triangles.resize(3, static_cast<Eigen::Index>(tris.size()));
    for (std::size_t t = 0; t < tris.size(); ++t)
    {
        triangles.col(static_cast<Eigen::Index>(t)) = tris[t];
    }
}

} // namespace

TEST_CASE("zero coefficients give the mean shape and texture exactly")
{
    const FaceModel model = make_toy_model(3, 8, 4, 3, 5, 6);
    const Eigen::Matrix3Xd shape = evaluate_shape(model, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(3));
    CHECK(shape == model.mean_positions());
    const Eigen::Matrix3Xd texture = evaluate_texture(model, Eigen::VectorXd::Zero(5));
    CHECK(texture.reshaped() == model.mean_texture.reshaped());
}

TEST_CASE("one-hot coefficients add the matching basis column")
{
    const FaceModel model = make_toy_model(4, 8, 4, 3, 5, 6);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(4);
    e1(0) = 1.0;
    const Eigen::Matrix3Xd shape = evaluate_shape(model, e1, Eigen::VectorXd::Zero(3));
    CHECK(relative_error(shape.reshaped(), model.mean_shape + model.id_basis.col(0)) < 1e-15);

    Eigen::VectorXd e2 = Eigen::VectorXd::Zero(5);
    e2(1) = 1.0;
    const Eigen::VectorXd expected = (model.mean_texture + model.tex_basis.col(1)).cwiseMax(0.0).cwiseMin(1.0);
    CHECK(relative_error(evaluate_texture(model, e2).reshaped(), expected) < 1e-15);
}

TEST_CASE("evaluation matches an element-wise loop oracle")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        UniformRng rng(seed);
        const FaceModel model = make_toy_model(seed, 6 + static_cast<int>(seed % 5), 5, 4, 6, 5);
        const Eigen::VectorXd a_id = uniform_vector(rng, 5, -3.0, 3.0);
        const Eigen::VectorXd a_exp = uniform_vector(rng, 4, -3.0, 3.0);
        const Eigen::VectorXd a_tex = uniform_vector(rng, 6, -3.0, 3.0);
        CHECK(relative_error(evaluate_shape(model, a_id, a_exp),
                             loop_combination(model.mean_shape, model.id_basis, a_id, model.exp_basis, a_exp)) < 1e-12);
        const Eigen::MatrixXd no_basis(model.tex_basis.rows(), 0);
        const Eigen::Matrix3Xd tex = loop_combination(model.mean_texture, model.tex_basis, a_tex, no_basis,
                                                      Eigen::VectorXd());
        CHECK(relative_error(evaluate_texture_unclamped(model, a_tex), tex) < 1e-12);
        CHECK(relative_error(evaluate_texture(model, a_tex), tex.cwiseMax(0.0).cwiseMin(1.0)) < 1e-12);
    }
}

TEST_CASE("shape and texture are affine in the coefficients")
{
    const FaceModel model = make_toy_model(9, 10, 6, 4, 6, 5);
    for (std::uint64_t seed = 0; seed < 50; ++seed)
    {
        UniformRng rng(seed + 100);
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
        const Eigen::VectorXd id1 = uniform_vector(rng, 6, -1.0, 1.0), id2 = uniform_vector(rng, 6, -1.0, 1.0);
        const Eigen::VectorXd ex1 = uniform_vector(rng, 4, -1.0, 1.0), ex2 = uniform_vector(rng, 4, -1.0, 1.0);
        const Eigen::VectorXd tx1 = uniform_vector(rng, 6, -1.0, 1.0), tx2 = uniform_vector(rng, 6, -1.0, 1.0);

        const Eigen::Matrix3Xd s0 = evaluate_shape(model, Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(4));
        const Eigen::Matrix3Xd lhs = evaluate_shape(model, a * id1 + b * id2, a * ex1 + b * ex2);
        const Eigen::Matrix3Xd rhs =
            a * evaluate_shape(model, id1, ex1) + b * evaluate_shape(model, id2, ex2) - (a + b - 1.0) * s0;
        CHECK(relative_error(lhs, rhs) < 1e-10);

        const Eigen::Matrix3Xd t0 = evaluate_texture_unclamped(model, Eigen::VectorXd::Zero(6));
        const Eigen::Matrix3Xd tl = evaluate_texture_unclamped(model, a * tx1 + b * tx2);
        const Eigen::Matrix3Xd tr = a * evaluate_texture_unclamped(model, tx1) +
                                    b * evaluate_texture_unclamped(model, tx2) - (a + b - 1.0) * t0;
        CHECK(relative_error(tl, tr) < 1e-10);
    }
}

TEST_CASE("coefficient length mismatches are rejected")
{
    const FaceModel model = make_toy_model(1, 6, 3, 2, 4, 5);
    CHECK_THROWS_AS(evaluate_shape(model, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)), DimensionError);
    CHECK_THROWS_AS(evaluate_shape(model, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)), DimensionError);
    CHECK_THROWS_AS(evaluate_texture(model, Eigen::VectorXd::Zero(5)), DimensionError);
}

TEST_CASE("rotation matrix")
{
    CHECK(rotation_matrix(Eigen::Vector3d::Zero().eval()) == Eigen::Matrix3d::Identity());

    const Eigen::Vector3d quarter(0.0, 0.0, std::numbers::pi / 2);
    CHECK((rotation_matrix(quarter) * Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitY()).norm() < 1e-12);

    SUBCASE("composition order is z after y after x")
    {
        UniformRng rng(5);
        for (int i = 0; i < 100; ++i)
        {
            const Eigen::Vector3d ang = uniform_vector(rng, 3, -3.0, 3.0);
            const Eigen::Matrix3d expected = (Eigen::AngleAxisd(ang(2), Eigen::Vector3d::UnitZ()) *
                                              Eigen::AngleAxisd(ang(1), Eigen::Vector3d::UnitY()) *
                                              Eigen::AngleAxisd(ang(0), Eigen::Vector3d::UnitX()))
                                                 .toRotationMatrix();
            CHECK((rotation_matrix(ang) - expected).norm() < 1e-12);
        }
    }

    SUBCASE("always a proper rotation")
    {
        UniformRng rng(6);
        for (int i = 0; i < 1000; ++i)
        {
            const Eigen::Vector3d ang = uniform_vector(rng, 3, -10.0, 10.0);
            const Eigen::Matrix3d r = rotation_matrix(ang);
            CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-10);
            CHECK(std::abs(r.determinant() - 1.0) < 1e-10);
        }
    }

    SUBCASE("derivatives match central differences")
    {
        UniformRng rng(7);
        for (int i = 0; i < 50; ++i)
        {
            const Eigen::Vector3d ang = uniform_vector(rng, 3, -3.0, 3.0);
            const auto d = rotation_matrix_derivatives(ang);
            for (int k = 0; k < 3; ++k)
            {
                const double h = 1e-6;
                Eigen::Vector3d plus = ang, minus = ang;
                plus(k) += h;
                minus(k) -= h;
                const Eigen::Matrix3d fd = (rotation_matrix(plus) - rotation_matrix(minus)) / (2.0 * h);
                CHECK((d[k] - fd).norm() < 1e-8);
            }
        }
    }
}

TEST_CASE("apply_pose")
{
    UniformRng rng(11);
    const Eigen::Matrix3Xd p = uniform_matrix(rng, 3, 40, -1.0, 1.0);
    CHECK(apply_pose(p, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()) == p);

    const Eigen::Matrix3Xd shifted = apply_pose(p, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.0, 0.0, 5.0));
    CHECK(shifted.topRows(2) == p.topRows(2));
    CHECK(((shifted.row(2) - p.row(2)).array() - 5.0).abs().maxCoeff() < 1e-15);

    for (int trial = 0; trial < 20; ++trial)
    {
        const Eigen::Matrix3d r = rotation_matrix(Eigen::Vector3d(uniform_vector(rng, 3, -3.0, 3.0)));
        const Eigen::Vector3d t = uniform_vector(rng, 3, -5.0, 5.0);
        const Eigen::Matrix3Xd posed = apply_pose(p, r, t);
        double worst = 0.0;
        for (Eigen::Index v = 0; v < p.cols(); ++v)
        {
            for (int i = 0; i < 3; ++i)
            {
                double acc = t(i);
                for (int j = 0; j < 3; ++j)
                {
                    acc += r(i, j) * p(j, v);
                }
                worst = std::max(worst, std::abs(acc - posed(i, v)));
            }
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("vertex normals")
{
    SUBCASE("flat counter-clockwise square faces +z")
    {
        Eigen::Matrix3Xd p(3, 4);
        p << 0, 1, 1, 0, //
            0, 0, 1, 1,  //
            0, 0, 0, 0;
        Eigen::Matrix3Xi t(3, 2);
        t << 0, 0, 1, 2, 2, 3;
        const Eigen::Matrix3Xd n = vertex_normals(p, t);
        for (int v = 0; v < 4; ++v)
        {
            CHECK((n.col(v) - Eigen::Vector3d::UnitZ()).norm() < 1e-15);
        }
    }

    SUBCASE("sphere normals point radially")
    {
        Eigen::Matrix3Xd p;
        Eigen::Matrix3Xi t;
        uv_sphere(24, 48, p, t);
        const Eigen::Matrix3Xd n = vertex_normals(p, t);
        const double max_angle = 5.0 * std::numbers::pi / 180.0;
        for (Eigen::Index v = 0; v < p.cols(); ++v)
        {
            const double cosine = std::clamp(n.col(v).dot(p.col(v).normalized()), -1.0, 1.0);
            CHECK(std::acos(cosine) < max_angle);
        }
    }

    SUBCASE("isolated vertices get +z and everything is unit length")
    {
        UniformRng rng(12);
        for (int trial = 0; trial < 20; ++trial)
        {
            const Eigen::Matrix3Xd p = uniform_matrix(rng, 3, 12, -1.0, 1.0);
            Eigen::Matrix3Xi t(3, 6);
            for (int c = 0; c < 6; ++c)
            {
                t.col(c) << c, c + 1, c + 2; // vertices 8 to 11 are isolated
            }
            const Eigen::Matrix3Xd n = vertex_normals(p, t);
            for (Eigen::Index v = 0; v < n.cols(); ++v)
            {
                CHECK(std::abs(n.col(v).norm() - 1.0) < 1e-6);
            }
            for (int v = 8; v < 12; ++v)
            {
                CHECK(n.col(v) == Eigen::Vector3d::UnitZ());
            }
        }
    }
}

TEST_CASE("projection")
{
    const Camera camera{100.0, 224, 224};
    Eigen::Matrix3Xd p(3, 2);
    p << 0.0, 1.0, 0.0, 0.0, 10.0, 10.0;
    const Eigen::Matrix3Xd q = project(p, camera);
    CHECK((q.col(0) - Eigen::Vector3d(112.0, 112.0, 10.0)).norm() < 1e-12);
    CHECK((q.col(1) - Eigen::Vector3d(122.0, 112.0, 10.0)).norm() < 1e-12);

    UniformRng rng(13);
    Eigen::Matrix3Xd points = uniform_matrix(rng, 3, 100, -2.0, 2.0);
    points.row(2).array() += 8.0;
    const Camera wide{250.0, 160, 120};
    const Camera doubled{500.0, 160, 120};
    const Eigen::Matrix3Xd a = project(points, wide);
    const Eigen::Matrix3Xd b = project(points, doubled);
    for (Eigen::Index i = 0; i < points.cols(); ++i)
    {
        const double x = points(0, i), y = points(1, i), z = points(2, i);
        CHECK(std::abs(a(0, i) - (250.0 * x / z + 80.0)) < 1e-12);
        CHECK(std::abs(a(1, i) - (60.0 - 250.0 * y / z)) < 1e-12);
        CHECK(a(2, i) == z);
        CHECK(std::abs((b(0, i) - 80.0) - 2.0 * (a(0, i) - 80.0)) < 1e-10);
    }

    Eigen::Matrix3Xd behind = points;
    behind(2, 17) = 0.0;
    CHECK_THROWS_AS(project(behind, wide), DomainError);
    behind(2, 17) = -1.0;
    CHECK_THROWS_AS(project(behind, wide), DomainError);
}

TEST_CASE("landmark gather")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed)
    {
        FaceModel model = make_toy_model(seed, 10, 3, 2, 3, 5 + static_cast<int>(seed));
        UniformRng rng(seed);
        const Eigen::Matrix3Xd projected = uniform_matrix(rng, 3, model.vertex_count(), 0.0, 64.0);
        const Eigen::Matrix2Xd lm = landmark_positions(model, projected);
        REQUIRE(lm.cols() == model.landmark_count());
        for (int k = 0; k < model.landmark_count(); ++k)
        {
            CHECK(lm.col(k) == projected.col(model.landmark_indices(k)).head<2>());
        }

        FaceModel reversed = model;
        reversed.landmark_indices = model.landmark_indices.reverse().eval();
        const Eigen::Matrix2Xd lr = landmark_positions(reversed, projected);
        CHECK(lr == lm.rowwise().reverse().eval());
    }

    FaceModel single = make_toy_model(2, 6, 2, 2, 2, 1);
    single.landmark_indices(0) = 0;
    const Eigen::Matrix3Xd projected = Eigen::Matrix3Xd::Random(3, single.vertex_count());
    CHECK(landmark_positions(single, projected).col(0) == projected.col(0).head<2>());
}

TEST_CASE("keypoint maps")
{
    const FaceModel model68 = make_toy_model(1, 16, 2, 2, 2, 68);
    const KeypointMap five = KeypointMap::five_point(model68);
    REQUIRE(five.size() == 5);
    const auto& lm = model68.landmark_indices;
    CHECK(five.groups[0] == std::vector<int>{lm(36), lm(39)});
    CHECK(five.groups[1] == std::vector<int>{lm(42), lm(45)});
    CHECK(five.groups[2] == std::vector<int>{lm(30)});
    CHECK(five.groups[3] == std::vector<int>{lm(48)});
    CHECK(five.groups[4] == std::vector<int>{lm(54)});

    const FaceModel model7 = make_toy_model(1, 8, 2, 2, 2, 7);
    const KeypointMap first = KeypointMap::five_point(model7);
    for (int k = 0; k < 5; ++k)
    {
        CHECK(first.groups[k] == std::vector<int>{model7.landmark_indices(k)});
    }
    CHECK_THROWS_AS(KeypointMap::five_point(make_toy_model(1, 8, 2, 2, 2, 4)), DimensionError);

    SUBCASE("apply averages each group and the backward pass is its transpose")
    {
        UniformRng rng(3);
        const Eigen::Matrix3Xd projected = uniform_matrix(rng, 3, model68.vertex_count(), 0.0, 50.0);
        const Eigen::Matrix2Xd kp = five.apply(projected);
        CHECK((kp.col(0) - 0.5 * (projected.col(lm(36)) + projected.col(lm(39))).head<2>()).norm() < 1e-12);
        CHECK(kp.col(2) == projected.col(lm(30)).head<2>());

        const Eigen::Matrix2Xd w = uniform_matrix(rng, 2, 5, -1.0, 1.0);
        const Eigen::Matrix3Xd dp = uniform_matrix(rng, 3, model68.vertex_count(), -1.0, 1.0);
        Eigen::Matrix3Xd grad = Eigen::Matrix3Xd::Zero(3, model68.vertex_count());
        five.accumulate_backward(w, grad);
        // <w, J dp> = <J^T w, dp> for the linear map J.
        CHECK(std::abs((w.array() * five.apply(dp).array()).sum() - (grad.array() * dp.array()).sum()) < 1e-12);
        CHECK(grad.row(2).isZero());
    }
}

TEST_CASE("flat parameter layout")
{
    const ParamDims dims{4, 3, 5};
    CHECK(dims.total() == 4 + 3 + 5 + 27 + 6);
    CHECK(ParamDims{80, 64, 80}.total() == 257);

    Eigen::VectorXd flat(dims.total());
    for (Eigen::Index i = 0; i < flat.size(); ++i)
    {
        flat(i) = static_cast<double>(i);
    }
    const FaceParams p = FaceParams::unflatten(flat, dims);
    CHECK(p.alpha_id(0) == 0.0);
    CHECK(p.alpha_exp(0) == 4.0);
    CHECK(p.alpha_tex(0) == 7.0);
    CHECK(p.gamma(0) == 12.0);
    CHECK(p.gamma(26) == 38.0);
    CHECK(p.angles == Eigen::Vector3d(39.0, 40.0, 41.0));
    CHECK(p.translation == Eigen::Vector3d(42.0, 43.0, 44.0));
    CHECK(p.flatten() == flat);
    CHECK(p.dims() == dims);
    CHECK_THROWS_AS(FaceParams::unflatten(Eigen::VectorXd::Zero(dims.total() - 1), dims), DimensionError);

    const FaceParams init = FaceParams::initial(dims);
    CHECK(init.translation == Eigen::Vector3d(0.0, 0.0, 10.0));
    CHECK(init.flatten().head(dims.translation_offset() + 2).isZero());
    CHECK(init.all_finite());
    FaceParams bad = init;
    bad.gamma(3) = std::nan("");
    CHECK_FALSE(bad.all_finite());
}

TEST_CASE("geometry backward passes match central differences")
{
    UniformRng rng(21);
    Eigen::Matrix3Xd p;
    Eigen::Matrix3Xi t;
    uv_sphere(5, 7, p, t);
    p += 0.1 * uniform_matrix(rng, 3, p.cols(), -1.0, 1.0);
    p.row(2).array() += 6.0;
    const Eigen::Index n = p.size();
    const Camera camera{80.0, 64, 48};

    const auto check_gradient = [&](const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x, const Eigen::VectorXd& analytic) {
        const Eigen::VectorXd numeric = finite_difference_gradient(f, x, 1e-6);
        for (Eigen::Index i = 0; i < x.size(); ++i)
        {
            CHECK(std::abs(analytic(i) - numeric(i)) <= std::max(1e-6 * std::abs(numeric(i)), 1e-6));
        }
    };

    SUBCASE("apply_pose")
    {
        const Eigen::Vector3d angles = uniform_vector(rng, 3, -1.0, 1.0);
        const Eigen::Vector3d translation = uniform_vector(rng, 3, -1.0, 1.0);
        const Eigen::Matrix3Xd w = uniform_matrix(rng, 3, p.cols(), -1.0, 1.0);
        const backward::PoseGradient g = backward::apply_pose(p, angles, w);
        Eigen::VectorXd x(n + 6);
        x << p.reshaped(), angles, translation;
        Eigen::VectorXd analytic(n + 6);
        analytic << g.positions.reshaped(), g.angles, g.translation;
        check_gradient(
            [&](const Eigen::VectorXd& v) {
                const Eigen::Matrix3Xd pos = v.head(n).reshaped(3, p.cols());
                const Eigen::Vector3d a = v.segment<3>(n), tr = v.tail<3>();
                return (w.array() * apply_pose(pos, rotation_matrix(a), tr).array()).sum();
            },
            x, analytic);
    }

    SUBCASE("vertex_normals")
    {
        const Eigen::Matrix3Xd w = uniform_matrix(rng, 3, p.cols(), -1.0, 1.0);
        Eigen::Matrix3Xd grad = Eigen::Matrix3Xd::Zero(3, p.cols());
        backward::vertex_normals(p, t, w, grad);
        check_gradient(
            [&](const Eigen::VectorXd& v) {
                return (w.array() * vertex_normals(v.reshaped(3, p.cols()), t).array()).sum();
            },
            p.reshaped(), grad.reshaped());
    }

    SUBCASE("project")
    {
        const Eigen::Matrix3Xd w = uniform_matrix(rng, 3, p.cols(), -1.0, 1.0);
        Eigen::Matrix3Xd grad = Eigen::Matrix3Xd::Zero(3, p.cols());
        backward::project(p, camera, w, grad);
        check_gradient(
            [&](const Eigen::VectorXd& v) {
                return (w.array() * project(v.reshaped(3, p.cols()), camera).array()).sum();
            },
            p.reshaped(), grad.reshaped());
    }
}
