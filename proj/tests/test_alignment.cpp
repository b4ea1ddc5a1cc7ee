/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: tests/test_alignment.cpp
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
#include "facefit/alignment.hpp"
#include "facefit/errors.hpp"
#include "facefit/random.hpp"
#include "support/test_support.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>

using namespace facefit;
using facefit::testing::uniform_matrix;

namespace {

struct SimilarityGuess
{
    double scale, angle, tx, ty;
};

double guess_residual(const SimilarityGuess& g, const Eigen::Matrix2Xd& source, const Eigen::Matrix2Xd& target)
{
    const double c = g.scale * std::cos(g.angle), s = g.scale * std::sin(g.angle);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < source.cols(); ++i)
    {
        const double x = c * source(0, i) - s * source(1, i) + g.tx - target(0, i);
        const double y = s * source(0, i) + c * source(1, i) + g.ty - target(1, i);
        sum += x * x + y * y;
    }
    return sum;
}

// Coarse grid over scale and angle, then compass search over all four parameters.
SimilarityGuess brute_force_similarity(const Eigen::Matrix2Xd& source, const Eigen::Matrix2Xd& target)
{
    SimilarityGuess best{1.0, 0.0, 0.0, 0.0};
    double best_value = std::numeric_limits<double>::infinity();
    const Eigen::Vector2d ct = target.rowwise().mean();
    for (double log_s = -2.0; log_s <= 2.0; log_s += 0.05)
    {
        for (double angle = -std::numbers::pi; angle < std::numbers::pi; angle += 0.02)
        {
            SimilarityGuess g{std::exp(log_s), angle, 0.0, 0.0};
            // Centroid matching for the translation of each grid cell.
            const double c = g.scale * std::cos(angle), s = g.scale * std::sin(angle);
            const Eigen::Vector2d cs = source.rowwise().mean();
            g.tx = ct.x() - (c * cs.x() - s * cs.y());
            g.ty = ct.y() - (s * cs.x() + c * cs.y());
            const double value = guess_residual(g, source, target);
            if (value < best_value)
            {
                best_value = value;
                best = g;
            }
        }
    }
    double step[4] = {0.05, 0.02, 1.0, 1.0};
    for (int round = 0; round < 20000 && step[0] > 1e-13; ++round)
    {
        bool improved = false;
        for (int k = 0; k < 4; ++k)
        {
            for (const double sign : {1.0, -1.0})
            {
                SimilarityGuess g = best;
                double* field[4] = {&g.scale, &g.angle, &g.tx, &g.ty};
                *field[k] += sign * step[k];
                const double value = guess_residual(g, source, target);
                if (value < best_value)
                {
                    best_value = value;
                    best = g;
                    improved = true;
                }
            }
        }
        if (!improved)
        {
            for (double& s : step)
            {
                s *= 0.5;
            }
        }
    }
    return best;
}

RgbImage linear_image(int w, int h)
{
    RgbImage image = RgbImage::filled(w, h, Eigen::Vector3d::Zero());
    for (int y = 0; y < h; ++y)
    {
        for (int x = 0; x < w; ++x)
        {
            const double u = x + 0.5, v = y + 0.5;
            image.pixels.row(image.index(x, y)) << 0.002 * u, 0.003 * v, 0.001 * (u + v);
        }
    }
    return image;
}

} // namespace

TEST_CASE("standard template")
{
    const AlignmentSpec spec = AlignmentSpec::standard();
    CHECK(spec.crop_size == 224);
    CHECK(spec.reference.col(0) == Eigen::Vector2d(74, 112));
    CHECK(spec.reference.col(4) == Eigen::Vector2d(136, 170));
    const AlignmentSpec half = AlignmentSpec::standard(112);
    CHECK(half.reference == spec.reference * 0.5);
    CHECK_NOTHROW(spec.validate());

    AlignmentSpec bad = spec;
    bad.reference(0, 2) = 300.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = spec;
    bad.crop_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("points already on the template give the identity")
{
    const AlignmentSpec spec = AlignmentSpec::standard();
    const SimilarityTransform t = fit_similarity(spec.reference, spec.reference);
    CHECK(std::abs(t.a - 1.0) < 1e-12);
    CHECK(std::abs(t.b) < 1e-12);
    CHECK(t.translation.norm() < 1e-9);
    CHECK(similarity_residual(t, spec.reference, spec.reference) < 1e-18);

    const RgbImage image = linear_image(224, 224);
    const AlignedCrop crop = align_crop(image, spec.reference, spec);
    CHECK(crop.residual < 1e-18);
    CHECK((crop.image.pixels - image.pixels).abs().maxCoeff() < 1e-9);
}

TEST_CASE("a template scaled by two about the crop centre is undone by a factor one half")
{
    const AlignmentSpec spec = AlignmentSpec::standard();
    const Eigen::Vector2d centre(112.0, 112.0);
    const Eigen::Matrix2Xd detected = ((spec.reference.colwise() - centre) * 2.0).colwise() + centre;
    const SimilarityTransform t = fit_similarity(detected, spec.reference);
    CHECK(std::abs(t.scale() - 0.5) < 1e-9);
    CHECK(std::abs(t.rotation()) < 1e-9);
    CHECK((t.translation - 0.5 * centre).norm() < 1e-9);
}

TEST_CASE("closed-form similarity matches a brute-force search")
{
    const AlignmentSpec spec = AlignmentSpec::standard();
    UniformRng rng(3);
    for (int trial = 0; trial < 8; ++trial)
    {
        const Eigen::Matrix2Xd detected = uniform_matrix(rng, 2, 5, 20.0, 400.0);
        const SimilarityTransform t = fit_similarity(detected, spec.reference);
        const double closed = similarity_residual(t, detected, spec.reference);
        const SimilarityGuess g = brute_force_similarity(detected, spec.reference);
        const double searched = guess_residual(g, detected, spec.reference);
        CHECK(closed <= searched + 1e-9 * (1.0 + searched));
        CHECK(std::abs(closed - searched) <= 1e-6 * (1.0 + searched));
        CHECK(std::abs(t.scale() - g.scale) < 1e-5);
        double angle_error = std::remainder(t.rotation() - g.angle, 2.0 * std::numbers::pi);
        CHECK(std::abs(angle_error) < 1e-5);
    }
}

TEST_CASE("exact similarities are recovered")
{
    UniformRng rng(4);
    for (int trial = 0; trial < 50; ++trial)
    {
        const Eigen::Matrix2Xd source = uniform_matrix(rng, 2, 5, 0.0, 200.0);
        SimilarityTransform truth;
        const double s = rng.uniform(0.2, 4.0), angle = rng.uniform(-3.0, 3.0);
        truth.a = s * std::cos(angle);
        truth.b = s * std::sin(angle);
        truth.translation = Eigen::Vector2d(rng.uniform(-50, 50), rng.uniform(-50, 50));
        const SimilarityTransform t = fit_similarity(source, truth.apply(source));
        CHECK(std::abs(t.a - truth.a) < 1e-9);
        CHECK(std::abs(t.b - truth.b) < 1e-9);
        CHECK((t.translation - truth.translation).norm() < 1e-7);
    }
}

TEST_CASE("the inverse maps the template back onto the detected points")
{
    const AlignmentSpec spec = AlignmentSpec::standard();
    UniformRng rng(5);
    for (int trial = 0; trial < 20; ++trial)
    {
        const Eigen::Matrix2Xd detected = uniform_matrix(rng, 2, 5, 0.0, 640.0);
        const AlignedCrop crop = align_crop(linear_image(32, 32), detected, spec);
        const SimilarityTransform back = crop.transform.inverse();
        const double mapped_error = (back.apply(spec.reference) - detected).squaredNorm();
        const double s = crop.transform.scale();
        CHECK(std::abs(mapped_error - crop.residual / (s * s)) <= 1e-9 * (1.0 + mapped_error));
        const Eigen::Matrix2Xd roundtrip = back.apply(crop.transform.apply(detected));
        CHECK((roundtrip - detected).lpNorm<Eigen::Infinity>() < 1e-9);
    }
}

TEST_CASE("degenerate point sets are rejected")
{
    Eigen::Matrix2Xd collinear(2, 5);
    collinear << 0, 1, 2, 3, 4, 0, 2, 4, 6, 8;
    const AlignmentSpec spec = AlignmentSpec::standard();
    CHECK_THROWS_AS(fit_similarity(collinear, spec.reference), DomainError);
    CHECK_THROWS_AS(align_crop(linear_image(8, 8), collinear, spec), DomainError);
    const Eigen::Matrix2Xd same = Eigen::Matrix2Xd::Constant(2, 5, 3.0);
    CHECK_THROWS_AS(fit_similarity(same, spec.reference), DomainError);
    Eigen::Matrix2Xd nan_points = spec.reference;
    nan_points(1, 3) = std::nan("");
    CHECK_THROWS_AS(fit_similarity(nan_points, spec.reference), DomainError);
    CHECK_THROWS_AS(align_crop(linear_image(8, 8), spec.reference.leftCols(4), spec), DimensionError);
}

TEST_CASE("crops resample with bilinear interpolation")
{
    const RgbImage image = linear_image(300, 300);
    const AlignmentSpec spec = AlignmentSpec::standard(64);
    Eigen::Matrix2Xd detected = spec.reference * 1.7;
    detected.row(0).array() += 30.0;
    detected.row(1).array() += 12.0;
    const AlignedCrop crop = align_crop(image, detected, spec);
    const SimilarityTransform back = crop.transform.inverse();
    for (int y = 0; y < 64; ++y)
    {
        for (int x = 0; x < 64; ++x)
        {
            Eigen::Matrix2Xd p(2, 1);
            p << x + 0.5, y + 0.5;
            const Eigen::Vector2d src = back.apply(p);
            const Eigen::Array3d expected(0.002 * src.x(), 0.003 * src.y(), 0.001 * (src.x() + src.y()));
            CHECK((crop.image.pixels.row(crop.image.index(x, y)).transpose() - expected).abs().maxCoeff() < 1e-12);
        }
    }
    // Outside the source image the crop is black.
    CHECK(sample_bilinear(image, -5.0, 10.0).isZero(0.0));
    CHECK((sample_bilinear(image, 10.5, 20.5) - Eigen::Vector3d(0.021, 0.0615, 0.031)).norm() < 1e-15);
}
