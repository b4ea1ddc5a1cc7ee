/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/alignment.cpp
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

#include "Eigen/Eigenvalues"

#include <cmath>

namespace facefit {

namespace {

// Smallest over largest spread of the centred source points below which they count as collinear.
constexpr double collinear_ratio = 1e-8;

} // namespace

AlignmentSpec AlignmentSpec::standard(int crop_size)
{
    AlignmentSpec spec;
    spec.reference << 74.0, 150.0, 112.0, 88.0, 136.0, //
        112.0, 112.0, 140.0, 170.0, 170.0;
    spec.reference *= crop_size / 224.0;
    spec.crop_size = crop_size;
    return spec;
}

void AlignmentSpec::validate() const
{
    if (crop_size < 1)
    {
        throw ConfigError("crop size must be positive");
    }
    if (!reference.allFinite() || (reference.array() < 0.0).any() || (reference.array() > crop_size).any())
    {
        throw ConfigError("alignment template points must lie inside the crop");
    }
}

double SimilarityTransform::scale() const { return std::hypot(a, b); }

double SimilarityTransform::rotation() const { return std::atan2(b, a); }

Eigen::Matrix2d SimilarityTransform::linear() const
{
    Eigen::Matrix2d m;
    m << a, -b, b, a;
    return m;
}

Eigen::Matrix2Xd SimilarityTransform::apply(const Eigen::Matrix2Xd& points) const
{
    return (linear() * points).colwise() + translation;
}

SimilarityTransform SimilarityTransform::inverse() const
{
    const double s2 = a * a + b * b;
    SimilarityTransform inv;
    inv.a = a / s2;
    inv.b = -b / s2;
    inv.translation = -(inv.linear() * translation);
    return inv;
}

SimilarityTransform fit_similarity(const Eigen::Matrix2Xd& source, const Eigen::Matrix2Xd& target)
{
    require_dimension(source.cols() == target.cols(), "source and target point counts differ");
    require_dimension(source.cols() >= 2, "a similarity fit needs at least two points");
    if (!source.allFinite() || !target.allFinite())
    {
        throw DomainError("alignment points must be finite");
    }
    const Eigen::Vector2d source_mean = source.rowwise().mean();
    const Eigen::Vector2d target_mean = target.rowwise().mean();
    const Eigen::Matrix2Xd p = source.colwise() - source_mean;
    const Eigen::Matrix2Xd q = target.colwise() - target_mean;

    const Eigen::Matrix2d spread = p * p.transpose();
    const Eigen::Vector2d eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(spread).eigenvalues();
    if (!(eig(1) > 0.0) || eig(0) <= collinear_ratio * eig(1))
    {
        throw DomainError("alignment points are collinear");
    }

    const double norm = p.squaredNorm();
    SimilarityTransform transform;
    transform.a = (p.array() * q.array()).sum() / norm;
    transform.b = (p.row(0).array() * q.row(1).array() - p.row(1).array() * q.row(0).array()).sum() / norm;
    transform.translation = target_mean - transform.linear() * source_mean;
    return transform;
}

double similarity_residual(const SimilarityTransform& transform, const Eigen::Matrix2Xd& source,
                           const Eigen::Matrix2Xd& target)
{
    return (transform.apply(source) - target).squaredNorm();
}

Eigen::Vector3d sample_bilinear(const RgbImage& image, double u, double v)
{
    const double x = u - 0.5, y = v - 0.5;
    const double fx = std::floor(x), fy = std::floor(y);
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    const double tx = x - fx, ty = y - fy;
    Eigen::Vector3d result = Eigen::Vector3d::Zero();
    const auto tap = [&](int px, int py, double w) {
        if (w != 0.0 && px >= 0 && py >= 0 && px < image.width && py < image.height)
        {
            result += w * image.pixels.row(image.index(px, py)).matrix().transpose();
        }
    };
    tap(x0, y0, (1.0 - tx) * (1.0 - ty));
    tap(x0 + 1, y0, tx * (1.0 - ty));
    tap(x0, y0 + 1, (1.0 - tx) * ty);
    tap(x0 + 1, y0 + 1, tx * ty);
    return result;
}

AlignedCrop align_crop(const RgbImage& image, const Eigen::Matrix2Xd& five_points, const AlignmentSpec& spec)
{
    spec.validate();
    require_dimension(five_points.cols() == 5, "alignment needs exactly five points");
    AlignedCrop crop;
    crop.transform = fit_similarity(five_points, spec.reference);
    crop.residual = similarity_residual(crop.transform, five_points, spec.reference);
    const SimilarityTransform back = crop.transform.inverse();
    const Eigen::Matrix2d back_linear = back.linear();

    crop.image = RgbImage::filled(spec.crop_size, spec.crop_size, Eigen::Vector3d::Zero());
    for (int y = 0; y < spec.crop_size; ++y)
    {
        for (int x = 0; x < spec.crop_size; ++x)
        {
            const Eigen::Vector2d source = back_linear * Eigen::Vector2d(x + 0.5, y + 0.5) + back.translation;
            crop.image.pixels.row(crop.image.index(x, y)) = sample_bilinear(image, source.x(), source.y()).transpose().array();
        }
    }
    return crop;
}

} /* namespace facefit */
