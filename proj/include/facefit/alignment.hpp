/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/alignment.hpp
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
#pragma once

#ifndef FACEFIT_ALIGNMENT_HPP
#define FACEFIT_ALIGNMENT_HPP

#include "facefit/soft_raster.hpp"

#include "Eigen/Core"

namespace facefit {

/// Reference positions of the five keypoints (left eye, right eye, nose, mouth left, mouth right) in the crop.
struct AlignmentSpec
{
    Eigen::Matrix<double, 2, 5> reference;
    int crop_size = 224;

    /// The default 224 x 224 frontal template, scaled to crop_size.
    static AlignmentSpec standard(int crop_size = 224);

    /// Throws ConfigError unless crop_size is positive and every reference point lies inside the crop.
    void validate() const;
};

/**
 * q = s * R(theta) * p + t, stored as q = [a -b; b a] p + t with a = s cos(theta), b = s sin(theta).
 */
struct SimilarityTransform
{
    double a = 1.0;
    double b = 0.0;
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();

    double scale() const;
    double rotation() const;
    Eigen::Matrix2d linear() const;

    Eigen::Matrix2Xd apply(const Eigen::Matrix2Xd& points) const;
    SimilarityTransform inverse() const;
};

/**
 * Closed-form least-squares similarity mapping source points onto target points. Throws DomainError if the
 * source points are (nearly) collinear or coincident.
 */
SimilarityTransform fit_similarity(const Eigen::Matrix2Xd& source, const Eigen::Matrix2Xd& target);

/// Sum of squared distances between transform.apply(source) and target.
double similarity_residual(const SimilarityTransform& transform, const Eigen::Matrix2Xd& source,
                           const Eigen::Matrix2Xd& target);

/// Bilinear sample at continuous pixel coordinates (pixel centres at integer + 0.5); zero outside the image.
Eigen::Vector3d sample_bilinear(const RgbImage& image, double u, double v);

struct AlignedCrop
{
    RgbImage image;
    SimilarityTransform transform; ///< maps original image coordinates into the crop
    double residual = 0.0;
};

/**
 * Maps the five detected points onto the reference template with a similarity transform and resamples the image
 * into a crop_size x crop_size crop with bilinear interpolation.
 */
AlignedCrop align_crop(const RgbImage& image, const Eigen::Matrix2Xd& five_points, const AlignmentSpec& spec);

} /* namespace facefit */

#endif /* FACEFIT_ALIGNMENT_HPP */
