/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/objective.hpp
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

#ifndef FACEFIT_OBJECTIVE_HPP
#define FACEFIT_OBJECTIVE_HPP

#include "facefit/morphable_face.hpp"
#include "facefit/soft_raster.hpp"

#include "Eigen/Core"

#include <string>
#include <vector>

namespace facefit {

/// What the fit is compared against: the aligned photo and its detected 2D keypoints in pixel coordinates.
struct Observation
{
    RgbImage image;
    Eigen::Matrix2Xd landmarks;
    std::string landmark_source = "file";

    /// Indices of landmarks outside the image rectangle. They are kept as they are.
    std::vector<int> out_of_bounds_landmarks() const;
};

/// Weights of the loss terms. The regularizer weights apply per coefficient block.
struct LossWeights
{
    double photometric = 1.0;
    double landmark = 1.6e-3;
    double reg_id = 1e-4;
    double reg_exp = 1e-4;
    double reg_tex = 1e-4;
    double reg_gamma = 1e-4;

    /// Throws ConfigError if a weight is negative or all are zero.
    void validate() const;
};

/// Photometric loss value with a flag for an empty mask (in which case the value is 0).
struct PhotometricLoss
{
    double value = 0.0;
    bool empty_mask = false;
};

/**
 * Mask-weighted mean squared colour error:
 * sum_i mask_i |observed_i - rendered_i|^2 / (3 sum_i mask_i), with the squared norm over the three channels.
 */
PhotometricLoss photometric_loss(const RgbImage& observed, const RgbImage& rendered, const Eigen::ArrayXd& mask);

/// Convenience overload comparing against render.rgb under render.mask.
PhotometricLoss photometric_loss(const RgbImage& observed, const RenderOutput& rendered);

/// Mean squared landmark distance (1/L) sum_j (du_j^2 + dv_j^2), in pixels squared. Zero for no landmarks.
double landmark_loss(const Eigen::Matrix2Xd& observed, const Eigen::Matrix2Xd& predicted);

/**
 * sum over blocks of w_block |alpha_block|^2 for identity, expression and texture, plus w_gamma times the
 * squared non-constant SH coefficients of every channel.
 */
double coefficient_regularizer(const FaceParams& params, const LossWeights& weights);

/// Raw and weighted loss terms.
struct LossBreakdown
{
    double photometric = 0.0;
    double landmark = 0.0;
    double regularizer = 0.0;
    double weighted_photometric = 0.0;
    double weighted_landmark = 0.0;
    double total = 0.0;
    bool empty_mask = false;
};

/**
 * L = w_p L_p + w_l L_l + regularizer. The photometric term compares the observation against
 * composite(rendered, observation image) under the rendered mask.
 */
LossBreakdown total_loss(const Observation& observed, const RenderOutput& rendered,
                         const Eigen::Matrix2Xd& predicted_landmarks, const FaceParams& params,
                         const LossWeights& weights);

namespace backward {

struct PhotometricGradient
{
    RgbPixels rendered;
    Eigen::ArrayXd mask;
};

/// Gradient of photometric_loss(observed, rendered, mask) with respect to rendered and mask.
PhotometricGradient photometric_loss(const RgbImage& observed, const RgbImage& rendered, const Eigen::ArrayXd& mask);

/// Gradient of landmark_loss with respect to the predicted landmarks.
Eigen::Matrix2Xd landmark_loss(const Eigen::Matrix2Xd& observed, const Eigen::Matrix2Xd& predicted);

/// Gradient of coefficient_regularizer in the flat parameter layout.
Eigen::VectorXd coefficient_regularizer(const FaceParams& params, const LossWeights& weights);

} // namespace backward

} /* namespace facefit */

#endif /* FACEFIT_OBJECTIVE_HPP */
