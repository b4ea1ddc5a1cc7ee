/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/objective.cpp
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
#include "facefit/objective.hpp"
#include "facefit/errors.hpp"
#include "facefit/illumination.hpp"

namespace facefit {

namespace {

void require_same_size(const RgbImage& observed, const RgbImage& rendered, const Eigen::ArrayXd& mask)
{
    require_dimension(observed.width == rendered.width && observed.height == rendered.height,
                      "observed and rendered images differ in size");
    require_dimension(mask.size() == observed.pixel_count(), "mask size does not match the image");
}

// Squared norm of the SH coefficients excluding the constant term of each channel.
double lighting_energy(const ShCoefficients& gamma)
{
    return gamma.reshaped(sh_basis_count, 3).bottomRows(sh_basis_count - 1).squaredNorm();
}

} // namespace

std::vector<int> Observation::out_of_bounds_landmarks() const
{
    std::vector<int> flagged;
    for (Eigen::Index k = 0; k < landmarks.cols(); ++k)
    {
        const double u = landmarks(0, k), v = landmarks(1, k);
        if (!(u >= 0.0 && u <= image.width && v >= 0.0 && v <= image.height))
        {
            flagged.push_back(static_cast<int>(k));
        }
    }
    return flagged;
}

void LossWeights::validate() const
{
    const double all[] = {photometric, landmark, reg_id, reg_exp, reg_tex, reg_gamma};
    bool any_positive = false;
    for (const double w : all)
    {
        if (!(w >= 0.0) || !std::isfinite(w))
        {
            throw ConfigError("loss weights must be finite and non-negative");
        }
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive)
    {
        throw ConfigError("at least one loss weight must be positive");
    }
}

PhotometricLoss photometric_loss(const RgbImage& observed, const RgbImage& rendered, const Eigen::ArrayXd& mask)
{
    require_same_size(observed, rendered, mask);
    const double mask_sum = mask.sum();
    if (!(mask_sum > 0.0))
    {
        return {0.0, true};
    }
    const Eigen::ArrayXd squared = (observed.pixels - rendered.pixels).square().rowwise().sum();
    return {(mask * squared).sum() / (3.0 * mask_sum), false};
}

PhotometricLoss photometric_loss(const RgbImage& observed, const RenderOutput& rendered)
{
    RgbImage image;
    image.width = rendered.width;
    image.height = rendered.height;
    image.pixels = rendered.rgb;
    return photometric_loss(observed, image, rendered.mask);
}

double landmark_loss(const Eigen::Matrix2Xd& observed, const Eigen::Matrix2Xd& predicted)
{
    require_dimension(observed.cols() == predicted.cols(), "observed and predicted landmark counts differ");
    if (observed.cols() == 0)
    {
        return 0.0;
    }
    return (observed - predicted).squaredNorm() / static_cast<double>(observed.cols());
}

double coefficient_regularizer(const FaceParams& params, const LossWeights& weights)
{
    return weights.reg_id * params.alpha_id.squaredNorm() + weights.reg_exp * params.alpha_exp.squaredNorm() +
           weights.reg_tex * params.alpha_tex.squaredNorm() + weights.reg_gamma * lighting_energy(params.gamma);
}

LossBreakdown total_loss(const Observation& observed, const RenderOutput& rendered,
                         const Eigen::Matrix2Xd& predicted_landmarks, const FaceParams& params,
                         const LossWeights& weights)
{
    const RgbImage stitched = composite(rendered, observed.image);
    const PhotometricLoss photometric = photometric_loss(observed.image, stitched, rendered.mask);
    LossBreakdown loss;
    loss.photometric = photometric.value;
    loss.empty_mask = photometric.empty_mask;
    loss.landmark = landmark_loss(observed.landmarks, predicted_landmarks);
    loss.regularizer = coefficient_regularizer(params, weights);
    loss.weighted_photometric = weights.photometric * loss.photometric;
    loss.weighted_landmark = weights.landmark * loss.landmark;
    loss.total = loss.weighted_photometric + loss.weighted_landmark + loss.regularizer;
    return loss;
}

namespace backward {

PhotometricGradient photometric_loss(const RgbImage& observed, const RgbImage& rendered, const Eigen::ArrayXd& mask)
{
    require_same_size(observed, rendered, mask);
    PhotometricGradient grad;
    const double mask_sum = mask.sum();
    if (!(mask_sum > 0.0))
    {
        grad.rendered = RgbPixels::Zero(rendered.pixels.rows(), 3);
        grad.mask = Eigen::ArrayXd::Zero(mask.size());
        return grad;
    }
    const RgbPixels diff = rendered.pixels - observed.pixels;
    const Eigen::ArrayXd squared = diff.square().rowwise().sum();
    const double value = (mask * squared).sum() / (3.0 * mask_sum);
    grad.rendered = diff.colwise() * (mask * (2.0 / (3.0 * mask_sum)));
    grad.mask = (squared - 3.0 * value) / (3.0 * mask_sum);
    return grad;
}

Eigen::Matrix2Xd landmark_loss(const Eigen::Matrix2Xd& observed, const Eigen::Matrix2Xd& predicted)
{
    require_dimension(observed.cols() == predicted.cols(), "observed and predicted landmark counts differ");
    if (observed.cols() == 0)
    {
        return Eigen::Matrix2Xd(2, 0);
    }
    return 2.0 * (predicted - observed) / static_cast<double>(observed.cols());
}

Eigen::VectorXd coefficient_regularizer(const FaceParams& params, const LossWeights& weights)
{
    FaceParams grad = FaceParams::zero(params.dims());
    grad.alpha_id = 2.0 * weights.reg_id * params.alpha_id;
    grad.alpha_exp = 2.0 * weights.reg_exp * params.alpha_exp;
    grad.alpha_tex = 2.0 * weights.reg_tex * params.alpha_tex;
    grad.gamma = 2.0 * weights.reg_gamma * params.gamma;
    grad.gamma(0) = grad.gamma(9) = grad.gamma(18) = 0.0;
    return grad.flatten();
}

} // namespace backward

} /* namespace facefit */
