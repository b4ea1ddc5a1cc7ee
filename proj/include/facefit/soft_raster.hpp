/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/soft_raster.hpp
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

#ifndef FACEFIT_SOFT_RASTER_HPP
#define FACEFIT_SOFT_RASTER_HPP

#include "Eigen/Core"

#include <memory>
#include <vector>

namespace facefit {

/// Pixels in row-major order (index y * width + x), one RGB triple per row.
using RgbPixels = Eigen::Array<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Real-valued RGB image with values nominally in [0, 1].
struct RgbImage
{
    int width = 0;
    int height = 0;
    RgbPixels pixels;

    static RgbImage filled(int width, int height, const Eigen::Vector3d& color);

    int pixel_count() const { return width * height; }
    Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }

    bool operator==(const RgbImage& other) const
    {
        return width == other.width && height == other.height && (pixels == other.pixels).all();
    }
};

/**
 * Soft rasterizer settings. Silhouette softness sigma and the aggregation temperature gamma_agg are in
 * normalized device coordinates, where the image spans [-1, 1] along each axis.
 */
struct RenderConfig
{
    int width = 224;
    int height = 224;
    double sigma = 1e-4;
    double gamma_agg = 1e-4;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    /// If set, used per pixel in place of the constant background colour.
    std::shared_ptr<const RgbImage> background_image;
    /// Normalized-depth score of the background (the far plane).
    double far_score = 1e-3;
    /// Depth mapping z -> z_near / z into (0, 1].
    double z_near = 1.0;
    /// A triangle contributes nothing to pixels outside it and farther than cutoff * sqrt(sigma) from its edges.
    double cutoff = 6.0;

    static RenderConfig for_size(int width, int height)
    {
        RenderConfig config;
        config.width = width;
        config.height = height;
        return config;
    }

    /// Throws ConfigError on invalid values.
    void validate() const;
};

/// Rendered face: colour, coverage and the photometric-loss mask (coverage times interpolated skin weight).
struct RenderOutput
{
    int width = 0;
    int height = 0;
    RgbPixels rgb;
    Eigen::ArrayXd alpha;
    Eigen::ArrayXd mask;
};

/// Per-pixel aggregation state kept by the forward pass for the backward pass.
struct RasterCache
{
    Eigen::ArrayXd max_logit;
    Eigen::ArrayXd partition;
    Eigen::ArrayXd log_transmittance; ///< sum_j log(1 - D_j)
    Eigen::ArrayXd skin;              ///< aggregated skin weight before multiplication with alpha
};

/**
 * Differentiable soft rasterization.
 *
 * projected holds one (u, v, depth) column per vertex in pixel coordinates. For pixel i and triangle j the
 * coverage is D_ij = sigmoid(+-d^2 / sigma), with d the distance from the pixel centre to the nearest
 * triangle edge and the sign positive inside. Colours, skin weights and the normalized inverse depth
 * z_near / z are interpolated with clipped screen-space barycentrics. The pixel colour is a softmax over
 * triangles with weights D_ij exp(zbar_ij / gamma_agg), plus the background with score far_score.
 * alpha = 1 - prod_j (1 - D_ij); mask = alpha * (softmax-aggregated skin weight).
 *
 * Triangles are visited in index order, so the result is deterministic. Throws DomainError if any depth is
 * not positive and ConfigError for an invalid config.
 */
RenderOutput rasterize_soft(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                            const Eigen::VectorXd& skin_weights, const Eigen::Matrix3Xi& triangles,
                            const RenderConfig& config, RasterCache* cache = nullptr);

/**
 * Classic z-buffered rasterization with point-in-triangle tests at pixel centres and screen-space
 * barycentric interpolation. alpha is 0 or 1; the nearest surface is the one with the largest
 * interpolated z_near / z. Without skin weights the mask equals alpha.
 */
RenderOutput rasterize_hard(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                            const Eigen::Matrix3Xi& triangles, const RenderConfig& config);
RenderOutput rasterize_hard(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                            const Eigen::VectorXd& skin_weights, const Eigen::Matrix3Xi& triangles,
                            const RenderConfig& config);

/// out = alpha * rgb + (1 - alpha) * source.
RgbImage composite(const RenderOutput& render, const RgbImage& source);

/// Softmax weight of one triangle at a pixel.
struct TriangleWeight
{
    int triangle = 0;
    double weight = 0.0;
};

/// All aggregation weights at one pixel; together with the background weight they sum to one.
struct PixelWeights
{
    std::vector<TriangleWeight> triangles;
    double background = 0.0;
};

PixelWeights aggregation_weights(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xi& triangles,
                                 const RenderConfig& config, int x, int y);

namespace backward {

struct RasterGradient
{
    Eigen::Matrix3Xd projected; ///< d/d(u, v, depth)
    Eigen::Matrix3Xd colors;
};

/**
 * Vector-Jacobian product of rasterize_soft. output and cache must come from the forward call with the
 * same inputs.
 */
RasterGradient rasterize_soft(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                              const Eigen::VectorXd& skin_weights, const Eigen::Matrix3Xi& triangles,
                              const RenderConfig& config, const RenderOutput& output, const RasterCache& cache,
                              const RgbPixels& rgb_grad, const Eigen::ArrayXd& alpha_grad,
                              const Eigen::ArrayXd& mask_grad);

struct CompositeGradient
{
    RgbPixels rgb;
    Eigen::ArrayXd alpha;
};

CompositeGradient composite(const RenderOutput& render, const RgbImage& source, const RgbPixels& out_grad);

} // namespace backward

} /* namespace facefit */

#endif /* FACEFIT_SOFT_RASTER_HPP */
