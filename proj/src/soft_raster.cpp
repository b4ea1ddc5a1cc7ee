/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/soft_raster.cpp
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
#include "facefit/soft_raster.hpp"
#include "facefit/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace facefit {

namespace {

// Screen-space triangles with |signed area| below this (in NDC units squared) are skipped.
constexpr double min_ndc_area = 1e-14;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

// Pixel / NDC conversions; pixel (x, y) has its centre at (x + 0.5, y + 0.5).
struct Viewport
{
    int width;
    int height;

    double ndc_x(double u) const { return 2.0 * u / width - 1.0; }
    double ndc_y(double v) const { return 2.0 * v / height - 1.0; }
    Eigen::Vector2d pixel_centre(int x, int y) const { return {ndc_x(x + 0.5), ndc_y(y + 0.5)}; }

    // Pixel range whose centres fall inside [lo, hi] in NDC, clamped to the image.
    std::pair<int, int> columns(double lo, double hi) const { return range(lo, hi, width); }
    std::pair<int, int> rows(double lo, double hi) const { return range(lo, hi, height); }

private:
    static std::pair<int, int> range(double lo, double hi, int size)
    {
        const double first = std::ceil((lo + 1.0) * 0.5 * size - 0.5);
        const double last = std::floor((hi + 1.0) * 0.5 * size - 0.5);
        return {static_cast<int>(std::max(first, 0.0)), static_cast<int>(std::min(last, size - 1.0))};
    }
};

struct TriangleSetup
{
    std::array<int, 3> vertex{};
    std::array<Eigen::Vector2d, 3> q;
    std::array<double, 3> depth_score{}; // z_near / z
    double area = 0.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

// Everything the forward and backward passes need about one (pixel, triangle) pair.
struct Fragment
{
    std::array<double, 3> bary{};    // raw screen-space barycentrics
    std::array<double, 3> clipped{}; // clipped and renormalized
    double clipped_sum = 0.0;
    bool inside = false;
    double dist2 = 0.0;
    int edge = 0;
    double edge_t = 0.0;
    Eigen::Vector2d edge_residual = Eigen::Vector2d::Zero();
    double log_coverage = 0.0;            // log D
    double log_complement = 0.0;          // log(1 - D)
    double coverage = 0.0;                // D
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double depth_score = 0.0;
    double skin = 0.0;
    double logit = 0.0;                   // zbar / gamma + log D
};

class SoftRasterizer
{
public:
    SoftRasterizer(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                   const Eigen::VectorXd* skin_weights, const Eigen::Matrix3Xi& triangles, const RenderConfig& config)
        : projected(projected), colors(colors), skin_weights(skin_weights), triangles(triangles), config(config),
          viewport{config.width, config.height}
    {
        config.validate();
        require_dimension(colors.cols() == projected.cols(), "colour and vertex counts differ");
        if (skin_weights)
        {
            require_dimension(skin_weights->size() == projected.cols(), "skin weight and vertex counts differ");
        }
        for (Eigen::Index i = 0; i < projected.cols(); ++i)
        {
            if (!(projected(2, i) > 0.0))
            {
                throw DomainError("rasterizer input vertex " + std::to_string(i) + " has non-positive depth");
            }
        }
        for (Eigen::Index t = 0; t < triangles.cols(); ++t)
        {
            for (int k = 0; k < 3; ++k)
            {
                require_dimension(triangles(k, t) >= 0 && triangles(k, t) < projected.cols(),
                                  "triangle index out of range");
            }
        }
    }

    // Returns false for screen-degenerate triangles, which never contribute.
    bool setup(Eigen::Index t, double margin, TriangleSetup& tri) const
    {
        for (int k = 0; k < 3; ++k)
        {
            const int v = triangles(k, t);
            tri.vertex[k] = v;
            tri.q[k] = {viewport.ndc_x(projected(0, v)), viewport.ndc_y(projected(1, v))};
            tri.depth_score[k] = config.z_near / projected(2, v);
        }
        tri.area = cross2(tri.q[1] - tri.q[0], tri.q[2] - tri.q[0]);
        if (!(std::abs(tri.area) >= min_ndc_area))
        {
            return false;
        }
        const double x_lo = std::min({tri.q[0].x(), tri.q[1].x(), tri.q[2].x()}) - margin;
        const double x_hi = std::max({tri.q[0].x(), tri.q[1].x(), tri.q[2].x()}) + margin;
        const double y_lo = std::min({tri.q[0].y(), tri.q[1].y(), tri.q[2].y()}) - margin;
        const double y_hi = std::max({tri.q[0].y(), tri.q[1].y(), tri.q[2].y()}) + margin;
        std::tie(tri.x0, tri.x1) = viewport.columns(x_lo, x_hi);
        std::tie(tri.y0, tri.y1) = viewport.rows(y_lo, y_hi);
        return tri.x0 <= tri.x1 && tri.y0 <= tri.y1;
    }

    double margin() const { return config.cutoff * std::sqrt(config.sigma); }
    double cutoff_dist2() const { return config.cutoff * config.cutoff * config.sigma; }

    static void barycentrics(const TriangleSetup& tri, const Eigen::Vector2d& p, std::array<double, 3>& bary)
    {
        const Eigen::Vector2d a = tri.q[0] - p, b = tri.q[1] - p, c = tri.q[2] - p;
        bary[0] = cross2(b, c) / tri.area;
        bary[1] = cross2(c, a) / tri.area;
        bary[2] = cross2(a, b) / tri.area;
    }

    // Returns false if the pixel lies outside the triangle and farther than the cutoff distance from it;
    // such fragments do not contribute at all.
    bool evaluate(const TriangleSetup& tri, const Eigen::Vector2d& p, Fragment& frag) const
    {
        barycentrics(tri, p, frag.bary);
        frag.inside = frag.bary[0] >= 0.0 && frag.bary[1] >= 0.0 && frag.bary[2] >= 0.0;

        frag.dist2 = std::numeric_limits<double>::infinity();
        for (int e = 0; e < 3; ++e)
        {
            const Eigen::Vector2d& a = tri.q[e];
            const Eigen::Vector2d& b = tri.q[(e + 1) % 3];
            const Eigen::Vector2d ab = b - a;
            const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            const Eigen::Vector2d r = p - a - t * ab;
            const double d2 = r.squaredNorm();
            if (d2 < frag.dist2)
            {
                frag.dist2 = d2;
                frag.edge = e;
                frag.edge_t = t;
                frag.edge_residual = r;
            }
        }
        if (!frag.inside && frag.dist2 > cutoff_dist2())
        {
            return false;
        }
        const double x = (frag.inside ? 1.0 : -1.0) * frag.dist2 / config.sigma;
        frag.log_coverage = -softplus(-x);
        frag.log_complement = -softplus(x);
        frag.coverage = std::exp(frag.log_coverage);

        frag.clipped_sum = 0.0;
        for (int k = 0; k < 3; ++k)
        {
            frag.clipped[k] = std::max(frag.bary[k], 0.0);
            frag.clipped_sum += frag.clipped[k];
        }
        frag.color.setZero();
        frag.depth_score = 0.0;
        frag.skin = 0.0;
        for (int k = 0; k < 3; ++k)
        {
            frag.clipped[k] /= frag.clipped_sum;
            frag.color += frag.clipped[k] * colors.col(tri.vertex[k]);
            frag.depth_score += frag.clipped[k] * tri.depth_score[k];
            if (skin_weights)
            {
                frag.skin += frag.clipped[k] * (*skin_weights)(tri.vertex[k]);
            }
        }
        frag.logit = frag.depth_score / config.gamma_agg + frag.log_coverage;
        return true;
    }

    Eigen::Vector3d background(Eigen::Index pixel) const
    {
        return config.background_image ? Eigen::Vector3d(config.background_image->pixels.row(pixel).transpose())
                                       : config.background;
    }

    RenderOutput forward(RasterCache* cache) const
    {
        const int width = config.width, height = config.height;
        const Eigen::Index pixels = static_cast<Eigen::Index>(width) * height;
        const double background_logit = config.far_score / config.gamma_agg;

        Eigen::ArrayXd max_logit = Eigen::ArrayXd::Constant(pixels, background_logit);
        Eigen::ArrayXd partition = Eigen::ArrayXd::Ones(pixels);
        Eigen::ArrayXd skin_sum = Eigen::ArrayXd::Zero(pixels);
        Eigen::ArrayXd log_transmittance = Eigen::ArrayXd::Zero(pixels);
        RgbPixels color_sum(pixels, 3);
        for (Eigen::Index i = 0; i < pixels; ++i)
        {
            color_sum.row(i) = background(i).transpose();
        }

        const double grow = margin();
        TriangleSetup tri;
        Fragment frag;
        for (Eigen::Index t = 0; t < triangles.cols(); ++t)
        {
            if (!setup(t, grow, tri))
            {
                continue;
            }
            for (int y = tri.y0; y <= tri.y1; ++y)
            {
                for (int x = tri.x0; x <= tri.x1; ++x)
                {
                    const Eigen::Index i = static_cast<Eigen::Index>(y) * width + x;
                    if (!evaluate(tri, viewport.pixel_centre(x, y), frag))
                    {
                        continue;
                    }
                    // Online log-sum-exp: rescale the accumulators whenever the running maximum grows.
                    if (frag.logit > max_logit(i))
                    {
                        const double scale = std::exp(max_logit(i) - frag.logit);
                        partition(i) *= scale;
                        color_sum.row(i) *= scale;
                        skin_sum(i) *= scale;
                        max_logit(i) = frag.logit;
                    }
                    const double weight = std::exp(frag.logit - max_logit(i));
                    partition(i) += weight;
                    color_sum.row(i) += weight * frag.color.transpose().array();
                    skin_sum(i) += weight * frag.skin;
                    log_transmittance(i) += frag.log_complement;
                }
            }
        }

        RenderOutput out;
        out.width = width;
        out.height = height;
        out.rgb = color_sum.colwise() / partition;
        const Eigen::ArrayXd skin = skin_sum / partition;
        out.alpha = -log_transmittance.unaryExpr([](double s) { return std::expm1(s); });
        out.mask = out.alpha * skin;
        if (cache)
        {
            cache->max_logit = std::move(max_logit);
            cache->partition = std::move(partition);
            cache->log_transmittance = std::move(log_transmittance);
            cache->skin = skin;
        }
        return out;
    }

    backward::RasterGradient backward(const RenderOutput& output, const RasterCache& cache, const RgbPixels& rgb_grad,
                                      const Eigen::ArrayXd& alpha_grad, const Eigen::ArrayXd& mask_grad) const
    {
        const int width = config.width;
        const Eigen::Index pixels = static_cast<Eigen::Index>(width) * config.height;
        require_dimension(rgb_grad.rows() == pixels && alpha_grad.size() == pixels && mask_grad.size() == pixels,
                          "raster cotangent sizes do not match the image");

        // mask = alpha * skin  =>  split the mask cotangent onto alpha and the aggregated skin weight.
        const Eigen::ArrayXd skin_grad = mask_grad * output.alpha;
        const Eigen::ArrayXd total_alpha_grad = alpha_grad + mask_grad * cache.skin;
        const Eigen::ArrayXd transmittance = cache.log_transmittance.exp();
        Eigen::ArrayXd expected(pixels);
        for (Eigen::Index i = 0; i < pixels; ++i)
        {
            expected(i) = (rgb_grad.row(i) * output.rgb.row(i)).sum() + skin_grad(i) * cache.skin(i);
        }

        backward::RasterGradient grad;
        grad.projected = Eigen::Matrix3Xd::Zero(3, projected.cols());
        grad.colors = Eigen::Matrix3Xd::Zero(3, projected.cols());

        const double grow = margin();
        const double to_u = 2.0 / config.width;
        const double to_v = 2.0 / config.height;
        TriangleSetup tri;
        Fragment frag;
        for (Eigen::Index t = 0; t < triangles.cols(); ++t)
        {
            if (!setup(t, grow, tri))
            {
                continue;
            }
            std::array<Eigen::Vector2d, 3> q_grad{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(),
                                                  Eigen::Vector2d::Zero()};
            std::array<double, 3> depth_score_grad{};
            std::array<Eigen::Vector3d, 3> color_grad{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(),
                                                      Eigen::Vector3d::Zero()};
            for (int y = tri.y0; y <= tri.y1; ++y)
            {
                for (int x = tri.x0; x <= tri.x1; ++x)
                {
                    const Eigen::Index i = static_cast<Eigen::Index>(y) * width + x;
                    const Eigen::Vector2d p = viewport.pixel_centre(x, y);
                    if (!evaluate(tri, p, frag))
                    {
                        continue;
                    }

                    const double weight = std::exp(frag.logit - cache.max_logit(i)) / cache.partition(i);
                    const Eigen::Vector3d pixel_rgb_grad = rgb_grad.row(i).transpose();
                    const double value = pixel_rgb_grad.dot(frag.color) + skin_grad(i) * frag.skin;
                    const double logit_grad = weight * (value - expected(i));
                    const Eigen::Vector3d frag_color_grad = weight * pixel_rgb_grad;
                    const double frag_skin_grad = weight * skin_grad(i);
                    const double frag_depth_grad = logit_grad / config.gamma_agg;

                    // d logD / dx = 1 - D and d alpha / dx = T * D, with x the signed scaled distance.
                    const double x_grad = logit_grad * std::exp(frag.log_complement) +
                                          total_alpha_grad(i) * transmittance(i) * frag.coverage;
                    const double dist2_grad = (frag.inside ? 1.0 : -1.0) * x_grad / config.sigma;
                    const int e0 = frag.edge, e1 = (frag.edge + 1) % 3;
                    q_grad[e0] += -2.0 * (1.0 - frag.edge_t) * dist2_grad * frag.edge_residual;
                    q_grad[e1] += -2.0 * frag.edge_t * dist2_grad * frag.edge_residual;

                    std::array<double, 3> clipped_grad{};
                    double clipped_dot = 0.0;
                    for (int k = 0; k < 3; ++k)
                    {
                        const int v = tri.vertex[k];
                        const double vertex_skin = skin_weights ? (*skin_weights)(v) : 0.0;
                        clipped_grad[k] = frag_color_grad.dot(colors.col(v)) +
                                          frag_depth_grad * tri.depth_score[k] + frag_skin_grad * vertex_skin;
                        clipped_dot += clipped_grad[k] * frag.clipped[k];
                        color_grad[k] += frag.clipped[k] * frag_color_grad;
                        depth_score_grad[k] += frag.clipped[k] * frag_depth_grad;
                    }
                    std::array<double, 3> bary_grad{};
                    double bary_dot = 0.0;
                    for (int k = 0; k < 3; ++k)
                    {
                        bary_grad[k] =
                            frag.bary[k] > 0.0 ? (clipped_grad[k] - clipped_dot) / frag.clipped_sum : 0.0;
                        bary_dot += bary_grad[k] * frag.bary[k];
                    }
                    // bary_k = n_k / A with A = n_0 + n_1 + n_2.
                    std::array<double, 3> numer_grad{};
                    for (int k = 0; k < 3; ++k)
                    {
                        numer_grad[k] = (bary_grad[k] - bary_dot) / tri.area;
                    }
                    const Eigen::Vector2d a = tri.q[0] - p, b = tri.q[1] - p, c = tri.q[2] - p;
                    // n_0 = cross(b, c), n_1 = cross(c, a), n_2 = cross(a, b).
                    const auto d_first = [](const Eigen::Vector2d& second) {
                        return Eigen::Vector2d(second.y(), -second.x());
                    };
                    const auto d_second = [](const Eigen::Vector2d& first) {
                        return Eigen::Vector2d(-first.y(), first.x());
                    };
                    q_grad[1] += numer_grad[0] * d_first(c) + numer_grad[2] * d_second(a);
                    q_grad[2] += numer_grad[0] * d_second(b) + numer_grad[1] * d_first(a);
                    q_grad[0] += numer_grad[1] * d_second(c) + numer_grad[2] * d_first(b);
                }
            }
            for (int k = 0; k < 3; ++k)
            {
                const int v = tri.vertex[k];
                const double z = projected(2, v);
                grad.projected(0, v) += q_grad[k].x() * to_u;
                grad.projected(1, v) += q_grad[k].y() * to_v;
                grad.projected(2, v) -= depth_score_grad[k] * config.z_near / (z * z);
                grad.colors.col(v) += color_grad[k];
            }
        }
        return grad;
    }

    PixelWeights weights_at(int x, int y) const
    {
        const Eigen::Vector2d p = viewport.pixel_centre(x, y);
        std::vector<std::pair<int, double>> logits;
        TriangleSetup tri;
        Fragment frag;
        for (Eigen::Index t = 0; t < triangles.cols(); ++t)
        {
            if (setup(t, margin(), tri) && x >= tri.x0 && x <= tri.x1 && y >= tri.y0 && y <= tri.y1 &&
                evaluate(tri, p, frag))
            {
                logits.emplace_back(static_cast<int>(t), frag.logit);
            }
        }
        const double background_logit = config.far_score / config.gamma_agg;
        double top = background_logit;
        for (const auto& [t, logit] : logits)
        {
            top = std::max(top, logit);
        }
        double partition = std::exp(background_logit - top);
        for (const auto& [t, logit] : logits)
        {
            partition += std::exp(logit - top);
        }
        PixelWeights result;
        result.background = std::exp(background_logit - top) / partition;
        for (const auto& [t, logit] : logits)
        {
            result.triangles.push_back({t, std::exp(logit - top) / partition});
        }
        return result;
    }

    RenderOutput hard() const
    {
        const int width = config.width, height = config.height;
        const Eigen::Index pixels = static_cast<Eigen::Index>(width) * height;
        RenderOutput out;
        out.width = width;
        out.height = height;
        out.rgb.resize(pixels, 3);
        for (Eigen::Index i = 0; i < pixels; ++i)
        {
            out.rgb.row(i) = background(i).transpose();
        }
        out.alpha = Eigen::ArrayXd::Zero(pixels);
        out.mask = Eigen::ArrayXd::Zero(pixels);
        Eigen::ArrayXd depth_buffer = Eigen::ArrayXd::Constant(pixels, config.far_score);

        TriangleSetup tri;
        std::array<double, 3> bary{};
        for (Eigen::Index t = 0; t < triangles.cols(); ++t)
        {
            if (!setup(t, 0.0, tri))
            {
                continue;
            }
            for (int y = tri.y0; y <= tri.y1; ++y)
            {
                for (int x = tri.x0; x <= tri.x1; ++x)
                {
                    barycentrics(tri, viewport.pixel_centre(x, y), bary);
                    if (bary[0] < 0.0 || bary[1] < 0.0 || bary[2] < 0.0)
                    {
                        continue;
                    }
                    const Eigen::Index i = static_cast<Eigen::Index>(y) * width + x;
                    double depth_score = 0.0;
                    Eigen::Vector3d color = Eigen::Vector3d::Zero();
                    double skin = skin_weights ? 0.0 : 1.0;
                    for (int k = 0; k < 3; ++k)
                    {
                        depth_score += bary[k] * tri.depth_score[k];
                        color += bary[k] * colors.col(tri.vertex[k]);
                        if (skin_weights)
                        {
                            skin += bary[k] * (*skin_weights)(tri.vertex[k]);
                        }
                    }
                    if (depth_score > depth_buffer(i))
                    {
                        depth_buffer(i) = depth_score;
                        out.rgb.row(i) = color.transpose();
                        out.alpha(i) = 1.0;
                        out.mask(i) = skin;
                    }
                }
            }
        }
        return out;
    }

private:
    const Eigen::Matrix3Xd& projected;
    const Eigen::Matrix3Xd& colors;
    const Eigen::VectorXd* skin_weights;
    const Eigen::Matrix3Xi& triangles;
    const RenderConfig& config;
    Viewport viewport;
};

} // namespace

RgbImage RgbImage::filled(int width, int height, const Eigen::Vector3d& color)
{
    RgbImage image;
    image.width = width;
    image.height = height;
    image.pixels = color.transpose().array().replicate(static_cast<Eigen::Index>(width) * height, 1);
    return image;
}

void RenderConfig::validate() const
{
    if (width <= 0 || height <= 0)
    {
        throw ConfigError("render size must be positive");
    }
    if (!(sigma > 0.0) || !(gamma_agg > 0.0))
    {
        throw ConfigError("sigma and gamma_agg must be positive");
    }
    if (!(z_near > 0.0) || !(cutoff > 0.0) || !std::isfinite(far_score))
    {
        throw ConfigError("z_near and cutoff must be positive and far_score finite");
    }
    if (background_image && (background_image->width != width || background_image->height != height))
    {
        throw ConfigError("background image size does not match the render size");
    }
}

RenderOutput rasterize_soft(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                            const Eigen::VectorXd& skin_weights, const Eigen::Matrix3Xi& triangles,
                            const RenderConfig& config, RasterCache* cache)
{
    return SoftRasterizer(projected, colors, &skin_weights, triangles, config).forward(cache);
}

RenderOutput rasterize_hard(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                            const Eigen::Matrix3Xi& triangles, const RenderConfig& config)
{
    return SoftRasterizer(projected, colors, nullptr, triangles, config).hard();
}

RenderOutput rasterize_hard(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                            const Eigen::VectorXd& skin_weights, const Eigen::Matrix3Xi& triangles,
                            const RenderConfig& config)
{
    return SoftRasterizer(projected, colors, &skin_weights, triangles, config).hard();
}

RgbImage composite(const RenderOutput& render, const RgbImage& source)
{
    require_dimension(render.width == source.width && render.height == source.height,
                      "render and source image sizes differ");
    RgbImage out;
    out.width = source.width;
    out.height = source.height;
    out.pixels = render.rgb.colwise() * render.alpha + source.pixels.colwise() * (1.0 - render.alpha);
    return out;
}

PixelWeights aggregation_weights(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xi& triangles,
                                 const RenderConfig& config, int x, int y)
{
    const Eigen::Matrix3Xd colors = Eigen::Matrix3Xd::Zero(3, projected.cols());
    return SoftRasterizer(projected, colors, nullptr, triangles, config).weights_at(x, y);
}

namespace backward {

RasterGradient rasterize_soft(const Eigen::Matrix3Xd& projected, const Eigen::Matrix3Xd& colors,
                              const Eigen::VectorXd& skin_weights, const Eigen::Matrix3Xi& triangles,
                              const RenderConfig& config, const RenderOutput& output, const RasterCache& cache,
                              const RgbPixels& rgb_grad, const Eigen::ArrayXd& alpha_grad,
                              const Eigen::ArrayXd& mask_grad)
{
    return SoftRasterizer(projected, colors, &skin_weights, triangles, config)
        .backward(output, cache, rgb_grad, alpha_grad, mask_grad);
}

CompositeGradient composite(const RenderOutput& render, const RgbImage& source, const RgbPixels& out_grad)
{
    require_dimension(render.width == source.width && render.height == source.height,
                      "render and source image sizes differ");
    CompositeGradient grad;
    grad.rgb = out_grad.colwise() * render.alpha;
    grad.alpha = (out_grad * (render.rgb - source.pixels)).rowwise().sum();
    return grad;
}

} // namespace backward

} /* namespace facefit */
