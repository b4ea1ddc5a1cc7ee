/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/fit_engine.hpp
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

#ifndef FACEFIT_FIT_ENGINE_HPP
#define FACEFIT_FIT_ENGINE_HPP

#include "facefit/morphable_face.hpp"
#include "facefit/objective.hpp"
#include "facefit/soft_raster.hpp"

#include "Eigen/Core"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace facefit {

/**
 * Everything produced by one forward evaluation of the face pipeline:
 * shape -> texture -> pose -> normals -> shading -> projection -> soft rasterization.
 */
struct FaceRender
{
    Eigen::Matrix3Xd shape;       ///< model space
    Eigen::Matrix3Xd texture_raw; ///< unclamped albedo
    Eigen::Matrix3Xd albedo;      ///< clamped albedo
    SurfaceMesh mesh;             ///< camera space
    Eigen::Matrix3Xd projected;
    RenderOutput render;
    RasterCache cache;
};

FaceRender render_face(const FaceModel& model, const FaceParams& params, const Camera& camera,
                       const RenderConfig& config);

/**
 * Gradient, in the flat parameter layout, of <rgb_grad, rgb> + <alpha_grad, alpha> + <mask_grad, mask> +
 * <projected_grad, projected> for the render produced by render_face with the same arguments.
 * projected_grad may be empty (no direct cotangent on the projected vertices).
 */
Eigen::VectorXd render_face_backward(const FaceModel& model, const FaceParams& params, const Camera& camera,
                                     const RenderConfig& config, const FaceRender& forward,
                                     const RgbPixels& rgb_grad, const Eigen::ArrayXd& alpha_grad,
                                     const Eigen::ArrayXd& mask_grad, const Eigen::Matrix3Xd& projected_grad);

/// Adam optimizer state; one first and second moment per parameter.
struct AdamState
{
    long step = 0;
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double learning_rate = 1e-2;

    static AdamState create(Eigen::Index parameter_count, double learning_rate);

    bool operator==(const AdamState& other) const;
};

/// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient);

enum class InitMode { zero, provided };

struct FitConfig
{
    int max_iterations = 500;
    double learning_rate = 1e-2;
    LossWeights weights;
    int convergence_window = 20;
    double tolerance = 1e-7;
    /// Defaults to Camera::for_image of the observed image.
    std::optional<Camera> camera;
    /// Width and height are taken from the observed image.
    RenderConfig render;
    InitMode init = InitMode::zero;
    std::optional<FaceParams> initial_params;
    /// The first fraction of the iterations runs with the photometric weight set to zero.
    double landmark_stage_fraction = 0.25;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Which model keypoints the observed landmarks correspond to. Chosen from the landmark count if empty.
    std::optional<KeypointMap> keypoints;

    void validate() const;
};

/**
 * Keypoint map for an observation with the given number of landmarks: the model's own landmarks if the
 * count matches, the five alignment points if there are five. Throws DimensionError otherwise.
 */
KeypointMap choose_keypoints(const FaceModel& model, Eigen::Index landmark_count);

struct LossAndGradient
{
    LossBreakdown loss;
    Eigen::VectorXd gradient; ///< flat parameter layout
};

/**
 * Total loss of the full pipeline and its exact reverse-mode gradient with respect to every parameter,
 * using config.weights. Throws DomainError if the face is not in front of the camera.
 */
LossAndGradient loss_and_gradient(const FaceModel& model, const FaceParams& params, const Observation& observation,
                                  const FitConfig& config);

/// Forward loss only.
LossBreakdown evaluate_loss(const FaceModel& model, const FaceParams& params, const Observation& observation,
                            const FitConfig& config);

/// Central differences of an arbitrary scalar function.
Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& function,
                                           const Eigen::VectorXd& x, double step);

/// Central differences of the total loss, parameter by parameter.
Eigen::VectorXd finite_difference_gradient(const FaceModel& model, const FaceParams& params,
                                           const Observation& observation, const FitConfig& config, double step);

enum class Termination { converged, max_iterations, domain_error };

std::string to_string(Termination reason);

struct TraceEntry
{
    int iteration = 0;
    int stage = 0; ///< 0 for the landmark-only stage, 1 for the full objective
    LossBreakdown loss;
    double landmark_rmse = 0.0;
};

struct FitReport
{
    FaceParams params; ///< lowest-loss parameters of the final stage
    std::vector<TraceEntry> trace;
    int best_iteration = -1;
    LossBreakdown final_loss;
    double landmark_rmse = 0.0;
    int iterations = 0;
    double duration_seconds = 0.0;
    Termination termination = Termination::max_iterations;
    std::string message;

    // Settings the fit ran with, for the report.
    FitConfig config;
    Camera camera;
};

/**
 * Per-image fitting: Adam on loss_and_gradient from the initialization until the relative change of the total
 * loss over the convergence window drops below the tolerance or max_iterations is reached. Convergence is only
 * tested in the final (full objective) stage. Returns the best parameters of the final stage.
 */
FitReport fit(const FaceModel& model, const Observation& observation, const FitConfig& config);

/// JSON document with the loss trace, the parameters and the fit settings. Timing is only written on request.
std::string fit_report_to_json(const FitReport& report, bool include_timing = false);

/// Reads the parts of a report written by fit_report_to_json back (parameters, trace, summary values).
FitReport fit_report_from_json(const std::string& json, const ParamDims& dims);

/// MFP1 parameter file: magic "MFP1", uint32 count, then count float32 values in the flat layout.
void save_params(const FaceParams& params, const std::filesystem::path& path);
FaceParams load_params(const std::filesystem::path& path, const ParamDims& dims);
std::string encode_params(const Eigen::VectorXd& flat);
Eigen::VectorXd decode_params(std::string_view bytes);

} /* namespace facefit */

#endif /* FACEFIT_FIT_ENGINE_HPP */
