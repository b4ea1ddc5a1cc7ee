/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/fit_engine.cpp
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
#include "facefit/fit_engine.hpp"
#include "facefit/errors.hpp"
#include "facefit/illumination.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace facefit {

namespace {

using nlohmann::json;

struct Problem
{
    const FaceModel& model;
    const Observation& observation;
    Camera camera;
    RenderConfig render;
    KeypointMap keypoints;
};

Problem make_problem(const FaceModel& model, const Observation& observation, const FitConfig& config)
{
    config.validate();
    require_dimension(observation.image.pixel_count() > 0, "observation image is empty");
    require_dimension(observation.image.pixels.rows() == observation.image.pixel_count(),
                      "observation image pixel buffer does not match its size");
    Camera camera = config.camera.value_or(Camera::for_image(observation.image.width, observation.image.height));
    camera.width = observation.image.width;
    camera.height = observation.image.height;
    RenderConfig render = config.render;
    render.width = observation.image.width;
    render.height = observation.image.height;
    render.validate();
    KeypointMap keypoints =
        config.keypoints ? *config.keypoints : choose_keypoints(model, observation.landmarks.cols());
    require_dimension(keypoints.size() == observation.landmarks.cols(),
                      "keypoint map and observed landmark counts differ");
    return {model, observation, camera, render, std::move(keypoints)};
}

void require_params(const Problem& problem, const FaceParams& params)
{
    require_dimension(params.dims() == ParamDims::of(problem.model), "parameter block sizes do not match the model");
}

struct Evaluation
{
    FaceRender face;
    RgbImage stitched;
    Eigen::Matrix2Xd keypoints;
    LossBreakdown loss;
};

Evaluation evaluate(const Problem& problem, const FaceParams& params, const LossWeights& weights)
{
    require_params(problem, params);
    Evaluation eval;
    eval.face = render_face(problem.model, params, problem.camera, problem.render);
    eval.keypoints = problem.keypoints.apply(eval.face.projected);
    eval.stitched = composite(eval.face.render, problem.observation.image);
    const PhotometricLoss photometric =
        photometric_loss(problem.observation.image, eval.stitched, eval.face.render.mask);
    LossBreakdown& loss = eval.loss;
    loss.photometric = photometric.value;
    loss.empty_mask = photometric.empty_mask;
    loss.landmark = landmark_loss(problem.observation.landmarks, eval.keypoints);
    loss.regularizer = coefficient_regularizer(params, weights);
    loss.weighted_photometric = weights.photometric * loss.photometric;
    loss.weighted_landmark = weights.landmark * loss.landmark;
    loss.total = loss.weighted_photometric + loss.weighted_landmark + loss.regularizer;
    return eval;
}

Eigen::VectorXd gradient(const Problem& problem, const FaceParams& params, const LossWeights& weights,
                         const Evaluation& eval)
{
    const int n = problem.render.width * problem.render.height;
    RgbPixels rgb_grad = RgbPixels::Zero(n, 3);
    Eigen::ArrayXd alpha_grad = Eigen::ArrayXd::Zero(n);
    Eigen::ArrayXd mask_grad = Eigen::ArrayXd::Zero(n);
    if (weights.photometric != 0.0 && !eval.loss.empty_mask)
    {
        const backward::PhotometricGradient photometric =
            backward::photometric_loss(problem.observation.image, eval.stitched, eval.face.render.mask);
        const backward::CompositeGradient stitched = backward::composite(
            eval.face.render, problem.observation.image, weights.photometric * photometric.rendered);
        rgb_grad = stitched.rgb;
        alpha_grad = stitched.alpha;
        mask_grad = weights.photometric * photometric.mask;
    }
    Eigen::Matrix3Xd projected_grad = Eigen::Matrix3Xd::Zero(3, eval.face.projected.cols());
    if (weights.landmark != 0.0)
    {
        const Eigen::Matrix2Xd keypoint_grad =
            weights.landmark * backward::landmark_loss(problem.observation.landmarks, eval.keypoints);
        problem.keypoints.accumulate_backward(keypoint_grad, projected_grad);
    }
    Eigen::VectorXd grad = render_face_backward(problem.model, params, problem.camera, problem.render, eval.face,
                                                rgb_grad, alpha_grad, mask_grad, projected_grad);
    grad += backward::coefficient_regularizer(params, weights);
    return grad;
}

LossWeights landmark_stage_weights(const LossWeights& weights)
{
    LossWeights stage = weights;
    stage.photometric = 0.0;
    return stage;
}

// Little-endian byte helpers for the parameter file.
void put_u32(std::string& out, std::uint32_t value)
{
    for (int b = 0; b < 4; ++b)
    {
        out.push_back(static_cast<char>((value >> (8 * b)) & 0xffu));
    }
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset)
{
    std::uint32_t value = 0;
    for (int b = 0; b < 4; ++b)
    {
        value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
    }
    return value;
}

constexpr char params_magic[4] = {'M', 'F', 'P', '1'};

json loss_to_json(const LossBreakdown& loss)
{
    return {{"total", loss.total},
            {"photometric", loss.photometric},
            {"landmark", loss.landmark},
            {"regularizer", loss.regularizer},
            {"weighted_photometric", loss.weighted_photometric},
            {"weighted_landmark", loss.weighted_landmark},
            {"empty_mask", loss.empty_mask}};
}

LossBreakdown loss_from_json(const json& j)
{
    LossBreakdown loss;
    loss.total = j.at("total").get<double>();
    loss.photometric = j.at("photometric").get<double>();
    loss.landmark = j.at("landmark").get<double>();
    loss.regularizer = j.at("regularizer").get<double>();
    loss.weighted_photometric = j.at("weighted_photometric").get<double>();
    loss.weighted_landmark = j.at("weighted_landmark").get<double>();
    loss.empty_mask = j.at("empty_mask").get<bool>();
    return loss;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

FaceRender render_face(const FaceModel& model, const FaceParams& params, const Camera& camera,
                       const RenderConfig& config)
{
    require_dimension(params.dims() == ParamDims::of(model), "parameter block sizes do not match the model");
    if (!params.all_finite())
    {
        throw DomainError("face parameters contain non-finite values");
    }
    FaceRender out;
    out.shape = evaluate_shape(model, params.alpha_id, params.alpha_exp);
    out.texture_raw = evaluate_texture_unclamped(model, params.alpha_tex);
    out.albedo = out.texture_raw.cwiseMax(0.0).cwiseMin(1.0);
    const Eigen::Matrix3d rotation = rotation_matrix(params.angles);
    out.mesh.positions = apply_pose(out.shape, rotation, params.translation);
    out.mesh.normals = vertex_normals(out.mesh.positions, model.triangles);
    out.mesh.colors = shade(out.albedo, out.mesh.normals, params.gamma);
    out.mesh.triangles = model.triangles;
    out.projected = project(out.mesh.positions, camera);
    out.render = rasterize_soft(out.projected, out.mesh.colors, model.skin_weights, model.triangles, config,
                                &out.cache);
    return out;
}

Eigen::VectorXd render_face_backward(const FaceModel& model, const FaceParams& params, const Camera& camera,
                                     const RenderConfig& config, const FaceRender& forward,
                                     const RgbPixels& rgb_grad, const Eigen::ArrayXd& alpha_grad,
                                     const Eigen::ArrayXd& mask_grad, const Eigen::Matrix3Xd& projected_grad)
{
    const Eigen::Index v = forward.projected.cols();
    const backward::RasterGradient raster =
        backward::rasterize_soft(forward.projected, forward.mesh.colors, model.skin_weights, model.triangles, config,
                                 forward.render, forward.cache, rgb_grad, alpha_grad, mask_grad);
    Eigen::Matrix3Xd d_projected = raster.projected;
    if (projected_grad.size() != 0)
    {
        require_dimension(projected_grad.cols() == v, "projected gradient has the wrong vertex count");
        d_projected += projected_grad;
    }

    Eigen::Matrix3Xd d_posed = Eigen::Matrix3Xd::Zero(3, v);
    backward::project(forward.mesh.positions, camera, d_projected, d_posed);
    const backward::ShadeGradient shading =
        backward::shade(forward.albedo, forward.mesh.normals, params.gamma, raster.colors);
    backward::vertex_normals(forward.mesh.positions, model.triangles, shading.normals, d_posed);
    const backward::PoseGradient pose = backward::apply_pose(forward.shape, params.angles, d_posed);

    const Eigen::Matrix3Xd d_texture =
        (forward.texture_raw.array() >= 0.0 && forward.texture_raw.array() <= 1.0)
            .select(shading.albedo.array(), 0.0)
            .matrix();

    FaceParams grad = FaceParams::zero(params.dims());
    const auto d_shape_flat = pose.positions.reshaped();
    grad.alpha_id = model.id_basis.transpose() * d_shape_flat;
    grad.alpha_exp = model.exp_basis.transpose() * d_shape_flat;
    grad.alpha_tex = model.tex_basis.transpose() * d_texture.reshaped();
    grad.gamma = shading.gamma;
    grad.angles = pose.angles;
    grad.translation = pose.translation;
    return grad.flatten();
}

AdamState AdamState::create(Eigen::Index parameter_count, double learning_rate)
{
    AdamState state;
    state.first_moment = Eigen::VectorXd::Zero(parameter_count);
    state.second_moment = Eigen::VectorXd::Zero(parameter_count);
    state.learning_rate = learning_rate;
    return state;
}

bool AdamState::operator==(const AdamState& other) const
{
    return step == other.step && first_moment == other.first_moment && second_moment == other.second_moment &&
           beta1 == other.beta1 && beta2 == other.beta2 && eps == other.eps && learning_rate == other.learning_rate;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient)
{
    require_dimension(params.size() == gradient.size() && params.size() == state.first_moment.size() &&
                          params.size() == state.second_moment.size(),
                      "Adam state, parameters and gradient differ in size");
    if (!gradient.allFinite())
    {
        throw DomainError("gradient contains non-finite values");
    }
    ++state.step;
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient.cwiseAbs2();
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + state.eps);
}

void FitConfig::validate() const
{
    if (max_iterations < 1)
    {
        throw ConfigError("max_iterations must be at least 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    {
        throw ConfigError("learning rate must be positive and finite");
    }
    if (convergence_window < 1)
    {
        throw ConfigError("convergence window must be at least 1");
    }
    if (!(tolerance > 0.0))
    {
        throw ConfigError("convergence tolerance must be positive");
    }
    if (!(landmark_stage_fraction >= 0.0 && landmark_stage_fraction <= 1.0))
    {
        throw ConfigError("landmark stage fraction must lie in [0, 1]");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
    {
        throw ConfigError("Adam betas must lie in [0, 1) and eps must be positive");
    }
    if (init == InitMode::provided && !initial_params)
    {
        throw ConfigError("init mode 'provided' needs initial parameters");
    }
    if (camera && !(camera->focal > 0.0))
    {
        throw ConfigError("focal length must be positive");
    }
    weights.validate();
}

KeypointMap choose_keypoints(const FaceModel& model, Eigen::Index landmark_count)
{
    if (landmark_count == model.landmark_count())
    {
        return KeypointMap::landmarks(model);
    }
    if (landmark_count == 5)
    {
        return KeypointMap::five_point(model);
    }
    throw DimensionError("observation has " + std::to_string(landmark_count) + " landmarks, the model has " +
                         std::to_string(model.landmark_count()));
}

LossAndGradient loss_and_gradient(const FaceModel& model, const FaceParams& params, const Observation& observation,
                                  const FitConfig& config)
{
    const Problem problem = make_problem(model, observation, config);
    const Evaluation eval = evaluate(problem, params, config.weights);
    return {eval.loss, gradient(problem, params, config.weights, eval)};
}

LossBreakdown evaluate_loss(const FaceModel& model, const FaceParams& params, const Observation& observation,
                            const FitConfig& config)
{
    const Problem problem = make_problem(model, observation, config);
    return evaluate(problem, params, config.weights).loss;
}

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& function,
                                           const Eigen::VectorXd& x, double step)
{
    if (!(step > 0.0))
    {
        throw ConfigError("finite-difference step must be positive");
    }
    Eigen::VectorXd grad(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i)
    {
        probe(i) = x(i) + step;
        const double plus = function(probe);
        probe(i) = x(i) - step;
        const double minus = function(probe);
        probe(i) = x(i);
        grad(i) = (plus - minus) / (2.0 * step);
    }
    return grad;
}

Eigen::VectorXd finite_difference_gradient(const FaceModel& model, const FaceParams& params,
                                           const Observation& observation, const FitConfig& config, double step)
{
    const Problem problem = make_problem(model, observation, config);
    require_params(problem, params);
    const ParamDims dims = params.dims();
    return finite_difference_gradient(
        [&](const Eigen::VectorXd& flat) {
            return evaluate(problem, FaceParams::unflatten(flat, dims), config.weights).loss.total;
        },
        params.flatten(), step);
}

std::string to_string(Termination reason)
{
    switch (reason)
    {
    case Termination::converged:
        return "converged";
    case Termination::max_iterations:
        return "max-iter";
    case Termination::domain_error:
        return "domain-error";
    }
    return "unknown";
}

FitReport fit(const FaceModel& model, const Observation& observation, const FitConfig& config)
{
    const auto start = std::chrono::steady_clock::now();
    const Problem problem = make_problem(model, observation, config);
    const ParamDims dims = ParamDims::of(model);

    FaceParams initial = FaceParams::initial(dims);
    if (config.init == InitMode::provided)
    {
        initial = *config.initial_params;
        require_params(problem, initial);
    }

    FitReport report;
    report.config = config;
    report.camera = problem.camera;

    const int total_iterations = config.max_iterations;
    // The last iteration always belongs to the full-objective stage.
    const int stage_boundary = std::min(
        static_cast<int>(std::floor(config.landmark_stage_fraction * total_iterations)), total_iterations - 1);
    const LossWeights stage_weights[2] = {landmark_stage_weights(config.weights), config.weights};

    AdamState adam = AdamState::create(dims.total(), config.learning_rate);
    adam.beta1 = config.beta1;
    adam.beta2 = config.beta2;
    adam.eps = config.eps;

    Eigen::VectorXd flat = initial.flatten();
    Eigen::VectorXd last_valid = flat;
    Eigen::VectorXd best_flat;
    double best_total = std::numeric_limits<double>::infinity();
    std::vector<double> stage_totals;
    report.termination = Termination::max_iterations;

    for (int iteration = 0; iteration < total_iterations; ++iteration)
    {
        const int stage = iteration < stage_boundary ? 0 : 1;
        const LossWeights& weights = stage_weights[stage];
        const FaceParams params = FaceParams::unflatten(flat, dims);
        Eigen::VectorXd grad;
        Evaluation eval;
        try
        {
            eval = evaluate(problem, params, weights);
            if (!std::isfinite(eval.loss.total))
            {
                throw DomainError("loss is not finite");
            }
            grad = gradient(problem, params, weights, eval);
            if (!grad.allFinite())
            {
                throw DomainError("gradient is not finite");
            }
        }
        catch (const DomainError& e)
        {
            report.termination = Termination::domain_error;
            report.message = "iteration " + std::to_string(iteration) + ": " + e.what();
            break;
        }
        last_valid = flat;

        TraceEntry entry;
        entry.iteration = iteration;
        entry.stage = stage;
        entry.loss = eval.loss;
        entry.landmark_rmse = std::sqrt(eval.loss.landmark);
        report.trace.push_back(entry);
        report.iterations = iteration + 1;

        if (stage == 1)
        {
            if (eval.loss.total < best_total)
            {
                best_total = eval.loss.total;
                best_flat = flat;
                report.best_iteration = iteration;
            }
            stage_totals.push_back(eval.loss.total);
            const std::size_t k = stage_totals.size() - 1;
            const std::size_t window = static_cast<std::size_t>(config.convergence_window);
            if (k >= window)
            {
                const double reference = stage_totals[k - window];
                const double change = std::abs(eval.loss.total - reference) /
                                      std::max(std::abs(reference), std::numeric_limits<double>::min());
                if (change < config.tolerance)
                {
                    report.termination = Termination::converged;
                    break;
                }
            }
        }
        if (iteration + 1 < total_iterations)
        {
            try
            {
                adam_step(adam, flat, grad);
            }
            catch (const DomainError& e)
            {
                report.termination = Termination::domain_error;
                report.message = "iteration " + std::to_string(iteration) + ": " + e.what();
                break;
            }
        }
    }

    if (report.best_iteration >= 0)
    {
        report.params = FaceParams::unflatten(best_flat, dims);
        const TraceEntry& best = report.trace[static_cast<std::size_t>(report.best_iteration)];
        report.final_loss = best.loss;
        report.landmark_rmse = best.landmark_rmse;
    }
    else
    {
        report.params = FaceParams::unflatten(last_valid, dims);
        if (!report.trace.empty())
        {
            report.final_loss = report.trace.back().loss;
            report.landmark_rmse = report.trace.back().landmark_rmse;
        }
    }
    report.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::string fit_report_to_json(const FitReport& report, bool include_timing)
{
    json j;
    j["format"] = "facefit-report-1";
    j["termination"] = to_string(report.termination);
    if (!report.message.empty())
    {
        j["message"] = report.message;
    }
    j["iterations"] = report.iterations;
    j["best_iteration"] = report.best_iteration;
    j["final_loss"] = loss_to_json(report.final_loss);
    j["landmark_rmse"] = report.landmark_rmse;
    if (include_timing)
    {
        j["duration_seconds"] = report.duration_seconds;
    }

    const FaceParams& p = report.params;
    j["params"] = {{"alpha_id", to_std(p.alpha_id)},
                   {"alpha_exp", to_std(p.alpha_exp)},
                   {"alpha_tex", to_std(p.alpha_tex)},
                   {"gamma", to_std(p.gamma)},
                   {"angles", to_std(p.angles)},
                   {"translation", to_std(p.translation)}};

    const FitConfig& c = report.config;
    const LossWeights& w = c.weights;
    j["config"] = {
        {"optimizer", "adam"},
        {"learning_rate", c.learning_rate},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"eps", c.eps},
        {"max_iterations", c.max_iterations},
        {"convergence_window", c.convergence_window},
        {"tolerance", c.tolerance},
        {"landmark_stage_fraction", c.landmark_stage_fraction},
        {"init", c.init == InitMode::zero ? "zero" : "provided"},
        {"weights",
         {{"photometric", w.photometric},
          {"landmark", w.landmark},
          {"reg_id", w.reg_id},
          {"reg_exp", w.reg_exp},
          {"reg_tex", w.reg_tex},
          {"reg_gamma", w.reg_gamma}}},
        {"camera", {{"focal", report.camera.focal}, {"width", report.camera.width}, {"height", report.camera.height}}},
        {"render",
         {{"sigma", c.render.sigma},
          {"gamma_agg", c.render.gamma_agg},
          {"far_score", c.render.far_score},
          {"z_near", c.render.z_near},
          {"cutoff", c.render.cutoff}}},
        // Network-training schedule of the regression pipeline this fitter replaces. Informational only.
        {"training_schedule", {{"epochs", 20}, {"batch_size", 16}, {"applied", false}}},
    };

    json trace = json::array();
    for (const TraceEntry& entry : report.trace)
    {
        json e = loss_to_json(entry.loss);
        e["iteration"] = entry.iteration;
        e["stage"] = entry.stage;
        e["landmark_rmse"] = entry.landmark_rmse;
        trace.push_back(std::move(e));
    }
    j["trace"] = std::move(trace);
    return j.dump(2) + "\n";
}

FitReport fit_report_from_json(const std::string& text, const ParamDims& dims)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (const json::exception& e)
    {
        throw ParseError(std::string("report is not valid JSON: ") + e.what());
    }
    try
    {
        if (j.at("format").get<std::string>() != "facefit-report-1")
        {
            throw ParseError("unknown report format");
        }
        FitReport report;
        const std::string reason = j.at("termination").get<std::string>();
        if (reason == "converged")
            report.termination = Termination::converged;
        else if (reason == "max-iter")
            report.termination = Termination::max_iterations;
        else if (reason == "domain-error")
            report.termination = Termination::domain_error;
        else
            throw ParseError("unknown termination reason '" + reason + "'");
        report.message = j.value("message", std::string());
        report.iterations = j.at("iterations").get<int>();
        report.best_iteration = j.at("best_iteration").get<int>();
        report.final_loss = loss_from_json(j.at("final_loss"));
        report.landmark_rmse = j.at("landmark_rmse").get<double>();
        report.duration_seconds = j.value("duration_seconds", 0.0);

        const json& p = j.at("params");
        FaceParams params = FaceParams::zero(dims);
        const auto read_block = [&](const char* name, auto& target) {
            const std::vector<double> values = p.at(name).get<std::vector<double>>();
            if (static_cast<Eigen::Index>(values.size()) != target.size())
            {
                throw DimensionError(std::string("report parameter block '") + name + "' has the wrong size");
            }
            target = from_std(values);
        };
        read_block("alpha_id", params.alpha_id);
        read_block("alpha_exp", params.alpha_exp);
        read_block("alpha_tex", params.alpha_tex);
        read_block("gamma", params.gamma);
        read_block("angles", params.angles);
        read_block("translation", params.translation);
        report.params = params;

        const json& c = j.at("config");
        report.config.learning_rate = c.at("learning_rate").get<double>();
        report.config.beta1 = c.at("beta1").get<double>();
        report.config.beta2 = c.at("beta2").get<double>();
        report.config.eps = c.at("eps").get<double>();
        report.config.max_iterations = c.at("max_iterations").get<int>();
        report.config.convergence_window = c.at("convergence_window").get<int>();
        report.config.tolerance = c.at("tolerance").get<double>();
        report.config.landmark_stage_fraction = c.at("landmark_stage_fraction").get<double>();
        const json& w = c.at("weights");
        report.config.weights.photometric = w.at("photometric").get<double>();
        report.config.weights.landmark = w.at("landmark").get<double>();
        report.config.weights.reg_id = w.at("reg_id").get<double>();
        report.config.weights.reg_exp = w.at("reg_exp").get<double>();
        report.config.weights.reg_tex = w.at("reg_tex").get<double>();
        report.config.weights.reg_gamma = w.at("reg_gamma").get<double>();
        const json& cam = c.at("camera");
        report.camera = {cam.at("focal").get<double>(), cam.at("width").get<int>(), cam.at("height").get<int>()};
        const json& r = c.at("render");
        report.config.render.sigma = r.at("sigma").get<double>();
        report.config.render.gamma_agg = r.at("gamma_agg").get<double>();
        report.config.render.far_score = r.at("far_score").get<double>();
        report.config.render.z_near = r.at("z_near").get<double>();
        report.config.render.cutoff = r.at("cutoff").get<double>();

        for (const json& e : j.at("trace"))
        {
            TraceEntry entry;
            entry.iteration = e.at("iteration").get<int>();
            entry.stage = e.at("stage").get<int>();
            entry.landmark_rmse = e.at("landmark_rmse").get<double>();
            entry.loss = loss_from_json(e);
            report.trace.push_back(entry);
        }
        return report;
    }
    catch (const json::exception& e)
    {
        throw ParseError(std::string("malformed report: ") + e.what());
    }
}

std::string encode_params(const Eigen::VectorXd& flat)
{
    std::string out(params_magic, 4);
    put_u32(out, static_cast<std::uint32_t>(flat.size()));
    for (const double value : flat)
    {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
        put_u32(out, bits);
    }
    return out;
}

Eigen::VectorXd decode_params(std::string_view bytes)
{
    if (bytes.size() < 8)
    {
        throw ParseError("parameter file is truncated");
    }
    if (std::memcmp(bytes.data(), params_magic, 4) != 0)
    {
        throw ParseError("parameter file does not start with MFP1");
    }
    const std::uint32_t count = get_u32(bytes, 4);
    const std::size_t expected = 8 + 4 * static_cast<std::size_t>(count);
    if (bytes.size() != expected)
    {
        throw ParseError("parameter file length does not match its count");
    }
    Eigen::VectorXd flat(count);
    for (std::uint32_t i = 0; i < count; ++i)
    {
        flat(i) = std::bit_cast<float>(get_u32(bytes, 8 + 4 * static_cast<std::size_t>(i)));
    }
    return flat;
}

void save_params(const FaceParams& params, const std::filesystem::path& path)
{
    const std::string bytes = encode_params(params.flatten());
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    {
        throw IoError("cannot write parameter file " + path.string());
    }
}

FaceParams load_params(const std::filesystem::path& path, const ParamDims& dims)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw IoError("cannot open parameter file " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const Eigen::VectorXd flat = decode_params(bytes);
    if (flat.size() != dims.total())
    {
        throw DimensionError("parameter file holds " + std::to_string(flat.size()) + " values, the model needs " +
                             std::to_string(dims.total()));
    }
    return FaceParams::unflatten(flat, dims);
}

} /* namespace facefit */
