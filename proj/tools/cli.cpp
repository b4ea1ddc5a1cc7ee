/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: tools/cli.cpp
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
#include "cli.hpp"

#include "facefit/alignment.hpp"
#include "facefit/errors.hpp"
#include "facefit/fit_engine.hpp"
#include "facefit/io.hpp"
#include "facefit/model_store.hpp"

#include "CLI11.hpp"

#include <optional>
#include <string>
#include <vector>

namespace facefit::cli {

namespace {

struct RenderOptions
{
    double sigma = RenderConfig{}.sigma;
    double gamma_agg = RenderConfig{}.gamma_agg;
    double far_score = RenderConfig{}.far_score;
    std::vector<double> background{0.0, 0.0, 0.0};
    std::optional<double> focal;

    void add_to(CLI::App& app)
    {
        app.add_option("--sigma", sigma, "Silhouette softness in normalized device coordinates")->capture_default_str();
        app.add_option("--gamma-agg", gamma_agg, "Depth aggregation temperature")->capture_default_str();
        app.add_option("--far-score", far_score, "Normalized-depth score of the background")->capture_default_str();
        app.add_option("--background", background, "Background colour r g b in [0, 1]")
            ->expected(3)
            ->capture_default_str();
        app.add_option("--focal", focal, "Focal length in pixels (default 1015 * width / 224)");
    }

    RenderConfig config(int width, int height) const
    {
        RenderConfig config = RenderConfig::for_size(width, height);
        config.sigma = sigma;
        config.gamma_agg = gamma_agg;
        config.far_score = far_score;
        config.background = Eigen::Vector3d(background[0], background[1], background[2]);
        return config;
    }

    Camera camera(int width, int height) const
    {
        Camera camera = Camera::for_image(width, height);
        if (focal)
        {
            camera.focal = *focal;
        }
        return camera;
    }
};

struct SynthOptions
{
    std::uint64_t seed = 0;
    int grid = 16;
    int k_id = 8;
    int k_exp = 6;
    int k_tex = 8;
    int landmarks = 68;
    std::optional<int> keep_vertices;
    std::string out;
};

struct RenderCommand
{
    std::string model;
    std::string params;
    int size = 224;
    std::optional<int> width;
    std::optional<int> height;
    std::string out;
    std::string mesh;
    std::string landmarks_out;
    RenderOptions render;
};

struct FitCommand
{
    std::string model;
    std::string image;
    std::string landmarks;
    std::string out;
    std::string mesh;
    std::string overlay;
    std::string params_out;
    std::string init_params;
    std::string aligned_out;
    std::string template_file;
    int crop_size = 224;
    bool report_timing = false;
    FitConfig fit;
    RenderOptions render;
};

struct AlignCommand
{
    std::string image;
    std::string landmarks;
    std::string out;
    std::string landmarks_out;
    std::string template_file;
    int crop_size = 224;
};

struct InspectCommand
{
    std::string model;
    std::string params;
    std::string report;
};

AlignmentSpec load_alignment_spec(const std::string& template_file, int crop_size)
{
    AlignmentSpec spec = AlignmentSpec::standard(crop_size);
    if (!template_file.empty())
    {
        const Eigen::Matrix2Xd points = read_landmarks(template_file);
        if (points.cols() != 5)
        {
            throw ParseError("alignment template must hold exactly five points");
        }
        spec.reference = points;
    }
    spec.validate();
    return spec;
}

void synth_model(const SynthOptions& options, std::ostream& out)
{
    FaceModel model =
        make_toy_model(options.seed, options.grid, options.k_id, options.k_exp, options.k_tex, options.landmarks);
    if (options.keep_vertices)
    {
        if (*options.keep_vertices < 1 || *options.keep_vertices > model.vertex_count())
        {
            throw ConfigError("--keep-vertices must lie between 1 and the grid vertex count");
        }
        std::vector<int> keep(static_cast<std::size_t>(*options.keep_vertices));
        for (int i = 0; i < *options.keep_vertices; ++i)
        {
            keep[static_cast<std::size_t>(i)] = i;
        }
        model = select_vertices(model, keep);
    }
    save_model(model, options.out);
    out << "wrote " << options.out << ": V=" << model.vertex_count() << " T=" << model.triangle_count()
        << " K_id=" << model.id_count() << " K_exp=" << model.exp_count() << " K_tex=" << model.tex_count()
        << " L=" << model.landmark_count() << "\n";
}

void render_command(const RenderCommand& options, std::ostream& out)
{
    const FaceModel model = load_model(options.model);
    const ParamDims dims = ParamDims::of(model);
    const FaceParams params = options.params.empty() ? FaceParams::initial(dims) : load_params(options.params, dims);
    const int width = options.width.value_or(options.size);
    const int height = options.height.value_or(options.size);
    const Camera camera = options.render.camera(width, height);
    const RenderConfig config = options.render.config(width, height);
    const FaceRender face = render_face(model, params, camera, config);

    RgbImage image;
    image.width = width;
    image.height = height;
    image.pixels = face.render.rgb;
    write_png(image, options.out);
    out << "wrote " << options.out << "\n";
    if (!options.mesh.empty())
    {
        write_obj(face.mesh, options.mesh);
        out << "wrote " << options.mesh << "\n";
    }
    if (!options.landmarks_out.empty())
    {
        write_landmarks(landmark_positions(model, face.projected), options.landmarks_out);
        out << "wrote " << options.landmarks_out << "\n";
    }
}

int fit_command(FitCommand& options, std::ostream& out, std::ostream& err)
{
    const FaceModel model = load_model(options.model);
    const ParamDims dims = ParamDims::of(model);
    Observation observation;
    observation.image = read_png(options.image);
    observation.landmarks = read_landmarks(options.landmarks);
    observation.landmark_source = options.landmarks;

    if (observation.landmarks.cols() == 5 && model.landmark_count() != 5)
    {
        const AlignedCrop crop =
            align_crop(observation.image, observation.landmarks, load_alignment_spec(options.template_file, options.crop_size));
        observation.image = crop.image;
        observation.landmarks = crop.transform.apply(observation.landmarks);
        out << "aligned to " << options.crop_size << "x" << options.crop_size << " crop (residual " << crop.residual
            << " px^2)\n";
        if (!options.aligned_out.empty())
        {
            write_png(observation.image, options.aligned_out);
        }
    }
    for (const int k : observation.out_of_bounds_landmarks())
    {
        err << "warning: landmark " << k << " lies outside the image\n";
    }

    const int width = observation.image.width;
    const int height = observation.image.height;
    options.fit.camera = options.render.camera(width, height);
    options.fit.render = options.render.config(width, height);
    if (!options.init_params.empty())
    {
        options.fit.init = InitMode::provided;
        options.fit.initial_params = load_params(options.init_params, dims);
    }

    const FitReport report = fit(model, observation, options.fit);
    write_text_file(fit_report_to_json(report, options.report_timing), options.out);
    out << "wrote " << options.out << ": " << to_string(report.termination) << " after " << report.iterations
        << " iterations, landmark RMSE " << report.landmark_rmse << " px, photometric "
        << report.final_loss.photometric << "\n";

    if (!options.params_out.empty())
    {
        save_params(report.params, options.params_out);
    }
    if (!options.mesh.empty() || !options.overlay.empty())
    {
        const FaceRender face = render_face(model, report.params, *options.fit.camera, options.fit.render);
        if (!options.mesh.empty())
        {
            write_obj(face.mesh, options.mesh);
        }
        if (!options.overlay.empty())
        {
            write_png(composite(face.render, observation.image), options.overlay);
        }
    }
    if (report.termination == Termination::domain_error)
    {
        err << "error: " << report.message << "\n";
        return domain_error;
    }
    return success;
}

void align_command(const AlignCommand& options, std::ostream& out)
{
    const RgbImage image = read_png(options.image);
    const Eigen::Matrix2Xd points = read_landmarks(options.landmarks);
    if (points.cols() != 5)
    {
        throw DimensionError("alignment needs a landmark file with exactly five points");
    }
    const AlignedCrop crop = align_crop(image, points, load_alignment_spec(options.template_file, options.crop_size));
    write_png(crop.image, options.out);
    out << "wrote " << options.out << ": scale " << crop.transform.scale() << " rotation " << crop.transform.rotation()
        << " translation " << crop.transform.translation.transpose() << " residual " << crop.residual << "\n";
    if (!options.landmarks_out.empty())
    {
        write_landmarks(crop.transform.apply(points), options.landmarks_out);
    }
}

void inspect_command(const InspectCommand& options, std::ostream& out)
{
    if (options.model.empty() && options.params.empty() && options.report.empty())
    {
        throw ConfigError("inspect needs --model, --params or --report");
    }
    std::optional<ParamDims> dims;
    if (!options.model.empty())
    {
        const FaceModel model = load_model(options.model);
        dims = ParamDims::of(model);
        out << "model " << options.model << "\n"
            << "  vertices " << model.vertex_count() << "\n"
            << "  triangles " << model.triangle_count() << "\n"
            << "  identity basis " << model.id_count() << "\n"
            << "  expression basis " << model.exp_count() << "\n"
            << "  texture basis " << model.tex_count() << "\n"
            << "  landmarks " << model.landmark_count() << "\n"
            << "  parameters " << dims->total() << " (id " << dims->id << ", exp " << dims->exp << ", tex "
            << dims->tex << ", lighting " << sh_coefficient_count << ", pose " << pose_parameter_count << ")\n";
        const BaselDimensions basel;
        const bool basel_shaped = model.vertex_count() == basel.vertices && model.id_count() == basel.id &&
                                  model.exp_count() == basel.exp && model.tex_count() == basel.tex;
        out << "  basel layout " << (basel_shaped ? "yes" : "no") << "\n";
    }
    if (!options.params.empty())
    {
        const Eigen::VectorXd flat = decode_params(read_text_file(options.params));
        out << "params " << options.params << "\n  values " << flat.size() << "\n";
        if (dims)
        {
            if (flat.size() != dims->total())
            {
                throw DimensionError("parameter file does not match the model");
            }
            const FaceParams params = FaceParams::unflatten(flat, *dims);
            out << "  |alpha_id| " << params.alpha_id.norm() << "\n"
                << "  |alpha_exp| " << params.alpha_exp.norm() << "\n"
                << "  |alpha_tex| " << params.alpha_tex.norm() << "\n"
                << "  gamma[0,9,18] " << params.gamma(0) << " " << params.gamma(9) << " " << params.gamma(18) << "\n"
                << "  angles " << params.angles.transpose() << "\n"
                << "  translation " << params.translation.transpose() << "\n";
        }
    }
    if (!options.report.empty())
    {
        if (!dims)
        {
            throw ConfigError("inspecting a report needs --model");
        }
        const FitReport report = fit_report_from_json(read_text_file(options.report), *dims);
        out << "report " << options.report << "\n"
            << "  termination " << to_string(report.termination) << "\n"
            << "  iterations " << report.iterations << "\n"
            << "  best iteration " << report.best_iteration << "\n"
            << "  total loss " << report.final_loss.total << "\n"
            << "  photometric " << report.final_loss.photometric << "\n"
            << "  landmark rmse " << report.landmark_rmse << "\n";
    }
}

int report_error(std::ostream& err, const std::exception& e, int code)
{
    err << "error: " << e.what() << "\n";
    return code;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"facefit: fit a 3D morphable face model to a photo by analysis-by-synthesis", "facefit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    SynthOptions synth;
    CLI::App* synth_app = app.add_subcommand("synth-model", "Write a random toy model as an MFM1 file");
    synth_app->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
    synth_app->add_option("--grid", synth.grid, "Vertices per side of the height-field grid")->capture_default_str();
    synth_app->add_option("--k-id", synth.k_id, "Identity basis size")->capture_default_str();
    synth_app->add_option("--k-exp", synth.k_exp, "Expression basis size")->capture_default_str();
    synth_app->add_option("--k-tex", synth.k_tex, "Texture basis size")->capture_default_str();
    synth_app->add_option("--landmarks", synth.landmarks, "Number of landmarks")->capture_default_str();
    synth_app->add_option("--keep-vertices", synth.keep_vertices, "Keep only the first N grid vertices");
    synth_app->add_option("--out", synth.out, "Output MFM1 path")->required();

    RenderCommand render;
    CLI::App* render_app = app.add_subcommand("render", "Render a face to a PNG");
    render_app->add_option("--model", render.model, "MFM1 model")->required();
    render_app->add_option("--params", render.params, "MFP1 parameters (default: zero coefficients at depth 10)");
    render_app->add_option("--size", render.size, "Square image size in pixels")->capture_default_str();
    render_app->add_option("--width", render.width, "Image width (overrides --size)");
    render_app->add_option("--height", render.height, "Image height (overrides --size)");
    render_app->add_option("--out", render.out, "Output PNG")->required();
    render_app->add_option("--mesh", render.mesh, "Also write the camera-space mesh as OBJ");
    render_app->add_option("--landmarks-out", render.landmarks_out, "Also write the projected landmarks");
    render.render.add_to(*render_app);

    FitCommand fit_options;
    FitConfig& fc = fit_options.fit;
    LossWeights& w = fc.weights;
    CLI::App* fit_app = app.add_subcommand("fit", "Fit the model to an image and its landmarks");
    fit_app->add_option("--model", fit_options.model, "MFM1 model")->required();
    fit_app->add_option("--image", fit_options.image, "Input PNG")->required();
    fit_app->add_option("--landmarks", fit_options.landmarks,
                        "Landmark file: one 'u v' line per model landmark, or five alignment points")
        ->required();
    fit_app->add_option("--out", fit_options.out, "Output JSON report")->required();
    fit_app->add_option("--mesh", fit_options.mesh, "Write the fitted mesh as OBJ");
    fit_app->add_option("--overlay", fit_options.overlay, "Write the render composited over the input as PNG");
    fit_app->add_option("--params-out", fit_options.params_out, "Write the fitted parameters as MFP1");
    fit_app->add_option("--init-params", fit_options.init_params, "Start from these MFP1 parameters");
    fit_app->add_option("--aligned-out", fit_options.aligned_out, "Write the aligned crop when aligning");
    fit_app->add_option("--template", fit_options.template_file, "Five-point crop template file");
    fit_app->add_option("--crop-size", fit_options.crop_size, "Crop size when aligning")->capture_default_str();
    fit_app->add_flag("--report-timing", fit_options.report_timing, "Include the wall-clock duration in the report");
    fit_app->add_option("--iterations", fc.max_iterations, "Maximum iterations")->capture_default_str();
    fit_app->add_option("--lr", fc.learning_rate, "Adam learning rate")->capture_default_str();
    fit_app->add_option("--beta1", fc.beta1, "Adam beta1")->capture_default_str();
    fit_app->add_option("--beta2", fc.beta2, "Adam beta2")->capture_default_str();
    fit_app->add_option("--eps", fc.eps, "Adam eps")->capture_default_str();
    fit_app->add_option("--window", fc.convergence_window, "Convergence window in iterations")->capture_default_str();
    fit_app->add_option("--tol", fc.tolerance, "Relative loss change for convergence")->capture_default_str();
    fit_app->add_option("--landmark-stage", fc.landmark_stage_fraction,
                        "Fraction of iterations fitted to the landmarks only")
        ->capture_default_str();
    fit_app->add_option("--w-photo", w.photometric, "Photometric weight")->capture_default_str();
    fit_app->add_option("--w-landmark", w.landmark, "Landmark weight")->capture_default_str();
    fit_app->add_option("--w-reg-id", w.reg_id, "Identity regularizer weight")->capture_default_str();
    fit_app->add_option("--w-reg-exp", w.reg_exp, "Expression regularizer weight")->capture_default_str();
    fit_app->add_option("--w-reg-tex", w.reg_tex, "Texture regularizer weight")->capture_default_str();
    fit_app->add_option("--w-reg-gamma", w.reg_gamma, "Lighting regularizer weight")->capture_default_str();
    fit_options.render.add_to(*fit_app);

    AlignCommand align;
    CLI::App* align_app = app.add_subcommand("align", "Crop an image to the five-point template");
    align_app->add_option("--image", align.image, "Input PNG")->required();
    align_app->add_option("--landmarks", align.landmarks, "Five points: eyes, nose, mouth corners")->required();
    align_app->add_option("--out", align.out, "Output PNG")->required();
    align_app->add_option("--landmarks-out", align.landmarks_out, "Write the five points in crop coordinates");
    align_app->add_option("--template", align.template_file, "Five-point crop template file");
    align_app->add_option("--size", align.crop_size, "Crop size in pixels")->capture_default_str();

    InspectCommand inspect;
    CLI::App* inspect_app = app.add_subcommand("inspect", "Print model, parameter or report metadata");
    inspect_app->add_option("--model", inspect.model, "MFM1 model");
    inspect_app->add_option("--params", inspect.params, "MFP1 parameters");
    inspect_app->add_option("--report", inspect.report, "JSON fit report");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e, out, err);
        return code == 0 ? success : usage_error;
    }

    try
    {
        if (*synth_app)
        {
            synth_model(synth, out);
        }
        else if (*render_app)
        {
            render_command(render, out);
        }
        else if (*fit_app)
        {
            return fit_command(fit_options, out, err);
        }
        else if (*align_app)
        {
            align_command(align, out);
        }
        else if (*inspect_app)
        {
            inspect_command(inspect, out);
        }
        return success;
    }
    catch (const ModelIoError& e)
    {
        return report_error(err, e, e.kind() == ModelIoError::Kind::invalid_argument ? usage_error : io_error);
    }
    catch (const IoError& e)
    {
        return report_error(err, e, io_error);
    }
    catch (const ParseError& e)
    {
        return report_error(err, e, io_error);
    }
    catch (const DomainError& e)
    {
        return report_error(err, e, domain_error);
    }
    catch (const DimensionError& e)
    {
        return report_error(err, e, usage_error);
    }
    catch (const ConfigError& e)
    {
        return report_error(err, e, usage_error);
    }
}

} /* namespace facefit::cli */
