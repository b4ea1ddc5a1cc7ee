/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/model_store.hpp
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

#ifndef FACEFIT_MODEL_STORE_HPP
#define FACEFIT_MODEL_STORE_HPP

#include "Eigen/Core"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace facefit {

/**
 * A linear morphable face model: mean shape and albedo plus identity, expression and texture bases.
 *
 * Shapes and textures are stored interleaved per vertex, i.e. element 3*i+c holds component c of vertex i.
 * Each basis column is one basis vector of length 3V. Values are held in double precision but are
 * always representable as 32-bit floats, which is what the on-disk format stores.
 *
 * A FaceModel is never mutated by any of the evaluation code and can be shared between threads.
 */
struct FaceModel
{
    Eigen::VectorXd mean_shape;   ///< 3V
    Eigen::MatrixXd id_basis;     ///< 3V x K_id
    Eigen::MatrixXd exp_basis;    ///< 3V x K_exp
    Eigen::VectorXd mean_texture; ///< 3V, albedo in [0, 1]
    Eigen::MatrixXd tex_basis;    ///< 3V x K_tex
    Eigen::Matrix3Xi triangles;   ///< one column per triangle, 0-based vertex indices
    Eigen::VectorXi landmark_indices;
    Eigen::VectorXd skin_weights; ///< V, photometric-loss region weights in [0, 1]

    int vertex_count() const { return static_cast<int>(mean_shape.size() / 3); }
    int triangle_count() const { return static_cast<int>(triangles.cols()); }
    int id_count() const { return static_cast<int>(id_basis.cols()); }
    int exp_count() const { return static_cast<int>(exp_basis.cols()); }
    int tex_count() const { return static_cast<int>(tex_basis.cols()); }
    int landmark_count() const { return static_cast<int>(landmark_indices.size()); }

    /// Mean shape viewed as a 3 x V matrix of vertex positions.
    Eigen::Map<const Eigen::Matrix3Xd> mean_positions() const
    {
        return {mean_shape.data(), 3, vertex_count()};
    }
};

bool operator==(const FaceModel& lhs, const FaceModel& rhs);

/// Dimensions of the full cropped Basel asset.
struct BaselDimensions
{
    static constexpr int vertices = 35709;
    static constexpr int id = 80;
    static constexpr int exp = 64;
    static constexpr int tex = 80;
};

/**
 * Error raised by the model loader and writer. The kind tells the failure modes apart.
 */
class ModelIoError : public std::runtime_error
{
public:
    enum class Kind {
        missing_file,
        bad_magic,
        truncated,
        length_mismatch,
        invariant_violation,
        io_failure,
        invalid_argument
    };

    ModelIoError(Kind kind, const std::string& what) : std::runtime_error(what), error_kind(kind) {}

    Kind kind() const noexcept { return error_kind; }

private:
    Kind error_kind;
};

/**
 * Checks all FaceModel invariants: consistent sizes, index ranges, distinct landmarks, value ranges
 * and finiteness. Returns a description of the first violation, or nothing if the model is valid.
 */
std::optional<std::string> find_invariant_violation(const FaceModel& model);

/// Throws ModelIoError(invariant_violation) if the model is not valid.
void validate(const FaceModel& model);

/// Throws ModelIoError(invariant_violation) unless the model has the full Basel dimensions.
void require_basel_dimensions(const FaceModel& model);

/**
 * Loads a model in the MFM1 binary format.
 *
 * Layout (little-endian): the magic "MFM1", eight uint32 header words (V, T, K_id, K_exp, K_tex, L, 0, 0),
 * then the arrays in FaceModel field order. Real-valued arrays are float32, the triangle and landmark
 * index arrays are uint32. Bases are stored column by column.
 */
FaceModel load_model(const std::filesystem::path& path);

/// Writes the model in the MFM1 format. The model is validated first.
void save_model(const FaceModel& model, const std::filesystem::path& path);

/// Encodes a model to its MFM1 byte representation.
std::string encode_model(const FaceModel& model);

/// Decodes an MFM1 byte buffer. Throws ModelIoError with the same kinds as load_model.
FaceModel decode_model(std::string_view bytes);

/**
 * Synthesizes a small random face-like model for testing.
 *
 * The mean shape is a v_grid x v_grid height-field dome of unit diameter centred on the origin,
 * bulging towards -z (towards a camera looking along +z), triangulated into 2(v_grid-1)^2 triangles
 * whose normals face the camera. Bases are Gaussian-filtered random fields (kernel half-width
 * v_grid/4) with amplitude at most 0.05. The in-plane part of the shape bases is scaled so that any
 * coefficient vector with entries in [-3, 3] keeps every triangle non-degenerate. Skin weights are
 * one everywhere; landmarks are the vertices closest to evenly spaced points on the dome rim.
 *
 * The result is a deterministic function of the arguments.
 */
FaceModel make_toy_model(std::uint64_t seed, int v_grid, int k_id, int k_exp, int k_tex, int n_landmarks);

/**
 * Keeps only the given vertices (in the given order) of a model. Triangles referencing a dropped vertex
 * are removed; landmarks must all be kept.
 */
FaceModel select_vertices(const FaceModel& model, std::span<const int> kept_vertices);

} /* namespace facefit */

#endif /* FACEFIT_MODEL_STORE_HPP */
