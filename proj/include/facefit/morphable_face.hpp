/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/morphable_face.hpp
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

#ifndef FACEFIT_MORPHABLE_FACE_HPP
#define FACEFIT_MORPHABLE_FACE_HPP

#include "facefit/model_store.hpp"

#include "Eigen/Core"

#include <array>
#include <cmath>
#include <vector>

namespace facefit {

/// Number of lighting coefficients: 9 spherical-harmonics terms for each of the 3 colour channels.
inline constexpr int sh_coefficient_count = 27;
/// Angles plus translation.
inline constexpr int pose_parameter_count = 6;

/// Coefficient block sizes of a model.
struct ParamDims
{
    int id = 0;
    int exp = 0;
    int tex = 0;

    static ParamDims of(const FaceModel& model) { return {model.id_count(), model.exp_count(), model.tex_count()}; }

    int total() const { return id + exp + tex + sh_coefficient_count + pose_parameter_count; }

    // Offsets of each block in the flat parameter vector.
    int id_offset() const { return 0; }
    int exp_offset() const { return id; }
    int tex_offset() const { return id + exp; }
    int gamma_offset() const { return id + exp + tex; }
    int angles_offset() const { return gamma_offset() + sh_coefficient_count; }
    int translation_offset() const { return angles_offset() + 3; }

    bool operator==(const ParamDims&) const = default;
};

/**
 * All coefficients that describe one face instance.
 *
 * gamma is ordered channel-major: gamma[9*c + k] is SH coefficient k of channel c (red, green, blue).
 * The flat vector layout is frozen: alpha_id, alpha_exp, alpha_tex, gamma, angles (x, y, z), translation.
 */
struct FaceParams
{
    Eigen::VectorXd alpha_id;
    Eigen::VectorXd alpha_exp;
    Eigen::VectorXd alpha_tex;
    Eigen::Matrix<double, sh_coefficient_count, 1> gamma = Eigen::Matrix<double, sh_coefficient_count, 1>::Zero();
    Eigen::Vector3d angles = Eigen::Vector3d::Zero();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    /// All-zero coefficients with the given block sizes.
    static FaceParams zero(const ParamDims& dims);

    /// The starting point for fitting: zero coefficients, zero angles, translation (0, 0, 10).
    static FaceParams initial(const ParamDims& dims);

    static FaceParams unflatten(const Eigen::VectorXd& flat, const ParamDims& dims);

    ParamDims dims() const
    {
        return {static_cast<int>(alpha_id.size()), static_cast<int>(alpha_exp.size()),
                static_cast<int>(alpha_tex.size())};
    }
    Eigen::VectorXd flatten() const;
    bool all_finite() const;
};

/// Default distance of the mean face from the camera, in model units.
inline constexpr double default_face_depth = 10.0;

/**
 * Pinhole camera at the origin looking along +z, with y up in the world mapping to v down in the image.
 * The principal point is the image centre.
 */
struct Camera
{
    double focal = 1015.0;
    int width = 224;
    int height = 224;

    /// focal = 1015 * width / 224, which frames the unit-size mean face at depth 10 to about half the image.
    static Camera for_image(int width, int height) { return {1015.0 * width / 224.0, width, height}; }
};

/// Camera-space geometry and shaded colours of one face instance.
struct SurfaceMesh
{
    Eigen::Matrix3Xd positions;
    Eigen::Matrix3Xd normals;
    Eigen::Matrix3Xd colors; ///< RGB in [0, 1]
    Eigen::Matrix3Xi triangles;
};

/// s = mean + A_id * alpha_id + A_exp * alpha_exp, returned as a 3 x V matrix.
Eigen::Matrix3Xd evaluate_shape(const FaceModel& model, const Eigen::VectorXd& alpha_id,
                                const Eigen::VectorXd& alpha_exp);

/// t = mean + A_tex * alpha_tex without clamping, as a 3 x V matrix.
Eigen::Matrix3Xd evaluate_texture_unclamped(const FaceModel& model, const Eigen::VectorXd& alpha_tex);

/// evaluate_texture_unclamped clamped to [0, 1].
Eigen::Matrix3Xd evaluate_texture(const FaceModel& model, const Eigen::VectorXd& alpha_tex);

/**
 * Rotation R = R_z(z) * R_y(y) * R_x(x) for angles (x, y, z) in radians.
 */
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_matrix(const Eigen::Matrix<Scalar, 3, 1>& angles)
{
    using std::cos;
    using std::sin;
    const Scalar cx = cos(angles(0)), sx = sin(angles(0));
    const Scalar cy = cos(angles(1)), sy = sin(angles(1));
    const Scalar cz = cos(angles(2)), sz = sin(angles(2));
    const Scalar zero(0), one(1);
    Eigen::Matrix<Scalar, 3, 3> rx, ry, rz;
    rx << one, zero, zero, zero, cx, -sx, zero, sx, cx;
    ry << cy, zero, sy, zero, one, zero, -sy, zero, cy;
    rz << cz, -sz, zero, sz, cz, zero, zero, zero, one;
    return rz * ry * rx;
}

/// Partial derivatives of rotation_matrix with respect to each of the three angles.
std::array<Eigen::Matrix3d, 3> rotation_matrix_derivatives(const Eigen::Vector3d& angles);

/// p' = R p + T for every column.
Eigen::Matrix3Xd apply_pose(const Eigen::Matrix3Xd& positions, const Eigen::Matrix3d& rotation,
                            const Eigen::Vector3d& translation);

/**
 * Per-vertex normals: the normalized sum of the (area-weighted) face normals (p1 - p0) x (p2 - p0) of the
 * incident triangles. Vertices with no incident area get (0, 0, 1).
 */
Eigen::Matrix3Xd vertex_normals(const Eigen::Matrix3Xd& positions, const Eigen::Matrix3Xi& triangles);

/**
 * Pinhole projection; column i of the result is (u, v, depth) with u = f x / z + w / 2 and
 * v = h / 2 - f y / z. Throws DomainError if any vertex has z <= 0.
 */
Eigen::Matrix3Xd project(const Eigen::Matrix3Xd& positions, const Camera& camera);

/// Gathers (u, v) of the model's landmark vertices, in landmark order.
Eigen::Matrix2Xd landmark_positions(const FaceModel& model, const Eigen::Matrix3Xd& projected);

/**
 * Linear map from projected vertices to 2D keypoints: keypoint k is the mean of the projected
 * vertices listed in groups[k].
 */
struct KeypointMap
{
    std::vector<std::vector<int>> groups;

    /// One keypoint per model landmark.
    static KeypointMap landmarks(const FaceModel& model);

    /**
     * The five alignment keypoints (left eye, right eye, nose, mouth left, mouth right). For a 68-point
     * landmark set the eyes are the mean of the two corner landmarks of each eye, the nose is landmark 30
     * and the mouth corners are 48 and 54. For any other set of at least five landmarks the first five are
     * used in order.
     */
    static KeypointMap five_point(const FaceModel& model);

    int size() const { return static_cast<int>(groups.size()); }

    Eigen::Matrix2Xd apply(const Eigen::Matrix3Xd& projected) const;

    /// Accumulates the gradient of a keypoint cotangent into the (u, v) rows of a projected-vertex gradient.
    void accumulate_backward(const Eigen::Matrix2Xd& keypoint_grad, Eigen::Matrix3Xd& projected_grad) const;
};

/// Reverse-mode derivatives of the geometry stages. Each takes the cotangent of the stage output.
namespace backward {

/// Gradient of apply_pose with respect to its positions, angles and translation.
struct PoseGradient
{
    Eigen::Matrix3Xd positions;
    Eigen::Vector3d angles;
    Eigen::Vector3d translation;
};

PoseGradient apply_pose(const Eigen::Matrix3Xd& positions, const Eigen::Vector3d& angles,
                        const Eigen::Matrix3Xd& posed_grad);

/// Accumulates d(loss)/d(positions) given d(loss)/d(normals).
void vertex_normals(const Eigen::Matrix3Xd& positions, const Eigen::Matrix3Xi& triangles,
                    const Eigen::Matrix3Xd& normals_grad, Eigen::Matrix3Xd& positions_grad);

/// Accumulates d(loss)/d(positions) given d(loss)/d(u, v, depth).
void project(const Eigen::Matrix3Xd& positions, const Camera& camera, const Eigen::Matrix3Xd& projected_grad,
             Eigen::Matrix3Xd& positions_grad);

} // namespace backward

} /* namespace facefit */

#endif /* FACEFIT_MORPHABLE_FACE_HPP */
