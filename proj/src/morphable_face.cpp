/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/morphable_face.cpp
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
#include "facefit/morphable_face.hpp"
#include "facefit/errors.hpp"

#include "Eigen/Geometry"

#include <string>

namespace facefit {

namespace {

// Norms below this are treated as "no incident area" by vertex_normals.
constexpr double min_normal_length = 1e-300;

Eigen::Matrix3Xd as_positions(const Eigen::VectorXd& interleaved)
{
    return Eigen::Map<const Eigen::Matrix3Xd>(interleaved.data(), 3, interleaved.size() / 3);
}

} // namespace

FaceParams FaceParams::zero(const ParamDims& dims)
{
    FaceParams params;
    params.alpha_id = Eigen::VectorXd::Zero(dims.id);
    params.alpha_exp = Eigen::VectorXd::Zero(dims.exp);
    params.alpha_tex = Eigen::VectorXd::Zero(dims.tex);
    return params;
}

FaceParams FaceParams::initial(const ParamDims& dims)
{
    FaceParams params = zero(dims);
    params.translation = Eigen::Vector3d(0.0, 0.0, default_face_depth);
    return params;
}

FaceParams FaceParams::unflatten(const Eigen::VectorXd& flat, const ParamDims& dims)
{
    require_dimension(flat.size() == dims.total(), "parameter vector has " + std::to_string(flat.size()) +
                                                       " entries, model expects " + std::to_string(dims.total()));
    FaceParams params;
    params.alpha_id = flat.segment(dims.id_offset(), dims.id);
    params.alpha_exp = flat.segment(dims.exp_offset(), dims.exp);
    params.alpha_tex = flat.segment(dims.tex_offset(), dims.tex);
    params.gamma = flat.segment<sh_coefficient_count>(dims.gamma_offset());
    params.angles = flat.segment<3>(dims.angles_offset());
    params.translation = flat.segment<3>(dims.translation_offset());
    return params;
}

Eigen::VectorXd FaceParams::flatten() const
{
    const ParamDims d = dims();
    Eigen::VectorXd flat(d.total());
    flat << alpha_id, alpha_exp, alpha_tex, gamma, angles, translation;
    return flat;
}

bool FaceParams::all_finite() const
{
    return alpha_id.allFinite() && alpha_exp.allFinite() && alpha_tex.allFinite() && gamma.allFinite() &&
           angles.allFinite() && translation.allFinite();
}

Eigen::Matrix3Xd evaluate_shape(const FaceModel& model, const Eigen::VectorXd& alpha_id,
                                const Eigen::VectorXd& alpha_exp)
{
    require_dimension(alpha_id.size() == model.id_count(), "alpha_id length does not match the identity basis");
    require_dimension(alpha_exp.size() == model.exp_count(), "alpha_exp length does not match the expression basis");
    const Eigen::VectorXd shape = model.mean_shape + model.id_basis * alpha_id + model.exp_basis * alpha_exp;
    return as_positions(shape);
}

Eigen::Matrix3Xd evaluate_texture_unclamped(const FaceModel& model, const Eigen::VectorXd& alpha_tex)
{
    require_dimension(alpha_tex.size() == model.tex_count(), "alpha_tex length does not match the texture basis");
    const Eigen::VectorXd texture = model.mean_texture + model.tex_basis * alpha_tex;
    return as_positions(texture);
}

Eigen::Matrix3Xd evaluate_texture(const FaceModel& model, const Eigen::VectorXd& alpha_tex)
{
    return evaluate_texture_unclamped(model, alpha_tex).cwiseMax(0.0).cwiseMin(1.0);
}

std::array<Eigen::Matrix3d, 3> rotation_matrix_derivatives(const Eigen::Vector3d& angles)
{
    const double cx = std::cos(angles(0)), sx = std::sin(angles(0));
    const double cy = std::cos(angles(1)), sy = std::sin(angles(1));
    const double cz = std::cos(angles(2)), sz = std::sin(angles(2));
    Eigen::Matrix3d rx, ry, rz, drx, dry, drz;
    rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
    ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
    rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
    drx << 0, 0, 0, 0, -sx, -cx, 0, cx, -sx;
    dry << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
    drz << -sz, -cz, 0, cz, -sz, 0, 0, 0, 0;
    return {rz * ry * drx, rz * dry * rx, drz * ry * rx};
}

Eigen::Matrix3Xd apply_pose(const Eigen::Matrix3Xd& positions, const Eigen::Matrix3d& rotation,
                            const Eigen::Vector3d& translation)
{
    return (rotation * positions).colwise() + translation;
}

Eigen::Matrix3Xd vertex_normals(const Eigen::Matrix3Xd& positions, const Eigen::Matrix3Xi& triangles)
{
    Eigen::Matrix3Xd sums = Eigen::Matrix3Xd::Zero(3, positions.cols());
    for (Eigen::Index t = 0; t < triangles.cols(); ++t)
    {
        const Eigen::Vector3d p0 = positions.col(triangles(0, t));
        const Eigen::Vector3d face_normal =
            (positions.col(triangles(1, t)) - p0).cross(positions.col(triangles(2, t)) - p0);
        for (int k = 0; k < 3; ++k)
        {
            sums.col(triangles(k, t)) += face_normal;
        }
    }
    Eigen::Matrix3Xd normals(3, positions.cols());
    for (Eigen::Index i = 0; i < positions.cols(); ++i)
    {
        const double length = sums.col(i).norm();
        normals.col(i) = length > min_normal_length ? Eigen::Vector3d(sums.col(i) / length) : Eigen::Vector3d::UnitZ();
    }
    return normals;
}

Eigen::Matrix3Xd project(const Eigen::Matrix3Xd& positions, const Camera& camera)
{
    Eigen::Matrix3Xd projected(3, positions.cols());
    const double cu = 0.5 * camera.width;
    const double cv = 0.5 * camera.height;
    for (Eigen::Index i = 0; i < positions.cols(); ++i)
    {
        const double z = positions(2, i);
        if (!(z > 0.0))
        {
            throw DomainError("vertex " + std::to_string(i) + " has non-positive depth " + std::to_string(z));
        }
        projected.col(i) << camera.focal * positions(0, i) / z + cu, cv - camera.focal * positions(1, i) / z, z;
    }
    return projected;
}

Eigen::Matrix2Xd landmark_positions(const FaceModel& model, const Eigen::Matrix3Xd& projected)
{
    require_dimension(projected.cols() == model.vertex_count(), "projected vertex count does not match the model");
    Eigen::Matrix2Xd landmarks(2, model.landmark_count());
    for (int k = 0; k < model.landmark_count(); ++k)
    {
        landmarks.col(k) = projected.col(model.landmark_indices(k)).head<2>();
    }
    return landmarks;
}

KeypointMap KeypointMap::landmarks(const FaceModel& model)
{
    KeypointMap map;
    for (const int index : model.landmark_indices)
    {
        map.groups.push_back({index});
    }
    return map;
}

KeypointMap KeypointMap::five_point(const FaceModel& model)
{
    const auto& lm = model.landmark_indices;
    if (lm.size() == 68)
    {
        return {{{lm(36), lm(39)}, {lm(42), lm(45)}, {lm(30)}, {lm(48)}, {lm(54)}}};
    }
    require_dimension(lm.size() >= 5, "five-point keypoints need a model with at least five landmarks");
    return {{{lm(0)}, {lm(1)}, {lm(2)}, {lm(3)}, {lm(4)}}};
}

Eigen::Matrix2Xd KeypointMap::apply(const Eigen::Matrix3Xd& projected) const
{
    Eigen::Matrix2Xd keypoints = Eigen::Matrix2Xd::Zero(2, size());
    for (int k = 0; k < size(); ++k)
    {
        for (const int vertex : groups[k])
        {
            keypoints.col(k) += projected.col(vertex).head<2>();
        }
        keypoints.col(k) /= static_cast<double>(groups[k].size());
    }
    return keypoints;
}

void KeypointMap::accumulate_backward(const Eigen::Matrix2Xd& keypoint_grad, Eigen::Matrix3Xd& projected_grad) const
{
    for (int k = 0; k < size(); ++k)
    {
        const double share = 1.0 / static_cast<double>(groups[k].size());
        for (const int vertex : groups[k])
        {
            projected_grad.col(vertex).head<2>() += share * keypoint_grad.col(k);
        }
    }
}

namespace backward {

PoseGradient apply_pose(const Eigen::Matrix3Xd& positions, const Eigen::Vector3d& angles,
                        const Eigen::Matrix3Xd& posed_grad)
{
    const Eigen::Matrix3d rotation = rotation_matrix(angles);
    const Eigen::Matrix3d rotation_grad = posed_grad * positions.transpose();
    const auto derivatives = rotation_matrix_derivatives(angles);
    PoseGradient grad;
    grad.positions = rotation.transpose() * posed_grad;
    grad.translation = posed_grad.rowwise().sum();
    for (int k = 0; k < 3; ++k)
    {
        grad.angles(k) = rotation_grad.cwiseProduct(derivatives[k]).sum();
    }
    return grad;
}

void vertex_normals(const Eigen::Matrix3Xd& positions, const Eigen::Matrix3Xi& triangles,
                    const Eigen::Matrix3Xd& normals_grad, Eigen::Matrix3Xd& positions_grad)
{
    std::vector<Eigen::Vector3d> face_normals(static_cast<std::size_t>(triangles.cols()));
    Eigen::Matrix3Xd sums = Eigen::Matrix3Xd::Zero(3, positions.cols());
    for (Eigen::Index t = 0; t < triangles.cols(); ++t)
    {
        const Eigen::Vector3d p0 = positions.col(triangles(0, t));
        face_normals[t] = (positions.col(triangles(1, t)) - p0).cross(positions.col(triangles(2, t)) - p0);
        for (int k = 0; k < 3; ++k)
        {
            sums.col(triangles(k, t)) += face_normals[t];
        }
    }
    // n = s / |s|  =>  ds = (I - n n^T) dn / |s|
    Eigen::Matrix3Xd sums_grad = Eigen::Matrix3Xd::Zero(3, positions.cols());
    for (Eigen::Index i = 0; i < positions.cols(); ++i)
    {
        const double length = sums.col(i).norm();
        if (length > min_normal_length)
        {
            const Eigen::Vector3d n = sums.col(i) / length;
            const Eigen::Vector3d g = normals_grad.col(i);
            sums_grad.col(i) = (g - n * n.dot(g)) / length;
        }
    }
    for (Eigen::Index t = 0; t < triangles.cols(); ++t)
    {
        const Eigen::Vector3d face_grad =
            sums_grad.col(triangles(0, t)) + sums_grad.col(triangles(1, t)) + sums_grad.col(triangles(2, t));
        const Eigen::Vector3d p0 = positions.col(triangles(0, t));
        const Eigen::Vector3d e1 = positions.col(triangles(1, t)) - p0;
        const Eigen::Vector3d e2 = positions.col(triangles(2, t)) - p0;
        const Eigen::Vector3d e1_grad = e2.cross(face_grad);
        const Eigen::Vector3d e2_grad = face_grad.cross(e1);
        positions_grad.col(triangles(1, t)) += e1_grad;
        positions_grad.col(triangles(2, t)) += e2_grad;
        positions_grad.col(triangles(0, t)) -= e1_grad + e2_grad;
    }
}

void project(const Eigen::Matrix3Xd& positions, const Camera& camera, const Eigen::Matrix3Xd& projected_grad,
             Eigen::Matrix3Xd& positions_grad)
{
    const double f = camera.focal;
    for (Eigen::Index i = 0; i < positions.cols(); ++i)
    {
        const double x = positions(0, i), y = positions(1, i), z = positions(2, i);
        const double gu = projected_grad(0, i), gv = projected_grad(1, i), gz = projected_grad(2, i);
        positions_grad(0, i) += gu * f / z;
        positions_grad(1, i) -= gv * f / z;
        positions_grad(2, i) += gz - gu * f * x / (z * z) + gv * f * y / (z * z);
    }
}

} // namespace backward

} /* namespace facefit */
