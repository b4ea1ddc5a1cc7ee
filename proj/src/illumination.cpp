/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/illumination.cpp
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
#include "facefit/illumination.hpp"
#include "facefit/errors.hpp"

#include <cmath>

namespace facefit {

namespace {

// gamma viewed as 3 x 9: row c holds the coefficients of channel c.
Eigen::Matrix<double, 3, sh_basis_count> channel_rows(const ShCoefficients& gamma)
{
    return gamma.reshaped(sh_basis_count, 3).transpose();
}

void require_same_vertex_count(const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals)
{
    require_dimension(albedo.cols() == normals.cols(), "albedo and normals have different vertex counts");
}

} // namespace

Eigen::Matrix<double, sh_basis_count, 3> sh_basis_jacobian(const Eigen::Vector3d& n)
{
    using namespace sh_constants;
    const double x = n(0), y = n(1), z = n(2);
    Eigen::Matrix<double, sh_basis_count, 3> jacobian;
    jacobian << 0, 0, 0,
        0, band1, 0,
        0, 0, band1,
        band1, 0, 0,
        band2_mixed * y, band2_mixed * x, 0,
        0, band2_mixed * z, band2_mixed * y,
        0, 0, 6.0 * band2_zonal * z,
        band2_mixed * z, 0, band2_mixed * x,
        2.0 * band2_sectoral * x, -2.0 * band2_sectoral * y, 0;
    return jacobian;
}

ShVector sh_basis(const Eigen::Vector3d& normal)
{
    if (!(std::abs(normal.norm() - 1.0) <= 1e-6))
    {
        throw DimensionError("sh_basis expects a unit-length normal");
    }
    return sh_basis_unchecked(normal);
}

Eigen::Matrix3Xd shade_unclamped(const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals,
                                 const ShCoefficients& gamma)
{
    require_same_vertex_count(albedo, normals);
    const auto coefficients = channel_rows(gamma);
    Eigen::Matrix3Xd colors(3, albedo.cols());
    for (Eigen::Index i = 0; i < albedo.cols(); ++i)
    {
        const ShVector basis = sh_basis_unchecked<double>(normals.col(i));
        colors.col(i) = albedo.col(i).cwiseProduct(coefficients * basis);
    }
    return colors;
}

Eigen::Matrix3Xd shade(const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals, const ShCoefficients& gamma)
{
    return shade_unclamped(albedo, normals, gamma).cwiseMax(0.0).cwiseMin(1.0);
}

namespace backward {

ShadeGradient shade(const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals, const ShCoefficients& gamma,
                    const Eigen::Matrix3Xd& colors_grad)
{
    require_same_vertex_count(albedo, normals);
    const auto coefficients = channel_rows(gamma);
    ShadeGradient grad;
    grad.albedo.resize(3, albedo.cols());
    grad.normals.resize(3, albedo.cols());
    Eigen::Matrix<double, 3, sh_basis_count> gamma_rows = Eigen::Matrix<double, 3, sh_basis_count>::Zero();
    for (Eigen::Index i = 0; i < albedo.cols(); ++i)
    {
        const Eigen::Vector3d n = normals.col(i);
        const ShVector basis = sh_basis_unchecked(n);
        const Eigen::Vector3d irradiance = coefficients * basis;
        const Eigen::Vector3d raw = albedo.col(i).cwiseProduct(irradiance);
        const Eigen::Vector3d raw_grad =
            (raw.array() >= 0.0 && raw.array() <= 1.0).select(colors_grad.col(i).array(), 0.0).matrix();
        grad.albedo.col(i) = raw_grad.cwiseProduct(irradiance);
        const Eigen::Vector3d weighted = raw_grad.cwiseProduct(albedo.col(i));
        gamma_rows += weighted * basis.transpose();
        const ShVector basis_grad = coefficients.transpose() * weighted;
        grad.normals.col(i) = sh_basis_jacobian(n).transpose() * basis_grad;
    }
    grad.gamma = gamma_rows.transpose().reshaped();
    return grad;
}

} // namespace backward

} /* namespace facefit */
