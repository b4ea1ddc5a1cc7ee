/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/illumination.hpp
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

#ifndef FACEFIT_ILLUMINATION_HPP
#define FACEFIT_ILLUMINATION_HPP

#include "facefit/morphable_face.hpp"

#include "Eigen/Core"

namespace facefit {

/// Real spherical-harmonics constants for bands 0..2.
namespace sh_constants {
inline constexpr double band0 = 0.282095;
inline constexpr double band1 = 0.488603;
inline constexpr double band2_mixed = 1.092548;
inline constexpr double band2_zonal = 0.315392;
inline constexpr double band2_sectoral = 0.546274;
} // namespace sh_constants

inline constexpr int sh_basis_count = 9;

using ShVector = Eigen::Matrix<double, sh_basis_count, 1>;
using ShCoefficients = Eigen::Matrix<double, sh_coefficient_count, 1>;

/**
 * The 9 real SH basis functions at a direction, in the order
 * [Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22]. No unit-length check.
 */
template <typename Scalar>
Eigen::Matrix<Scalar, sh_basis_count, 1> sh_basis_unchecked(const Eigen::Matrix<Scalar, 3, 1>& n)
{
    using namespace sh_constants;
    const Scalar x = n(0), y = n(1), z = n(2);
    Eigen::Matrix<Scalar, sh_basis_count, 1> basis;
    basis << Scalar(band0), band1 * y, band1 * z, band1 * x, band2_mixed * x * y, band2_mixed * y * z,
        band2_zonal * (3.0 * z * z - 1.0), band2_mixed * x * z, band2_sectoral * (x * x - y * y);
    return basis;
}

/// Jacobian d(sh_basis)/d(normal), 9 x 3.
Eigen::Matrix<double, sh_basis_count, 3> sh_basis_jacobian(const Eigen::Vector3d& n);

/// sh_basis_unchecked with a unit-length precondition; throws DimensionError if |n| differs from 1 by more than 1e-6.
ShVector sh_basis(const Eigen::Vector3d& normal);

/// color_ci = albedo_ci * sum_k gamma[9c + k] * Y_k(n_i), without clamping.
Eigen::Matrix3Xd shade_unclamped(const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals,
                                 const ShCoefficients& gamma);

/// shade_unclamped clamped to [0, 1].
Eigen::Matrix3Xd shade(const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals, const ShCoefficients& gamma);

namespace backward {

struct ShadeGradient
{
    Eigen::Matrix3Xd albedo;
    Eigen::Matrix3Xd normals;
    ShCoefficients gamma;
};

/**
 * Gradient of the clamped shade(). The clamp passes the gradient through where the unclamped value lies
 * in [0, 1] and blocks it outside.
 */
ShadeGradient shade(const Eigen::Matrix3Xd& albedo, const Eigen::Matrix3Xd& normals, const ShCoefficients& gamma,
                    const Eigen::Matrix3Xd& colors_grad);

} // namespace backward

} /* namespace facefit */

#endif /* FACEFIT_ILLUMINATION_HPP */
