/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/io.hpp
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

#ifndef FACEFIT_IO_HPP
#define FACEFIT_IO_HPP

#include "facefit/morphable_face.hpp"
#include "facefit/soft_raster.hpp"

#include "Eigen/Core"

#include <filesystem>
#include <string>

namespace facefit {

/**
 * Reads an 8-bit PNG as RGB. Grey, palette and alpha images are converted; 16-bit channels are reduced to
 * 8 bits. Bytes map linearly to [0, 1] by /255, without any gamma transform.
 */
RgbImage read_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are clamped to [0, 1] and rounded to the nearest byte.
void write_png(const RgbImage& image, const std::filesystem::path& path);

/// Byte value written for a real channel value.
inline unsigned char to_byte(double value)
{
    const double clamped = value < 0.0 ? 0.0 : (value > 1.0 ? 1.0 : value);
    return static_cast<unsigned char>(clamped * 255.0 + 0.5);
}

/// Image whose channels are exactly what write_png followed by read_png yields.
RgbImage quantize_to_bytes(const RgbImage& image);

/// Landmark text: one "u v" pair per line, whitespace separated. Blank lines are ignored.
Eigen::Matrix2Xd parse_landmarks(const std::string& text);
Eigen::Matrix2Xd read_landmarks(const std::filesystem::path& path);
std::string format_landmarks(const Eigen::Matrix2Xd& landmarks);
void write_landmarks(const Eigen::Matrix2Xd& landmarks, const std::filesystem::path& path);

/**
 * Wavefront OBJ with per-vertex colours as the common extension "v x y z r g b", followed by 1-based
 * "f a b c" lines.
 */
std::string format_obj(const SurfaceMesh& mesh);
void write_obj(const SurfaceMesh& mesh, const std::filesystem::path& path);

/// Reads the positions, colours and faces of a file written by write_obj. Normals are left empty.
SurfaceMesh parse_obj(const std::string& text);
SurfaceMesh read_obj(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

} /* namespace facefit */

#endif /* FACEFIT_IO_HPP */
