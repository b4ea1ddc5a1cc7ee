/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/io.cpp
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
#include "facefit/io.hpp"
#include "facefit/errors.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <memory>
#include <sstream>
#include <vector>

namespace facefit {

namespace {

struct FileCloser
{
    void operator()(std::FILE* file) const { std::fclose(file); }
};

using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr file(std::fopen(path.string().c_str(), mode));
    if (!file)
    {
        throw IoError("cannot open " + path.string());
    }
    return file;
}

[[noreturn]] void png_error_handler(png_structp, png_const_charp message)
{
    throw IoError(std::string("PNG error: ") + message);
}

void png_warning_handler(png_structp, png_const_charp) {}

std::vector<double> numbers_of_line(const std::string& line, int line_number)
{
    std::istringstream in(line);
    in.imbue(std::locale::classic());
    std::vector<double> values;
    std::string token;
    while (in >> token)
    {
        std::size_t used = 0;
        double value = 0.0;
        try
        {
            value = std::stod(token, &used);
        }
        catch (const std::exception&)
        {
            used = 0;
        }
        if (used != token.size())
        {
            throw ParseError("line " + std::to_string(line_number) + ": '" + token + "' is not a number");
        }
        values.push_back(value);
    }
    return values;
}

void write_all(const std::string& text, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size())))
    {
        throw IoError("cannot write " + path.string());
    }
}

} // namespace

RgbImage read_png(const std::filesystem::path& path)
{
    FilePtr file = open_file(path, "rb");
    unsigned char signature[8] = {};
    if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0)
    {
        throw IoError(path.string() + " is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    if (!png)
    {
        throw IoError("cannot initialise the PNG reader");
    }
    png_infop info = png_create_info_struct(png);
    struct Guard
    {
        png_structp& png;
        png_infop& info;
        ~Guard() { png_destroy_read_struct(&png, &info, nullptr); }
    } guard{png, info};
    if (!info)
    {
        throw IoError("cannot initialise the PNG reader");
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16)
        png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    if (stride != static_cast<std::size_t>(width) * 3)
    {
        throw IoError(path.string() + ": unsupported PNG layout");
    }
    std::vector<unsigned char> bytes(stride * static_cast<std::size_t>(height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
    {
        rows[static_cast<std::size_t>(y)] = bytes.data() + stride * static_cast<std::size_t>(y);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    RgbImage image;
    image.width = width;
    image.height = height;
    image.pixels.resize(static_cast<Eigen::Index>(width) * height, 3);
    for (Eigen::Index i = 0; i < image.pixels.rows(); ++i)
    {
        for (int c = 0; c < 3; ++c)
        {
            image.pixels(i, c) = bytes[static_cast<std::size_t>(3 * i + c)] / 255.0;
        }
    }
    return image;
}

void write_png(const RgbImage& image, const std::filesystem::path& path)
{
    require_dimension(image.width > 0 && image.height > 0 && image.pixels.rows() == image.pixel_count(),
                      "image to write has an inconsistent size");
    std::vector<unsigned char> bytes(static_cast<std::size_t>(image.pixel_count()) * 3);
    for (Eigen::Index i = 0; i < image.pixels.rows(); ++i)
    {
        for (int c = 0; c < 3; ++c)
        {
            bytes[static_cast<std::size_t>(3 * i + c)] = to_byte(image.pixels(i, c));
        }
    }

    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    if (!png)
    {
        throw IoError("cannot initialise the PNG writer");
    }
    png_infop info = png_create_info_struct(png);
    struct Guard
    {
        png_structp& png;
        png_infop& info;
        ~Guard() { png_destroy_write_struct(&png, &info); }
    } guard{png, info};
    if (!info)
    {
        throw IoError("cannot initialise the PNG writer");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
    {
        png_write_row(png, bytes.data() + static_cast<std::size_t>(y) * image.width * 3);
    }
    png_write_end(png, nullptr);
    if (std::fflush(file.get()) != 0)
    {
        throw IoError("cannot write " + path.string());
    }
}

RgbImage quantize_to_bytes(const RgbImage& image)
{
    RgbImage out = image;
    out.pixels = image.pixels.unaryExpr([](double v) { return to_byte(v) / 255.0; });
    return out;
}

Eigen::Matrix2Xd parse_landmarks(const std::string& text)
{
    std::istringstream in(text);
    std::vector<Eigen::Vector2d> points;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line))
    {
        ++line_number;
        const std::vector<double> values = numbers_of_line(line, line_number);
        if (values.empty())
        {
            continue;
        }
        if (values.size() != 2)
        {
            throw ParseError("line " + std::to_string(line_number) + ": expected \"u v\"");
        }
        points.emplace_back(values[0], values[1]);
    }
    Eigen::Matrix2Xd landmarks(2, static_cast<Eigen::Index>(points.size()));
    for (std::size_t k = 0; k < points.size(); ++k)
    {
        landmarks.col(static_cast<Eigen::Index>(k)) = points[k];
    }
    return landmarks;
}

Eigen::Matrix2Xd read_landmarks(const std::filesystem::path& path) { return parse_landmarks(read_text_file(path)); }

std::string format_landmarks(const Eigen::Matrix2Xd& landmarks)
{
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << std::setprecision(17);
    for (Eigen::Index k = 0; k < landmarks.cols(); ++k)
    {
        out << landmarks(0, k) << ' ' << landmarks(1, k) << '\n';
    }
    return out.str();
}

void write_landmarks(const Eigen::Matrix2Xd& landmarks, const std::filesystem::path& path)
{
    write_all(format_landmarks(landmarks), path);
}

std::string format_obj(const SurfaceMesh& mesh)
{
    require_dimension(mesh.colors.cols() == mesh.positions.cols(), "mesh colours and positions differ in count");
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << std::setprecision(9);
    for (Eigen::Index i = 0; i < mesh.positions.cols(); ++i)
    {
        out << "v " << mesh.positions(0, i) << ' ' << mesh.positions(1, i) << ' ' << mesh.positions(2, i) << ' '
            << mesh.colors(0, i) << ' ' << mesh.colors(1, i) << ' ' << mesh.colors(2, i) << '\n';
    }
    for (Eigen::Index t = 0; t < mesh.triangles.cols(); ++t)
    {
        out << "f " << mesh.triangles(0, t) + 1 << ' ' << mesh.triangles(1, t) + 1 << ' ' << mesh.triangles(2, t) + 1
            << '\n';
    }
    return out.str();
}

void write_obj(const SurfaceMesh& mesh, const std::filesystem::path& path) { write_all(format_obj(mesh), path); }

SurfaceMesh parse_obj(const std::string& text)
{
    std::istringstream in(text);
    std::vector<Eigen::Matrix<double, 6, 1>> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line))
    {
        ++line_number;
        if (line.empty() || line[0] == '#')
        {
            continue;
        }
        const std::string tag = line.substr(0, line.find(' '));
        const std::vector<double> values = numbers_of_line(line.substr(tag.size()), line_number);
        if (tag == "v")
        {
            if (values.size() != 6)
            {
                throw ParseError("line " + std::to_string(line_number) + ": expected \"v x y z r g b\"");
            }
            vertices.emplace_back(Eigen::Map<const Eigen::Matrix<double, 6, 1>>(values.data()));
        }
        else if (tag == "f")
        {
            if (values.size() != 3)
            {
                throw ParseError("line " + std::to_string(line_number) + ": expected a triangle");
            }
            faces.emplace_back(static_cast<int>(values[0]) - 1, static_cast<int>(values[1]) - 1,
                               static_cast<int>(values[2]) - 1);
        }
    }
    SurfaceMesh mesh;
    mesh.positions.resize(3, static_cast<Eigen::Index>(vertices.size()));
    mesh.colors.resize(3, static_cast<Eigen::Index>(vertices.size()));
    for (std::size_t i = 0; i < vertices.size(); ++i)
    {
        mesh.positions.col(static_cast<Eigen::Index>(i)) = vertices[i].head<3>();
        mesh.colors.col(static_cast<Eigen::Index>(i)) = vertices[i].tail<3>();
    }
    mesh.triangles.resize(3, static_cast<Eigen::Index>(faces.size()));
    for (std::size_t t = 0; t < faces.size(); ++t)
    {
        mesh.triangles.col(static_cast<Eigen::Index>(t)) = faces[t];
    }
    return mesh;
}

SurfaceMesh read_obj(const std::filesystem::path& path) { return parse_obj(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::string& text, const std::filesystem::path& path) { write_all(text, path); }

} /* namespace facefit */
