/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: src/model_store.cpp
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
#include "facefit/model_store.hpp"
#include "facefit/random.hpp"

#include "Eigen/Dense"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <unordered_set>
#include <vector>

namespace facefit {

namespace {

constexpr std::array<char, 4> model_magic{'M', 'F', 'M', '1'};
constexpr std::size_t header_words = 8;

template <typename Derived>
bool same(const Eigen::DenseBase<Derived>& a, const Eigen::DenseBase<Derived>& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.derived().array() == b.derived().array()).all();
}

double to_float_precision(double value) { return static_cast<double>(static_cast<float>(value)); }

class ByteWriter
{
public:
    void u32(std::uint32_t value)
    {
        for (int shift = 0; shift < 32; shift += 8)
        {
            bytes.push_back(static_cast<char>((value >> shift) & 0xffu));
        }
    }
    void f32(double value) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(value))); }

    template <typename Derived>
    void reals(const Eigen::DenseBase<Derived>& values)
    {
        // Eigen's default column-major storage gives the column-by-column basis layout.
        const auto& dense = values.derived().eval();
        for (Eigen::Index i = 0; i < dense.size(); ++i)
        {
            f32(dense.data()[i]);
        }
    }

    std::string bytes;
};

class ByteReader
{
public:
    explicit ByteReader(std::string_view bytes) : bytes(bytes) {}

    std::uint32_t u32()
    {
        std::uint32_t value = 0;
        for (int k = 0; k < 4; ++k)
        {
            value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + k])) << (8 * k);
        }
        offset += 4;
        return value;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }

    void reals(double* out, std::size_t count)
    {
        for (std::size_t i = 0; i < count; ++i)
        {
            out[i] = f32();
        }
    }

private:
    std::string_view bytes;
    std::size_t offset = 0;
};

// Gaussian filter of a random field on an n x n grid; boundary taps are dropped and the kernel renormalized.
Eigen::VectorXd smooth_random_field(UniformRng& rng, int n)
{
    const int radius = std::max(1, n / 4);
    const double sigma = 0.5 * radius;
    Eigen::VectorXd kernel(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k)
    {
        kernel(k + radius) = std::exp(-0.5 * k * k / (sigma * sigma));
    }

    Eigen::MatrixXd field(n, n);
    for (int r = 0; r < n; ++r)
    {
        for (int c = 0; c < n; ++c)
        {
            field(r, c) = rng.uniform(-1.0, 1.0);
        }
    }

    const auto filter_rows = [&](const Eigen::MatrixXd& in) {
        Eigen::MatrixXd out(n, n);
        for (int r = 0; r < n; ++r)
        {
            for (int c = 0; c < n; ++c)
            {
                double sum = 0.0;
                double weight = 0.0;
                for (int k = std::max(-radius, -c); k <= std::min(radius, n - 1 - c); ++k)
                {
                    sum += kernel(k + radius) * in(r, c + k);
                    weight += kernel(k + radius);
                }
                out(r, c) = sum / weight;
            }
        }
        return out;
    };
    field = filter_rows(field);
    field = filter_rows(field.transpose()).transpose();

    const double peak = field.cwiseAbs().maxCoeff();
    if (peak > 0.0)
    {
        field /= peak;
    }
    Eigen::VectorXd flat(n * n);
    for (int r = 0; r < n; ++r)
    {
        for (int c = 0; c < n; ++c)
        {
            flat(r * n + c) = field(r, c);
        }
    }
    return flat;
}

// Basis of 3V rows whose x, y, z (or r, g, b) components are independent smooth fields.
Eigen::MatrixXd smooth_basis(UniformRng& rng, int n, int columns, double amplitude)
{
    const int vertices = n * n;
    Eigen::MatrixXd basis(3 * vertices, columns);
    for (int col = 0; col < columns; ++col)
    {
        for (int component = 0; component < 3; ++component)
        {
            const Eigen::VectorXd field = smooth_random_field(rng, n);
            for (int v = 0; v < vertices; ++v)
            {
                basis(3 * v + component, col) = amplitude * field(v);
            }
        }
    }
    return basis;
}

// Largest Frobenius norm sum over triangles of the in-plane displacement Jacobians of the given bases.
double inplane_jacobian_bound(const Eigen::Matrix3Xd& rest, const Eigen::Matrix3Xi& triangles,
                              const std::vector<const Eigen::MatrixXd*>& bases)
{
    double bound = 0.0;
    for (int t = 0; t < triangles.cols(); ++t)
    {
        const int i0 = triangles(0, t), i1 = triangles(1, t), i2 = triangles(2, t);
        Eigen::Matrix2d edges;
        edges.col(0) = (rest.col(i1) - rest.col(i0)).head<2>();
        edges.col(1) = (rest.col(i2) - rest.col(i0)).head<2>();
        const Eigen::Matrix2d edges_inv = edges.inverse();
        double sum = 0.0;
        for (const Eigen::MatrixXd* basis : bases)
        {
            for (int k = 0; k < basis->cols(); ++k)
            {
                Eigen::Matrix2d displacement;
                displacement.col(0) = basis->col(k).segment<2>(3 * i1) - basis->col(k).segment<2>(3 * i0);
                displacement.col(1) = basis->col(k).segment<2>(3 * i2) - basis->col(k).segment<2>(3 * i0);
                sum += (displacement * edges_inv).norm();
            }
        }
        bound = std::max(bound, sum);
    }
    return bound;
}

template <typename Derived>
void quantize(Eigen::DenseBase<Derived>& values)
{
    values = values.derived().unaryExpr([](double v) { return to_float_precision(v); });
}

ModelIoError invariant_error(const std::string& message)
{
    return ModelIoError(ModelIoError::Kind::invariant_violation, "invalid face model: " + message);
}

} // namespace

bool operator==(const FaceModel& lhs, const FaceModel& rhs)
{
    return same(lhs.mean_shape, rhs.mean_shape) && same(lhs.id_basis, rhs.id_basis) &&
           same(lhs.exp_basis, rhs.exp_basis) && same(lhs.mean_texture, rhs.mean_texture) &&
           same(lhs.tex_basis, rhs.tex_basis) && same(lhs.triangles, rhs.triangles) &&
           same(lhs.landmark_indices, rhs.landmark_indices) && same(lhs.skin_weights, rhs.skin_weights);
}

std::optional<std::string> find_invariant_violation(const FaceModel& model)
{
    const Eigen::Index rows = model.mean_shape.size();
    if (rows == 0 || rows % 3 != 0)
    {
        return "mean shape length must be a positive multiple of 3";
    }
    const int vertices = model.vertex_count();
    const auto check_basis = [&](const Eigen::MatrixXd& basis, const char* name) -> std::optional<std::string> {
        if (basis.rows() != rows)
        {
            return std::string(name) + " basis must have 3V rows";
        }
        if (basis.cols() < 1)
        {
            return std::string(name) + " basis needs at least one column";
        }
        if (!basis.allFinite())
        {
            return std::string(name) + " basis has non-finite entries";
        }
        return std::nullopt;
    };
    if (!model.mean_shape.allFinite())
    {
        return "mean shape has non-finite entries";
    }
    for (const auto& problem : {check_basis(model.id_basis, "identity"), check_basis(model.exp_basis, "expression"),
                                check_basis(model.tex_basis, "texture")})
    {
        if (problem)
        {
            return problem;
        }
    }
    if (model.mean_texture.size() != rows)
    {
        return "mean texture must have 3V entries";
    }
    if (!model.mean_texture.allFinite() || (model.mean_texture.array() < 0.0).any() ||
        (model.mean_texture.array() > 1.0).any())
    {
        return "mean texture values must lie in [0, 1]";
    }
    if (model.skin_weights.size() != vertices)
    {
        return "skin weights must have V entries";
    }
    if (!model.skin_weights.allFinite() || (model.skin_weights.array() < 0.0).any() ||
        (model.skin_weights.array() > 1.0).any())
    {
        return "skin weights must lie in [0, 1]";
    }
    if (model.triangle_count() < 1)
    {
        return "model needs at least one triangle";
    }
    if ((model.triangles.array() < 0).any() || (model.triangles.array() >= vertices).any())
    {
        return "triangle index out of range";
    }
    if ((model.landmark_indices.array() < 0).any() || (model.landmark_indices.array() >= vertices).any())
    {
        return "landmark index out of range";
    }
    std::unordered_set<int> seen;
    for (const int index : model.landmark_indices)
    {
        if (!seen.insert(index).second)
        {
            return "landmark indices must be distinct";
        }
    }
    return std::nullopt;
}

void validate(const FaceModel& model)
{
    if (const auto problem = find_invariant_violation(model))
    {
        throw invariant_error(*problem);
    }
}

void require_basel_dimensions(const FaceModel& model)
{
    validate(model);
    if (model.vertex_count() != BaselDimensions::vertices || model.id_count() != BaselDimensions::id ||
        model.exp_count() != BaselDimensions::exp || model.tex_count() != BaselDimensions::tex)
    {
        std::ostringstream message;
        message << "expected Basel dimensions V=" << BaselDimensions::vertices << " K_id=" << BaselDimensions::id
                << " K_exp=" << BaselDimensions::exp << " K_tex=" << BaselDimensions::tex << ", got V="
                << model.vertex_count() << " K_id=" << model.id_count() << " K_exp=" << model.exp_count()
                << " K_tex=" << model.tex_count();
        throw invariant_error(message.str());
    }
}

std::string encode_model(const FaceModel& model)
{
    validate(model);
    ByteWriter out;
    out.bytes.append(model_magic.data(), model_magic.size());
    out.u32(static_cast<std::uint32_t>(model.vertex_count()));
    out.u32(static_cast<std::uint32_t>(model.triangle_count()));
    out.u32(static_cast<std::uint32_t>(model.id_count()));
    out.u32(static_cast<std::uint32_t>(model.exp_count()));
    out.u32(static_cast<std::uint32_t>(model.tex_count()));
    out.u32(static_cast<std::uint32_t>(model.landmark_count()));
    out.u32(0);
    out.u32(0);
    out.reals(model.mean_shape);
    out.reals(model.id_basis);
    out.reals(model.exp_basis);
    out.reals(model.mean_texture);
    out.reals(model.tex_basis);
    for (Eigen::Index i = 0; i < model.triangles.size(); ++i)
    {
        out.u32(static_cast<std::uint32_t>(model.triangles.data()[i]));
    }
    for (const int index : model.landmark_indices)
    {
        out.u32(static_cast<std::uint32_t>(index));
    }
    out.reals(model.skin_weights);
    return std::move(out.bytes);
}

FaceModel decode_model(std::string_view bytes)
{
    if (bytes.size() < model_magic.size() ||
        !std::equal(model_magic.begin(), model_magic.end(), bytes.begin()))
    {
        throw ModelIoError(ModelIoError::Kind::bad_magic, "not an MFM1 model file (bad magic)");
    }
    const std::size_t header_bytes = model_magic.size() + 4 * header_words;
    if (bytes.size() < header_bytes)
    {
        throw ModelIoError(ModelIoError::Kind::truncated, "MFM1 file truncated inside the header");
    }
    ByteReader in(bytes.substr(model_magic.size()));
    std::array<std::uint64_t, header_words> header{};
    for (auto& word : header)
    {
        word = in.u32();
    }
    const auto [v, t, k_id, k_exp, k_tex, l, reserved0, reserved1] = header;
    const std::uint64_t rows = 3 * v;
    const std::uint64_t payload_words = rows * (2 + k_id + k_exp + k_tex) + 3 * t + l + v;
    const std::uint64_t expected = header_bytes + 4 * payload_words;
    if (bytes.size() < expected)
    {
        throw ModelIoError(ModelIoError::Kind::truncated,
                           "MFM1 payload truncated: expected " + std::to_string(expected) + " bytes, got " +
                               std::to_string(bytes.size()));
    }
    if (bytes.size() > expected)
    {
        throw ModelIoError(ModelIoError::Kind::length_mismatch,
                           "MFM1 file longer than its header declares: expected " + std::to_string(expected) +
                               " bytes, got " + std::to_string(bytes.size()));
    }
    if (reserved0 != 0 || reserved1 != 0)
    {
        throw invariant_error("reserved header words must be zero");
    }

    FaceModel model;
    const auto n_rows = static_cast<Eigen::Index>(rows);
    model.mean_shape.resize(n_rows);
    model.id_basis.resize(n_rows, static_cast<Eigen::Index>(k_id));
    model.exp_basis.resize(n_rows, static_cast<Eigen::Index>(k_exp));
    model.mean_texture.resize(n_rows);
    model.tex_basis.resize(n_rows, static_cast<Eigen::Index>(k_tex));
    model.triangles.resize(3, static_cast<Eigen::Index>(t));
    model.landmark_indices.resize(static_cast<Eigen::Index>(l));
    model.skin_weights.resize(static_cast<Eigen::Index>(v));

    in.reals(model.mean_shape.data(), rows);
    in.reals(model.id_basis.data(), rows * k_id);
    in.reals(model.exp_basis.data(), rows * k_exp);
    in.reals(model.mean_texture.data(), rows);
    in.reals(model.tex_basis.data(), rows * k_tex);
    const auto read_index = [&] {
        const std::uint32_t raw = in.u32();
        // Out-of-range values become negative and are caught by validation.
        return raw > static_cast<std::uint32_t>(std::numeric_limits<int>::max()) ? -1 : static_cast<int>(raw);
    };
    for (Eigen::Index i = 0; i < model.triangles.size(); ++i)
    {
        model.triangles.data()[i] = read_index();
    }
    for (Eigen::Index i = 0; i < model.landmark_indices.size(); ++i)
    {
        model.landmark_indices(i) = read_index();
    }
    in.reals(model.skin_weights.data(), v);

    validate(model);
    return model;
}

FaceModel load_model(const std::filesystem::path& path)
{
    std::ifstream file(path, std::ios::binary);
    if (!file)
    {
        throw ModelIoError(ModelIoError::Kind::missing_file, "cannot open model file: " + path.string());
    }
    const std::string bytes{std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
    if (file.bad())
    {
        throw ModelIoError(ModelIoError::Kind::io_failure, "error reading model file: " + path.string());
    }
    return decode_model(bytes);
}

void save_model(const FaceModel& model, const std::filesystem::path& path)
{
    const std::string bytes = encode_model(model);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file)
    {
        throw ModelIoError(ModelIoError::Kind::io_failure, "cannot open model file for writing: " + path.string());
    }
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    file.close();
    if (!file)
    {
        throw ModelIoError(ModelIoError::Kind::io_failure, "error writing model file: " + path.string());
    }
}

FaceModel make_toy_model(std::uint64_t seed, int v_grid, int k_id, int k_exp, int k_tex, int n_landmarks)
{
    if (v_grid < 3 || k_id < 1 || k_exp < 1 || k_tex < 1 || n_landmarks < 0 || n_landmarks > v_grid * v_grid)
    {
        throw ModelIoError(ModelIoError::Kind::invalid_argument,
                           "toy model parameters out of range (need v_grid >= 3, basis counts >= 1, "
                           "0 <= n_landmarks <= v_grid^2)");
    }
    constexpr double dome_height = 0.8;
    constexpr double amplitude = 0.05;
    constexpr double max_coefficient = 3.0;
    constexpr double max_inplane_strain = 0.5;

    UniformRng rng(seed);
    const int n = v_grid;
    const int vertices = n * n;

    FaceModel model;
    Eigen::Matrix3Xd rest(3, vertices);
    for (int r = 0; r < n; ++r)
    {
        for (int c = 0; c < n; ++c)
        {
            const double x = -0.5 + static_cast<double>(c) / (n - 1);
            const double y = 0.5 - static_cast<double>(r) / (n - 1);
            rest.col(r * n + c) << x, y, -dome_height * (1.0 - 2.0 * (x * x + y * y));
        }
    }
    model.mean_shape = rest.reshaped();

    model.triangles.resize(3, 2 * (n - 1) * (n - 1));
    int t = 0;
    for (int r = 0; r + 1 < n; ++r)
    {
        for (int c = 0; c + 1 < n; ++c)
        {
            const int top_left = r * n + c;
            const int top_right = top_left + 1;
            const int bottom_left = top_left + n;
            const int bottom_right = bottom_left + 1;
            // Clockwise in the xy-plane, so (p1 - p0) x (p2 - p0) points to -z, towards the camera.
            model.triangles.col(t++) << top_left, top_right, bottom_left;
            model.triangles.col(t++) << top_right, bottom_right, bottom_left;
        }
    }

    model.id_basis = smooth_basis(rng, n, k_id, amplitude);
    model.exp_basis = smooth_basis(rng, n, k_exp, amplitude);
    const double bound =
        max_coefficient * inplane_jacobian_bound(rest, model.triangles, {&model.id_basis, &model.exp_basis});
    if (bound > max_inplane_strain)
    {
        const double scale = max_inplane_strain / bound;
        for (Eigen::MatrixXd* basis : {&model.id_basis, &model.exp_basis})
        {
            for (int v = 0; v < vertices; ++v)
            {
                basis->middleRows<2>(3 * v) *= scale;
            }
        }
    }

    const Eigen::Vector3d base_albedo(0.78, 0.60, 0.50);
    model.mean_texture.resize(3 * vertices);
    for (int channel = 0; channel < 3; ++channel)
    {
        const Eigen::VectorXd field = smooth_random_field(rng, n);
        for (int v = 0; v < vertices; ++v)
        {
            model.mean_texture(3 * v + channel) = std::clamp(base_albedo(channel) + 0.08 * field(v), 0.05, 0.95);
        }
    }
    model.tex_basis = smooth_basis(rng, n, k_tex, amplitude);
    model.skin_weights = Eigen::VectorXd::Ones(vertices);

    std::vector<bool> used(vertices, false);
    model.landmark_indices.resize(n_landmarks);
    for (int k = 0; k < n_landmarks; ++k)
    {
        const double angle = 2.0 * std::numbers::pi * k / n_landmarks;
        const Eigen::Vector2d target(0.5 * std::cos(angle), 0.5 * std::sin(angle));
        int best = -1;
        double best_distance = std::numeric_limits<double>::infinity();
        for (int v = 0; v < vertices; ++v)
        {
            const double distance = (rest.col(v).head<2>() - target).squaredNorm();
            if (!used[v] && distance < best_distance)
            {
                best = v;
                best_distance = distance;
            }
        }
        used[best] = true;
        model.landmark_indices(k) = best;
    }

    quantize(model.mean_shape);
    quantize(model.id_basis);
    quantize(model.exp_basis);
    quantize(model.mean_texture);
    quantize(model.tex_basis);
    return model;
}

FaceModel select_vertices(const FaceModel& model, std::span<const int> kept_vertices)
{
    validate(model);
    const int vertices = model.vertex_count();
    std::vector<int> remap(vertices, -1);
    for (std::size_t i = 0; i < kept_vertices.size(); ++i)
    {
        const int v = kept_vertices[i];
        if (v < 0 || v >= vertices || remap[v] != -1)
        {
            throw ModelIoError(ModelIoError::Kind::invalid_argument, "kept vertex list has an invalid or repeated index");
        }
        remap[v] = static_cast<int>(i);
    }
    const auto kept = static_cast<Eigen::Index>(kept_vertices.size());
    const auto gather_rows = [&](const auto& source) {
        std::decay_t<decltype(source)> result(3 * kept, source.cols());
        for (Eigen::Index i = 0; i < kept; ++i)
        {
            result.middleRows(3 * i, 3) = source.middleRows(3 * kept_vertices[i], 3);
        }
        return result;
    };

    FaceModel cropped;
    cropped.mean_shape = gather_rows(model.mean_shape);
    cropped.id_basis = gather_rows(model.id_basis);
    cropped.exp_basis = gather_rows(model.exp_basis);
    cropped.mean_texture = gather_rows(model.mean_texture);
    cropped.tex_basis = gather_rows(model.tex_basis);
    cropped.skin_weights.resize(kept);
    for (Eigen::Index i = 0; i < kept; ++i)
    {
        cropped.skin_weights(i) = model.skin_weights(kept_vertices[i]);
    }

    std::vector<Eigen::Vector3i> triangles;
    for (int t = 0; t < model.triangle_count(); ++t)
    {
        const Eigen::Vector3i tri(remap[model.triangles(0, t)], remap[model.triangles(1, t)],
                                  remap[model.triangles(2, t)]);
        if ((tri.array() >= 0).all())
        {
            triangles.push_back(tri);
        }
    }
    cropped.triangles.resize(3, static_cast<Eigen::Index>(triangles.size()));
    for (std::size_t t = 0; t < triangles.size(); ++t)
    {
        cropped.triangles.col(static_cast<Eigen::Index>(t)) = triangles[t];
    }

    cropped.landmark_indices.resize(model.landmark_count());
    for (int k = 0; k < model.landmark_count(); ++k)
    {
        const int mapped = remap[model.landmark_indices(k)];
        if (mapped < 0)
        {
            throw ModelIoError(ModelIoError::Kind::invalid_argument, "vertex selection drops a landmark vertex");
        }
        cropped.landmark_indices(k) = mapped;
    }
    validate(cropped);
    return cropped;
}

} /* namespace facefit */
