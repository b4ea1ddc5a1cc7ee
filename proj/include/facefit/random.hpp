/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/random.hpp
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

#ifndef FACEFIT_RANDOM_HPP
#define FACEFIT_RANDOM_HPP

#include <cstdint>
#include <random>

namespace facefit {

/**
 * Seeded uniform generator with a portable mapping from raw engine output to doubles.
 *
 * std::uniform_real_distribution is implementation-defined, so toy models and test scenes use this
 * instead to stay identical across standard libraries.
 */
class UniformRng
{
public:
    explicit UniformRng(std::uint64_t seed) : engine(seed) {}

    /// Uniform in [0, 1).
    double unit() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
    std::mt19937_64 engine;
};

} /* namespace facefit */

#endif /* FACEFIT_RANDOM_HPP */
