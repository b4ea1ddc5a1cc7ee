/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: include/facefit/errors.hpp
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

#ifndef FACEFIT_ERRORS_HPP
#define FACEFIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace facefit {

/// Array or coefficient lengths that do not agree.
class DimensionError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// The face left the valid domain of the pipeline, e.g. a vertex at or behind the camera plane.
class DomainError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input (landmark files, templates, parameter files).
class ParseError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values (render settings, fit settings).
class ConfigError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// File-system level failure outside of the model format.
class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline void require_dimension(bool condition, const std::string& message)
{
    if (!condition)
    {
        throw DimensionError(message);
    }
}

} /* namespace facefit */

#endif /* FACEFIT_ERRORS_HPP */
