#pragma once

#include <stdexcept>
#include <string>

namespace maskforge {

// Base of every error raised by the library. Callers that only need a
// message can catch this; the subclasses exist so tests and the CLI can
// tell failure classes apart.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class EmptyMaskError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class DegenerateFeatureError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SimulationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class BackendError : public Error {
public:
    using Error::Error;
};

// A model or graph file could not be read or parsed.
class ModelLoadError : public BackendError {
public:
    ModelLoadError(const std::string& file, const std::string& what)
        : BackendError("failed to load '" + file + "': " + what), file_(file) {}

    const std::string& file() const noexcept { return file_; }

private:
    std::string file_;
};

class VersionMismatchError : public BackendError {
public:
    using BackendError::BackendError;
};

class DimMismatchError : public BackendError {
public:
    using BackendError::BackendError;
};

} // namespace maskforge
