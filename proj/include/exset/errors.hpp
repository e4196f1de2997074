#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace exset {

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Operands live on different meshes.
class MeshMismatch : public Error
{
public:
  explicit MeshMismatch(const std::string& where)
    : Error(where + ": operands are defined on different meshes")
  {}
};

/// Ill-conditioned or otherwise failed numerical step.
class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Invalid user configuration. `path` is a JSON-pointer-like location.
class ConfigError : public Error
{
public:
  ConfigError(std::string path, const std::string& message)
    : Error(path + ": " + message), path_(std::move(path))
  {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

} // namespace exset
