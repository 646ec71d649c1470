#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vstpr {

// Bad configuration or argument. `fields` names the offending keys when known.
class InvalidConfig : public std::invalid_argument {
public:
  explicit InvalidConfig(const std::string& msg, std::vector<std::string> fields = {})
      : std::invalid_argument(msg), fields_(std::move(fields)) {}
  const std::vector<std::string>& fields() const { return fields_; }

private:
  std::vector<std::string> fields_;
};

class FitFailed : public std::runtime_error {
public:
  FitFailed(const std::string& msg, double last_residual)
      : std::runtime_error(msg), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

private:
  double last_residual_;
};

class GeometryMismatch : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace vstpr
