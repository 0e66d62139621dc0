#pragma once

#include <stdexcept>
#include <string>

namespace etmg {

/// Invalid network description, scenario file, or parameter set.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// The operation problem has no feasible point at some closed-loop step.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, int step, std::string family)
      : std::runtime_error(what), step_(step), family_(std::move(family)) {}

  int step() const { return step_; }
  const std::string& constraint_family() const { return family_; }

 private:
  int step_ = -1;
  std::string family_;
};

/// The numerical solver gave up (iteration cap or breakdown).
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what, int step = -1)
      : std::runtime_error(what), step_(step) {}

  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace etmg
