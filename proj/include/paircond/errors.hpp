#pragma once

#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace paircond {

// Invalid input: bad grid, empty domain, out-of-range parameter.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative solver did not reach its tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : std::runtime_error(format(what, residual, iterations)),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  static std::string format(const std::string& what, double residual, int iterations) {
    std::ostringstream os;
    os << what << " (residual " << std::setprecision(3) << residual << " after " << iterations << " iterations)";
    return os.str();
  }
  double residual_;
  int iterations_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

using WarningSink = std::function<void(const std::string&)>;

inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

}  // namespace paircond
