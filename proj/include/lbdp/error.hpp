#pragma once

#include <stdexcept>
#include <string>

namespace lbdp {

// Base of every error thrown by the library. The CLI maps subclasses onto
// its exit-code contract (2 usage/parse/precondition, 3 resource cap,
// 4 non-convergence).
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Argument outside the mathematical domain of an operation.
class domain_error : public error {
 public:
  explicit domain_error(const std::string& what) : error(what) {}
};

// Input violates a method precondition (e.g. GW on unequal spacing).
class precondition_error : public error {
 public:
  explicit precondition_error(const std::string& what) : error(what) {}
};

// Data carry no information for the requested quantity.
class degenerate_data_error : public error {
 public:
  explicit degenerate_data_error(const std::string& what) : error(what) {}
};

class convergence_error : public error {
 public:
  explicit convergence_error(const std::string& what) : error(what) {}
};

// Simulation event / population caps exceeded.
class resource_cap_error : public error {
 public:
  explicit resource_cap_error(const std::string& what) : error(what) {}
};

class parse_error : public error {
 public:
  explicit parse_error(const std::string& what) : error(what) {}
};

}  // namespace lbdp
