#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fpdrift {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on an argument (bad sizes, non-positive sigma, ...).
class PreconditionError : public Error {
public:
  using Error::Error;
};

class MeshMismatch : public Error {
public:
  MeshMismatch() : Error("operands live on different meshes") {}
};

class SimulationDiverged : public Error {
public:
  explicit SimulationDiverged(std::size_t step)
      : Error("simulation diverged at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

private:
  std::size_t step_;
};

class NoObservations : public Error {
public:
  NoObservations() : Error("no observations inside the domain") {}
};

/// Numerically singular system in one of the linear solves.
class SolverError : public Error {
public:
  using Error::Error;
};

}  // namespace fpdrift
