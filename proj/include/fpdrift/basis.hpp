#pragma once

// Reference-element kernels: cubic Lagrange shape functions on [0,1] with
// nodes 0, 1/3, 2/3, 1 and a 5-point Gauss-Legendre rule on [0,1].

#include <array>

namespace fpdrift {

template <typename Scalar>
struct GaussLegendre5 {
  static constexpr int size = 5;
  static constexpr std::array<Scalar, 5> nodes = {
      Scalar(0.046910077030668003601), Scalar(0.23076534494715845448), Scalar(0.5),
      Scalar(0.76923465505284154552), Scalar(0.95308992296933199640)};
  static constexpr std::array<Scalar, 5> weights = {
      Scalar(0.11846344252809454376), Scalar(0.23931433524968323402),
      Scalar(0.28444444444444444444), Scalar(0.23931433524968323402),
      Scalar(0.11846344252809454376)};
};

template <typename Scalar>
constexpr std::array<Scalar, 4> cubic_lagrange(Scalar xi) {
  const Scalar a = xi;
  const Scalar b = xi - Scalar(1) / Scalar(3);
  const Scalar c = xi - Scalar(2) / Scalar(3);
  const Scalar d = xi - Scalar(1);
  return {Scalar(-4.5) * b * c * d, Scalar(13.5) * a * c * d, Scalar(-13.5) * a * b * d,
          Scalar(4.5) * a * b * c};
}

/// Derivatives with respect to the reference coordinate.
template <typename Scalar>
constexpr std::array<Scalar, 4> cubic_lagrange_derivative(Scalar xi) {
  const Scalar a = xi;
  const Scalar b = xi - Scalar(1) / Scalar(3);
  const Scalar c = xi - Scalar(2) / Scalar(3);
  const Scalar d = xi - Scalar(1);
  return {Scalar(-4.5) * (c * d + b * d + b * c), Scalar(13.5) * (c * d + a * d + a * c),
          Scalar(-13.5) * (b * d + a * d + a * b), Scalar(4.5) * (b * c + a * c + a * b)};
}

}  // namespace fpdrift
