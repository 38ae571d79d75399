#pragma once

#include <stdexcept>
#include <string>

#include "tensor.hpp"

namespace spinsim {

enum class Axis { x, y, z };

inline Axis parse_axis(char c) {
  switch (c) {
    case 'x': return Axis::x;
    case 'y': return Axis::y;
    case 'z': return Axis::z;
    default: throw std::invalid_argument(std::string("unknown spin axis: ") + c);
  }
}

inline char axis_char(Axis a) {
  switch (a) {
    case Axis::x: return 'x';
    case Axis::y: return 'y';
    default: return 'z';
  }
}

inline CMat pauli(Axis a) {
  CMat m(2, 2);
  const cdouble i{0.0, 1.0};
  switch (a) {
    case Axis::x: m << 0, 1, 1, 0; break;
    case Axis::y: m << 0, -i, i, 0; break;
    case Axis::z: m << 1, 0, 0, -1; break;
  }
  return m;
}

// Spin-1/2 operator S^a = sigma^a / 2.
inline CMat spin_op(Axis a) { return 0.5 * pauli(a); }

inline CMat identity2() { return CMat::Identity(2, 2); }

// Orthonormal measurement basis for an axis: column 0 is the +1 eigenvector of
// sigma^a (spin value +1/2), column 1 the -1 eigenvector (-1/2). Basis state
// |0> is spin-up along z throughout.
inline CMat axis_basis(Axis a) {
  CMat b(2, 2);
  const cdouble i{0.0, 1.0};
  const double s = 0.70710678118654752440084436210485;
  switch (a) {
    case Axis::z: b << 1, 0, 0, 1; break;
    case Axis::x: b << s, s, s, -s; break;
    case Axis::y: b << s, s, i * s, -i * s; break;
  }
  return b;
}

// Spin value carried by measurement outcome k in any single-site basis.
inline double outcome_spin_value(std::size_t k) { return k == 0 ? 0.5 : -0.5; }

// Projection basis used by the measurement-assisted engine. `rdm` picks each
// site's reduced-density-matrix eigenbasis on the fly.
enum class MeasureBasis { z, x, y, rdm };

inline MeasureBasis parse_measure_basis(const std::string& s) {
  if (s == "z") return MeasureBasis::z;
  if (s == "x") return MeasureBasis::x;
  if (s == "y") return MeasureBasis::y;
  if (s == "rdm") return MeasureBasis::rdm;
  throw std::invalid_argument("unknown measurement basis: " + s);
}

inline std::string measure_basis_name(MeasureBasis b) {
  switch (b) {
    case MeasureBasis::z: return "z";
    case MeasureBasis::x: return "x";
    case MeasureBasis::y: return "y";
    default: return "rdm";
  }
}

inline Axis axis_of(MeasureBasis b) {
  switch (b) {
    case MeasureBasis::z: return Axis::z;
    case MeasureBasis::x: return Axis::x;
    case MeasureBasis::y: return Axis::y;
    default: throw std::logic_error("rdm basis has no fixed axis");
  }
}

}  // namespace spinsim
