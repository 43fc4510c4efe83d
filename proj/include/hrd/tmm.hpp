// Plane-wave transfer matrices for ducts carrying side-branch resonators.
//
// Two-port convention: [p_in, U_in]^T = T [p_out, U_out]^T with acoustic
// pressure p and volume velocity U. Elements are listed source side first.

#pragma once

#include <complex>
#include <filesystem>
#include <istream>
#include <variant>
#include <vector>

#include "hrd/acoustics.hpp"

namespace hrd::tmm {

struct TransferMatrix {
  std::complex<double> t11{1.0, 0.0};
  std::complex<double> t12{0.0, 0.0};
  std::complex<double> t21{0.0, 0.0};
  std::complex<double> t22{1.0, 0.0};

  static TransferMatrix identity() { return {}; }
  std::complex<double> determinant() const { return t11 * t22 - t12 * t21; }
  TransferMatrix operator*(const TransferMatrix& rhs) const;
};

struct StraightSegment {
  double length = 0.0; // m
};

struct SideBranch {
  EquivalentElectricalParams eep;
};

using DuctElement = std::variant<StraightSegment, SideBranch>;

struct DuctNetwork {
  double cross_section = 0.01; // m^2
  std::vector<DuctElement> elements;

  void validate() const;
  DuctNetwork reversed() const;
};

TransferMatrix element_matrix(const DuctElement& element, double frequency, double cross_section,
                              const PhysicalConstants& pc);

TransferMatrix cascade(const DuctNetwork& network, double frequency, const PhysicalConstants& pc);

// Four-pole transmission loss between anechoic terminations.
double stl_from_matrix(const TransferMatrix& t, double cross_section, const PhysicalConstants& pc);

StlSpectrum network_spectrum(const DuctNetwork& network, const SpectrumGrid& grid,
                             const PhysicalConstants& pc, unsigned threads = 1);

struct Peak {
  double frequency = 0.0;
  double stl = 0.0;
  double prominence = 0.0;
};

// Local maxima of a sampled curve whose prominence (height above the higher
// of the two flanking minima) is at least min_prominence dB.
std::vector<Peak> find_peaks(const StlSpectrum& spectrum, double min_prominence = 3.0);

// Network description, one directive per line ('#' starts a comment):
//   cross_section = <m^2>
//   segment length=<m>
//   branch_gp a1=<cm> l1=<cm> h1=<cm> a2=<cm> l2=<cm> h2=<cm> [r1=<cm>] [r2=<cm>]
//   branch_eep R1=<> M1=<> C1=<> R2=<> M2=<> C2=<>     (SI)
// Errors are reported as ParseError with the offending line number.
DuctNetwork parse_network(std::istream& in, const PhysicalConstants& pc);
DuctNetwork load_network(const std::filesystem::path& path, const PhysicalConstants& pc);

}  // namespace hrd::tmm
