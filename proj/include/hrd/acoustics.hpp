// Lumped-parameter model of a two-order Helmholtz resonator (THR) mounted as a
// side branch on a plane-wave duct.
//
// Geometry is SI (meters) throughout. Each order i has a cylindrical neck
// (radius a_i, length l_i) feeding a cylindrical cavity (radius r_i, length
// h_i). The first order faces the duct; the second hangs off the first cavity.
//
// The acoustic circuit per order is a frequency-dependent resistance R_i*sqrt(w),
// an inertance M_i and a compliance C_i.

#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrd {

inline constexpr std::size_t kOrders = 2;
inline constexpr double kPi = 3.14159265358979323846;

struct PhysicalConstants {
  double air_density = 1.21;      // kg/m^3
  double sound_speed = 343.0;     // m/s
  double air_viscosity = 1.81e-5; // Pa s
  std::array<double, kOrders> end_correction_factor{0.75, 1.05};

  double characteristic_impedance() const { return air_density * sound_speed; }
  void validate() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
  double width() const { return hi - lo; }
  double clamp(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
};

struct OrderGeometry {
  double neck_radius = 0.0;   // a_i
  double neck_length = 0.0;   // l_i
  double cavity_radius = 0.0; // r_i
  double cavity_length = 0.0; // h_i

  double cavity_volume() const { return kPi * cavity_radius * cavity_radius * cavity_length; }
};

struct GeometricParams {
  std::array<OrderGeometry, kOrders> order{};

  // Effective neck-length increase from radiation mass at both neck openings.
  double end_correction(std::size_t i, const PhysicalConstants& pc) const;

  // Throws DomainError when any dimension is non-positive or a_i >= r_i.
  void validate() const;
};

struct GeometryRanges {
  Range neck_radius{0.001, 0.025};
  Range neck_length{0.001, 0.05};
  Range cavity_length{0.001, 0.127};
  double cavity_radius = 0.05;

  bool contains(const OrderGeometry& g) const;
  bool contains(const GeometricParams& gp) const;
};

struct OrderCircuit {
  double resistance = 0.0; // R_i; R_i*sqrt(w) is the acoustic resistance
  double inertance = 0.0;  // M_i
  double compliance = 0.0; // C_i
};

struct EquivalentElectricalParams {
  std::array<OrderCircuit, kOrders> order{};

  // [R1, M1, C1, R2, M2, C2]
  std::array<double, 6> flat() const;
  static EquivalentElectricalParams from_flat(const std::array<double, 6>& v);
  bool all_positive() const;
};

struct CircuitRanges {
  Range resistance{1.0, 170.0};
  Range inertance{1.0, 300.0};
  Range compliance{7e-10, 7e-9};

  bool contains(const EquivalentElectricalParams& eep) const;
  // Range of the k-th entry of EquivalentElectricalParams::flat().
  Range flat_range(std::size_t k) const;
};

struct BranchImpedance {
  double frequency = 0.0; // Hz
  double real = 0.0;      // R_b
  double imag = 0.0;      // X_b

  std::complex<double> value() const { return {real, imag}; }
  double magnitude() const;
};

struct SpectrumGrid {
  double start = 101.0;
  double step = 1.0;
  std::size_t count = 500;

  double frequency(std::size_t i) const { return start + static_cast<double>(i) * step; }
  double stop() const { return frequency(count == 0 ? 0 : count - 1); }
  void validate() const;
  bool operator==(const SpectrumGrid&) const = default;
};

struct StlSpectrum {
  SpectrumGrid grid;
  std::vector<double> values; // dB, values[i] at grid.frequency(i)
};

struct FrequencyBand {
  double lo = 101.0;
  double hi = 600.0;
};

struct Resonance {
  double frequency = 0.0; // Hz
  double stl = 0.0;       // dB at the exact resonance

  double angular() const { return 2.0 * kPi * frequency; }
};

struct ResonanceReport {
  Resonance first;
  Resonance second;
};

// A zero of X_b with its classification.
struct ReactanceZero {
  double frequency = 0.0;
  bool resonance = false; // false: anti-resonance (local maximum of |Z_b|)
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InversionError : public std::runtime_error {
 public:
  enum class Kind { no_physical_root, out_of_range };
  InversionError(Kind kind, std::size_t order, const std::string& what)
      : std::runtime_error(what), kind_(kind), order_(order) {}
  Kind kind() const { return kind_; }
  std::size_t order() const { return order_; }

 private:
  Kind kind_;
  std::size_t order_;
};

class ResonanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// GP <-> EEP algebra

EquivalentElectricalParams gp_to_eep(const GeometricParams& gp, const PhysicalConstants& pc);

// What to do when the neck-radius quadratic has no real root (the requested
// inertance is below the minimum reachable for that resistance).
enum class FoldPolicy {
  reject,  // throw InversionError::no_physical_root
  project, // raise M_i to the fold value and take the double root; flagged
};

struct InversionOptions {
  FoldPolicy fold = FoldPolicy::reject;
  bool allow_out_of_range = false;
};

struct InversionResult {
  GeometricParams gp;
  std::array<bool, kOrders> projected{false, false};
  bool in_range = false;
};

// Coefficients of A a^2 + B a + C0 = 0 for the neck radius of order i.
struct NeckQuadratic {
  double a2 = 0.0;
  double a1 = 0.0;
  double a0 = 0.0;

  double discriminant() const { return a1 * a1 - 4.0 * a2 * a0; }
  double evaluate(double a) const { return (a2 * a + a1) * a + a0; }
  double max_coefficient() const;
};

NeckQuadratic neck_quadratic(const OrderCircuit& circuit, std::size_t order, double cavity_radius,
                             const PhysicalConstants& pc);

// Smallest inertance reachable by any neck radius for this resistance.
double fold_inertance(double resistance, std::size_t order, double cavity_radius,
                      const PhysicalConstants& pc);

// All physical per-order preimages: both quadratic roots that give a positive
// neck radius below the cavity radius. Each entry is a full OrderGeometry.
std::vector<OrderGeometry> order_preimages(const OrderCircuit& circuit, std::size_t order,
                                           double cavity_radius, const PhysicalConstants& pc);

InversionResult invert_eep(const EquivalentElectricalParams& eep, const GeometryRanges& ranges,
                           const PhysicalConstants& pc, const InversionOptions& opts = {});

GeometricParams eep_to_gp(const EquivalentElectricalParams& eep, const GeometryRanges& ranges,
                          const PhysicalConstants& pc, const InversionOptions& opts = {});

// ---------------------------------------------------------------------------
// Forward acoustics

BranchImpedance impedance(const EquivalentElectricalParams& eep, double frequency);

double stl_from_impedance(const BranchImpedance& z, double cross_section, const PhysicalConstants& pc);

double stl_side_branch(const EquivalentElectricalParams& eep, double frequency, double cross_section,
                       const PhysicalConstants& pc);

StlSpectrum stl_spectrum(const EquivalentElectricalParams& eep, double cross_section,
                         const PhysicalConstants& pc, const SpectrumGrid& grid = {});

// Every zero of X_b in the band, ascending, each classified.
std::vector<ReactanceZero> reactance_zeros(const EquivalentElectricalParams& eep,
                                           const FrequencyBand& band = {});

// The two lowest resonances in the band, or nullopt when fewer than two exist.
std::optional<ResonanceReport> find_resonances(const EquivalentElectricalParams& eep,
                                               double cross_section, const PhysicalConstants& pc,
                                               const FrequencyBand& band = {});

// Throws ResonanceError("resonances out of band") when fewer than two exist.
ResonanceReport resonant_frequencies(const EquivalentElectricalParams& eep, double cross_section,
                                     const PhysicalConstants& pc, const FrequencyBand& band = {});

// Sixth-degree resonance polynomial, coefficients ordered from w^6 down to w^0.
std::array<double, 7> eq4_coefficients(const EquivalentElectricalParams& eep);
double eq4_residual(const EquivalentElectricalParams& eep, double omega);

// Average absolute resonant-frequency error in Hz. Returns +infinity when the
// geometry does not produce two resonances in the band.
double aerf(const GeometricParams& gp, double target_f1, double target_f2, double cross_section,
            const PhysicalConstants& pc, const FrequencyBand& band = {});

double aerf(double f1, double f2, double target_f1, double target_f2);

}  // namespace hrd
