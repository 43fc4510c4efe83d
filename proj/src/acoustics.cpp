#include "hrd/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hrd {

namespace {

constexpr double kScanStep = 0.1;      // Hz
constexpr double kBisectionTol = 1e-4; // Hz
constexpr double kClassifyOffset = 1.0; // Hz
constexpr double kForwardMatchTol = 1e-6;

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

double viscous_factor(const PhysicalConstants& pc) {
  return std::sqrt(2.0 * pc.air_viscosity * pc.air_density);
}

OrderCircuit order_to_circuit(const OrderGeometry& g, std::size_t i, const PhysicalConstants& pc) {
  const double a = g.neck_radius;
  const double delta =
      (8.0 * a / (3.0 * kPi)) * (2.0 - pc.end_correction_factor[i] * a / g.cavity_radius);
  OrderCircuit c;
  c.resistance = g.neck_length * viscous_factor(pc) / (kPi * a * a * a);
  c.inertance = pc.air_density * (g.neck_length + delta) / (kPi * a * a);
  c.compliance = g.cavity_volume() / (pc.air_density * pc.sound_speed * pc.sound_speed);
  return c;
}

OrderGeometry geometry_from_root(double a, const OrderCircuit& c, double cavity_radius,
                                 const PhysicalConstants& pc) {
  OrderGeometry g;
  g.neck_radius = a;
  g.neck_length = kPi * c.resistance * a * a * a / viscous_factor(pc);
  g.cavity_radius = cavity_radius;
  g.cavity_length = c.compliance * pc.air_density * pc.sound_speed * pc.sound_speed /
                    (kPi * cavity_radius * cavity_radius);
  return g;
}

std::complex<double> branch_impedance(const EquivalentElectricalParams& eep, double f) {
  using namespace std::complex_literals;
  const double w = 2.0 * kPi * f;
  const double sw = std::sqrt(w);
  const auto& o1 = eep.order[0];
  const auto& o2 = eep.order[1];
  const std::complex<double> z2 = o2.resistance * sw + 1i * (w * o2.inertance) +
                                  1.0 / (1i * (w * o2.compliance));
  return o1.resistance * sw + 1i * (w * o1.inertance) + 1.0 / (1i * (w * o1.compliance) + 1.0 / z2);
}

}  // namespace

void PhysicalConstants::validate() const {
  if (!(air_density > 0.0) || !(sound_speed > 0.0) || !(air_viscosity > 0.0) ||
      !(end_correction_factor[0] > 0.0) || !(end_correction_factor[1] > 0.0)) {
    throw DomainError("physical constants must be strictly positive");
  }
}

double GeometricParams::end_correction(std::size_t i, const PhysicalConstants& pc) const {
  const auto& g = order.at(i);
  return (8.0 * g.neck_radius / (3.0 * kPi)) *
         (2.0 - pc.end_correction_factor[i] * g.neck_radius / g.cavity_radius);
}

void GeometricParams::validate() const {
  for (std::size_t i = 0; i < kOrders; ++i) {
    const auto& g = order[i];
    if (!(g.neck_radius > 0.0) || !(g.neck_length > 0.0) || !(g.cavity_radius > 0.0) ||
        !(g.cavity_length > 0.0)) {
      throw DomainError("geometry of order " + std::to_string(i + 1) + " must be strictly positive");
    }
    if (g.neck_radius >= g.cavity_radius) {
      throw DomainError("neck radius of order " + std::to_string(i + 1) +
                        " must be smaller than the cavity radius");
    }
  }
}

bool GeometryRanges::contains(const OrderGeometry& g) const {
  return neck_radius.contains(g.neck_radius) && neck_length.contains(g.neck_length) &&
         cavity_length.contains(g.cavity_length);
}

bool GeometryRanges::contains(const GeometricParams& gp) const {
  return std::all_of(gp.order.begin(), gp.order.end(),
                     [this](const OrderGeometry& g) { return contains(g); });
}

std::array<double, 6> EquivalentElectricalParams::flat() const {
  return {order[0].resistance, order[0].inertance, order[0].compliance,
          order[1].resistance, order[1].inertance, order[1].compliance};
}

EquivalentElectricalParams EquivalentElectricalParams::from_flat(const std::array<double, 6>& v) {
  EquivalentElectricalParams e;
  e.order[0] = {v[0], v[1], v[2]};
  e.order[1] = {v[3], v[4], v[5]};
  return e;
}

bool EquivalentElectricalParams::all_positive() const {
  const auto v = flat();
  return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
}

bool CircuitRanges::contains(const EquivalentElectricalParams& eep) const {
  const auto v = eep.flat();
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!flat_range(k).contains(v[k])) return false;
  }
  return true;
}

Range CircuitRanges::flat_range(std::size_t k) const {
  switch (k % 3) {
    case 0: return resistance;
    case 1: return inertance;
    default: return compliance;
  }
}

double BranchImpedance::magnitude() const { return std::hypot(real, imag); }

void SpectrumGrid::validate() const {
  if (!(start > 0.0) || !(step > 0.0) || count == 0) {
    throw DomainError("spectrum grid needs start > 0, step > 0 and at least one point");
  }
}

// ---------------------------------------------------------------------------

EquivalentElectricalParams gp_to_eep(const GeometricParams& gp, const PhysicalConstants& pc) {
  gp.validate();
  EquivalentElectricalParams eep;
  for (std::size_t i = 0; i < kOrders; ++i) eep.order[i] = order_to_circuit(gp.order[i], i, pc);
  return eep;
}

double NeckQuadratic::max_coefficient() const {
  return std::max({std::abs(a2), std::abs(a1), std::abs(a0)});
}

NeckQuadratic neck_quadratic(const OrderCircuit& c, std::size_t order, double cavity_radius,
                             const PhysicalConstants& pc) {
  const double rho = pc.air_density;
  NeckQuadratic q;
  q.a2 = rho * c.resistance / viscous_factor(pc);
  q.a1 = -(8.0 * rho * pc.end_correction_factor[order] / (3.0 * cavity_radius * kPi * kPi) +
           c.inertance);
  q.a0 = 16.0 * rho / (3.0 * kPi * kPi);
  return q;
}

double fold_inertance(double resistance, std::size_t order, double cavity_radius,
                      const PhysicalConstants& pc) {
  const NeckQuadratic q = neck_quadratic({resistance, 0.0, 1.0}, order, cavity_radius, pc);
  // a1 = -(k + M); the discriminant vanishes at (k + M)^2 = 4 a2 a0.
  const double k = -q.a1;
  return 2.0 * std::sqrt(q.a2 * q.a0) - k;
}

std::vector<OrderGeometry> order_preimages(const OrderCircuit& c, std::size_t order,
                                           double cavity_radius, const PhysicalConstants& pc) {
  std::vector<OrderGeometry> out;
  const NeckQuadratic q = neck_quadratic(c, order, cavity_radius, pc);
  const double disc = q.discriminant();
  if (disc < 0.0) return out;

  // a1 < 0 always, so this form avoids cancellation.
  const double s = 0.5 * (-q.a1 + std::sqrt(disc));
  std::array<double, 2> roots{q.a0 / s, s / q.a2};
  if (roots[0] > roots[1]) std::swap(roots[0], roots[1]);
  const std::size_t n_roots = disc == 0.0 ? 1 : 2;

  for (std::size_t r = 0; r < n_roots; ++r) {
    const double a = roots[r];
    if (!(a > 0.0) || a >= cavity_radius) continue;
    const OrderGeometry g = geometry_from_root(a, c, cavity_radius, pc);
    const OrderCircuit back = order_to_circuit(g, order, pc);
    if (rel_diff(back.resistance, c.resistance) < kForwardMatchTol &&
        rel_diff(back.inertance, c.inertance) < kForwardMatchTol &&
        rel_diff(back.compliance, c.compliance) < kForwardMatchTol) {
      out.push_back(g);
    }
  }
  return out;
}

InversionResult invert_eep(const EquivalentElectricalParams& eep, const GeometryRanges& ranges,
                           const PhysicalConstants& pc, const InversionOptions& opts) {
  if (!eep.all_positive()) throw DomainError("equivalent electrical parameters must be positive");
  const double r = ranges.cavity_radius;
  if (!(r > 0.0)) throw DomainError("cavity radius must be positive");

  InversionResult result;
  result.in_range = true;
  for (std::size_t i = 0; i < kOrders; ++i) {
    const OrderCircuit& c = eep.order[i];
    const NeckQuadratic q = neck_quadratic(c, i, r, pc);
    OrderGeometry chosen;

    if (q.discriminant() < 0.0) {
      if (opts.fold != FoldPolicy::project) {
        throw InversionError(InversionError::Kind::no_physical_root, i,
                             "no physical neck radius for order " + std::to_string(i + 1));
      }
      const double a = std::sqrt(q.a0 / q.a2);
      if (a >= r) {
        throw InversionError(InversionError::Kind::no_physical_root, i,
                             "projected neck radius exceeds cavity radius for order " +
                                 std::to_string(i + 1));
      }
      chosen = geometry_from_root(a, c, r, pc);
      result.projected[i] = true;
    } else {
      const auto pre = order_preimages(c, i, r, pc);
      if (pre.empty()) {
        throw InversionError(InversionError::Kind::no_physical_root, i,
                             "no physical neck radius for order " + std::to_string(i + 1));
      }
      chosen = pre.front();  // smaller neck radius
      if (pre.size() > 1) {
        const bool first_in = ranges.contains(pre[0]);
        const bool second_in = ranges.contains(pre[1]);
        if (second_in && !first_in) chosen = pre[1];
      }
    }

    const bool in_range = ranges.contains(chosen);
    if (!in_range && !opts.allow_out_of_range) {
      throw InversionError(InversionError::Kind::out_of_range, i,
                           "geometry out of range for order " + std::to_string(i + 1));
    }
    result.in_range = result.in_range && in_range;
    result.gp.order[i] = chosen;
  }
  return result;
}

GeometricParams eep_to_gp(const EquivalentElectricalParams& eep, const GeometryRanges& ranges,
                          const PhysicalConstants& pc, const InversionOptions& opts) {
  return invert_eep(eep, ranges, pc, opts).gp;
}

// ---------------------------------------------------------------------------

BranchImpedance impedance(const EquivalentElectricalParams& eep, double frequency) {
  if (!(frequency > 0.0)) throw DomainError("frequency must be positive");
  const auto z = branch_impedance(eep, frequency);
  return {frequency, z.real(), z.imag()};
}

double stl_from_impedance(const BranchImpedance& z, double cross_section, const PhysicalConstants& pc) {
  const double load = pc.characteristic_impedance() / (2.0 * cross_section);
  const double x2 = z.imag * z.imag;
  const double num = x2 + (load + z.real) * (load + z.real);
  const double den = z.real * z.real + x2;
  return 10.0 * std::log10(num / den);
}

double stl_side_branch(const EquivalentElectricalParams& eep, double frequency, double cross_section,
                       const PhysicalConstants& pc) {
  if (!(cross_section > 0.0)) throw DomainError("duct cross-section must be positive");
  return stl_from_impedance(impedance(eep, frequency), cross_section, pc);
}

StlSpectrum stl_spectrum(const EquivalentElectricalParams& eep, double cross_section,
                         const PhysicalConstants& pc, const SpectrumGrid& grid) {
  grid.validate();
  StlSpectrum s;
  s.grid = grid;
  s.values.resize(grid.count);
  for (std::size_t i = 0; i < grid.count; ++i) {
    s.values[i] = stl_side_branch(eep, grid.frequency(i), cross_section, pc);
  }
  return s;
}

std::vector<ReactanceZero> reactance_zeros(const EquivalentElectricalParams& eep,
                                           const FrequencyBand& band) {
  if (!(band.lo > 0.0) || !(band.hi > band.lo)) throw DomainError("invalid frequency band");
  const auto steps = static_cast<std::size_t>(std::floor((band.hi - band.lo) / kScanStep + 0.5));
  auto freq = [&](std::size_t k) {
    return k == steps ? band.hi : band.lo + static_cast<double>(k) * kScanStep;
  };
  auto positive = [&](double f) { return branch_impedance(eep, f).imag() > 0.0; };

  std::vector<ReactanceZero> zeros;
  bool prev = positive(freq(0));
  for (std::size_t k = 1; k <= steps; ++k) {
    const bool cur = positive(freq(k));
    if (cur == prev) continue;
    double lo = freq(k - 1);
    double hi = freq(k);
    while (hi - lo > kBisectionTol) {
      const double mid = 0.5 * (lo + hi);
      if (positive(mid) == prev) lo = mid; else hi = mid;
    }
    const double fz = 0.5 * (lo + hi);
    const double mag = std::abs(branch_impedance(eep, fz));
    const double below = std::abs(branch_impedance(eep, std::max(fz - kClassifyOffset, 0.5 * fz)));
    const double above = std::abs(branch_impedance(eep, fz + kClassifyOffset));
    zeros.push_back({fz, mag < below && mag < above});
    prev = cur;
  }
  return zeros;
}

std::optional<ResonanceReport> find_resonances(const EquivalentElectricalParams& eep,
                                               double cross_section, const PhysicalConstants& pc,
                                               const FrequencyBand& band) {
  std::vector<double> found;
  for (const auto& z : reactance_zeros(eep, band)) {
    if (z.resonance) found.push_back(z.frequency);
    if (found.size() == 2) break;
  }
  if (found.size() < 2) return std::nullopt;
  ResonanceReport rep;
  rep.first = {found[0], stl_side_branch(eep, found[0], cross_section, pc)};
  rep.second = {found[1], stl_side_branch(eep, found[1], cross_section, pc)};
  return rep;
}

ResonanceReport resonant_frequencies(const EquivalentElectricalParams& eep, double cross_section,
                                     const PhysicalConstants& pc, const FrequencyBand& band) {
  auto rep = find_resonances(eep, cross_section, pc, band);
  if (!rep) {
    std::ostringstream msg;
    msg << "resonances out of band [" << band.lo << ", " << band.hi << "] Hz";
    throw ResonanceError(msg.str());
  }
  return *rep;
}

std::array<double, 7> eq4_coefficients(const EquivalentElectricalParams& eep) {
  const double r2 = eep.order[1].resistance;
  const double m1 = eep.order[0].inertance, m2 = eep.order[1].inertance;
  const double c1 = eep.order[0].compliance, c2 = eep.order[1].compliance;
  const double ratio = c1 / c2;
  return {
      m1 * c1 * c1 * m2 * m2,
      m1 * c1 * c1 * r2 * r2,
      -c1 * m2 * (2.0 * m1 * (c1 + c2) / c2 + m2),
      -c1 * r2 * r2,
      m1 * ratio * ratio + 2.0 * (m1 + m2) * ratio + m1 + m2,
      0.0,
      -(c1 + c2) / (c2 * c2),
  };
}

double eq4_residual(const EquivalentElectricalParams& eep, double omega) {
  if (!(omega > 0.0)) throw DomainError("angular frequency must be positive");
  const auto c = eq4_coefficients(eep);
  double sum = 0.0;
  for (int p = 6; p >= 0; --p) sum += c[static_cast<std::size_t>(6 - p)] * std::pow(omega, p);
  return sum;
}

double aerf(double f1, double f2, double target_f1, double target_f2) {
  return 0.5 * (std::abs(f1 - target_f1) + std::abs(f2 - target_f2));
}

double aerf(const GeometricParams& gp, double target_f1, double target_f2, double cross_section,
            const PhysicalConstants& pc, const FrequencyBand& band) {
  const auto rep = find_resonances(gp_to_eep(gp, pc), cross_section, pc, band);
  if (!rep) return std::numeric_limits<double>::infinity();
  return aerf(rep->first.frequency, rep->second.frequency, target_f1, target_f2);
}

}  // namespace hrd
