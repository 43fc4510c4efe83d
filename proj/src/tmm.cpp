#include "hrd/tmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hrd/parallel.hpp"
#include "hrd/text_io.hpp"

namespace hrd::tmm {

TransferMatrix TransferMatrix::operator*(const TransferMatrix& rhs) const {
  return {t11 * rhs.t11 + t12 * rhs.t21, t11 * rhs.t12 + t12 * rhs.t22,
          t21 * rhs.t11 + t22 * rhs.t21, t21 * rhs.t12 + t22 * rhs.t22};
}

void DuctNetwork::validate() const {
  if (!(cross_section > 0.0)) throw DomainError("duct cross-section must be positive");
  if (elements.empty()) throw DomainError("duct network needs at least one element");
  for (const auto& e : elements) {
    if (const auto* seg = std::get_if<StraightSegment>(&e); seg && !(seg->length >= 0.0)) {
      throw DomainError("segment length must be non-negative");
    }
    if (const auto* br = std::get_if<SideBranch>(&e); br && !br->eep.all_positive()) {
      throw DomainError("side branch parameters must be positive");
    }
  }
}

DuctNetwork DuctNetwork::reversed() const {
  DuctNetwork r = *this;
  std::reverse(r.elements.begin(), r.elements.end());
  return r;
}

TransferMatrix element_matrix(const DuctElement& element, double frequency, double cross_section,
                              const PhysicalConstants& pc) {
  using namespace std::complex_literals;
  if (!(frequency > 0.0)) throw DomainError("frequency must be positive");
  if (const auto* seg = std::get_if<StraightSegment>(&element)) {
    const double kl = 2.0 * kPi * frequency / pc.sound_speed * seg->length;
    const double zc = pc.characteristic_impedance() / cross_section;
    const double c = std::cos(kl);
    const double s = std::sin(kl);
    return {c, 1i * (zc * s), 1i * (s / zc), c};
  }
  const auto& branch = std::get<SideBranch>(element);
  const auto z = impedance(branch.eep, frequency).value();
  return {1.0, 0.0, 1.0 / z, 1.0};
}

TransferMatrix cascade(const DuctNetwork& network, double frequency, const PhysicalConstants& pc) {
  TransferMatrix total = TransferMatrix::identity();
  for (const auto& e : network.elements) {
    total = total * element_matrix(e, frequency, network.cross_section, pc);
  }
  return total;
}

double stl_from_matrix(const TransferMatrix& t, double cross_section, const PhysicalConstants& pc) {
  const double zc = pc.characteristic_impedance() / cross_section;
  const auto sum = t.t11 + t.t12 / zc + t.t21 * zc + t.t22;
  return 20.0 * std::log10(std::abs(sum) / 2.0);
}

StlSpectrum network_spectrum(const DuctNetwork& network, const SpectrumGrid& grid,
                             const PhysicalConstants& pc, unsigned threads) {
  network.validate();
  grid.validate();
  StlSpectrum s;
  s.grid = grid;
  s.values.resize(grid.count);
  parallel_for(grid.count, threads, [&](std::size_t i) {
    s.values[i] = stl_from_matrix(cascade(network, grid.frequency(i), pc), network.cross_section, pc);
  });
  return s;
}

std::vector<Peak> find_peaks(const StlSpectrum& spectrum, double min_prominence) {
  const auto& v = spectrum.values;
  std::vector<Peak> peaks;
  const std::size_t n = v.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(v[i] > v[i - 1] && v[i] >= v[i + 1])) continue;
    // Walk outwards until a higher sample or the edge; track the minimum.
    double left_min = v[i];
    for (std::size_t j = i; j-- > 0;) {
      if (v[j] > v[i]) break;
      left_min = std::min(left_min, v[j]);
    }
    double right_min = v[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      if (v[j] > v[i]) break;
      right_min = std::min(right_min, v[j]);
    }
    const double prominence = v[i] - std::max(left_min, right_min);
    if (prominence >= min_prominence) {
      peaks.push_back({spectrum.grid.frequency(i), v[i], prominence});
    }
  }
  return peaks;
}

namespace {

constexpr double kCm = 0.01;

SideBranch branch_from_gp(const Directive& d, const std::string& source, const PhysicalConstants& pc) {
  GeometricParams gp;
  for (std::size_t i = 0; i < kOrders; ++i) {
    const std::string n = std::to_string(i + 1);
    auto& g = gp.order[i];
    g.neck_radius = require_field(d, "a" + n, source) * kCm;
    g.neck_length = require_field(d, "l" + n, source) * kCm;
    g.cavity_length = require_field(d, "h" + n, source) * kCm;
    g.cavity_radius = d.fields.count("r" + n) ? require_field(d, "r" + n, source) * kCm : 0.05;
  }
  try {
    return {gp_to_eep(gp, pc)};
  } catch (const DomainError& e) {
    throw ParseError(source, d.line, e.what());
  }
}

SideBranch branch_from_eep(const Directive& d, const std::string& source) {
  std::array<double, 6> v{};
  const std::array<const char*, 6> keys{"R1", "M1", "C1", "R2", "M2", "C2"};
  for (std::size_t k = 0; k < keys.size(); ++k) v[k] = require_field(d, keys[k], source);
  auto eep = EquivalentElectricalParams::from_flat(v);
  if (!eep.all_positive()) throw ParseError(source, d.line, "branch parameters must be positive");
  return {eep};
}

DuctNetwork parse_network_impl(std::istream& in, const std::string& source, const PhysicalConstants& pc) {
  DuctNetwork net;
  for (const auto& d : read_directives(in, source)) {
    if (d.head.empty()) {
      const auto& [key, value] = *d.fields.begin();
      if (key != "cross_section") throw ParseError(source, d.line, "unknown setting '" + key + "'");
      net.cross_section = parse_double(value, source, d.line);
      if (!(net.cross_section > 0.0)) throw ParseError(source, d.line, "cross_section must be positive");
    } else if (d.head == "segment") {
      const double len = require_field(d, "length", source);
      if (!(len >= 0.0)) throw ParseError(source, d.line, "segment length must be non-negative");
      net.elements.emplace_back(StraightSegment{len});
    } else if (d.head == "branch_gp") {
      net.elements.emplace_back(branch_from_gp(d, source, pc));
    } else if (d.head == "branch_eep") {
      net.elements.emplace_back(branch_from_eep(d, source));
    } else {
      throw ParseError(source, d.line, "unknown directive '" + d.head + "'");
    }
  }
  if (net.elements.empty()) throw ParseError(source, 0, "network has no elements");
  return net;
}

}  // namespace

DuctNetwork parse_network(std::istream& in, const PhysicalConstants& pc) {
  return parse_network_impl(in, "<network>", pc);
}

DuctNetwork load_network(const std::filesystem::path& path, const PhysicalConstants& pc) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open network file '" + path.string() + "'");
  return parse_network_impl(in, path.string(), pc);
}

}  // namespace hrd::tmm
