#include "xfer/sw.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace xfer {

void SWParameters::validate() const {
  if (!(epsilon > 0 && sigma > 0 && a > 0 && A > 0)) {
    throw Error("SW parameters for '" + element + "': epsilon, sigma, a, A must be positive");
  }
}

SWParameters default_parameters(const Species& element) {
  SWParameters p;
  p.element = element.symbol;
  p.a = 1.80;
  p.gamma = 1.20;
  p.A = 7.049556277;
  p.B = 0.6022245584;
  p.p = 4.0;
  p.q = 0.0;
  p.cos_theta0 = -1.0 / 3.0;
  if (element.symbol == "Si") {
    p.epsilon = 2.1683;
    p.sigma = 2.0951;
    p.lambda = 21.0;
  } else if (element.symbol == "Ge") {
    p.epsilon = 1.93;
    p.sigma = 2.181;
    p.lambda = 31.0;
  } else {
    throw Error("no built-in Stillinger-Weber parameters for element '" + element.symbol + "'");
  }
  return p;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, SWParameters> read_sw_parameter_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open SW parameter file " + path.string());
  std::map<std::string, SWParameters> out;
  SWParameters* current = nullptr;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::string key, value;
    if (auto eq = line.find('='); eq != std::string::npos) {
      key = trim(line.substr(0, eq));
      value = trim(line.substr(eq + 1));
    } else {
      std::istringstream ss(line);
      ss >> key >> value;
    }
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (key == "element") {
      SWParameters fresh;
      fresh.element = value;
      fresh.source = path.string();
      current = &(out[value] = fresh);
      continue;
    }
    if (!current) throw Error(where + ": parameter before any 'element' line");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw Error(where + ": cannot parse value '" + value + "'");
    }
    if (key == "epsilon") current->epsilon = v;
    else if (key == "sigma") current->sigma = v;
    else if (key == "a") current->a = v;
    else if (key == "lambda") current->lambda = v;
    else if (key == "gamma") current->gamma = v;
    else if (key == "A") current->A = v;
    else if (key == "B") current->B = v;
    else if (key == "p") current->p = v;
    else if (key == "q") current->q = v;
    else if (key == "cos_theta0") current->cos_theta0 = v;
    else throw Error(where + ": unknown key '" + key + "'");
  }
  for (const auto& [el, prm] : out) prm.validate();
  return out;
}

void write_sw_parameter_file(const std::filesystem::path& path,
                             const std::map<std::string, SWParameters>& params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& [el, p] : params) {
    out << "element = " << el << "\n"
        << "epsilon = " << p.epsilon << "\n"
        << "sigma = " << p.sigma << "\n"
        << "a = " << p.a << "\n"
        << "lambda = " << p.lambda << "\n"
        << "gamma = " << p.gamma << "\n"
        << "A = " << p.A << "\n"
        << "B = " << p.B << "\n"
        << "p = " << p.p << "\n"
        << "q = " << p.q << "\n"
        << "cos_theta0 = " << p.cos_theta0 << "\n\n";
  }
}

namespace {

constexpr double kOverlapFloor = 1e-6;

Evaluation sw_evaluate(const Configuration& config, const SWParameters& prm,
                       const NeighborList& nl, bool want_gradient) {
  const double rc = prm.cutoff();
  if (nl.cutoff() < rc) {
    throw Error("neighbor list cutoff " + std::to_string(nl.cutoff()) +
                " is shorter than the SW range " + std::to_string(rc));
  }
  const int n = static_cast<int>(config.size());
  Evaluation ev;
  ev.forces = Forces::Zero(3, n);

  const double Ae = prm.A * prm.epsilon;
  const double le = prm.lambda * prm.epsilon;
  const double gs = prm.gamma * prm.sigma;

  // Per-pair screening factors reused by the three-body loop.
  std::vector<double> screen(nl.pairs().size(), 0.0);
  std::vector<double> dscreen(nl.pairs().size(), 0.0);

  double e2 = 0.0;
  for (std::size_t k = 0; k < nl.pairs().size(); ++k) {
    const auto& pr = nl.pairs()[k];
    if (pr.r <= kOverlapFloor) {
      throw OverlapError("atoms " + std::to_string(pr.i) + " and " + std::to_string(pr.j) +
                         " overlap (r = " + std::to_string(pr.r) + " A)");
    }
    if (pr.r >= rc) continue;
    const double r = pr.r;
    const double inv = 1.0 / (r - rc);
    const double ex = std::exp(prm.sigma * inv);
    const double sr = prm.sigma / r;
    const double srp = std::pow(sr, prm.p);
    const double srq = std::pow(sr, prm.q);
    const double poly = prm.B * srp - srq;
    // Ordered pairs are visited twice.
    e2 += 0.5 * Ae * poly * ex;

    const double g = std::exp(gs * inv);
    screen[k] = g;
    dscreen[k] = -g * gs * inv * inv;

    if (want_gradient) {
      const double dpoly = (-prm.p * prm.B * srp + prm.q * srq) / r;
      const double dphi = Ae * ex * (dpoly - poly * prm.sigma * inv * inv);
      scatter_pair_gradient(pr, (0.5 * dphi / r) * pr.d, ev.forces, ev.virial);
    }
  }

  double e3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const int begin = nl.offset(i);
    const auto list = nl.of(i);
    const int m = static_cast<int>(list.size());
    for (int a = 0; a < m; ++a) {
      const auto& pa = list[a];
      const double ga = screen[begin + a];
      if (ga == 0.0) continue;
      for (int b = a + 1; b < m; ++b) {
        const auto& pb = list[b];
        const double gb = screen[begin + b];
        if (gb == 0.0) continue;
        const double c = pa.d.dot(pb.d) / (pa.r * pb.r);
        const double dc = c - prm.cos_theta0;
        e3 += le * dc * dc * ga * gb;
        if (want_gradient) {
          const Vec3 dc_da = pb.d / (pa.r * pb.r) - c * pa.d / (pa.r * pa.r);
          const Vec3 dc_db = pa.d / (pa.r * pb.r) - c * pb.d / (pb.r * pb.r);
          const double ang = 2.0 * le * dc * ga * gb;
          const double h = le * dc * dc;
          const Vec3 grad_a = ang * dc_da + h * gb * dscreen[begin + a] * pa.d / pa.r;
          const Vec3 grad_b = ang * dc_db + h * ga * dscreen[begin + b] * pb.d / pb.r;
          scatter_pair_gradient(pa, grad_a, ev.forces, ev.virial);
          scatter_pair_gradient(pb, grad_b, ev.forces, ev.virial);
        }
      }
    }
  }
  ev.energy = e2 + e3;
  return ev;
}

}  // namespace

double sw_energy(const Configuration& config, const SWParameters& params,
                 const NeighborList& neighbors) {
  return sw_evaluate(config, params, neighbors, false).energy;
}

Forces sw_forces(const Configuration& config, const SWParameters& params,
                 const NeighborList& neighbors) {
  return sw_evaluate(config, params, neighbors, true).forces;
}

SWPotential::SWPotential(SWParameters params) : params_(std::move(params)) { params_.validate(); }

Evaluation SWPotential::evaluate(const Configuration& config, const NeighborList& neighbors) const {
  return sw_evaluate(config, params_, neighbors, true);
}

}  // namespace xfer
