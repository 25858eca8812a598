#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace xfer::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw UsageError(key + ": expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw UsageError(key + ": expected a number, got '" + text + "'");
  return v;
}

}  // namespace

const std::map<std::string, KeyInfo>& RunConfig::registry() {
  static const std::map<std::string, KeyInfo> keys = {
      {"run.seed", {"0", "global seed"}},
      {"run.output_dir", {"run", "run directory"}},
      {"run.workers", {"1", "worker threads"}},

      {"generate.element", {"", "element to simulate (Si, Ge, C, Sn)"}},
      {"generate.temps", {"300:3600:300", "temperatures, K", "300:3600:100"}},
      {"generate.equilibration_steps", {"10000", "NPT steps", "4000000"}},
      {"generate.production_steps", {"20000", "NVT steps", "1000000"}},
      {"generate.sample_every", {"1000", "steps between samples"}},
      {"generate.replicas", {"2", "diamond supercell repetitions"}},
      {"generate.lattice_constant", {"0", "initial lattice constant, 0 = nominal"}},
      {"generate.timestep", {"1.0", "fs"}},
      {"generate.thermostat_damping", {"100", "fs"}},
      {"generate.barostat_damping", {"1000", "fs"}},
      {"generate.pressure", {"0", "bar"}},
      {"generate.sw_parameters", {"", "optional SW parameter file"}},

      {"model.cutoff", {"5.0", "Å"}},
      {"model.n_radial_basis", {"8", ""}},
      {"model.n_angular_basis", {"6", ""}},
      {"model.n_angular_radial", {"4", ""}},
      {"model.embedding_dim", {"8", ""}},
      {"model.hidden_layer_widths", {"64,64", ""}},
      {"model.activation", {"silu", "silu, tanh or softplus"}},

      {"train.element", {"Si", "element of the pretraining pool"}},
      {"train.batch_size", {"0", "0 = min(8, training-set size)"}},
      {"train.max_epochs", {"2000", ""}},
      {"train.patience", {"200", "early-stopping patience, epochs"}},
      {"train.learning_rates", {"1e-3,3e-4,1e-4", "grid"}},
      {"train.decays", {"1,0.995,0.99", "grid"}},
      {"train.frozen_groups", {"", "embedding, layer0, layer1, ..., output"}},
      {"train.n_train", {"0", "0 = everything not used for validation or test"}},
      {"train.validation_per_temperature", {"5", ""}},
      {"train.test_per_temperature", {"10", ""}},
      {"train.stratify", {"true", "stratify draws by temperature"}},

      {"data.pool", {"", "manifest file, run directory or extxyz file"}},
      {"data.test_pool", {"", "separate held-out test pool"}},
      {"data.noise_sigma", {"1e-5", "Å, position noise on load"}},
      {"data.t_min", {"", "K"}},
      {"data.t_max", {"", "K"}},
      {"data.kinds", {"", "keep only these kinds"}},
      {"data.exclude_kinds", {"", ""}},

      {"transfer.source", {"", "source checkpoint"}},
      {"transfer.target_element", {"Ge", ""}},
      {"transfer.train_sizes", {"1,10,50", ""}},
      {"transfer.train_size", {"1", "single-model transfer"}},
      {"transfer.replica", {"0", "single-model transfer"}},
      {"transfer.replicas", {"5", ""}},
      {"transfer.n_validation", {"10", ""}},
      {"transfer.test_per_temperature", {"4", "", "10"}},
      {"transfer.arm", {"tl", "tl or scratch (single-model transfer)"}},

      {"md.potential", {"sw:Si", "sw:<element> or a checkpoint"}},
      {"md.structure", {"", "initial extxyz; empty = diamond supercell"}},
      {"md.frame", {"0", "frame of md.structure"}},
      {"md.element", {"", "diamond element; empty = potential's element"}},
      {"md.replicas", {"2", ""}},
      {"md.lattice_constant", {"0", "0 = nominal"}},
      {"md.ensemble", {"nvt", "nve, langevin, nvt, npt"}},
      {"md.timestep", {"1.0", "fs"}},
      {"md.temperature", {"300", "K"}},
      {"md.pressure", {"0", "bar"}},
      {"md.thermostat_damping", {"100", "fs"}},
      {"md.barostat_damping", {"1000", "fs"}},
      {"md.friction", {"1.0", "1/ps"}},
      {"md.skin", {"0.5", "Å"}},
      {"md.steps", {"10000", ""}},
      {"md.sample_every", {"100", ""}},

      {"analyze.model", {"", "checkpoint"}},
      {"analyze.models", {"", "checkpoints or directories"}},
      {"analyze.reference", {"sw:Ge", "reference potential for fig3"}},
      {"analyze.matrix", {"", "matrix run directory"}},
      {"analyze.train_size", {"0", "matrix cells to use, 0 = smallest size"}},
      {"analyze.element", {"Ge", ""}},
      {"analyze.temps", {"300:3300:300", "K"}},
      {"analyze.samples_per_t", {"20", "", "50"}},
      {"analyze.runs", {"20", "", "100"}},
      {"analyze.duration", {"20ps", "", "100ps"}},
      {"analyze.threshold", {"2.0", "Å"}},
      {"analyze.temperature", {"1200", "K"}},
      {"analyze.timestep", {"1.0", "fs", "0.5"}},
      {"analyze.friction", {"1.0", "1/ps"}},
      {"analyze.structure", {"", "initial extxyz for fig6/table1; empty = diamond"}},
      {"analyze.discard", {"0.1", "leading fraction of each trajectory left out of fig6"}},
      {"analyze.sample_every", {"100", "steps between fig6 frames"}},
      {"analyze.rdf_bin", {"0.05", "Å"}},
      {"analyze.rdf_max", {"5.0", "Å"}},
      {"analyze.adf_bins", {"180", ""}},
      {"analyze.adf_cutoff", {"0", "Å, 0 = first RDF minimum"}},
      {"analyze.pdos_displacement", {"0.01", "Å"}},
      {"analyze.pdos_smearing", {"0.3", "THz"}},
      {"analyze.pdos_noise", {"1e-5", "Å, noise on the relaxed supercell"}},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& [k, info] : registry()) values_[k] = info.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!registry().count(key)) throw UsageError("unknown configuration key '" + key + "'");
  values_[key] = trim(value);
  explicit_.insert(key);
}

void RunConfig::load_ini_text(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError("config: " + std::string(e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw UsageError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

void RunConfig::load_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_ini_text(ss.str());
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::apply_paper_scale() {
  for (const auto& [k, info] : registry()) {
    if (info.paper_value && !is_set(k)) values_[k] = *info.paper_value;
  }
}

bool RunConfig::any_set(const std::string& section) const {
  for (const auto& k : explicit_) {
    if (k.rfind(section + ".", 0) == 0) return true;
  }
  return false;
}

const std::string& RunConfig::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::num(const std::string& key) const { return to_double(key, str(key)); }

long long RunConfig::integer(const std::string& key) const {
  const double v = num(key);
  if (v != std::floor(v)) throw UsageError(key + ": expected an integer, got '" + str(key) + "'");
  return static_cast<long long>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::num_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : list(key)) out.push_back(to_double(key, s));
  return out;
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : num_list(key)) {
    if (v != std::floor(v)) throw UsageError(key + ": expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << "\n";
      out << "[" << s << "]\n";
      section = s;
    }
    out << k.substr(dot + 1) << " = " << v << "\n";
  }
  return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path.string());
  f << to_ini();
}

std::vector<double> parse_temperatures(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<double> p;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) p.push_back(to_double("temperatures", trim(item)));
    if (p.size() != 3 || !(p[2] > 0.0) || p[1] < p[0]) {
      throw UsageError("temperatures: expected start:stop:step, got '" + text + "'");
    }
    const long n = std::lround(std::floor((p[1] - p[0]) / p[2] + 1e-9));
    for (long k = 0; k <= n; ++k) out.push_back(p[0] + k * p[2]);
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!trim(item).empty()) out.push_back(to_double("temperatures", trim(item)));
    }
  }
  if (out.empty()) throw UsageError("no temperatures given");
  for (double t : out) {
    if (!(t > 0.0)) throw UsageError("temperatures must be positive");
  }
  return out;
}

double parse_duration_ps(const std::string& text) {
  const std::string t = trim(text);
  struct Unit {
    const char* suffix;
    double to_ps;
  };
  for (const Unit u : {Unit{"ps", 1.0}, Unit{"fs", 1e-3}, Unit{"ns", 1e3}}) {
    const std::string s = u.suffix;
    if (t.size() > s.size() && t.compare(t.size() - s.size(), s.size(), s) == 0) {
      return to_double("duration", trim(t.substr(0, t.size() - s.size()))) * u.to_ps;
    }
  }
  return to_double("duration", t);
}

}  // namespace xfer::cli
