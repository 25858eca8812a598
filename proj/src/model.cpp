#include "xfer/model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace xfer {

using nlohmann::json;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::SiLU: return "silu";
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "silu" || s == "swish") return Activation::SiLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  throw Error("activation '" + s + "' is not supported (forces need a C1 nonlinearity: " +
              "silu, tanh, softplus)");
}

void ModelSpec::validate() const {
  if (!(cutoff > 0.0)) throw Error("model cutoff must be positive");
  if (n_radial_basis < 1 || n_angular_basis < 1 || n_angular_radial < 1 || embedding_dim < 1) {
    throw Error("model dimensions must be >= 1");
  }
  for (int w : hidden_layer_widths) {
    if (w < 1) throw Error("hidden layer widths must be >= 1");
  }
}

bool ModelSpec::compatible_with(const ModelSpec& o) const {
  return cutoff == o.cutoff && n_radial_basis == o.n_radial_basis &&
         n_angular_basis == o.n_angular_basis && n_angular_radial == o.n_angular_radial &&
         embedding_dim == o.embedding_dim &&
         hidden_layer_widths == o.hidden_layer_widths && activation == o.activation;
}

int ModelParameters::element_index(const std::string& symbol) const {
  for (std::size_t k = 0; k < elements.size(); ++k) {
    if (elements[k] == symbol) return static_cast<int>(k);
  }
  return -1;
}

std::size_t parameter_count(const ModelSpec& spec, std::size_t n_elements) {
  std::size_t count = static_cast<std::size_t>(spec.embedding_dim) * n_elements;
  std::size_t in = spec.input_size();
  for (int w : spec.hidden_layer_widths) {
    count += in * w + w;
    in = w;
  }
  return count + in + 1;
}

ModelParameters init_parameters(const ModelSpec& spec, const std::vector<std::string>& elements,
                                std::uint64_t seed) {
  spec.validate();
  ModelParameters p;
  p.spec = spec;
  p.spec.seed = seed;
  p.elements = elements;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  p.embedding.resize(spec.embedding_dim, static_cast<Eigen::Index>(elements.size()));
  for (Eigen::Index c = 0; c < p.embedding.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.embedding.rows(); ++r) p.embedding(r, c) = normal(rng);
  }
  int in = spec.input_size();
  std::vector<int> widths = spec.hidden_layer_widths;
  widths.push_back(1);
  for (int w : widths) {
    DenseLayer layer;
    layer.weight.resize(w, in);
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = sd * normal(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(w);
    p.layers.push_back(std::move(layer));
    in = w;
  }
  p.input_shift = Eigen::VectorXd::Zero(spec.descriptor_size());
  p.input_scale = Eigen::VectorXd::Ones(spec.descriptor_size());
  return p;
}

ModelParameters fit_input_scaling(ModelParameters params, const std::vector<Configuration>& configs) {
  const DescriptorBasis basis = params.spec.basis();
  const int nd = basis.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(nd), sq = Eigen::VectorXd::Zero(nd);
  double count = 0.0;
  for (const auto& c : configs) {
    const NeighborList nl = build_neighbor_list(c, params.spec.cutoff);
    const Eigen::MatrixXd d = basis.compute(nl, static_cast<int>(c.size()));
    sum += d.rowwise().sum();
    sq += d.array().square().rowwise().sum().matrix();
    count += static_cast<double>(d.cols());
  }
  if (count == 0.0) throw Error("cannot fit input scaling on an empty set");
  const Eigen::VectorXd mean = sum / count;
  const Eigen::VectorXd var = (sq / count - mean.cwiseAbs2()).cwiseMax(0.0);
  params.input_shift = mean;
  params.input_scale.resize(nd);
  for (int k = 0; k < nd; ++k) {
    const double sd = std::sqrt(var[k]);
    // Near-constant features keep a scale tied to their magnitude.
    params.input_scale[k] = std::max({sd, 0.1 * std::sqrt(mean[k] * mean[k] + var[k]), 1e-3});
  }
  return params;
}

std::vector<ParameterGroup> parameter_groups(const ModelParameters& p) {
  std::vector<ParameterGroup> g;
  Eigen::Index off = 0;
  g.push_back({"embedding", off, p.embedding.size()});
  off += p.embedding.size();
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto n = p.layers[l].weight.size() + p.layers[l].bias.size();
    const std::string name = l + 1 == p.layers.size() ? "output" : "layer" + std::to_string(l);
    g.push_back({name, off, n});
    off += n;
  }
  return g;
}

Eigen::VectorXd flatten(const ModelParameters& p) {
  Eigen::Index total = p.embedding.size();
  for (const auto& l : p.layers) total += l.weight.size() + l.bias.size();
  Eigen::VectorXd v(total);
  Eigen::Index off = 0;
  v.segment(off, p.embedding.size()) = p.embedding.reshaped();
  off += p.embedding.size();
  for (const auto& l : p.layers) {
    v.segment(off, l.weight.size()) = l.weight.reshaped();
    off += l.weight.size();
    v.segment(off, l.bias.size()) = l.bias;
    off += l.bias.size();
  }
  return v;
}

void unflatten(ModelParameters& p, const Eigen::VectorXd& v) {
  Eigen::Index off = 0;
  p.embedding.reshaped() = v.segment(off, p.embedding.size());
  off += p.embedding.size();
  for (auto& l : p.layers) {
    l.weight.reshaped() = v.segment(off, l.weight.size());
    off += l.weight.size();
    l.bias = v.segment(off, l.bias.size());
    off += l.bias.size();
  }
  if (off != v.size()) throw Error("flattened parameter vector has the wrong length");
}

void activation_eval(Activation a, const Eigen::ArrayXXd& z, Eigen::ArrayXXd* value,
                     Eigen::ArrayXXd* slope, Eigen::ArrayXXd* curvature) {
  switch (a) {
    case Activation::SiLU: {
      const Eigen::ArrayXXd s = (1.0 + (-z).exp()).inverse();
      if (value) *value = z * s;
      if (slope) *slope = s * (1.0 + z * (1.0 - s));
      if (curvature) *curvature = s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s));
      break;
    }
    case Activation::Tanh: {
      const Eigen::ArrayXXd t = z.tanh();
      if (value) *value = t;
      if (slope) *slope = 1.0 - t.square();
      if (curvature) *curvature = -2.0 * t * (1.0 - t.square());
      break;
    }
    case Activation::Softplus: {
      const Eigen::ArrayXXd s = (1.0 + (-z).exp()).inverse();
      if (value) *value = z.max(0.0) + (-z.abs()).exp().log1p();
      if (slope) *slope = s;
      if (curvature) *curvature = s * (1.0 - s);
      break;
    }
  }
}

std::vector<int> species_indices(const ModelParameters& params, const Configuration& config) {
  std::vector<int> idx(config.size());
  for (std::size_t a = 0; a < config.size(); ++a) {
    const int k = params.element_index(config.species[a]);
    if (k < 0) throw Error("model has no embedding for species '" + config.species[a] + "'");
    idx[a] = k;
  }
  return idx;
}

Eigen::MatrixXd network_input(const ModelParameters& params, const Eigen::MatrixXd& descriptors,
                              const std::vector<int>& species_index) {
  const int nd = params.spec.descriptor_size();
  const int ne = params.spec.embedding_dim;
  const Eigen::Index n = descriptors.cols();
  Eigen::MatrixXd x(nd + ne, n);
  x.topRows(nd) = ((descriptors.colwise() - params.input_shift).array().colwise() /
                   params.input_scale.array())
                      .matrix();
  for (Eigen::Index a = 0; a < n; ++a) {
    x.col(a).tail(ne) = params.embedding.col(species_index[a]);
  }
  return x;
}

Eigen::RowVectorXd network_forward(const ModelParameters& params, const Eigen::MatrixXd& input,
                                   NetworkCache& cache) {
  const std::size_t nl = params.layers.size();
  cache.pre.resize(nl);
  cache.post.resize(nl);
  cache.slope.resize(nl);
  cache.post[0] = input;
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    const auto& layer = params.layers[l];
    cache.pre[l].noalias() = layer.weight * cache.post[l];
    cache.pre[l].colwise() += layer.bias;
    Eigen::ArrayXXd h;
    activation_eval(params.spec.activation, cache.pre[l].array(), &h, &cache.slope[l], nullptr);
    cache.post[l + 1] = h.matrix();
  }
  const auto& out = params.layers.back();
  Eigen::RowVectorXd y = out.weight * cache.post[nl - 1];
  y.array() += out.bias[0];
  return y;
}

Eigen::MatrixXd network_input_gradient(const ModelParameters& params, const NetworkCache& cache) {
  const std::size_t nl = params.layers.size();
  const Eigen::Index n = cache.post[0].cols();
  // Adjoint of the last hidden activation.
  Eigen::MatrixXd adj = params.layers.back().weight.transpose().replicate(1, n);
  for (std::size_t l = nl - 1; l-- > 0;) {
    const Eigen::MatrixXd zbar = (adj.array() * cache.slope[l]).matrix();
    adj.noalias() = params.layers[l].weight.transpose() * zbar;
  }
  return adj;
}

NeuralPotential::NeuralPotential(ModelParameters params)
    : params_(std::move(params)),
      basis_(params_.spec.basis()) {}

Evaluation NeuralPotential::evaluate(const Configuration& config, const NeighborList& nl) const {
  if (nl.cutoff() < params_.spec.cutoff) {
    throw Error("neighbor list cutoff is shorter than the model cutoff");
  }
  const int n = static_cast<int>(config.size());
  for (const auto& p : nl.pairs()) {
    if (p.r <= 1e-6) throw OverlapError("atoms overlap");
  }
  const auto species = species_indices(params_, config);
  DescriptorBasis::Workspace ws;
  const Eigen::MatrixXd d = basis_.compute(nl, n, &ws);
  const Eigen::MatrixXd x = network_input(params_, d, species);
  NetworkCache cache;
  const Eigen::RowVectorXd e = network_forward(params_, x, cache);
  const int nd = params_.spec.descriptor_size();
  const Eigen::MatrixXd g =
      (network_input_gradient(params_, cache).topRows(nd).array().colwise() /
       params_.input_scale.array())
          .matrix();

  Evaluation ev;
  ev.energy = e.sum() + n * params_.energy_shift;
  ev.forces = Forces::Zero(3, n);
  const Matrix3X<double> grad = basis_.pair_gradients(nl, g, &ws);
  for (std::size_t k = 0; k < nl.pairs().size(); ++k) {
    scatter_pair_gradient(nl.pairs()[k], grad.col(k), ev.forces, ev.virial);
  }
  return ev;
}

double predict_energy(const ModelParameters& params, const Configuration& config,
                      const NeighborList& neighbors) {
  return NeuralPotential(params).evaluate(config, neighbors).energy;
}

Forces predict_forces(const ModelParameters& params, const Configuration& config,
                      const NeighborList& neighbors) {
  return NeuralPotential(params).evaluate(config, neighbors).forces;
}

ModelParameters set_energy_shift(ModelParameters params, const std::vector<Configuration>& configs) {
  if (configs.empty()) throw Error("energy shift needs a non-empty training set");
  ModelParameters raw = params;
  raw.energy_shift = 0.0;
  const NeuralPotential pot(raw);
  double acc = 0.0;
  for (const auto& c : configs) {
    if (!c.energy) throw Error("energy shift needs reference energies on every configuration");
    const double e = evaluate(pot, c).energy;
    acc += (*c.energy - e) / static_cast<double>(c.size());
  }
  params.energy_shift = acc / static_cast<double>(configs.size());
  return params;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw Error("checkpoint field '" + what + "' has the wrong shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error("checkpoint field '" + what + "' has the wrong shape");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j, Eigen::Index n, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != n) {
    throw Error("checkpoint field '" + what + "' has the wrong length");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

}  // namespace

std::string model_to_string(const ModelParameters& p) {
  json j;
  j["format"] = "xfer-model";
  j["version"] = kModelFormatVersion;
  j["spec"] = {{"cutoff", p.spec.cutoff},
               {"n_radial_basis", p.spec.n_radial_basis},
               {"n_angular_basis", p.spec.n_angular_basis},
               {"n_angular_radial", p.spec.n_angular_radial},
               {"embedding_dim", p.spec.embedding_dim},
               {"hidden_layer_widths", p.spec.hidden_layer_widths},
               {"activation", to_string(p.spec.activation)},
               {"seed", p.spec.seed}};
  j["elements"] = p.elements;
  j["embedding"] = matrix_to_json(p.embedding);
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", vector_to_json(l.bias)}});
  }
  j["layers"] = std::move(layers);
  j["input_shift"] = vector_to_json(p.input_shift);
  j["input_scale"] = vector_to_json(p.input_scale);
  j["energy_shift"] = p.energy_shift;
  j["metadata"] = p.metadata;
  return j.dump(1);
}

ModelParameters model_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model checkpoint: ") + e.what());
  }
  try {
    if (j.value("format", "") != "xfer-model") throw Error("not an xfer model checkpoint");
    if (!j.contains("version")) throw Error("model checkpoint has no version field");
    const int version = j["version"].get<int>();
    if (version != kModelFormatVersion) {
      throw Error("unsupported model checkpoint version " + std::to_string(version));
    }
    ModelParameters p;
    const auto& s = j["spec"];
    p.spec.cutoff = s["cutoff"].get<double>();
    p.spec.n_radial_basis = s["n_radial_basis"].get<int>();
    p.spec.n_angular_basis = s["n_angular_basis"].get<int>();
    p.spec.n_angular_radial = s["n_angular_radial"].get<int>();
    p.spec.embedding_dim = s["embedding_dim"].get<int>();
    p.spec.hidden_layer_widths = s["hidden_layer_widths"].get<std::vector<int>>();
    p.spec.activation = activation_from_string(s["activation"].get<std::string>());
    p.spec.seed = s["seed"].get<std::uint64_t>();
    p.spec.validate();
    p.elements = j["elements"].get<std::vector<std::string>>();
    p.embedding = matrix_from_json(j["embedding"], p.spec.embedding_dim,
                                   static_cast<Eigen::Index>(p.elements.size()), "embedding");
    int in = p.spec.input_size();
    std::vector<int> widths = p.spec.hidden_layer_widths;
    widths.push_back(1);
    const auto& layers = j["layers"];
    if (layers.size() != widths.size()) throw Error("checkpoint layer count does not match spec");
    for (std::size_t l = 0; l < widths.size(); ++l) {
      DenseLayer layer;
      layer.weight = matrix_from_json(layers[l]["weight"], widths[l], in, "weight");
      layer.bias = vector_from_json(layers[l]["bias"], widths[l], "bias");
      p.layers.push_back(std::move(layer));
      in = widths[l];
    }
    p.input_shift = vector_from_json(j["input_shift"], p.spec.descriptor_size(), "input_shift");
    p.input_scale = vector_from_json(j["input_scale"], p.spec.descriptor_size(), "input_scale");
    p.energy_shift = j["energy_shift"].get<double>();
    p.metadata = j.value("metadata", std::map<std::string, std::string>{});
    return p;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model checkpoint: ") + e.what());
  }
}

void save_model(const ModelParameters& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model " + path.string());
  out << model_to_string(params) << "\n";
}

ModelParameters load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_string(ss.str());
}

}  // namespace xfer
