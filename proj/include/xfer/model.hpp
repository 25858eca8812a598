#pragma once

#include "xfer/descriptors.hpp"
#include "xfer/potential.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace xfer {

enum class Activation { SiLU, Tanh, Softplus };

std::string to_string(Activation a);
// Rejects activations without a continuous derivative (e.g. "relu").
Activation activation_from_string(const std::string& s);

struct ModelSpec {
  double cutoff = 5.0;  // Å
  int n_radial_basis = 8;
  int n_angular_basis = 6;
  int n_angular_radial = 4;  // radial functions per leg in the angular channel
  int embedding_dim = 8;
  std::vector<int> hidden_layer_widths{64, 64};
  Activation activation = Activation::SiLU;
  std::uint64_t seed = 0;

  void validate() const;
  int descriptor_size() const {
    return n_radial_basis + n_angular_basis * n_angular_radial * (n_angular_radial + 1) / 2;
  }
  DescriptorBasis basis() const {
    return DescriptorBasis(cutoff, n_radial_basis, n_angular_basis, n_angular_radial);
  }
  int input_size() const { return descriptor_size() + embedding_dim; }
  // Architecture equality (seed excluded).
  bool compatible_with(const ModelSpec& other) const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct ModelParameters {
  ModelSpec spec;
  std::vector<std::string> elements;
  Eigen::MatrixXd embedding;  // embedding_dim x elements
  std::vector<DenseLayer> layers;  // hidden layers then the scalar output layer
  // Fixed (untrained) descriptor standardisation: x = (D - shift) / scale.
  Eigen::VectorXd input_shift;
  Eigen::VectorXd input_scale;
  double energy_shift = 0.0;  // eV per atom
  std::map<std::string, std::string> metadata;

  int element_index(const std::string& symbol) const;
};

// Trainable parameter count from a ModelSpec alone.
std::size_t parameter_count(const ModelSpec& spec, std::size_t n_elements);

ModelParameters init_parameters(const ModelSpec& spec, const std::vector<std::string>& elements,
                                std::uint64_t seed);

// Standardise descriptor inputs using the statistics of `configs`.
ModelParameters fit_input_scaling(ModelParameters params, const std::vector<Configuration>& configs);

// Named, contiguous slices of the flattened trainable parameter vector.
struct ParameterGroup {
  std::string name;  // "embedding", "layer0", ..., "output"
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};
std::vector<ParameterGroup> parameter_groups(const ModelParameters& params);
Eigen::VectorXd flatten(const ModelParameters& params);
void unflatten(ModelParameters& params, const Eigen::VectorXd& flat);

// Feed-forward pass over a batch of atoms (one column per atom).
struct NetworkCache {
  std::vector<Eigen::MatrixXd> pre;   // z_l
  std::vector<Eigen::MatrixXd> post;  // h_l, post[0] is the input
  std::vector<Eigen::ArrayXXd> slope; // sigma'(z_l)
};

Eigen::MatrixXd network_input(const ModelParameters& params, const Eigen::MatrixXd& descriptors,
                              const std::vector<int>& species_index);
// Per-atom outputs (row vector), caching intermediates.
Eigen::RowVectorXd network_forward(const ModelParameters& params, const Eigen::MatrixXd& input,
                                   NetworkCache& cache);
// d(atom output)/d(input) per atom, n_in x N.
Eigen::MatrixXd network_input_gradient(const ModelParameters& params, const NetworkCache& cache);

void activation_eval(Activation a, const Eigen::ArrayXXd& z, Eigen::ArrayXXd* value,
                     Eigen::ArrayXXd* slope, Eigen::ArrayXXd* curvature);

std::vector<int> species_indices(const ModelParameters& params, const Configuration& config);

class NeuralPotential final : public Potential {
 public:
  explicit NeuralPotential(ModelParameters params);
  double cutoff() const override { return params_.spec.cutoff; }
  Evaluation evaluate(const Configuration& config, const NeighborList& neighbors) const override;
  std::string name() const override { return "neural"; }
  const ModelParameters& parameters() const { return params_; }
  const DescriptorBasis& basis() const { return basis_; }

 private:
  ModelParameters params_;
  DescriptorBasis basis_;
};

double predict_energy(const ModelParameters& params, const Configuration& config,
                      const NeighborList& neighbors);
Forces predict_forces(const ModelParameters& params, const Configuration& config,
                      const NeighborList& neighbors);

// energy_shift := mean over configs of (E_ref - E_pred) / N, with E_pred
// evaluated without a shift. Forces are unaffected.
ModelParameters set_energy_shift(ModelParameters params, const std::vector<Configuration>& configs);

inline constexpr int kModelFormatVersion = 1;

void save_model(const ModelParameters& params, const std::filesystem::path& path);
ModelParameters load_model(const std::filesystem::path& path);
std::string model_to_string(const ModelParameters& params);
ModelParameters model_from_string(const std::string& text);

}  // namespace xfer
