#ifndef DTUNE_AD_MODELS_HPP_
#define DTUNE_AD_MODELS_HPP_

#include <string>
#include <vector>

#include "dtune/ad/param_set.hpp"
#include "dtune/ad/tape.hpp"
#include "dtune/rng.hpp"

namespace dtune::ad {

// Whether parameters recorded on a tape receive gradients.
enum class Grad { kTrain, kFrozen };

// ---------------------------------------------------------------------------
// MLP

enum class Activation { kRelu, kTanh, kIdentity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct MlpConfig {
  // Layer widths including input and output, e.g. {6, 256, 256, 1}.
  std::vector<int> widths;
  Activation activation = Activation::kRelu;
  // Layer normalization after each hidden activation.
  bool layer_norm = false;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  void validate() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
ParamSet make_mlp_params(const MlpConfig& cfg, Rng& rng);

// Batched forward: input is rows x input_dim.
Var mlp_forward(Tape& tape, ParamSet& params, const MlpConfig& cfg, Var input,
                Grad grad = Grad::kTrain);

// Tape-free forward for a single input vector.
Vector mlp_forward(const ParamSet& params, const MlpConfig& cfg,
                   const Vector& input);

// ---------------------------------------------------------------------------
// Decision transformer

struct TransformerConfig {
  int n_layers = 1;
  int n_heads = 2;
  int embed_dim = 64;
  double dropout_rate = 0.0;
  int context_len = 20;
  // Learned timestep embedding added to every token of a step.
  bool use_positional_embedding = false;
  int max_timestep = 1024;
  int state_dim = 1;
  int action_dim = 1;
  RowVector action_low = RowVector::Constant(1, -1.0);
  RowVector action_high = RowVector::Constant(1, 1.0);

  void validate() const;
};

// Inputs for one batched forward pass. Each of the `batch` sequences holds
// seq_len steps; row b*seq_len + t addresses step t of sequence b.
struct TokenBatch {
  int batch = 0;
  int seq_len = 0;
  Matrix rtg;      // rows x 1
  Matrix states;   // rows x state_dim
  Matrix actions;  // rows x action_dim
  std::vector<int> timesteps;
  std::vector<char> valid;

  int rows() const { return batch * seq_len; }
};

ParamSet make_transformer_params(const TransformerConfig& cfg, Rng& rng);

// Deterministic actions, one row per step (batch*seq_len x action_dim).
// The action at step t is read from the state token of step t, so it sees
// the RTG and state tokens of steps <= t and the action tokens of steps < t.
// dropout_rng == nullptr disables dropout.
Var dt_forward(Tape& tape, ParamSet& params, const TransformerConfig& cfg,
               const TokenBatch& tokens, Grad grad = Grad::kTrain,
               Rng* dropout_rng = nullptr);

Matrix dt_forward(const ParamSet& params, const TransformerConfig& cfg,
                  const TokenBatch& tokens);

}  // namespace dtune::ad

#endif  // DTUNE_AD_MODELS_HPP_
