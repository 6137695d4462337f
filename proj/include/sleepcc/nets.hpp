#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sleepcc/tensor.hpp"

// Actor-critic policy networks: a shared MLP state encoder feeding either
// a stacked LSTM or a Transformer encoder with a classification token.
// Both emit a categorical action distribution and a scalar value estimate.

namespace sleepcc {

// Row-major observation matrix: rows = sequence steps (oldest first),
// cols = normalized state features.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

enum class ArchKind { kLstm, kTransformer };

const char* to_string(ArchKind k);
ArchKind arch_from_string(const std::string& s);

struct MlpEncoderConfig {
  int input_dim = 14;
  int layers = 2;
  int width = 128;
};

struct LstmPolicyConfig {
  int hidden = 128;
  int num_layers = 2;
  double dropout = 0.1;
};

struct TransformerPolicyConfig {
  int encoder_layers = 2;
  int heads = 4;
  int embed_dim = 128;
  int ff_width = 256;
};

struct PolicyConfig {
  ArchKind arch = ArchKind::kLstm;
  int seq_len = 5;
  int n_actions = 11;
  bool shared_trunk = true;  // actor and critic share encoder + sequence module
  MlpEncoderConfig mlp;
  LstmPolicyConfig lstm;
  TransformerPolicyConfig transformer;
  std::uint64_t init_seed = 0;

  void validate() const;
};

struct PolicyOutput {
  Tensor logits;  // (1, n_actions)
  Tensor value;   // (1, 1)
};

class PolicyNet {
 public:
  explicit PolicyNet(PolicyConfig cfg);

  // Full differentiable forward pass. Dropout is active only when train
  // is set; rng supplies the dropout masks.
  PolicyOutput forward(const FeatureMatrix& obs, bool train,
                       std::mt19937_64& dropout_rng);
  PolicyOutput forward_eval(const FeatureMatrix& obs);

  struct ActResult {
    int action = 0;  // index into [0, n_actions)
    double log_prob = 0.0;
    double value = 0.0;
  };
  // sample=false takes the argmax with ties broken toward the lowest index.
  ActResult act(const FeatureMatrix& obs, bool sample, std::mt19937_64& rng);

  // Sequence of per-step embeddings from the shared MLP encoder, (K, width).
  Tensor encode_states(const FeatureMatrix& obs);

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  void zero_grad();

  const PolicyConfig& config() const { return cfg_; }

  // Self-describing checkpoint (architecture plus named tensors).
  std::string to_json() const;
  static PolicyNet from_json(const std::string& text);
  void save(const std::string& path) const;
  static PolicyNet load(const std::string& path);

 private:
  struct Trunk {
    // parameter indices into params_, resolved at build time
    std::vector<int> mlp_w, mlp_b;
    std::vector<int> lstm_wx, lstm_wh, lstm_b;
    int class_token = -1, positional = -1;
    struct Layer {
      int ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, ff_w1, ff_b1, ff_w2,
          ff_b2;
    };
    std::vector<Layer> tf_layers;
    int final_ln_g = -1, final_ln_b = -1;
  };

  int add_param(const std::string& name, Tensor t);
  Trunk build_trunk(const std::string& prefix, std::mt19937_64& rng);
  Tensor trunk_forward(const Trunk& trunk, const FeatureMatrix& obs,
                       bool train, std::mt19937_64& dropout_rng);
  Tensor mlp_encode(const Trunk& trunk, const FeatureMatrix& obs);
  const Tensor& p(int idx) const { return params_[
      static_cast<std::size_t>(idx)].tensor; }

  PolicyConfig cfg_;
  std::vector<Parameter> params_;
  Trunk actor_trunk_;
  Trunk critic_trunk_;  // unused when shared_trunk
  int actor_w_ = -1, actor_b_ = -1, critic_w_ = -1, critic_b_ = -1;
};

}  // namespace sleepcc
