#include "sleepcc/nets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sleepcc/core.hpp"

namespace sleepcc {

namespace {
constexpr int kCheckpointVersion = 1;
}

const char* to_string(ArchKind k) {
  return k == ArchKind::kLstm ? "lstm" : "transformer";
}

ArchKind arch_from_string(const std::string& s) {
  if (s == "lstm") return ArchKind::kLstm;
  if (s == "transformer") return ArchKind::kTransformer;
  throw InvalidInput("unknown architecture: " + s);
}

void PolicyConfig::validate() const {
  if (seq_len < 1 || n_actions < 2 || mlp.layers < 1 || mlp.width < 1 ||
      mlp.input_dim < 1) {
    throw InvalidInput("policy config: dimensions must be positive");
  }
  if (lstm.dropout < 0.0 || lstm.dropout >= 1.0) {
    throw InvalidInput("policy config: dropout must be in [0, 1)");
  }
  if (arch == ArchKind::kTransformer) {
    if (transformer.embed_dim % transformer.heads != 0) {
      throw InvalidInput("policy config: embed_dim must be divisible by heads");
    }
    if (transformer.embed_dim != mlp.width) {
      throw InvalidInput(
          "policy config: transformer embed_dim must equal MLP width");
    }
  }
}

int PolicyNet::add_param(const std::string& name, Tensor t) {
  params_.push_back({name, std::move(t)});
  return static_cast<int>(params_.size()) - 1;
}

PolicyNet::Trunk PolicyNet::build_trunk(const std::string& prefix,
                                        std::mt19937_64& rng) {
  Trunk t;
  const int d = cfg_.mlp.input_dim;
  const int w = cfg_.mlp.width;
  for (int l = 0; l < cfg_.mlp.layers; ++l) {
    const int in = l == 0 ? d : w;
    t.mlp_w.push_back(add_param(prefix + "mlp." + std::to_string(l) + ".w",
                                init_uniform_fan_in(in, w, in, rng)));
    t.mlp_b.push_back(add_param(prefix + "mlp." + std::to_string(l) + ".b",
                                Tensor::zeros(1, w, true)));
  }

  if (cfg_.arch == ArchKind::kLstm) {
    const int h = cfg_.lstm.hidden;
    for (int l = 0; l < cfg_.lstm.num_layers; ++l) {
      const int in = l == 0 ? w : h;
      const std::string base = prefix + "lstm." + std::to_string(l) + ".";
      t.lstm_wx.push_back(add_param(
          base + "wx", init_uniform_fan_in(in, 4 * h, in, rng)));
      t.lstm_wh.push_back(add_param(
          base + "wh", init_uniform_fan_in(h, 4 * h, h, rng)));
      // Gate order [i, f, g, o]; forget-gate bias starts at +1.
      Tensor b = Tensor::zeros(1, 4 * h, true);
      for (int j = h; j < 2 * h; ++j) {
        b.mutable_data()[static_cast<std::size_t>(j)] = 1.0;
      }
      t.lstm_b.push_back(add_param(base + "b", std::move(b)));
    }
  } else {
    const int e = cfg_.transformer.embed_dim;
    const int seq = cfg_.seq_len + 1;
    t.class_token = add_param(prefix + "tf.class_token",
                              init_uniform_fan_in(1, e, e, rng));
    t.positional = add_param(prefix + "tf.positional",
                             init_uniform_fan_in(seq, e, e, rng));
    for (int l = 0; l < cfg_.transformer.encoder_layers; ++l) {
      const std::string base = prefix + "tf." + std::to_string(l) + ".";
      Trunk::Layer layer{};
      layer.ln1_g = add_param(base + "ln1.g", Tensor::full(1, e, 1.0, true));
      layer.ln1_b = add_param(base + "ln1.b", Tensor::zeros(1, e, true));
      layer.wq = add_param(base + "wq", init_uniform_fan_in(e, e, e, rng));
      layer.wk = add_param(base + "wk", init_uniform_fan_in(e, e, e, rng));
      layer.wv = add_param(base + "wv", init_uniform_fan_in(e, e, e, rng));
      layer.wo = add_param(base + "wo", init_uniform_fan_in(e, e, e, rng));
      layer.ln2_g = add_param(base + "ln2.g", Tensor::full(1, e, 1.0, true));
      layer.ln2_b = add_param(base + "ln2.b", Tensor::zeros(1, e, true));
      layer.ff_w1 = add_param(
          base + "ff.w1",
          init_uniform_fan_in(e, cfg_.transformer.ff_width, e, rng));
      layer.ff_b1 = add_param(base + "ff.b1",
                              Tensor::zeros(1, cfg_.transformer.ff_width, true));
      layer.ff_w2 = add_param(
          base + "ff.w2",
          init_uniform_fan_in(cfg_.transformer.ff_width, e,
                              cfg_.transformer.ff_width, rng));
      layer.ff_b2 = add_param(base + "ff.b2", Tensor::zeros(1, e, true));
      t.tf_layers.push_back(layer);
    }
    t.final_ln_g = add_param(prefix + "tf.final_ln.g",
                             Tensor::full(1, e, 1.0, true));
    t.final_ln_b = add_param(prefix + "tf.final_ln.b",
                             Tensor::zeros(1, e, true));
  }
  return t;
}

PolicyNet::PolicyNet(PolicyConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.init_seed * 0x2545f4914f6cdd1dULL + 11);
  actor_trunk_ = build_trunk("", rng);
  if (!cfg_.shared_trunk) {
    critic_trunk_ = build_trunk("critic.", rng);
  }
  const int h = cfg_.arch == ArchKind::kLstm ? cfg_.lstm.hidden
                                             : cfg_.transformer.embed_dim;
  actor_w_ = add_param("head.actor.w",
                       init_uniform_fan_in(h, cfg_.n_actions, h, rng));
  actor_b_ = add_param("head.actor.b", Tensor::zeros(1, cfg_.n_actions, true));
  critic_w_ = add_param("head.critic.w", init_uniform_fan_in(h, 1, h, rng));
  critic_b_ = add_param("head.critic.b", Tensor::zeros(1, 1, true));
}

Tensor PolicyNet::mlp_encode(const Trunk& trunk, const FeatureMatrix& obs) {
  if (obs.rows != cfg_.seq_len || obs.cols != cfg_.mlp.input_dim) {
    throw ShapeError("observation shape (" + std::to_string(obs.rows) + ", " +
                     std::to_string(obs.cols) + ") does not match policy (" +
                     std::to_string(cfg_.seq_len) + ", " +
                     std::to_string(cfg_.mlp.input_dim) + ")");
  }
  Tensor x(obs.rows, obs.cols, obs.data);
  for (std::size_t l = 0; l < trunk.mlp_w.size(); ++l) {
    x = relu(add(matmul(x, p(trunk.mlp_w[l])), p(trunk.mlp_b[l])));
  }
  return x;
}

Tensor PolicyNet::encode_states(const FeatureMatrix& obs) {
  return mlp_encode(actor_trunk_, obs);
}

Tensor PolicyNet::trunk_forward(const Trunk& trunk, const FeatureMatrix& obs,
                                bool train, std::mt19937_64& dropout_rng) {
  Tensor x = mlp_encode(trunk, obs);

  if (cfg_.arch == ArchKind::kLstm) {
    const int hdim = cfg_.lstm.hidden;
    const int k = cfg_.seq_len;
    std::vector<Tensor> seq;
    seq.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) seq.push_back(slice_rows(x, t, 1));

    for (std::size_t l = 0; l < trunk.lstm_wx.size(); ++l) {
      Tensor h = Tensor::zeros(1, hdim);
      Tensor c = Tensor::zeros(1, hdim);
      std::vector<Tensor> out;
      out.reserve(seq.size());
      for (auto& xt : seq) {
        Tensor z = add(add(matmul(xt, p(trunk.lstm_wx[l])),
                           matmul(h, p(trunk.lstm_wh[l]))),
                       p(trunk.lstm_b[l]));
        Tensor i = sigmoid(slice_cols(z, 0, hdim));
        Tensor f = sigmoid(slice_cols(z, hdim, hdim));
        Tensor g = tanh_t(slice_cols(z, 2 * hdim, hdim));
        Tensor o = sigmoid(slice_cols(z, 3 * hdim, hdim));
        c = add(mul(f, c), mul(i, g));
        h = mul(o, tanh_t(c));
        out.push_back(h);
      }
      // Inter-layer dropout on the hidden sequence (not after the top layer).
      if (l + 1 < trunk.lstm_wx.size()) {
        for (auto& t : out) {
          t = dropout(t, cfg_.lstm.dropout, train, dropout_rng);
        }
      }
      seq = std::move(out);
    }
    return seq.back();  // h_K of the top layer
  }

  // Transformer: prepend the class token, add positional encodings, run
  // pre-norm encoder layers, read the class-token row.
  const int e = cfg_.transformer.embed_dim;
  const int heads = cfg_.transformer.heads;
  const int dh = e / heads;
  Tensor tokens = concat_rows({p(trunk.class_token), x});
  tokens = add(tokens, p(trunk.positional));
  for (const auto& layer : trunk.tf_layers) {
    Tensor a_in = layer_norm_rows(tokens, p(layer.ln1_g), p(layer.ln1_b));
    Tensor q = matmul(a_in, p(layer.wq));
    Tensor kk = matmul(a_in, p(layer.wk));
    Tensor v = matmul(a_in, p(layer.wv));
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int hh = 0; hh < heads; ++hh) {
      Tensor qh = slice_cols(q, hh * dh, dh);
      Tensor kh = slice_cols(kk, hh * dh, dh);
      Tensor vh = slice_cols(v, hh * dh, dh);
      Tensor scores =
          scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
      head_outs.push_back(matmul(softmax_rows(scores), vh));
    }
    Tensor attn = matmul(concat_cols(head_outs), p(layer.wo));
    tokens = add(tokens, attn);
    Tensor f_in = layer_norm_rows(tokens, p(layer.ln2_g), p(layer.ln2_b));
    Tensor ff = relu(add(matmul(f_in, p(layer.ff_w1)), p(layer.ff_b1)));
    ff = add(matmul(ff, p(layer.ff_w2)), p(layer.ff_b2));
    tokens = add(tokens, ff);
  }
  Tensor normed = layer_norm_rows(tokens, p(trunk.final_ln_g),
                                  p(trunk.final_ln_b));
  return slice_rows(normed, 0, 1);
}

PolicyOutput PolicyNet::forward(const FeatureMatrix& obs, bool train,
                                std::mt19937_64& dropout_rng) {
  Tensor h = trunk_forward(actor_trunk_, obs, train, dropout_rng);
  PolicyOutput out;
  out.logits = add(matmul(h, p(actor_w_)), p(actor_b_));
  Tensor hc = cfg_.shared_trunk
                  ? h
                  : trunk_forward(critic_trunk_, obs, train, dropout_rng);
  out.value = add(matmul(hc, p(critic_w_)), p(critic_b_));
  return out;
}

PolicyOutput PolicyNet::forward_eval(const FeatureMatrix& obs) {
  std::mt19937_64 unused(0);
  return forward(obs, false, unused);
}

PolicyNet::ActResult PolicyNet::act(const FeatureMatrix& obs, bool sample,
                                    std::mt19937_64& rng) {
  PolicyOutput out = forward_eval(obs);
  const int n = cfg_.n_actions;
  std::vector<double> logp(static_cast<std::size_t>(n));
  double mx = out.logits.at(0, 0);
  for (int j = 1; j < n; ++j) mx = std::max(mx, out.logits.at(0, j));
  double z = 0.0;
  for (int j = 0; j < n; ++j) z += std::exp(out.logits.at(0, j) - mx);
  const double lse = mx + std::log(z);
  for (int j = 0; j < n; ++j) {
    logp[static_cast<std::size_t>(j)] = out.logits.at(0, j) - lse;
  }

  ActResult r;
  if (sample) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    r.action = n - 1;
    for (int j = 0; j < n; ++j) {
      acc += std::exp(logp[static_cast<std::size_t>(j)]);
      if (u < acc) {
        r.action = j;
        break;
      }
    }
  } else {
    r.action = 0;
    for (int j = 1; j < n; ++j) {
      if (out.logits.at(0, j) > out.logits.at(0, r.action)) r.action = j;
    }
  }
  r.log_prob = logp[static_cast<std::size_t>(r.action)];
  r.value = out.value.item();
  return r;
}

void PolicyNet::zero_grad() {
  for (auto& prm : params_) prm.tensor.zero_grad();
}

std::string PolicyNet::to_json() const {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  nlohmann::json jc;
  jc["arch"] = to_string(cfg_.arch);
  jc["seq_len"] = cfg_.seq_len;
  jc["n_actions"] = cfg_.n_actions;
  jc["shared_trunk"] = cfg_.shared_trunk;
  jc["mlp"] = {{"input_dim", cfg_.mlp.input_dim},
               {"layers", cfg_.mlp.layers},
               {"width", cfg_.mlp.width}};
  jc["lstm"] = {{"hidden", cfg_.lstm.hidden},
                {"num_layers", cfg_.lstm.num_layers},
                {"dropout", cfg_.lstm.dropout}};
  jc["transformer"] = {{"encoder_layers", cfg_.transformer.encoder_layers},
                       {"heads", cfg_.transformer.heads},
                       {"embed_dim", cfg_.transformer.embed_dim},
                       {"ff_width", cfg_.transformer.ff_width}};
  jc["init_seed"] = cfg_.init_seed;
  j["config"] = std::move(jc);
  nlohmann::json jt;
  for (const auto& prm : params_) {
    jt[prm.name] = {{"rows", prm.tensor.rows()},
                    {"cols", prm.tensor.cols()},
                    {"data", std::vector<double>(prm.tensor.data().begin(),
                                                 prm.tensor.data().end())}};
  }
  j["tensors"] = std::move(jt);
  return j.dump();
}

PolicyNet PolicyNet::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.contains("version") || j["version"].get<int>() != kCheckpointVersion) {
    throw InvalidInput("unsupported checkpoint version");
  }
  const auto& jc = j.at("config");
  PolicyConfig cfg;
  cfg.arch = arch_from_string(jc.at("arch").get<std::string>());
  cfg.seq_len = jc.at("seq_len").get<int>();
  cfg.n_actions = jc.at("n_actions").get<int>();
  cfg.shared_trunk = jc.at("shared_trunk").get<bool>();
  cfg.mlp.input_dim = jc.at("mlp").at("input_dim").get<int>();
  cfg.mlp.layers = jc.at("mlp").at("layers").get<int>();
  cfg.mlp.width = jc.at("mlp").at("width").get<int>();
  cfg.lstm.hidden = jc.at("lstm").at("hidden").get<int>();
  cfg.lstm.num_layers = jc.at("lstm").at("num_layers").get<int>();
  cfg.lstm.dropout = jc.at("lstm").at("dropout").get<double>();
  cfg.transformer.encoder_layers =
      jc.at("transformer").at("encoder_layers").get<int>();
  cfg.transformer.heads = jc.at("transformer").at("heads").get<int>();
  cfg.transformer.embed_dim = jc.at("transformer").at("embed_dim").get<int>();
  cfg.transformer.ff_width = jc.at("transformer").at("ff_width").get<int>();
  cfg.init_seed = jc.at("init_seed").get<std::uint64_t>();

  PolicyNet net(cfg);
  const auto& jt = j.at("tensors");
  for (auto& prm : net.params_) {
    if (!jt.contains(prm.name)) {
      throw InvalidInput("checkpoint missing tensor " + prm.name);
    }
    const auto& e = jt.at(prm.name);
    if (e.at("rows").get<int>() != prm.tensor.rows() ||
        e.at("cols").get<int>() != prm.tensor.cols()) {
      throw InvalidInput("checkpoint tensor " + prm.name + " has wrong shape");
    }
    auto data = e.at("data").get<std::vector<double>>();
    std::copy(data.begin(), data.end(), prm.tensor.mutable_data().begin());
  }
  return net;
}

void PolicyNet::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << to_json() << "\n";
}

PolicyNet PolicyNet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace sleepcc
