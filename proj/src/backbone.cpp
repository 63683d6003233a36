#include "ftrl/backbone.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

#include "ftrl/ops.hpp"

namespace ftrl {

namespace {
constexpr double kLnEps = 1e-5;
constexpr char kMagic[5] = {'F', 'T', 'R', 'L', '1'};
}  // namespace

void BackboneConfig::validate() const {
  if (context_length < 1 || num_features < 1 || horizon < 1) {
    throw ContractViolation("backbone config: T, N and P must be >= 1");
  }
  if (num_layers < 0) {
    throw ContractViolation("backbone config: num_layers must be >= 0");
  }
  if (model_dim < 1 || ff_dim < 1 || num_heads < 1) {
    throw ContractViolation("backbone config: dims must be >= 1");
  }
  if (model_dim % num_heads != 0) {
    throw ContractViolation("backbone config: model_dim " +
                            std::to_string(model_dim) +
                            " not divisible by num_heads " +
                            std::to_string(num_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ContractViolation("backbone config: dropout must be in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"context_length", c.context_length},
                     {"num_features", c.num_features},
                     {"horizon", c.horizon},
                     {"model_dim", c.model_dim},
                     {"num_heads", c.num_heads},
                     {"num_layers", c.num_layers},
                     {"ff_dim", c.ff_dim},
                     {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  j.at("context_length").get_to(c.context_length);
  j.at("num_features").get_to(c.num_features);
  j.at("horizon").get_to(c.horizon);
  j.at("model_dim").get_to(c.model_dim);
  j.at("num_heads").get_to(c.num_heads);
  j.at("num_layers").get_to(c.num_layers);
  j.at("ff_dim").get_to(c.ff_dim);
  j.at("dropout").get_to(c.dropout);
}

Backbone::Backbone(BackboneConfig config, std::uint64_t seed)
    : cfg_(config), seed_(seed) {
  cfg_.validate();
  Rng rng(derive_seed(seed, "backbone.init"));
  const int d = cfg_.model_dim;
  const int head_dim = d / cfg_.num_heads;

  auto add_weight = [&](const std::string& name, int rows, int cols, int fan_in) {
    Tensor w = Tensor::zeros({rows, cols});
    init_uniform_fanin(w, fan_in, rng);
    store_.add(name, std::move(w));
    return static_cast<int>(store_.size()) - 1;
  };
  auto add_bias = [&](const std::string& name, int n, double fill = 0.0) {
    store_.add(name, Tensor::full({n}, fill));
    return static_cast<int>(store_.size()) - 1;
  };

  input_w_ = add_weight("input_proj.w", cfg_.num_features, d, cfg_.num_features);
  input_b_ = add_bias("input_proj.b", d);
  {
    Tensor pe = Tensor::zeros({cfg_.context_length, d});
    init_uniform_fanin(pe, d, rng);
    store_.add("pos_enc", std::move(pe));
    pos_enc_ = static_cast<int>(store_.size()) - 1;
  }

  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    LayerIdx idx;
    idx.ln1_g = add_bias(p + "ln1.g", d, 1.0);
    idx.ln1_b = add_bias(p + "ln1.b", d);
    for (int h = 0; h < cfg_.num_heads; ++h) {
      const std::string hp = p + "attn.h" + std::to_string(h) + ".";
      idx.wq.push_back(add_weight(hp + "wq", d, head_dim, d));
      idx.wk.push_back(add_weight(hp + "wk", d, head_dim, d));
      idx.wv.push_back(add_weight(hp + "wv", d, head_dim, d));
    }
    idx.wo = add_weight(p + "attn.wo", d, d, d);
    idx.bo = add_bias(p + "attn.bo", d);
    idx.ln2_g = add_bias(p + "ln2.g", d, 1.0);
    idx.ln2_b = add_bias(p + "ln2.b", d);
    idx.ff_w1 = add_weight(p + "ff.w1", d, cfg_.ff_dim, d);
    idx.ff_b1 = add_bias(p + "ff.b1", cfg_.ff_dim);
    idx.ff_w2 = add_weight(p + "ff.w2", cfg_.ff_dim, d, cfg_.ff_dim);
    idx.ff_b2 = add_bias(p + "ff.b2", d);
    layers_.push_back(std::move(idx));
  }

  final_g_ = add_bias("final_ln.g", d, 1.0);
  final_b_ = add_bias("final_ln.b", d);
  head_w_ = add_weight("head.w", d, cfg_.horizon, d);
  head_b_ = add_bias("head.b", cfg_.horizon);
}

void Backbone::check_window(const Tensor& w) const {
  if (w.rank() != 2 || w.shape()[0] != cfg_.context_length ||
      w.shape()[1] != cfg_.num_features) {
    throw ContractViolation("backbone expects a [" +
                            std::to_string(cfg_.context_length) + "x" +
                            std::to_string(cfg_.num_features) +
                            "] window, got " + w.shape_str());
  }
}

namespace {

Var apply_dropout(GraphContext& ctx, Var x, double p, Rng* rng) {
  if (rng == nullptr || p <= 0.0) return x;
  const double keep = 1.0 - p;
  Tensor mask = Tensor::zeros(x.value().shape());
  for (double& v : mask.mutable_data()) {
    v = rng->uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mul(x, ctx.input(std::move(mask)));
}

}  // namespace

Var Backbone::build_latent(GraphContext& ctx, Var window, Rng* dropout) const {
  check_window(window.value());
  auto& store = const_cast<ParameterStore&>(store_);
  auto P = [&](int idx) -> Var { return ctx.use(store.at(static_cast<std::size_t>(idx))); };

  const int head_dim = cfg_.model_dim / cfg_.num_heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var h = add(matmul(window, P(input_w_)), P(input_b_));
  h = add(h, P(pos_enc_));

  for (const LayerIdx& L : layers_) {
    Var x = add(mul(layer_norm(h, 1, kLnEps), P(L.ln1_g)), P(L.ln1_b));
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.num_heads));
    for (int head = 0; head < cfg_.num_heads; ++head) {
      Var q = matmul(x, P(L.wq[static_cast<std::size_t>(head)]));
      Var k = matmul(x, P(L.wk[static_cast<std::size_t>(head)]));
      Var v = matmul(x, P(L.wv[static_cast<std::size_t>(head)]));
      Var attn = softmax(scale(matmul(q, transpose(k)), attn_scale), 1);
      heads.push_back(matmul(attn, v));
    }
    Var proj = add(matmul(concat_cols(heads), P(L.wo)), P(L.bo));
    h = add(h, apply_dropout(ctx, proj, cfg_.dropout, dropout));

    Var y = add(mul(layer_norm(h, 1, kLnEps), P(L.ln2_g)), P(L.ln2_b));
    Var ff = add(matmul(tanh(add(matmul(y, P(L.ff_w1)), P(L.ff_b1))), P(L.ff_w2)),
                 P(L.ff_b2));
    h = add(h, apply_dropout(ctx, ff, cfg_.dropout, dropout));
  }

  Var out = add(mul(layer_norm(h, 1, kLnEps), P(final_g_)), P(final_b_));
  return mean_over_rows(out);
}

Var Backbone::build_head(GraphContext& ctx, Var latent) const {
  auto& store = const_cast<ParameterStore&>(store_);
  return add(matmul(latent, ctx.use(store.at(static_cast<std::size_t>(head_w_)))),
             ctx.use(store.at(static_cast<std::size_t>(head_b_))));
}

Var Backbone::build_forecast(GraphContext& ctx, Var window, Rng* dropout) const {
  return build_head(ctx, build_latent(ctx, window, dropout));
}

Tensor Backbone::forward_latent(const Tensor& window) const {
  Graph g;
  GraphContext ctx(g);
  return build_latent(ctx, ctx.input(window)).value();
}

Tensor Backbone::forward_predict(const Tensor& window) const {
  Graph g;
  GraphContext ctx(g);
  return build_forecast(ctx, ctx.input(window)).value();
}

int Backbone::set_frozen_fraction(double f) {
  if (f < 0.0 || f > 1.0) {
    throw ContractViolation("frozen fraction must be in [0, 1], got " +
                            std::to_string(f));
  }
  frozen_fraction_ = f;
  const int frozen_layers =
      static_cast<int>(std::floor(f * static_cast<double>(cfg_.num_layers)));

  for (Parameter* p : store_.all()) p->frozen = false;
  if (f > 0.0) {
    store_.at(static_cast<std::size_t>(input_w_)).frozen = true;
    store_.at(static_cast<std::size_t>(input_b_)).frozen = true;
    store_.at(static_cast<std::size_t>(pos_enc_)).frozen = true;
  }
  for (int l = 0; l < frozen_layers; ++l) {
    for (const Parameter* p : layer_parameters(l)) {
      const_cast<Parameter*>(p)->frozen = true;
    }
  }
  // The final norm belongs to the encoder output: it freezes exactly when
  // the whole stack does, leaving only the head trainable at f = 1.
  if (f > 0.0 && frozen_layers == cfg_.num_layers) {
    store_.at(static_cast<std::size_t>(final_g_)).frozen = true;
    store_.at(static_cast<std::size_t>(final_b_)).frozen = true;
  }
  return frozen_layers;
}

std::vector<const Parameter*> Backbone::layer_parameters(int layer) const {
  if (layer < 0 || layer >= cfg_.num_layers) {
    throw ContractViolation("layer index out of range");
  }
  const LayerIdx& L = layers_[static_cast<std::size_t>(layer)];
  std::vector<int> ids{L.ln1_g, L.ln1_b};
  for (std::size_t h = 0; h < L.wq.size(); ++h) {
    ids.push_back(L.wq[h]);
    ids.push_back(L.wk[h]);
    ids.push_back(L.wv[h]);
  }
  for (int id : {L.wo, L.bo, L.ln2_g, L.ln2_b, L.ff_w1, L.ff_b1, L.ff_w2, L.ff_b2}) {
    ids.push_back(id);
  }
  std::vector<const Parameter*> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(&store_.at(static_cast<std::size_t>(id)));
  return out;
}

std::vector<Parameter*> Backbone::head_parameters() {
  return {&store_.at(static_cast<std::size_t>(head_w_)),
          &store_.at(static_cast<std::size_t>(head_b_))};
}

void Backbone::save(const std::string& path) const {
  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["config"] = cfg_;
  meta["seed"] = seed_;
  meta["provenance"] = provenance;
  meta["frozen_fraction"] = frozen_fraction_;
  nlohmann::json manifest = nlohmann::json::array();
  for (const Parameter* p : store_.all()) {
    manifest.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  }
  meta["params"] = manifest;
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(meta_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  for (const Parameter* p : store_.all()) {
    const auto data = p->value.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw IoError("short write while saving checkpoint: " + path);
}

Backbone Backbone::load(const std::string& path, const BackboneConfig* expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("bad magic in checkpoint " + path);
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  std::string meta_str(len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint metadata: " + path);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("unreadable checkpoint metadata: " + std::string(e.what()));
  }
  BackboneConfig cfg = meta.at("config").get<BackboneConfig>();
  if (expect != nullptr && !(cfg == *expect)) {
    throw IoError("config mismatch: checkpoint " + path +
                  " was trained with a different backbone configuration");
  }
  Backbone model(cfg, meta.at("seed").get<std::uint64_t>());
  model.provenance = meta.value("provenance", std::string{});

  const auto manifest = meta.at("params");
  const auto params = model.store_.all();
  if (manifest.size() != params.size()) {
    throw IoError("config mismatch: checkpoint has " +
                  std::to_string(manifest.size()) + " tensors, model expects " +
                  std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = manifest[i].at("name").get<std::string>();
    const auto shape = manifest[i].at("shape").get<std::vector<int>>();
    if (name != params[i]->name || shape != params[i]->value.shape()) {
      throw IoError("config mismatch at tensor " + name + " (expected " +
                    params[i]->name + " " + params[i]->value.shape_str() + ")");
    }
    std::vector<double> buf(static_cast<std::size_t>(params[i]->value.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint tensor " + name);
    params[i]->value = Tensor::from(shape, std::move(buf));
  }
  model.set_frozen_fraction(meta.value("frozen_fraction", 0.0));
  return model;
}

double dataset_mse(const Backbone& model, const WindowedDataset& data,
                   std::span<const int> indices) {
  if (indices.empty()) throw ContractViolation("dataset_mse: empty index set");
  double total = 0.0;
  for (int w : indices) {
    const Tensor pred = model.forward_predict(data.states[static_cast<std::size_t>(w)]);
    const Tensor& y = data.targets[static_cast<std::size_t>(w)];
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      const double d = pred.at(i) - y.at(i);
      total += d * d;
    }
  }
  return total / (static_cast<double>(indices.size()) *
                  static_cast<double>(data.horizon));
}

std::vector<EpochStats> pretrain(Backbone& model, const WindowedDataset& data,
                                 const PretrainConfig& config,
                                 std::uint64_t seed) {
  if (data.size() == 0) throw ContractViolation("pretrain: empty dataset");
  if (config.lr < 0.0) throw ContractViolation("pretrain: negative lr");
  if (config.epochs < 0 || config.batch_size < 1) {
    throw ContractViolation("pretrain: bad epochs/batch_size");
  }

  std::vector<int> train_idx = data.train;
  std::vector<int> val_idx = data.validation;
  if (train_idx.empty()) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      train_idx.push_back(static_cast<int>(i));
    }
  }
  if (val_idx.empty()) val_idx = train_idx;

  Rng shuffle_rng(derive_seed(seed, "pretrain.shuffle"));
  Rng dropout_rng(derive_seed(seed, "pretrain.dropout"));
  Adam opt(AdamConfig{.lr = config.lr});

  std::vector<EpochStats> history;
  std::vector<Parameter> last_good = model.params().snapshot();

  const std::vector<int> canonical_train = train_idx;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double frac =
        config.epochs > 1 ? static_cast<double>(epoch) / (config.epochs - 1) : 0.0;
    opt.config().lr = config.lr * (1.0 + frac * (config.final_lr_scale - 1.0));
    shuffle_rng.shuffle(train_idx);
    std::vector<double> window_loss(data.size(), 0.0);
    try {
      for (std::size_t start = 0; start < train_idx.size();
           start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end = std::min(
            train_idx.size(), start + static_cast<std::size_t>(config.batch_size));
        Graph g;
        GraphContext ctx(g);
        Var loss{};
        for (std::size_t i = start; i < end; ++i) {
          const int w = train_idx[i];
          Var pred = model.build_forecast(
              ctx, ctx.input(data.states[static_cast<std::size_t>(w)]),
              model.config().dropout > 0.0 ? &dropout_rng : nullptr);
          Var err = sub(pred, ctx.input(data.targets[static_cast<std::size_t>(w)]));
          Var mse = mean(mul(err, err));
          window_loss[static_cast<std::size_t>(w)] = mse.value().item();
          loss = (i == start) ? mse : add(loss, mse);
        }
        loss = scale(loss, 1.0 / static_cast<double>(end - start));
        auto grads = ctx.gradients(loss);
        opt.step(grads);
      }
    } catch (const NonFiniteError&) {
      // Divergence: retain the last finished epoch's parameters.
      model.params().restore(last_good);
      break;
    }
    EpochStats stats;
    stats.epoch = epoch;
    // Reduced in canonical window order so the metric is independent of the
    // epoch's shuffle.
    double loss_sum = 0.0;
    for (int w : canonical_train) loss_sum += window_loss[static_cast<std::size_t>(w)];
    stats.train_mse = loss_sum / static_cast<double>(canonical_train.size());
    stats.val_mse = dataset_mse(model, data, val_idx);
    history.push_back(stats);
    last_good = model.params().snapshot();
  }
  return history;
}

}  // namespace ftrl
