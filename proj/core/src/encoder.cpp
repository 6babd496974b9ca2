#include "ldt/encoder.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ldt/safetensors.hpp"
#include "ldt/util.hpp"

namespace ldt {

std::string to_string(ModelSize s) {
  switch (s) {
    case ModelSize::Base: return "base";
    case ModelSize::Large: return "large";
    case ModelSize::Other: return "other";
  }
  fail("bad model size");
}

ModelSize model_size_from_string(const std::string& s) {
  if (s == "base") return ModelSize::Base;
  if (s == "large") return ModelSize::Large;
  return ModelSize::Other;
}

EncoderConfig EncoderConfig::from_json_file(const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  EncoderConfig c;
  c.model_id = j.value("model_id", j.value("_name_or_path", std::string("unnamed")));
  c.num_layers = j.at("num_hidden_layers").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.num_heads = j.at("num_attention_heads").get<int>();
  c.intermediate_size = j.at("intermediate_size").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_position_embeddings = j.at("max_position_embeddings").get<int>();
  c.layer_norm_eps = j.value("layer_norm_eps", 1e-5f);
  c.initializer_range = j.value("initializer_range", 0.02f);
  c.pad_token_id = j.value("pad_token_id", 1);
  if (c.hidden_size % c.num_heads != 0)
    fail("hidden size ", c.hidden_size, " not divisible by ", c.num_heads, " heads");
  return c;
}

void EncoderConfig::save_json(const std::filesystem::path& path) const {
  nlohmann::json j = {
      {"model_type", "roberta"},
      {"model_id", model_id},
      {"num_hidden_layers", num_layers},
      {"hidden_size", hidden_size},
      {"num_attention_heads", num_heads},
      {"intermediate_size", intermediate_size},
      {"vocab_size", vocab_size},
      {"max_position_embeddings", max_position_embeddings},
      {"layer_norm_eps", layer_norm_eps},
      {"initializer_range", initializer_range},
      {"pad_token_id", pad_token_id},
  };
  write_file(path, j.dump(2) + "\n");
}

EncoderConfig reference_config(ModelSize size) {
  EncoderConfig c;
  c.vocab_size = 50265;
  c.max_position_embeddings = 514;
  c.layer_norm_eps = 1e-5f;
  if (size == ModelSize::Base) {
    c.model_id = "roberta-base";
    c.num_layers = 12;
    c.hidden_size = 768;
    c.num_heads = 12;
    c.intermediate_size = 3072;
  } else if (size == ModelSize::Large) {
    c.model_id = "roberta-large";
    c.num_layers = 24;
    c.hidden_size = 1024;
    c.num_heads = 16;
    c.intermediate_size = 4096;
  } else {
    fail("reference_config needs base or large");
  }
  return c;
}

FreezePolicy FreezePolicy::lower_half(int num_layers) {
  FreezePolicy p;
  for (int i = 0; i < num_layers / 2; ++i) p.frozen_layers.insert(i);
  return p;
}

FreezePolicy FreezePolicy::all_frozen(int num_layers) {
  FreezePolicy p;
  for (int i = 0; i < num_layers; ++i) p.frozen_layers.insert(i);
  p.embeddings_trainable = false;
  p.head_trainable = false;
  return p;
}

std::string FreezePolicy::to_string() const {
  std::string out = "frozen_layers=";
  bool first = true;
  for (int i : frozen_layers) {
    if (!first) out += ',';
    out += std::to_string(i);
    first = false;
  }
  out += msg(" embeddings_trainable=", embeddings_trainable ? 1 : 0,
             " head_trainable=", head_trainable ? 1 : 0);
  return out;
}

namespace detail {

struct Weights {
  Parameter word_emb, pos_emb, type_emb, emb_ln_w, emb_ln_b;
  struct Layer {
    Parameter q_w, q_b, k_w, k_b, v_w, v_b;
    Parameter ao_w, ao_b, ln1_w, ln1_b;
    Parameter ff1_w, ff1_b, ff2_w, ff2_b, ln2_w, ln2_b;
  };
  std::vector<Layer> layers;
  Parameter mlm_dense_w, mlm_dense_b, mlm_ln_w, mlm_ln_b, mlm_bias;
  bool has_classifier = false;
  int num_labels = 0;
  Parameter cls_dense_w, cls_dense_b, cls_out_w, cls_out_b;
};

}  // namespace detail

using detail::Weights;

namespace {

struct LnCache {
  MatF xhat;
  VecF inv_std;
};

// y = gamma * (x - mean) / sqrt(var + eps) + beta, per row.
MatF layer_norm(const MatF& x, const Parameter& gamma, const Parameter& beta, float eps,
                LnCache& cache) {
  const int rows = static_cast<int>(x.rows()), cols = static_cast<int>(x.cols());
  cache.xhat.resize(rows, cols);
  cache.inv_std.resize(rows);
  MatF y(rows, cols);
  for (int r = 0; r < rows; ++r) {
    float mean = x.row(r).mean();
    float var = (x.row(r).array() - mean).square().mean();
    float inv = 1.0f / std::sqrt(var + eps);
    cache.inv_std[r] = inv;
    cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
    y.row(r) = cache.xhat.row(r).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
  }
  return y;
}

MatF layer_norm_backward(const MatF& dy, const LnCache& cache, const Parameter& gamma,
                         Parameter& dgamma, Parameter& dbeta) {
  const int rows = static_cast<int>(dy.rows()), cols = static_cast<int>(dy.cols());
  MatF dx(rows, cols);
  for (int r = 0; r < rows; ++r) {
    RowF dxhat = dy.row(r).cwiseProduct(gamma.value.row(0));
    dgamma.grad.row(0) += dy.row(r).cwiseProduct(cache.xhat.row(r));
    dbeta.grad.row(0) += dy.row(r);
    float sum_dxhat = dxhat.sum();
    float sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(r)).sum();
    dx.row(r) = (cache.inv_std[r] / static_cast<float>(cols)) *
                (static_cast<float>(cols) * dxhat.array() - sum_dxhat -
                 cache.xhat.row(r).array() * sum_dxhat_xhat)
                    .matrix();
  }
  return dx;
}

inline float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }

inline float gelu_grad(float x) {
  constexpr float inv_sqrt2 = 0.70710678118654752f;
  constexpr float inv_sqrt2pi = 0.39894228040143268f;
  return 0.5f * (1.0f + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5f * x * x);
}

MatF gelu_mat(const MatF& x) { return x.unaryExpr([](float v) { return gelu(v); }); }

// y = x W^T + b with W stored [out, in], HF Linear layout.
MatF linear(const MatF& x, const Parameter& w, const Parameter& b) {
  MatF y = x * w.value.transpose();
  y.rowwise() += b.value.row(0);
  return y;
}

void linear_backward(const MatF& dy, const MatF& x, Parameter& w, Parameter& b, MatF* dx) {
  w.grad.noalias() += dy.transpose() * x;
  b.grad.row(0) += dy.colwise().sum();
  if (dx) dx->noalias() += dy * w.value;
}

struct LayerCache {
  MatF hin;             // layer input [S,H]
  MatF q, k, v;         // projections
  std::vector<MatF> attn;  // per-head softmax [S,S]
  MatF ctx;             // concatenated head outputs
  LnCache ln1;
  MatF h1;              // post-attention LN output
  MatF ff1;             // pre-gelu intermediate [S,F]
  MatF g;               // post-gelu
  LnCache ln2;
};

}  // namespace

struct ForwardCache::Impl {
  std::vector<int> ids;
  int mask_index = -1;
  LnCache emb_ln;
  std::vector<LayerCache> layers;
  MatF final_hidden;  // [S,H]
  // mask head
  MatF mlm_pre;   // pre-gelu [1,H]
  MatF mlm_g;     // post-gelu
  LnCache mlm_ln;
  MatF mlm_t;     // post-LN, feeds the tied decoder
  // classifier head
  MatF cls_pre;   // pre-tanh [1,H]
  MatF cls_act;   // post-tanh
};

ForwardCache::ForwardCache() : impl_(std::make_unique<Impl>()) {}
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;

namespace {

void init_param(Parameter& p, const std::string& name, const std::string& group, int rows,
                int cols, std::mt19937_64& rng, float stddev, bool normal) {
  p.name = name;
  p.group = group;
  p.value.resize(rows, cols);
  if (normal) {
    std::normal_distribution<float> dist(0.0f, stddev);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p.value(r, c) = dist(rng);
  } else {
    p.value.setZero();
  }
  p.grad = MatF::Zero(rows, cols);
  p.trainable = true;
}

void init_ones(Parameter& p, const std::string& name, const std::string& group, int cols) {
  p.name = name;
  p.group = group;
  p.value = MatF::Ones(1, cols);
  p.grad = MatF::Zero(1, cols);
  p.trainable = true;
}

}  // namespace

MaskedLmEncoder::MaskedLmEncoder()
    : tokenizer_({{ "<s>", 0 }, { "<pad>", 1 }, { "</s>", 2 }, { "<unk>", 3 }, { "<mask>", 4 }},
                 {}) {}

MaskedLmEncoder::MaskedLmEncoder(EncoderConfig config, ByteLevelBpe tokenizer, uint64_t seed)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)), w_(new Weights) {
  if (config_.vocab_size == 0) config_.vocab_size = tokenizer_.vocab_size();
  if (config_.vocab_size != tokenizer_.vocab_size())
    fail("config vocab_size ", config_.vocab_size, " != tokenizer size ",
         tokenizer_.vocab_size());
  if (config_.hidden_size % config_.num_heads != 0)
    fail("hidden size not divisible by head count");

  std::mt19937_64 rng(seed);
  const int H = config_.hidden_size, F = config_.intermediate_size, V = config_.vocab_size;
  const float s = config_.initializer_range;

  init_param(w_->word_emb, "roberta.embeddings.word_embeddings.weight", "embeddings", V, H, rng,
             s, true);
  w_->word_emb.value.row(config_.pad_token_id).setZero();
  init_param(w_->pos_emb, "roberta.embeddings.position_embeddings.weight", "embeddings",
             config_.max_position_embeddings, H, rng, s, true);
  init_param(w_->type_emb, "roberta.embeddings.token_type_embeddings.weight", "embeddings", 1, H,
             rng, s, true);
  init_ones(w_->emb_ln_w, "roberta.embeddings.LayerNorm.weight", "embeddings", H);
  init_param(w_->emb_ln_b, "roberta.embeddings.LayerNorm.bias", "embeddings", 1, H, rng, s,
             false);

  w_->layers.resize(config_.num_layers);
  for (int i = 0; i < config_.num_layers; ++i) {
    auto& L = w_->layers[i];
    std::string pre = "roberta.encoder.layer." + std::to_string(i) + ".";
    std::string group = "layer_" + std::to_string(i);
    init_param(L.q_w, pre + "attention.self.query.weight", group, H, H, rng, s, true);
    init_param(L.q_b, pre + "attention.self.query.bias", group, 1, H, rng, s, false);
    init_param(L.k_w, pre + "attention.self.key.weight", group, H, H, rng, s, true);
    init_param(L.k_b, pre + "attention.self.key.bias", group, 1, H, rng, s, false);
    init_param(L.v_w, pre + "attention.self.value.weight", group, H, H, rng, s, true);
    init_param(L.v_b, pre + "attention.self.value.bias", group, 1, H, rng, s, false);
    init_param(L.ao_w, pre + "attention.output.dense.weight", group, H, H, rng, s, true);
    init_param(L.ao_b, pre + "attention.output.dense.bias", group, 1, H, rng, s, false);
    init_ones(L.ln1_w, pre + "attention.output.LayerNorm.weight", group, H);
    init_param(L.ln1_b, pre + "attention.output.LayerNorm.bias", group, 1, H, rng, s, false);
    init_param(L.ff1_w, pre + "intermediate.dense.weight", group, F, H, rng, s, true);
    init_param(L.ff1_b, pre + "intermediate.dense.bias", group, 1, F, rng, s, false);
    init_param(L.ff2_w, pre + "output.dense.weight", group, H, F, rng, s, true);
    init_param(L.ff2_b, pre + "output.dense.bias", group, 1, H, rng, s, false);
    init_ones(L.ln2_w, pre + "output.LayerNorm.weight", group, H);
    init_param(L.ln2_b, pre + "output.LayerNorm.bias", group, 1, H, rng, s, false);
  }

  init_param(w_->mlm_dense_w, "lm_head.dense.weight", "mlm_head", H, H, rng, s, true);
  init_param(w_->mlm_dense_b, "lm_head.dense.bias", "mlm_head", 1, H, rng, s, false);
  init_ones(w_->mlm_ln_w, "lm_head.layer_norm.weight", "mlm_head", H);
  init_param(w_->mlm_ln_b, "lm_head.layer_norm.bias", "mlm_head", 1, H, rng, s, false);
  init_param(w_->mlm_bias, "lm_head.bias", "mlm_head", 1, V, rng, s, false);

  rebuild_registry();
}

MaskedLmEncoder::MaskedLmEncoder(MaskedLmEncoder&& other) noexcept
    : config_(std::move(other.config_)),
      tokenizer_(std::move(other.tokenizer_)),
      w_(std::move(other.w_)) {
  rebuild_registry();
}

MaskedLmEncoder& MaskedLmEncoder::operator=(MaskedLmEncoder&& other) noexcept {
  if (this != &other) {
    config_ = std::move(other.config_);
    tokenizer_ = std::move(other.tokenizer_);
    w_ = std::move(other.w_);
    rebuild_registry();
  }
  return *this;
}

MaskedLmEncoder::~MaskedLmEncoder() = default;

MaskedLmEncoder MaskedLmEncoder::clone() const {
  MaskedLmEncoder out;
  out.config_ = config_;
  out.tokenizer_ = tokenizer_;
  out.w_ = std::make_unique<Weights>(*w_);
  out.rebuild_registry();
  return out;
}

void MaskedLmEncoder::rebuild_registry() {
  registry_.clear();
  if (!w_) return;
  auto add = [&](Parameter& p) { registry_.push_back(&p); };
  add(w_->word_emb);
  add(w_->pos_emb);
  add(w_->type_emb);
  add(w_->emb_ln_w);
  add(w_->emb_ln_b);
  for (auto& L : w_->layers) {
    add(L.q_w); add(L.q_b); add(L.k_w); add(L.k_b); add(L.v_w); add(L.v_b);
    add(L.ao_w); add(L.ao_b); add(L.ln1_w); add(L.ln1_b);
    add(L.ff1_w); add(L.ff1_b); add(L.ff2_w); add(L.ff2_b); add(L.ln2_w); add(L.ln2_b);
  }
  add(w_->mlm_dense_w);
  add(w_->mlm_dense_b);
  add(w_->mlm_ln_w);
  add(w_->mlm_ln_b);
  add(w_->mlm_bias);
  if (w_->has_classifier) {
    add(w_->cls_dense_w);
    add(w_->cls_dense_b);
    add(w_->cls_out_w);
    add(w_->cls_out_b);
  }
}

int MaskedLmEncoder::vocab_size() const { return static_cast<int>(w_->word_emb.value.rows()); }

EncodedInput MaskedLmEncoder::tokenize_with_mask(const PromptString& prompt) const {
  int mask_count = 0;
  for (const auto& seg : prompt.segments)
    if (seg.kind == PromptString::Kind::Mask) ++mask_count;
  if (mask_count != 1) fail("prompt must contain exactly one mask slot, found ", mask_count);

  // Literal trailing spaces migrate: the mask swallows the space before it
  // (the tokenizer's mask is left-stripping), while a space before the text
  // becomes the text's leading space so subword pieces match the joint
  // rendering.
  struct Piece {
    PromptString::Kind kind;
    std::vector<int> ids;
  };
  std::vector<Piece> pieces;
  std::vector<std::string> values;
  for (const auto& seg : prompt.segments) values.push_back(seg.value);
  for (size_t i = 0; i + 1 < prompt.segments.size(); ++i) {
    if (prompt.segments[i].kind != PromptString::Kind::Literal) continue;
    if (values[i].empty() || values[i].back() != ' ') continue;
    auto next = prompt.segments[i + 1].kind;
    if (next == PromptString::Kind::Mask) {
      values[i].pop_back();
    } else if (next == PromptString::Kind::Text) {
      values[i].pop_back();
      values[i + 1] = " " + values[i + 1];
    }
  }

  size_t frame_tokens = 2;  // bos + eos
  int text_pos = -1;
  for (size_t i = 0; i < prompt.segments.size(); ++i) {
    Piece p{prompt.segments[i].kind, {}};
    switch (prompt.segments[i].kind) {
      case PromptString::Kind::Mask:
        p.ids = {tokenizer_.mask_id()};
        frame_tokens += 1;
        break;
      case PromptString::Kind::Literal:
        p.ids = tokenizer_.encode(values[i]);
        frame_tokens += p.ids.size();
        break;
      case PromptString::Kind::Text:
        p.ids = tokenizer_.encode(values[i]);
        text_pos = static_cast<int>(pieces.size());
        break;
    }
    pieces.push_back(std::move(p));
  }

  const size_t budget = static_cast<size_t>(config_.sequence_budget());
  if (frame_tokens > budget)
    fail("pattern frame needs ", frame_tokens, " tokens, over the ", budget, " budget");

  EncodedInput out;
  size_t avail = budget - frame_tokens;
  if (text_pos >= 0 && pieces[text_pos].ids.size() > avail) {
    pieces[text_pos].ids.resize(avail);  // tail-truncate the text only
    out.truncated = true;
  }

  out.ids.push_back(tokenizer_.bos_id());
  for (const auto& p : pieces) {
    if (p.kind == PromptString::Kind::Mask)
      out.mask_index = static_cast<int>(out.ids.size());
    out.ids.insert(out.ids.end(), p.ids.begin(), p.ids.end());
  }
  out.ids.push_back(tokenizer_.eos_id());
  return out;
}

EncodedInput MaskedLmEncoder::tokenize_plain(const std::string& text) const {
  EncodedInput out;
  std::vector<int> ids = tokenizer_.encode(text);
  if (config_.sequence_budget() < 2) fail("sequence budget too small for bos/eos");
  size_t budget = static_cast<size_t>(config_.sequence_budget() - 2);
  if (ids.size() > budget) {
    ids.resize(budget);
    out.truncated = true;
  }
  out.ids.push_back(tokenizer_.bos_id());
  out.ids.insert(out.ids.end(), ids.begin(), ids.end());
  out.ids.push_back(tokenizer_.eos_id());
  return out;
}

void MaskedLmEncoder::forward(const EncodedInput& input, ForwardCache& cache) const {
  const int S = static_cast<int>(input.ids.size());
  if (S == 0) fail("empty input");
  if (S > config_.sequence_budget())
    fail("input of ", S, " tokens exceeds the ", config_.sequence_budget(), " budget");
  const int H = config_.hidden_size;
  const int nh = config_.num_heads;
  const int dh = H / nh;
  auto& c = *cache.impl_;
  c.ids = input.ids;
  c.mask_index = input.mask_index;

  MatF x(S, H);
  for (int s = 0; s < S; ++s) {
    int id = input.ids[s];
    if (id < 0 || id >= vocab_size()) fail("token id ", id, " out of range");
    x.row(s) = w_->word_emb.value.row(id) +
               w_->pos_emb.value.row(config_.position_offset() + s) +
               w_->type_emb.value.row(0);
  }
  MatF h = layer_norm(x, w_->emb_ln_w, w_->emb_ln_b, config_.layer_norm_eps, c.emb_ln);

  c.layers.assign(static_cast<size_t>(config_.num_layers), {});
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (int l = 0; l < config_.num_layers; ++l) {
    auto& L = w_->layers[l];
    auto& lc = c.layers[l];
    lc.hin = h;
    lc.q = linear(h, L.q_w, L.q_b);
    lc.k = linear(h, L.k_w, L.k_b);
    lc.v = linear(h, L.v_w, L.v_b);
    lc.attn.resize(nh);
    lc.ctx.resize(S, H);
    for (int hd = 0; hd < nh; ++hd) {
      auto qh = lc.q.middleCols(hd * dh, dh);
      auto kh = lc.k.middleCols(hd * dh, dh);
      auto vh = lc.v.middleCols(hd * dh, dh);
      MatF scores = (qh * kh.transpose()) * scale;
      MatF& a = lc.attn[hd];
      a.resize(S, S);
      for (int r = 0; r < S; ++r) {
        float m = scores.row(r).maxCoeff();
        a.row(r) = (scores.row(r).array() - m).exp();
        a.row(r) /= a.row(r).sum();
      }
      lc.ctx.middleCols(hd * dh, dh).noalias() = a * vh;
    }
    MatF ao = linear(lc.ctx, L.ao_w, L.ao_b);
    MatF r1 = h + ao;
    lc.h1 = layer_norm(r1, L.ln1_w, L.ln1_b, config_.layer_norm_eps, lc.ln1);
    lc.ff1 = linear(lc.h1, L.ff1_w, L.ff1_b);
    lc.g = gelu_mat(lc.ff1);
    MatF ff2 = linear(lc.g, L.ff2_w, L.ff2_b);
    MatF r2 = lc.h1 + ff2;
    h = layer_norm(r2, L.ln2_w, L.ln2_b, config_.layer_norm_eps, lc.ln2);
  }
  c.final_hidden = h;
}

VecF MaskedLmEncoder::mlm_logits(const EncodedInput& input, ForwardCache& cache) const {
  if (input.mask_index < 0 || input.mask_index >= static_cast<int>(input.ids.size()))
    fail("input has no mask position");
  forward(input, cache);
  auto& c = *cache.impl_;
  MatF h = c.final_hidden.row(input.mask_index);
  c.mlm_pre = linear(h, w_->mlm_dense_w, w_->mlm_dense_b);
  c.mlm_g = gelu_mat(c.mlm_pre);
  c.mlm_t = layer_norm(c.mlm_g, w_->mlm_ln_w, w_->mlm_ln_b, config_.layer_norm_eps, c.mlm_ln);
  // Tied decoder: scores against every embedding row plus the head bias.
  VecF logits = (w_->word_emb.value * c.mlm_t.row(0).transpose());
  logits += w_->mlm_bias.value.row(0).transpose();
  return logits;
}

VecF MaskedLmEncoder::mask_distribution(const EncodedInput& input) const {
  ForwardCache cache;
  return mlm_logits(input, cache);
}

VecF MaskedLmEncoder::pooled_representation(const EncodedInput& input) const {
  ForwardCache cache;
  forward(input, cache);
  return cache.impl_->final_hidden.row(0).transpose();
}

VecF MaskedLmEncoder::classifier_logits(const EncodedInput& input, ForwardCache& cache) const {
  if (!w_->has_classifier) fail("no classifier head attached");
  forward(input, cache);
  auto& c = *cache.impl_;
  MatF pooled = c.final_hidden.row(0);
  c.cls_pre = linear(pooled, w_->cls_dense_w, w_->cls_dense_b);
  c.cls_act = c.cls_pre.unaryExpr([](float v) { return std::tanh(v); });
  MatF logits = linear(c.cls_act, w_->cls_out_w, w_->cls_out_b);
  return logits.row(0).transpose();
}

namespace {

// Shared transformer backward from a gradient on the final hidden states.
void encoder_backward(const EncoderConfig& cfg, Weights& w, ForwardCache::Impl& c,
                      MatF dfinal) {
  const int S = static_cast<int>(c.ids.size());
  const int H = cfg.hidden_size;
  const int nh = cfg.num_heads;
  const int dh = H / nh;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  MatF dh_out = std::move(dfinal);
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    auto& L = w.layers[l];
    auto& lc = c.layers[l];
    // output LayerNorm
    MatF dr2 = layer_norm_backward(dh_out, lc.ln2, L.ln2_w, L.ln2_w, L.ln2_b);
    MatF dh1 = dr2;
    // FFN
    MatF dg = MatF::Zero(S, cfg.intermediate_size);
    linear_backward(dr2, lc.g, L.ff2_w, L.ff2_b, &dg);
    MatF dff1 = dg.binaryExpr(lc.ff1, [](float g, float x) { return g * gelu_grad(x); });
    linear_backward(dff1, lc.h1, L.ff1_w, L.ff1_b, &dh1);
    // attention LayerNorm
    MatF dr1 = layer_norm_backward(dh1, lc.ln1, L.ln1_w, L.ln1_w, L.ln1_b);
    MatF dhin = dr1;
    MatF dctx = MatF::Zero(S, H);
    linear_backward(dr1, lc.ctx, L.ao_w, L.ao_b, &dctx);
    // attention heads
    MatF dq(S, H), dk(S, H), dv(S, H);
    for (int hd = 0; hd < nh; ++hd) {
      auto a = lc.attn[hd];
      auto vh = lc.v.middleCols(hd * dh, dh);
      auto qh = lc.q.middleCols(hd * dh, dh);
      auto kh = lc.k.middleCols(hd * dh, dh);
      MatF dctx_h = dctx.middleCols(hd * dh, dh);
      MatF da = dctx_h * vh.transpose();
      dv.middleCols(hd * dh, dh).noalias() = a.transpose() * dctx_h;
      // softmax rows
      MatF dscores(S, S);
      for (int r = 0; r < S; ++r) {
        float dot = da.row(r).cwiseProduct(a.row(r)).sum();
        dscores.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
      }
      dscores *= scale;
      dq.middleCols(hd * dh, dh).noalias() = dscores * kh;
      dk.middleCols(hd * dh, dh).noalias() = dscores.transpose() * qh;
    }
    linear_backward(dq, lc.hin, L.q_w, L.q_b, &dhin);
    linear_backward(dk, lc.hin, L.k_w, L.k_b, &dhin);
    linear_backward(dv, lc.hin, L.v_w, L.v_b, &dhin);
    dh_out = std::move(dhin);
  }

  MatF dx = layer_norm_backward(dh_out, c.emb_ln, w.emb_ln_w, w.emb_ln_w, w.emb_ln_b);
  for (int s = 0; s < S; ++s) {
    w.word_emb.grad.row(c.ids[s]) += dx.row(s);
    w.pos_emb.grad.row(cfg.position_offset() + s) += dx.row(s);
    w.type_emb.grad.row(0) += dx.row(s);
  }
}

}  // namespace

void MaskedLmEncoder::mlm_backward(const ForwardCache& cache,
                                   const std::vector<std::pair<int, float>>& dlogits) {
  auto& c = *cache.impl_;
  if (c.mlm_t.size() == 0) fail("cache has no mask-head forward");

  // Through the tied decoder: only touched vocabulary rows get gradient.
  MatF dt = MatF::Zero(1, config_.hidden_size);
  for (const auto& [id, g] : dlogits) {
    if (id < 0 || id >= vocab_size()) fail("gradient for token id ", id, " out of range");
    dt.row(0) += g * w_->word_emb.value.row(id);
    w_->word_emb.grad.row(id) += g * c.mlm_t.row(0);
    w_->mlm_bias.grad(0, id) += g;
  }
  MatF dg = layer_norm_backward(dt, c.mlm_ln, w_->mlm_ln_w, w_->mlm_ln_w, w_->mlm_ln_b);
  MatF dpre = dg.binaryExpr(c.mlm_pre, [](float g, float x) { return g * gelu_grad(x); });
  MatF dhid = MatF::Zero(1, config_.hidden_size);
  linear_backward(dpre, c.final_hidden.row(c.mask_index), w_->mlm_dense_w, w_->mlm_dense_b,
                  &dhid);

  MatF dfinal = MatF::Zero(static_cast<int>(c.ids.size()), config_.hidden_size);
  dfinal.row(c.mask_index) = dhid.row(0);
  encoder_backward(config_, *w_, c, std::move(dfinal));
}

void MaskedLmEncoder::classifier_backward(const ForwardCache& cache, const VecF& dlogits) {
  auto& c = *cache.impl_;
  if (!w_->has_classifier) fail("no classifier head attached");
  if (c.cls_act.size() == 0) fail("cache has no classifier forward");
  if (dlogits.size() != w_->num_labels) fail("classifier gradient has wrong length");

  MatF dl(1, w_->num_labels);
  dl.row(0) = dlogits.transpose();
  MatF dact = MatF::Zero(1, config_.hidden_size);
  linear_backward(dl, c.cls_act, w_->cls_out_w, w_->cls_out_b, &dact);
  MatF dpre = dact.binaryExpr(c.cls_act, [](float g, float a) { return g * (1.0f - a * a); });
  MatF dpooled = MatF::Zero(1, config_.hidden_size);
  linear_backward(dpre, c.final_hidden.row(0), w_->cls_dense_w, w_->cls_dense_b, &dpooled);

  MatF dfinal = MatF::Zero(static_cast<int>(c.ids.size()), config_.hidden_size);
  dfinal.row(0) = dpooled.row(0);
  encoder_backward(config_, *w_, c, std::move(dfinal));
}

void MaskedLmEncoder::zero_grad() {
  for (Parameter* p : registry_) p->grad.setZero();
}

std::map<std::string, int> MaskedLmEncoder::extend_vocab(const std::vector<std::string>& names,
                                                         uint64_t seed) {
  std::map<std::string, int> out;
  if (names.empty()) return out;
  const int H = config_.hidden_size;
  const int old_v = vocab_size();
  const int k = static_cast<int>(names.size());

  for (const auto& name : names)
    if (tokenizer_.piece_id(name)) fail("token '", name, "' already in vocabulary");

  w_->word_emb.value.conservativeResize(old_v + k, H);
  w_->word_emb.grad = MatF::Zero(old_v + k, H);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, config_.initializer_range);
  for (int i = 0; i < k; ++i)
    for (int c = 0; c < H; ++c) w_->word_emb.value(old_v + i, c) = dist(rng);

  w_->mlm_bias.value.conservativeResize(1, old_v + k);
  w_->mlm_bias.grad = MatF::Zero(1, old_v + k);
  for (int i = 0; i < k; ++i) w_->mlm_bias.value(0, old_v + i) = 0.0f;

  for (const auto& name : names) out[name] = tokenizer_.add_token(name);
  return out;
}

void MaskedLmEncoder::apply_freeze(const FreezePolicy& policy) {
  for (int i : policy.frozen_layers)
    if (i < 0 || i >= config_.num_layers)
      fail("freeze index ", i, " out of range for ", config_.num_layers, " layers");
  for (Parameter* p : registry_) {
    if (p->group == "embeddings") {
      p->trainable = policy.embeddings_trainable;
    } else if (p->group == "mlm_head") {
      p->trainable = policy.head_trainable;
    } else if (p->group.rfind("layer_", 0) == 0) {
      int idx = std::stoi(p->group.substr(6));
      p->trainable = policy.frozen_layers.count(idx) == 0;
    }
  }
}

std::map<std::string, long> MaskedLmEncoder::trainable_parameter_report() const {
  std::map<std::string, long> out;
  out["embeddings"] = 0;
  for (int i = 0; i < config_.num_layers; ++i) out["layer_" + std::to_string(i)] = 0;
  out["mlm_head"] = 0;
  if (w_->has_classifier) out["classifier_head"] = 0;
  for (const Parameter* p : registry_)
    if (p->trainable) out[p->group] += p->value.size();
  return out;
}

void MaskedLmEncoder::attach_classifier_head(int num_labels, uint64_t seed) {
  if (num_labels < 2) fail("classifier needs at least 2 labels");
  std::mt19937_64 rng(seed);
  const int H = config_.hidden_size;
  init_param(w_->cls_dense_w, "classifier.dense.weight", "classifier_head", H, H, rng,
             config_.initializer_range, true);
  init_param(w_->cls_dense_b, "classifier.dense.bias", "classifier_head", 1, H, rng,
             config_.initializer_range, false);
  init_param(w_->cls_out_w, "classifier.out_proj.weight", "classifier_head", num_labels, H, rng,
             config_.initializer_range, true);
  init_param(w_->cls_out_b, "classifier.out_proj.bias", "classifier_head", 1, num_labels, rng,
             config_.initializer_range, false);
  w_->has_classifier = true;
  w_->num_labels = num_labels;
  rebuild_registry();
}

bool MaskedLmEncoder::has_classifier_head() const { return w_->has_classifier; }
int MaskedLmEncoder::classifier_num_labels() const { return w_->num_labels; }

const Parameter& MaskedLmEncoder::param(const std::string& name) const {
  for (const Parameter* p : registry_)
    if (p->name == name) return *p;
  fail("no parameter named '", name, "'");
}

std::map<std::string, MatF> MaskedLmEncoder::snapshot() const {
  std::map<std::string, MatF> out;
  for (const Parameter* p : registry_) out[p->name] = p->value;
  return out;
}

void MaskedLmEncoder::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  EncoderConfig cfg = config_;
  cfg.vocab_size = vocab_size();
  cfg.save_json(dir / "config.json");
  tokenizer_.save(dir / "vocab.json", dir / "merges.txt");
  if (!tokenizer_.added_tokens().empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& name : tokenizer_.added_tokens()) j.push_back(name);
    write_file(dir / "added_tokens.json", j.dump());
  }
  std::vector<std::pair<std::string, NamedTensor>> tensors;
  for (const Parameter* p : registry_) {
    NamedTensor t;
    t.shape = {p->value.rows(), p->value.cols()};
    t.data.assign(p->value.data(), p->value.data() + p->value.size());
    tensors.emplace_back(p->name, std::move(t));
  }
  write_safetensors(dir / "model.safetensors", tensors, {{"format", "pt"}});
}

MaskedLmEncoder MaskedLmEncoder::load(const std::filesystem::path& dir) {
  EncoderConfig cfg = EncoderConfig::from_json_file(dir / "config.json");
  ByteLevelBpe tok = ByteLevelBpe::load(dir / "vocab.json", dir / "merges.txt");
  if (std::filesystem::exists(dir / "added_tokens.json")) {
    nlohmann::json j = nlohmann::json::parse(read_file(dir / "added_tokens.json"));
    for (const auto& name : j) tok.add_token(name.get<std::string>());
  }
  if (cfg.vocab_size != tok.vocab_size())
    fail(dir.string(), ": config vocab_size ", cfg.vocab_size, " != tokenizer size ",
         tok.vocab_size());

  MaskedLmEncoder model(cfg, std::move(tok), /*seed=*/0);
  auto tensors = read_safetensors(dir / "model.safetensors");

  bool has_classifier = tensors.count("classifier.out_proj.weight") > 0;
  if (has_classifier) {
    int labels = static_cast<int>(tensors.at("classifier.out_proj.weight").shape[0]);
    model.attach_classifier_head(labels, 0);
  }
  for (Parameter* p : model.registry_) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) fail(dir.string(), ": checkpoint is missing tensor ", p->name);
    const NamedTensor& t = it->second;
    int64_t rows = t.shape.size() == 2 ? t.shape[0] : 1;
    int64_t cols = t.shape.size() == 2 ? t.shape[1] : (t.shape.empty() ? 1 : t.shape[0]);
    if (rows * cols != static_cast<int64_t>(t.data.size()))
      fail(dir.string(), ": tensor ", p->name, " has inconsistent shape");
    p->value.resize(rows, cols);
    std::copy(t.data.begin(), t.data.end(), p->value.data());
    p->grad = MatF::Zero(rows, cols);
  }
  if (model.vocab_size() != model.tokenizer_.vocab_size())
    fail(dir.string(), ": embedding rows != tokenizer vocabulary");
  return model;
}

}  // namespace ldt
