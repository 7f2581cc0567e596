#include "mad/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mad {

void ModelConfig::validate() const {
  if (embed_dim % num_heads != 0)
    throw std::invalid_argument("embed_dim must be divisible by num_heads");
  if (image_width % 32 != 0 || image_height % 32 != 0)
    throw std::invalid_argument("image size must be a multiple of the stride (32)");
  if (max_seq_len < 2) throw std::invalid_argument("max_seq_len too small");
}

int ModelConfig::seq_len_for(const CodecConfig& codec) {
  int longest = 0;
  for (TaskKind t : {TaskKind::Detection, TaskKind::Segmentation, TaskKind::Keypoint,
                     TaskKind::Captioning}) {
    const int prompt = (t == TaskKind::Detection || t == TaskKind::Captioning) ? 1 : 6;
    longest = std::max(longest, prompt + body_length(t, codec));
  }
  return longest + 1;  // room for the AR start token
}

namespace {

double trunc_normal(Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  double x;
  do {
    x = n(rng);
  } while (std::abs(x) > 2.0 * sigma);
  return x;
}

}  // namespace

Model::Model(ModelConfig cfg, const CodecConfig& codec, uint64_t seed)
    : cfg_(cfg), codec_(codec) {
  cfg_.validate();
  Rng rng(seed);
  const int d = cfg_.embed_dim;

  // He initialization for the conv stem: pixel inputs are O(1) and pass
  // through only three matmuls, so a transformer-scale sigma would leave the
  // image signal orders of magnitude below the 2D positional encodings.
  auto he = [](int fan_in) { return std::sqrt(2.0 / fan_in); };
  const int f1 = ModelConfig::kStride1 * ModelConfig::kStride1 * 3;
  const int f2 = ModelConfig::kStride2 * ModelConfig::kStride2 * cfg_.stem_c1;
  const int f3 = ModelConfig::kStride3 * ModelConfig::kStride3 * cfg_.stem_c2;
  add("stem.w1", f1, cfg_.stem_c1, rng, true, he(f1));
  add("stem.b1", 1, cfg_.stem_c1, rng, true, 0.0);
  add("stem.w2", f2, cfg_.stem_c2, rng, true, he(f2));
  add("stem.b2", 1, cfg_.stem_c2, rng, true, 0.0);
  add("stem.w3", f3, d, rng, true, he(f3));
  add("stem.b3", 1, d, rng, true, 0.0);

  // Xavier/Glorot for the transformer weights and 1/sqrt(d) embeddings; at
  // small widths a fixed 0.02 leaves attention/FFN products far below the
  // residual-stream scale and starves the cross-attention pathway.
  auto xavier = [](int fan_in, int fan_out) { return std::sqrt(2.0 / (fan_in + fan_out)); };
  auto add_attn = [&](const std::string& p) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) add(p + "." + w, d, d, rng, false, xavier(d, d));
    for (const char* b : {"bq", "bk", "bv", "bo"}) add(p + "." + b, 1, d, rng, false, 0.0);
  };
  auto add_ln = [&](const std::string& p) {
    nn::Param& g = add(p + ".g", 1, d, rng, false, 0.0);
    g.val.setOnes();
    add(p + ".b", 1, d, rng, false, 0.0);
  };
  auto add_ffn = [&](const std::string& p) {
    add(p + ".w1", d, cfg_.ffn_dim, rng, false, xavier(d, cfg_.ffn_dim));
    add(p + ".b1", 1, cfg_.ffn_dim, rng, false, 0.0);
    add(p + ".w2", cfg_.ffn_dim, d, rng, false, xavier(cfg_.ffn_dim, d));
    add(p + ".b2", 1, d, rng, false, 0.0);
  };

  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    add_ln(p + ".ln1");
    add_attn(p + ".attn");
    add_ln(p + ".ln2");
    add_ffn(p + ".ffn");
  }
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    add_ln(p + ".ln1");
    add_attn(p + ".self");
    add_ln(p + ".ln2");
    add_attn(p + ".cross");
    add_ln(p + ".ln3");
    add_ffn(p + ".ffn");
  }

  const double emb_sigma = 1.0 / std::sqrt(static_cast<double>(d));
  add("tok_emb", cfg_.vocab_size, d, rng, false, emb_sigma);
  add("seq_pos", cfg_.max_seq_len, d, rng, false, emb_sigma);
  add_ln("out.ln");
  add("out.w", d, cfg_.vocab_size, rng, false, xavier(d, cfg_.vocab_size));
  add("out.b", 1, cfg_.vocab_size, rng, false, 0.0);
}

nn::Param& Model::add(const std::string& name, int rows, int cols, Rng& rng, bool stem,
                      double sigma) {
  nn::Mat m(rows, cols);
  if (sigma > 0.0)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = trunc_normal(rng, sigma);
  else
    m.setZero();
  params_.push_back(std::make_unique<nn::Param>(name, std::move(m), stem));
  index_[name] = static_cast<int>(params_.size()) - 1;
  return *params_.back();
}

nn::Param& Model::p(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return *params_[it->second];
}

const nn::Param& Model::p(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return *params_[it->second];
}

std::vector<nn::Param*> Model::param_ptrs() {
  std::vector<nn::Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

int64_t Model::num_weights() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->val.size();
  return n;
}

nn::Mat posenc_2d(int gh, int gw, int dim) {
  if (dim % 4 != 0) throw std::invalid_argument("posenc dim must be divisible by 4");
  const int quarter = dim / 4;
  nn::Mat pe(gh * gw, dim);
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      const int row = y * gw + x;
      for (int i = 0; i < quarter; ++i) {
        const double div = std::pow(10000.0, 2.0 * i / (dim / 2.0));
        pe(row, 2 * i) = std::sin(x / div);
        pe(row, 2 * i + 1) = std::cos(x / div);
        pe(row, dim / 2 + 2 * i) = std::sin(y / div);
        pe(row, dim / 2 + 2 * i + 1) = std::cos(y / div);
      }
    }
  }
  return pe;
}

int Forward::param_node(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  int id = tape_.param(m_.p(name));
  cache_[name] = id;
  return id;
}

int Forward::layernorm(int x, const std::string& prefix) {
  return tape_.layernorm(x, param_node(prefix + ".g"), param_node(prefix + ".b"));
}

int Forward::attention(int q_in, int k_in, int v_in, const std::string& prefix, bool causal) {
  auto proj = [&](int x, const char* w, const char* b) {
    return tape_.add_rowvec(tape_.matmul(x, param_node(prefix + "." + w)),
                            param_node(prefix + "." + b));
  };
  int q = proj(q_in, "wq", "bq");
  int k = proj(k_in, "wk", "bk");
  int v = proj(v_in, "wv", "bv");
  int att = tape_.mha(q, k, v, m_.cfg().num_heads, causal);
  return proj(att, "wo", "bo");
}

int Forward::ffn(int x, const std::string& prefix) {
  int h = tape_.add_rowvec(tape_.matmul(x, param_node(prefix + ".w1")),
                           param_node(prefix + ".b1"));
  h = tape_.relu(h);
  return tape_.add_rowvec(tape_.matmul(h, param_node(prefix + ".w2")),
                          param_node(prefix + ".b2"));
}

int Forward::encode_image(const Image& img) {
  const ModelConfig& cfg = m_.cfg();
  if (img.width != cfg.image_width || img.height != cfg.image_height)
    throw std::invalid_argument("image size does not match model config");
  nn::Mat pixels(img.width * img.height, 3);
  for (int i = 0; i < img.width * img.height; ++i)
    for (int c = 0; c < 3; ++c) pixels(i, c) = img.rgb[static_cast<size_t>(i) * 3 + c];

  int x = tape_.input(std::move(pixels));
  int h = img.height, w = img.width;
  auto stage = [&](int s, const char* wn, const char* bn) {
    x = tape_.space_to_depth(x, h, w, s);
    h /= s;
    w /= s;
    x = tape_.add_rowvec(tape_.matmul(x, param_node(wn)), param_node(bn));
  };
  stage(ModelConfig::kStride1, "stem.w1", "stem.b1");
  x = tape_.relu(x);
  stage(ModelConfig::kStride2, "stem.w2", "stem.b2");
  x = tape_.relu(x);
  stage(ModelConfig::kStride3, "stem.w3", "stem.b3");

  int pe = tape_.input(posenc_2d(h, w, cfg.embed_dim));
  x = tape_.add(x, pe);

  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    int n1 = layernorm(x, p + ".ln1");
    x = tape_.add(x, attention(n1, n1, n1, p + ".attn", false));
    int n2 = layernorm(x, p + ".ln2");
    x = tape_.add(x, ffn(n2, p + ".ffn"));
  }
  return x;
}

std::vector<int> Forward::decode(int memory, const std::vector<int>& tokens, bool causal) {
  const ModelConfig& cfg = m_.cfg();
  const int len = static_cast<int>(tokens.size());
  if (len > cfg.max_seq_len) throw std::invalid_argument("sequence longer than max_seq_len");

  int x = tape_.rows_gather(param_node("tok_emb"), tokens);
  std::vector<int> iota(len);
  std::iota(iota.begin(), iota.end(), 0);
  int pos = tape_.rows_gather(param_node("seq_pos"), iota);
  x = tape_.add(x, pos);

  std::vector<int> logits;
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    int n1 = layernorm(x, p + ".ln1");
    int pin = tape_.add(n1, pos);
    x = tape_.add(x, attention(pin, pin, pin, p + ".self", causal));
    int n2 = layernorm(x, p + ".ln2");
    x = tape_.add(x, attention(tape_.add(n2, pos), memory, memory, p + ".cross", false));
    int n3 = layernorm(x, p + ".ln3");
    x = tape_.add(x, ffn(n3, p + ".ffn"));
    int nf = layernorm(x, "out.ln");
    logits.push_back(tape_.add_rowvec(tape_.matmul(nf, param_node("out.w")),
                                      param_node("out.b")));
  }
  return logits;
}

GradCheckReport grad_check(Model& model, const std::function<double()>& loss,
                           int coords_per_param, double epsilon, Rng& rng) {
  GradCheckReport report;
  for (nn::Param* p : model.param_ptrs()) {
    const int n = static_cast<int>(p->val.size());
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int k = 0; k < coords_per_param; ++k) {
      const int idx = pick(rng);
      double* v = p->val.data() + idx;
      const double orig = *v;
      *v = orig + epsilon;
      const double lp = loss();
      *v = orig - epsilon;
      const double lm = loss();
      *v = orig;
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double analytic = p->grad.data()[idx];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p->name;
      }
    }
  }
  return report;
}

}  // namespace mad
