#include "mad/infer.hpp"

#include <cmath>
#include <stdexcept>

namespace mad {

namespace {

using nn::Mat;

Mat layernorm_rows(const Mat& x, const Mat& g, const Mat& b, double eps = 1e-5) {
  Mat out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    out.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + eps)) * g.row(0).array() +
                 b.row(0).array();
  }
  return out;
}

void softmax_rows_inplace(Mat& s) {
  for (int i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    Eigen::ArrayXd e = (s.row(i).array() - m).exp();
    s.row(i) = (e / e.sum()).matrix();
  }
}

Mat mha_plain(const Mat& q, const Mat& k, const Mat& v, int heads, bool causal) {
  const int dh = static_cast<int>(q.cols()) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat out(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    Mat s = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    if (causal)
      for (int i = 0; i < s.rows(); ++i)
        for (int j = i + 1; j < s.cols(); ++j) s(i, j) = -1e30;
    softmax_rows_inplace(s);
    out.middleCols(h * dh, dh).noalias() = s * v.middleCols(h * dh, dh);
  }
  return out;
}

struct Ctx {
  const Model& m;
  const Mat& w(const std::string& n) const { return m.p(n).val; }

  Mat proj(const Mat& x, const std::string& p, const char* wn, const char* bn) const {
    Mat out = x * w(p + "." + wn);
    out.rowwise() += w(p + "." + bn).row(0);
    return out;
  }
  Mat ln(const Mat& x, const std::string& p) const {
    return layernorm_rows(x, w(p + ".g"), w(p + ".b"));
  }
  Mat attn(const Mat& qi, const Mat& ki, const Mat& vi, const std::string& p,
           bool causal) const {
    Mat q = proj(qi, p, "wq", "bq");
    Mat k = proj(ki, p, "wk", "bk");
    Mat v = proj(vi, p, "wv", "bv");
    return proj(mha_plain(q, k, v, m.cfg().num_heads, causal), p, "wo", "bo");
  }
  Mat ffn(const Mat& x, const std::string& p) const {
    Mat h = x * w(p + ".w1");
    h.rowwise() += w(p + ".b1").row(0);
    h = h.cwiseMax(0.0);
    Mat out = h * w(p + ".w2");
    out.rowwise() += w(p + ".b2").row(0);
    return out;
  }
};

}  // namespace

Mat infer_encode_image(const Model& m, const Image& img) {
  const ModelConfig& cfg = m.cfg();
  if (img.width != cfg.image_width || img.height != cfg.image_height)
    throw std::invalid_argument("image size does not match model config");
  Ctx c{m};

  int h = img.height, w = img.width;
  Mat x(w * h, 3);
  for (int i = 0; i < w * h; ++i)
    for (int ch = 0; ch < 3; ++ch) x(i, ch) = img.rgb[static_cast<size_t>(i) * 3 + ch];

  auto stage = [&](int s, const char* wn, const char* bn) {
    const int gh = h / s, gw = w / s;
    const int ci = static_cast<int>(x.cols());
    Mat out(gh * gw, s * s * ci);
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx)
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx)
            out.row(gy * gw + gx).segment((dy * s + dx) * ci, ci) =
                x.row((gy * s + dy) * w + gx * s + dx);
    x = out * c.w(wn);
    x.rowwise() += c.w(bn).row(0);
    h = gh;
    w = gw;
  };
  stage(ModelConfig::kStride1, "stem.w1", "stem.b1");
  x = x.cwiseMax(0.0);
  stage(ModelConfig::kStride2, "stem.w2", "stem.b2");
  x = x.cwiseMax(0.0);
  stage(ModelConfig::kStride3, "stem.w3", "stem.b3");

  x += posenc_2d(h, w, cfg.embed_dim);

  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    Mat n1 = c.ln(x, p + ".ln1");
    x += c.attn(n1, n1, n1, p + ".attn", false);
    Mat n2 = c.ln(x, p + ".ln2");
    x += c.ffn(n2, p + ".ffn");
  }
  return x;
}

Mat infer_decode_logits(const Model& m, const Mat& memory, const std::vector<int>& tokens,
                        bool causal) {
  const ModelConfig& cfg = m.cfg();
  const int len = static_cast<int>(tokens.size());
  if (len > cfg.max_seq_len) throw std::invalid_argument("sequence longer than max_seq_len");
  Ctx c{m};

  Mat x(len, cfg.embed_dim);
  for (int i = 0; i < len; ++i) x.row(i) = c.w("tok_emb").row(tokens[i]);
  Mat pos = c.w("seq_pos").topRows(len);
  x += pos;

  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    Mat n1 = c.ln(x, p + ".ln1");
    Mat pin = n1 + pos;
    x += c.attn(pin, pin, pin, p + ".self", causal);
    Mat n2 = c.ln(x, p + ".ln2");
    x += c.attn(n2 + pos, memory, memory, p + ".cross", false);
    Mat n3 = c.ln(x, p + ".ln3");
    x += c.ffn(n3, p + ".ffn");
  }
  Mat nf = c.ln(x, "out.ln");
  Mat logits = nf * c.w("out.w");
  logits.rowwise() += c.w("out.b").row(0);
  return logits;
}

KVCache::KVCache(const Model& m, int capacity) {
  k.assign(m.cfg().dec_layers, Mat::Zero(capacity, m.cfg().embed_dim));
  v.assign(m.cfg().dec_layers, Mat::Zero(capacity, m.cfg().embed_dim));
}

Eigen::RowVectorXd infer_ar_step(const Model& m, const Mat& memory, KVCache& cache,
                                 int token) {
  const ModelConfig& cfg = m.cfg();
  const int t = cache.len;
  if (t >= cfg.max_seq_len) throw std::invalid_argument("KV cache capacity exceeded");
  Ctx c{m};

  Mat x = c.w("tok_emb").row(token);
  const Mat pos = c.w("seq_pos").row(t);
  x += pos;

  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    Mat n1 = c.ln(x, p + ".ln1");
    Mat qin = n1 + pos;
    Mat q = c.proj(qin, p + ".self", "wq", "bq");
    cache.k[l].row(t) = c.proj(qin, p + ".self", "wk", "bk");
    cache.v[l].row(t) = c.proj(qin, p + ".self", "wv", "bv");
    Mat att = mha_plain(q, cache.k[l].topRows(t + 1), cache.v[l].topRows(t + 1),
                        cfg.num_heads, false);
    x += c.proj(att, p + ".self", "wo", "bo");

    Mat n2 = c.ln(x, p + ".ln2");
    x += c.attn(n2 + pos, memory, memory, p + ".cross", false);
    Mat n3 = c.ln(x, p + ".ln3");
    x += c.ffn(n3, p + ".ffn");
  }
  ++cache.len;
  Mat nf = c.ln(x, "out.ln");
  Eigen::RowVectorXd logits = nf * c.w("out.w");
  logits += c.w("out.b").row(0);
  return logits;
}

namespace {

int argmax_filtered(const Eigen::RowVectorXd& logits, const std::vector<int>& filter) {
  int best = filter[0];
  double bv = logits(filter[0]);
  for (int id : filter)
    if (logits(id) > bv) {
      bv = logits(id);
      best = id;
    }
  return best;
}

}  // namespace

ArResult ar_generate(const Model& m, const Mat& memory, int start_token,
                     const std::vector<int>& prompt, int body_len,
                     const std::vector<int>& filter, bool use_cache) {
  if (filter.empty()) throw std::invalid_argument("empty sampling filter");
  ArResult out;
  std::vector<int> prefix;
  prefix.push_back(start_token);
  prefix.insert(prefix.end(), prompt.begin(), prompt.end());

  if (use_cache) {
    KVCache cache(m, static_cast<int>(prefix.size()) + body_len);
    // Prefill: one batched causal pass over the prefix fills the cache.
    Mat logits = [&] {
      Ctx c{m};
      const ModelConfig& cfg = m.cfg();
      Mat x(static_cast<int>(prefix.size()), cfg.embed_dim);
      for (size_t i = 0; i < prefix.size(); ++i)
        x.row(static_cast<int>(i)) = c.w("tok_emb").row(prefix[i]);
      Mat pos = c.w("seq_pos").topRows(static_cast<int>(prefix.size()));
      x += pos;
      for (int l = 0; l < cfg.dec_layers; ++l) {
        const std::string p = "dec" + std::to_string(l);
        Mat n1 = c.ln(x, p + ".ln1");
        Mat qin = n1 + pos;
        Mat q = c.proj(qin, p + ".self", "wq", "bq");
        cache.k[l].topRows(x.rows()) = c.proj(qin, p + ".self", "wk", "bk");
        cache.v[l].topRows(x.rows()) = c.proj(qin, p + ".self", "wv", "bv");
        Mat att = mha_plain(q, cache.k[l].topRows(x.rows()), cache.v[l].topRows(x.rows()),
                            cfg.num_heads, true);
        x += c.proj(att, p + ".self", "wo", "bo");
        Mat n2 = c.ln(x, p + ".ln2");
        x += c.attn(n2 + pos, memory, memory, p + ".cross", false);
        Mat n3 = c.ln(x, p + ".ln3");
        x += c.ffn(n3, p + ".ffn");
      }
      Mat nf = c.ln(x, "out.ln");
      Mat lg = nf * c.w("out.w");
      lg.rowwise() += c.w("out.b").row(0);
      return lg;
    }();
    cache.len = static_cast<int>(prefix.size());
    ++out.decoder_passes;
    int tok = argmax_filtered(logits.row(logits.rows() - 1), filter);
    out.body.push_back(tok);
    while (static_cast<int>(out.body.size()) < body_len) {
      Eigen::RowVectorXd row = infer_ar_step(m, memory, cache, tok);
      ++out.decoder_passes;
      tok = argmax_filtered(row, filter);
      out.body.push_back(tok);
    }
  } else {
    std::vector<int> seq = prefix;
    for (int i = 0; i < body_len; ++i) {
      Mat logits = infer_decode_logits(m, memory, seq, true);
      ++out.decoder_passes;
      int tok = argmax_filtered(logits.row(logits.rows() - 1), filter);
      out.body.push_back(tok);
      seq.push_back(tok);
    }
  }
  return out;
}

std::vector<std::vector<double>> filtered_probs(const Mat& logits, const std::vector<int>& filter,
                                                int body_offset) {
  std::vector<std::vector<double>> out;
  for (int r = body_offset; r < logits.rows(); ++r) {
    std::vector<double> row(logits.cols(), 0.0);
    double mx = -1e300;
    for (int id : filter) mx = std::max(mx, logits(r, id));
    double z = 0.0;
    for (int id : filter) {
      row[id] = std::exp(logits(r, id) - mx);
      z += row[id];
    }
    for (int id : filter) row[id] /= z;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace mad
