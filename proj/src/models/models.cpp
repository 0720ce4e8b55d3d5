// SPDX-FileCopyrightText: Copyright (c) 2026 The BLISS-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "bliss/models/models.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bliss/autodiff/checkpoint.hpp"
#include "bliss/errors.hpp"
#include "bliss/rng.hpp"

namespace bliss::models {

using ad::Tensor;
using ad::Var;

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kMaskValue = -1e9;
// Rows per forward pass in value-only evaluation.
constexpr std::size_t kEvalChunk = 32;

std::string block_name(std::uint32_t layer, const char* leaf) {
  return "blocks." + std::to_string(layer) + "." + leaf;
}

Tensor gaussian(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

void check_batch(const ModelConfig& cfg, const data::SampleBatch& batch) {
  if (batch.size() == 0) throw DataError("empty batch");
  if (batch.seq_len != cfg.seq_len) {
    throw DataError("sample length " + std::to_string(batch.seq_len) + " does not match model seq_len " +
                    std::to_string(cfg.seq_len));
  }
  if (batch.tokens.size() != batch.size() * batch.seq_len) throw DataError("batch token count mismatch");
  for (std::uint32_t t : batch.tokens) {
    if (t >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(t) + " out of range for vocab " + std::to_string(cfg.vocab_size));
    }
  }
}

Var rms_norm(const Var& x, const Var& gain) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const Var ms = add_scalar(scale(row_sums(mul(x, x)), 1.0 / static_cast<double>(d)), kNormEps);
  const Var normed = mul(x, broadcast_cols(rsqrt(ms), d));
  return mul(normed, broadcast_rows(gain, n));
}

Var affine(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

// Causal mask for `blocks` stacked T x T score blocks.
Var causal_mask(ad::Tape& tape, std::size_t t, std::size_t blocks) {
  Tensor m = Tensor::matrix(blocks * t, t);
  for (std::size_t g = 0; g < blocks; ++g) {
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = i + 1; j < t; ++j) m.at(g * t + i, j) = kMaskValue;
    }
  }
  return tape.constant(std::move(m));
}

Var attention(const ad::BoundParams& p, const ModelConfig& cfg, std::uint32_t layer, const Var& h,
              const Var& mask, std::size_t batch) {
  const std::size_t heads = cfg.n_heads;
  const std::size_t groups = batch * heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  const Var q = split_heads(scale(matmul(h, p[block_name(layer, "wq")]), inv_sqrt), batch, heads);
  const Var k = split_heads(matmul(h, p[block_name(layer, "wk")]), batch, heads);
  const Var v = split_heads(matmul(h, p[block_name(layer, "wv")]), batch, heads);
  const Var a = softmax_rows(add(group_matmul(q, k, groups, false, true), mask));
  const Var o = group_matmul(a, v, groups, false, false);
  return matmul(merge_heads(o, batch, heads), p[block_name(layer, "wo")]);
}

std::string family_name(Family f) { return f == Family::proxy ? "proxy" : "target"; }

void add_body_blocks(ad::ParamVector& params, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model;
  const std::size_t f = cfg.ffn_hidden();
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_scale = in_scale / std::sqrt(2.0 * cfg.n_layers);
  params.add("tok_emb", gaussian({cfg.vocab_size, d}, 1.0, rng));
  params.add("pos_emb", gaussian({cfg.seq_len, d}, 0.1, rng));
  for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
    params.add(block_name(l, "attn_norm"), Tensor({d}, 1.0));
    params.add(block_name(l, "wq"), gaussian({d, d}, in_scale, rng));
    params.add(block_name(l, "wk"), gaussian({d, d}, in_scale, rng));
    params.add(block_name(l, "wv"), gaussian({d, d}, in_scale, rng));
    params.add(block_name(l, "wo"), gaussian({d, d}, out_scale, rng));
    params.add(block_name(l, "ffn_norm"), Tensor({d}, 1.0));
    params.add(block_name(l, "w1"), gaussian({d, f}, in_scale, rng));
    params.add(block_name(l, "b1"), Tensor({f}, 0.0));
    params.add(block_name(l, "w2"), gaussian({f, d}, out_scale * std::sqrt(static_cast<double>(d) / f), rng));
    params.add(block_name(l, "b2"), Tensor({d}, 0.0));
  }
  params.add("final_norm", Tensor({d}, 1.0));
}

// Rows [begin, begin+count) of a batch as their own batch.
data::SampleBatch sub_batch(const data::SampleBatch& batch, std::size_t begin, std::size_t count) {
  data::SampleBatch out;
  out.seq_len = batch.seq_len;
  out.indices.assign(batch.indices.begin() + static_cast<std::ptrdiff_t>(begin),
                     batch.indices.begin() + static_cast<std::ptrdiff_t>(begin + count));
  out.tokens.assign(batch.tokens.begin() + static_cast<std::ptrdiff_t>(begin * batch.seq_len),
                    batch.tokens.begin() + static_cast<std::ptrdiff_t>((begin + count) * batch.seq_len));
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 2) throw UsageError("model: vocab_size must be at least 2");
  if (seq_len < 2) throw UsageError("model: seq_len must be at least 2");
  if (n_layers < 1) throw UsageError("model: n_layers must be at least 1");
  if (n_heads < 1 || d_model < 1 || d_model % n_heads != 0) {
    throw UsageError("model: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                     std::to_string(n_heads));
  }
}

ModelConfig default_proxy_config() { return {256, 64, 64, 2, 2, Family::proxy}; }
ModelConfig default_target_config() { return {256, 64, 128, 4, 4, Family::target}; }

LanguageModel make_language_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive(seed, Stream::model_init, static_cast<std::uint64_t>(config.family)));
  LanguageModel m{config, {}};
  add_body_blocks(m.params, config, rng);
  m.params.add("lm_head.weight", gaussian({config.d_model, config.vocab_size},
                                          1.0 / std::sqrt(static_cast<double>(config.d_model)), rng));
  m.params.add("lm_head.bias", Tensor({config.vocab_size}, 0.0));
  return m;
}

bool is_body_block(std::string_view name) {
  return !name.starts_with("lm_head.") && !name.starts_with("score_head.");
}

ScoreModel init_score_from_proxy(const LanguageModel& proxy) {
  ScoreModel s{proxy.config, {}};
  for (std::size_t i = 0; i < proxy.params.num_blocks(); ++i) {
    if (is_body_block(proxy.params.name(i))) s.params.add(proxy.params.name(i), proxy.params.tensor(i));
  }
  s.params.add("score_head.weight", Tensor({proxy.config.d_model, 1}, 0.0));
  s.params.add("score_head.bias", Tensor({1}, 0.0));
  return s;
}

Var body_forward(ad::Tape& tape, const ad::BoundParams& p, const ModelConfig& cfg,
                 const data::SampleBatch& batch) {
  check_batch(cfg, batch);
  const std::size_t b = batch.size();
  const std::size_t t = cfg.seq_len;
  std::vector<std::uint32_t> positions(b * t);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::uint32_t>(i % t);
  Var x = add(gather_rows(p["tok_emb"], batch.tokens), gather_rows(p["pos_emb"], std::move(positions)));
  const Var mask = causal_mask(tape, t, b * cfg.n_heads);
  for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
    const Var h = rms_norm(x, p[block_name(l, "attn_norm")]);
    x = add(x, attention(p, cfg, l, h, mask, b));
    const Var h2 = rms_norm(x, p[block_name(l, "ffn_norm")]);
    const Var u = gelu(affine(h2, p[block_name(l, "w1")], p[block_name(l, "b1")]));
    x = add(x, affine(u, p[block_name(l, "w2")], p[block_name(l, "b2")]));
  }
  return rms_norm(x, p["final_norm"]);
}

Var lm_log_probs(ad::Tape& tape, const ad::BoundParams& p, const ModelConfig& cfg,
                 const data::SampleBatch& batch) {
  const Var feats = body_forward(tape, p, cfg, batch);
  return log_softmax_rows(affine(feats, p["lm_head.weight"], p["lm_head.bias"]));
}

Var per_sample_ce(const Var& log_probs, const data::SampleBatch& batch) {
  const std::size_t b = batch.size();
  const std::size_t t = batch.seq_len;
  std::vector<std::uint32_t> rows, cols;
  rows.reserve(b * (t - 1));
  cols.reserve(b * (t - 1));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j + 1 < t; ++j) {
      rows.push_back(static_cast<std::uint32_t>(i * t + j));
      cols.push_back(batch.tokens[i * t + j + 1]);
    }
  }
  const Var picked = pick(log_probs, std::move(rows), std::move(cols));
  return scale(row_sums(reshape(picked, {b, t - 1})), -1.0 / static_cast<double>(t - 1));
}

Var mean_kl(ad::Tape& tape, const Var& student_log_probs, const Tensor& teacher_log_probs) {
  if (student_log_probs.value().shape() != teacher_log_probs.shape()) {
    throw ShapeError("mean_kl: student and teacher distributions differ in shape");
  }
  const Var teacher = tape.constant(teacher_log_probs);
  const Var terms = mul(exp(student_log_probs), sub(student_log_probs, teacher));
  return scale(sum_all(terms), 1.0 / static_cast<double>(student_log_probs.rows()));
}

Var score_forward(ad::Tape& tape, const ad::BoundParams& p, const ModelConfig& cfg,
                  const data::SampleBatch& batch) {
  const Var feats = body_forward(tape, p, cfg, batch);
  const std::size_t b = batch.size();
  const std::size_t t = cfg.seq_len;
  Tensor pool = Tensor::matrix(b, b * t);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < t; ++j) pool.at(i, i * t + j) = 1.0 / static_cast<double>(t);
  }
  const Var pooled = matmul(tape.constant(std::move(pool)), feats);
  return sigmoid(affine(pooled, p["score_head.weight"], p["score_head.bias"]));
}

ad::ScalarGraph lm_loss(const ModelConfig& cfg, data::SampleBatch batch) {
  check_batch(cfg, batch);
  return ad::ScalarGraph([cfg, batch = std::move(batch)](ad::Tape& tape, const ad::GraphInputs& in) {
    const Var ce = per_sample_ce(lm_log_probs(tape, in.primary, cfg, batch), batch);
    return scale(sum_all(ce), 1.0 / static_cast<double>(batch.size()));
  });
}

ad::ScalarGraph kl_loss(const ModelConfig& student_cfg, const Tensor& teacher_log_probs, data::SampleBatch batch) {
  check_batch(student_cfg, batch);
  return ad::ScalarGraph(
      [student_cfg, teacher_log_probs, batch = std::move(batch)](ad::Tape& tape, const ad::GraphInputs& in) {
        return mean_kl(tape, lm_log_probs(tape, in.primary, student_cfg, batch), teacher_log_probs);
      });
}

ad::ScalarGraph kl_loss(const LanguageModel& student, const LanguageModel& teacher, data::SampleBatch batch) {
  if (student.config.vocab_size != teacher.config.vocab_size || student.config.seq_len != teacher.config.seq_len) {
    throw UsageError("kl_loss: student and teacher disagree on vocab or seq_len");
  }
  const Tensor t = log_probs(teacher, batch);
  return kl_loss(student.config, t, std::move(batch));
}

Tensor log_probs(const LanguageModel& model, const data::SampleBatch& batch) {
  check_batch(model.config, batch);
  const std::size_t v = model.config.vocab_size;
  const std::size_t t = model.config.seq_len;
  Tensor out = Tensor::matrix(batch.size() * t, v);
  for (std::size_t begin = 0; begin < batch.size(); begin += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, batch.size() - begin);
    ad::Tape tape;
    const ad::BoundParams p(tape, model.params);
    const Var lp = lm_log_probs(tape, p, model.config, sub_batch(batch, begin, count));
    std::copy(lp.value().values().begin(), lp.value().values().end(), out.data() + begin * t * v);
  }
  return out;
}

std::vector<double> per_sample_loss(const LanguageModel& model, const data::SampleBatch& batch) {
  check_batch(model.config, batch);
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t begin = 0; begin < batch.size(); begin += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, batch.size() - begin);
    const data::SampleBatch sub = sub_batch(batch, begin, count);
    ad::Tape tape;
    const ad::BoundParams p(tape, model.params);
    const Var ce = per_sample_ce(lm_log_probs(tape, p, model.config, sub), sub);
    out.insert(out.end(), ce.value().values().begin(), ce.value().values().end());
  }
  return out;
}

double evaluate_lm_loss(const LanguageModel& model, const data::SampleBatch& batch) {
  double sum = 0.0;
  for (double v : per_sample_loss(model, batch)) sum += v;
  return sum / static_cast<double>(batch.size());
}

double evaluate_kl(const LanguageModel& student, const LanguageModel& teacher, const data::SampleBatch& batch) {
  const Tensor s = log_probs(student, batch);
  const Tensor t = log_probs(teacher, batch);
  const std::size_t v = student.config.vocab_size;
  double total = 0.0;
  std::vector<double> p(v), q(v);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t j = 0; j < v; ++j) {
      p[j] = std::exp(s.at(r, j));
      q[j] = std::exp(t.at(r, j));
    }
    total += kl_divergence(p, q);
  }
  return total / static_cast<double>(s.rows());
}

std::vector<double> score_batch(const ScoreModel& model, const data::SampleBatch& batch) {
  check_batch(model.config, batch);
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t begin = 0; begin < batch.size(); begin += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, batch.size() - begin);
    ad::Tape tape;
    const ad::BoundParams p(tape, model.params);
    const Var h = score_forward(tape, p, model.config, sub_batch(batch, begin, count));
    out.insert(out.end(), h.value().values().begin(), h.value().values().end());
  }
  return out;
}

double score(const ScoreModel& model, std::span<const std::uint32_t> sample) {
  if (sample.size() != model.config.seq_len) {
    throw DataError("score: sample has " + std::to_string(sample.size()) + " tokens, model expects " +
                    std::to_string(model.config.seq_len));
  }
  data::SampleBatch b;
  b.seq_len = model.config.seq_len;
  b.indices = {0};
  b.tokens.assign(sample.begin(), sample.end());
  return score_batch(model, b)[0];
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return total;
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ad::ParamVector& params) {
  ad::save_checkpoint(path, params);
  std::ofstream out(path.string() + ".manifest", std::ios::trunc);
  if (!out) throw Error("cannot write manifest for " + path.string());
  out << "family = " << family_name(cfg.family) << "\n"
      << "vocab_size = " << cfg.vocab_size << "\n"
      << "seq_len = " << cfg.seq_len << "\n"
      << "d_model = " << cfg.d_model << "\n"
      << "n_layers = " << cfg.n_layers << "\n"
      << "n_heads = " << cfg.n_heads << "\n";
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  const std::string mpath = path.string() + ".manifest";
  std::ifstream in(mpath);
  if (!in) throw DataError("missing model manifest " + mpath);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const char* key) -> std::uint32_t {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError(mpath + ": missing key " + key);
    return static_cast<std::uint32_t>(std::stoul(it->second));
  };
  ModelConfig cfg;
  const auto fam = kv.find("family");
  if (fam == kv.end() || (fam->second != "proxy" && fam->second != "target")) {
    throw DataError(mpath + ": missing or invalid family");
  }
  cfg.family = fam->second == "proxy" ? Family::proxy : Family::target;
  cfg.vocab_size = get("vocab_size");
  cfg.seq_len = get("seq_len");
  cfg.d_model = get("d_model");
  cfg.n_layers = get("n_layers");
  cfg.n_heads = get("n_heads");
  cfg.validate();
  return cfg;
}

LanguageModel load_language_model(const std::filesystem::path& path) {
  LanguageModel m{load_model_config(path), ad::load_checkpoint(path)};
  const LanguageModel shape = make_language_model(m.config, 0);
  if (!m.params.conformant(shape.params)) throw DataError(path.string() + ": blocks do not match the manifest");
  return m;
}

ScoreModel load_score_model(const std::filesystem::path& path) {
  ScoreModel m{load_model_config(path), ad::load_checkpoint(path)};
  const ScoreModel shape = init_score_from_proxy(make_language_model(m.config, 0));
  if (!m.params.conformant(shape.params)) throw DataError(path.string() + ": blocks do not match the manifest");
  return m;
}

}  // namespace bliss::models
