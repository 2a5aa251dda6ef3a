#include "rcl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace rcl {

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  return m;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

void layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& hat, Eigen::VectorXd& inv,
                Matrix& out) {
  const auto rows = x.rows();
  const auto cols = static_cast<double>(x.cols());
  hat.resize(rows, x.cols());
  inv.resize(rows);
  out.resize(rows, x.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / cols;
    const double var = (x.row(r).array() - mean).square().sum() / cols;
    inv(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    hat.row(r) = (x.row(r).array() - mean) * inv(r);
    out.row(r) = hat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
  }
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& hat, const Eigen::VectorXd& inv, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  const double cols = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    dgain.row(0) += dy.row(r).cwiseProduct(hat.row(r));
    dbias.row(0) += dy.row(r);
    const Eigen::RowVectorXd dhat = dy.row(r).cwiseProduct(gain.row(0));
    const double mean_dhat = dhat.sum() / cols;
    const double mean_dhat_hat = dhat.dot(hat.row(r)) / cols;
    dx.row(r) = inv(r) * (dhat.array() - mean_dhat - hat.row(r).array() * mean_dhat_hat).matrix();
  }
  return dx;
}

// Rows [first_query, L) of the block output; keys and values use all L rows.
Matrix block_forward(const Matrix& x, std::size_t first_query, const BlockParams& p, const ModelShape& shape,
                     const EncodeOptions& opt, Rng* rng, EncoderTrace::Block& c) {
  const auto len = x.rows();
  const auto q0 = static_cast<Eigen::Index>(first_query);
  const auto lq = len - q0;
  const auto heads = static_cast<Eigen::Index>(shape.heads);
  const auto dh = static_cast<Eigen::Index>(shape.dim / shape.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = opt.train && opt.dropout > 0.0 && rng != nullptr;

  c.first_query = first_query;
  c.input = x;
  c.q = x.bottomRows(lq) * p.wq;
  c.k = x * p.wk;
  c.v = x * p.wv;
  c.probs.assign(static_cast<std::size_t>(heads), Matrix());
  c.attn_masks.assign(static_cast<std::size_t>(heads), Matrix());
  c.attn.resize(lq, static_cast<Eigen::Index>(shape.dim));

  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    Matrix probs = (qh * kh.transpose()) * scale;
    for (Eigen::Index r = 0; r < lq; ++r) {
      const Eigen::Index visible = q0 + r + 1;
      const double mx = probs.row(r).head(visible).maxCoeff();
      double sum = 0.0;
      for (Eigen::Index j = 0; j < visible; ++j) {
        const double e = std::exp(probs(r, j) - mx);
        probs(r, j) = e;
        sum += e;
      }
      probs.row(r).head(visible) /= sum;
      probs.row(r).tail(len - visible).setZero();
    }
    auto& mask = c.attn_masks[static_cast<std::size_t>(h)];
    if (drop) {
      mask = dropout_mask(lq, len, opt.dropout, *rng);
      c.attn.middleCols(h * dh, dh) = probs.cwiseProduct(mask) * c.v.middleCols(h * dh, dh);
    } else {
      c.attn.middleCols(h * dh, dh) = probs * c.v.middleCols(h * dh, dh);
    }
    c.probs[static_cast<std::size_t>(h)] = std::move(probs);
  }

  const Matrix res1 = x.bottomRows(lq) + c.attn * p.wo;
  layer_norm(res1, p.ln1_gain, p.ln1_bias, c.ln1_hat, c.ln1_inv, c.y1);

  c.ffn_pre = c.y1 * p.w1;
  c.ffn_act = c.ffn_pre.cwiseMax(0.0);
  Matrix ffn = c.ffn_act * p.w2;
  if (drop) {
    c.ffn_mask = dropout_mask(lq, ffn.cols(), opt.dropout, *rng);
    ffn = ffn.cwiseProduct(c.ffn_mask);
  } else {
    c.ffn_mask.resize(0, 0);
  }
  Matrix out;
  layer_norm(c.y1 + ffn, p.ln2_gain, p.ln2_bias, c.ln2_hat, c.ln2_inv, out);
  return out;
}

Matrix block_backward(const EncoderTrace::Block& c, const Matrix& dout, const BlockParams& p, const ModelShape& shape,
                      BlockParams& g) {
  const auto len = c.input.rows();
  const auto q0 = static_cast<Eigen::Index>(c.first_query);
  const auto lq = len - q0;
  const auto heads = static_cast<Eigen::Index>(shape.heads);
  const auto dh = static_cast<Eigen::Index>(shape.dim / shape.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix dres2 = layer_norm_backward(dout, c.ln2_hat, c.ln2_inv, p.ln2_gain, g.ln2_gain, g.ln2_bias);
  Matrix dffn = c.ffn_mask.size() ? Matrix(dres2.cwiseProduct(c.ffn_mask)) : dres2;
  g.w2.noalias() += c.ffn_act.transpose() * dffn;
  Matrix dpre = (dffn * p.w2.transpose()).cwiseProduct((c.ffn_pre.array() > 0.0).cast<double>().matrix());
  g.w1.noalias() += c.y1.transpose() * dpre;
  Matrix dy1 = dres2 + dpre * p.w1.transpose();

  const Matrix dres1 = layer_norm_backward(dy1, c.ln1_hat, c.ln1_inv, p.ln1_gain, g.ln1_gain, g.ln1_bias);
  g.wo.noalias() += c.attn.transpose() * dres1;
  const Matrix dattn = dres1 * p.wo.transpose();

  Matrix dq(lq, static_cast<Eigen::Index>(shape.dim));
  Matrix dk = Matrix::Zero(len, static_cast<Eigen::Index>(shape.dim));
  Matrix dv = Matrix::Zero(len, static_cast<Eigen::Index>(shape.dim));
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto& probs = c.probs[static_cast<std::size_t>(h)];
    const auto& mask = c.attn_masks[static_cast<std::size_t>(h)];
    const auto do_h = dattn.middleCols(h * dh, dh);
    Matrix dprobs = do_h * c.v.middleCols(h * dh, dh).transpose();
    if (mask.size()) {
      dv.middleCols(h * dh, dh).noalias() += probs.cwiseProduct(mask).transpose() * do_h;
      dprobs = dprobs.cwiseProduct(mask);
    } else {
      dv.middleCols(h * dh, dh).noalias() += probs.transpose() * do_h;
    }
    const Eigen::VectorXd row_dot = dprobs.cwiseProduct(probs).rowwise().sum();
    const Matrix dscores = probs.cwiseProduct((dprobs.colwise() - row_dot)) * scale;
    dq.middleCols(h * dh, dh) = dscores * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() += dscores.transpose() * c.q.middleCols(h * dh, dh);
  }

  g.wq.noalias() += c.input.bottomRows(lq).transpose() * dq;
  g.wk.noalias() += c.input.transpose() * dk;
  g.wv.noalias() += c.input.transpose() * dv;

  Matrix dx = dk * p.wk.transpose() + dv * p.wv.transpose();
  dx.bottomRows(lq) += dres1 + dq * p.wq.transpose();
  return dx;
}

void check_shape(const ModelShape& s) {
  if (s.dim == 0 || s.heads == 0 || s.dim % s.heads != 0) {
    throw std::invalid_argument("model dim must be a positive multiple of heads");
  }
  if (s.blocks == 0 || s.max_len == 0 || s.item_count == 0 || s.ffn_dim == 0) {
    throw std::invalid_argument("model shape has a zero extent");
  }
}

Vector run_blocks(const Matrix& real_rows, const ModelParams& params, const EncodeOptions& options, Rng* rng,
                  EncoderTrace* trace) {
  const auto& shape = params.shape;
  const std::size_t last = static_cast<std::size_t>(real_rows.rows()) - 1;
  EncoderTrace::Block scratch;
  if (trace) trace->blocks.resize(shape.blocks);

  Matrix x = real_rows;
  for (std::size_t b = 0; b < shape.blocks; ++b) {
    // Only the final position feeds h, so the last block computes one query row.
    const std::size_t first_query = b + 1 == shape.blocks ? last : 0;
    auto& cache = trace ? trace->blocks[b] : scratch;
    x = block_forward(x, first_query, params.blocks[b], shape, options, rng, cache);
  }
  return x.row(x.rows() - 1).transpose();
}

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

constexpr char kCheckpointMagic[4] = {'R', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

ModelParams ModelParams::zeros(const ModelShape& shape) {
  check_shape(shape);
  const auto d = static_cast<Eigen::Index>(shape.dim);
  const auto f = static_cast<Eigen::Index>(shape.ffn_dim);
  ModelParams p;
  p.shape = shape;
  p.item_emb = Matrix::Zero(static_cast<Eigen::Index>(shape.item_count + 1), d);
  p.pos_emb = Matrix::Zero(static_cast<Eigen::Index>(shape.max_len), d);
  p.blocks.resize(shape.blocks);
  for (auto& b : p.blocks) {
    b.wq = Matrix::Zero(d, d);
    b.wk = Matrix::Zero(d, d);
    b.wv = Matrix::Zero(d, d);
    b.wo = Matrix::Zero(d, d);
    b.ln1_gain = Matrix::Zero(1, d);
    b.ln1_bias = Matrix::Zero(1, d);
    b.w1 = Matrix::Zero(d, f);
    b.w2 = Matrix::Zero(f, d);
    b.ln2_gain = Matrix::Zero(1, d);
    b.ln2_bias = Matrix::Zero(1, d);
  }
  return p;
}

ModelParams ModelParams::initialize(const ModelShape& shape, std::uint64_t seed) {
  ModelParams p = zeros(shape);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.dim));
  p.item_emb = uniform_matrix(shape.item_count + 1, shape.dim, bound, rng);
  p.item_emb.row(0).setZero();
  p.pos_emb = uniform_matrix(shape.max_len, shape.dim, bound, rng);
  for (auto& b : p.blocks) {
    b.wq = uniform_matrix(shape.dim, shape.dim, bound, rng);
    b.wk = uniform_matrix(shape.dim, shape.dim, bound, rng);
    b.wv = uniform_matrix(shape.dim, shape.dim, bound, rng);
    b.wo = uniform_matrix(shape.dim, shape.dim, bound, rng);
    b.w1 = uniform_matrix(shape.dim, shape.ffn_dim, bound, rng);
    b.w2 = uniform_matrix(shape.ffn_dim, shape.dim, bound, rng);
    b.ln1_gain.setOnes();
    b.ln2_gain.setOnes();
  }
  return p;
}

void ModelParams::set_zero() {
  for_each_tensor([](const std::string&, Matrix& m) { m.setZero(); });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

Matrix embed(std::span<const ItemId> items, const ModelParams& params) {
  Matrix e = Matrix::Zero(static_cast<Eigen::Index>(items.size()), params.item_emb.cols());
  std::size_t position = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto item = items[i];
    if (item == kPaddingItem) continue;
    if (item < 0 || static_cast<std::size_t>(item) > params.shape.item_count) {
      throw std::out_of_range("item id " + std::to_string(item) + " outside the embedding table");
    }
    if (position >= params.shape.max_len) throw std::out_of_range("sequence longer than max_len");
    const auto row = static_cast<Eigen::Index>(i);
    e.row(row) = params.item_emb.row(item) + params.pos_emb.row(static_cast<Eigen::Index>(position));
    ++position;
  }
  return e;
}

Vector encode(const Matrix& embedded, std::size_t padding_rows, const ModelParams& params,
              const EncodeOptions& options, Rng* rng, EncoderTrace* trace) {
  if (options.dropout < 0.0 || options.dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
  const auto rows = static_cast<std::size_t>(embedded.rows());
  if (padding_rows >= rows) throw std::invalid_argument("cannot encode an empty sequence");
  const Matrix real = embedded.bottomRows(static_cast<Eigen::Index>(rows - padding_rows));
  return run_blocks(real, params, options, rng, trace);
}

Vector encode_sequence(std::span<const ItemId> items, const ModelParams& params, const EncodeOptions& options,
                       Rng* rng, EncoderTrace* trace) {
  std::vector<ItemId> real;
  real.reserve(items.size());
  for (auto v : items)
    if (v != kPaddingItem) real.push_back(v);
  if (real.empty()) throw std::invalid_argument("cannot encode an empty sequence");
  const Matrix e = embed(real, params);
  if (trace) trace->items = real;
  return encode(e, 0, params, options, rng, trace);
}

Matrix encode_all_positions(std::span<const ItemId> items, const ModelParams& params) {
  std::vector<ItemId> real;
  for (auto v : items)
    if (v != kPaddingItem) real.push_back(v);
  if (real.empty()) throw std::invalid_argument("cannot encode an empty sequence");
  Matrix x = embed(real, params);
  EncoderTrace::Block scratch;
  for (std::size_t b = 0; b < params.shape.blocks; ++b) {
    x = block_forward(x, 0, params.blocks[b], params.shape, EncodeOptions{}, nullptr, scratch);
  }
  return x;
}

void backward(const EncoderTrace& trace, const Vector& grad_h, const ModelParams& params, ModelParams& grads) {
  if (trace.blocks.size() != params.shape.blocks) throw std::logic_error("trace does not match the model");
  Matrix d = grad_h.transpose();
  for (std::size_t b = params.shape.blocks; b-- > 0;) {
    d = block_backward(trace.blocks[b], d, params.blocks[b], params.shape, grads.blocks[b]);
  }
  for (std::size_t i = 0; i < trace.items.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    grads.item_emb.row(trace.items[i]) += d.row(row);
    grads.pos_emb.row(row) += d.row(row);
  }
}

Vector item_logits(const Vector& h, const ModelParams& params) {
  const auto n = params.item_emb.rows() - 1;
  return params.item_emb.bottomRows(n) * h;
}

Vector predict(const Vector& h, const Matrix& item_emb) {
  Vector logits = item_emb.bottomRows(item_emb.rows() - 1) * h;
  const double mx = logits.maxCoeff();
  Vector p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const auto& s = params.shape;
  for (std::uint64_t v : {s.item_count, s.max_len, s.dim, s.blocks, s.heads, s.ffn_dim}) put_le<std::uint64_t>(out, v);
  std::uint32_t count = 0;
  params.for_each_tensor([&](const std::string&, const Matrix&) { ++count; });
  put_le<std::uint32_t>(out, count);
  params.for_each_tensor([&](const std::string& name, const Matrix& m) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) put_le<double>(out, m.data()[i]);
  });
}

ModelParams read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw std::runtime_error("not a checkpoint");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  ModelShape s;
  s.item_count = get_le<std::uint64_t>(in);
  s.max_len = get_le<std::uint64_t>(in);
  s.dim = get_le<std::uint64_t>(in);
  s.blocks = get_le<std::uint64_t>(in);
  s.heads = get_le<std::uint64_t>(in);
  s.ffn_dim = get_le<std::uint64_t>(in);
  ModelParams p = ModelParams::zeros(s);
  const auto count = get_le<std::uint32_t>(in);
  std::uint32_t expected_count = 0;
  p.for_each_tensor([&](const std::string&, const Matrix&) { ++expected_count; });
  if (count != expected_count) throw std::runtime_error("checkpoint tensor count mismatch");
  p.for_each_tensor([&](const std::string& expected, Matrix& m) {
    const auto len = get_le<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error("truncated checkpoint");
    if (name != expected) throw std::runtime_error("checkpoint tensor '" + name + "' where '" + expected + "' expected");
    const auto rows = get_le<std::uint64_t>(in);
    const auto cols = get_le<std::uint64_t>(in);
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has the wrong shape");
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<double>(in);
  });
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace rcl
