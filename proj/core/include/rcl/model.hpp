#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rcl/corpus.hpp"

namespace rcl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct ModelShape {
  std::size_t item_count = 0;
  std::size_t max_len = 50;
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 64;

  bool operator==(const ModelShape&) const = default;
};

inline constexpr double kLayerNormEps = 1e-8;

struct BlockParams {
  Matrix wq, wk, wv, wo;  // dim x dim
  Matrix ln1_gain, ln1_bias;
  Matrix w1;  // dim x ffn_dim
  Matrix w2;  // ffn_dim x dim
  Matrix ln2_gain, ln2_bias;
};

/// Item embeddings (row 0 is the padding item and stays zero), learned
/// positional embeddings and the encoder blocks. Gradients use the same type.
struct ModelParams {
  ModelShape shape;
  Matrix item_emb;  // (item_count + 1) x dim
  Matrix pos_emb;   // max_len x dim
  std::vector<BlockParams> blocks;

  static ModelParams zeros(const ModelShape& shape);
  /// Embeddings and projections ~ U(-1/sqrt(dim), 1/sqrt(dim)), layer-norm
  /// gains 1 and offsets 0.
  static ModelParams initialize(const ModelShape& shape, std::uint64_t seed);

  /// Visits every tensor in a fixed order with a stable name.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

  void set_zero();
  bool all_finite() const;
  std::size_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f("item_emb", self.item_emb);
    f("pos_emb", self.pos_emb);
    for (std::size_t b = 0; b < self.blocks.size(); ++b) {
      auto& blk = self.blocks[b];
      const std::string p = "block" + std::to_string(b) + ".";
      f(p + "wq", blk.wq);
      f(p + "wk", blk.wk);
      f(p + "wv", blk.wv);
      f(p + "wo", blk.wo);
      f(p + "ln1_gain", blk.ln1_gain);
      f(p + "ln1_bias", blk.ln1_bias);
      f(p + "w1", blk.w1);
      f(p + "w2", blk.w2);
      f(p + "ln2_gain", blk.ln2_gain);
      f(p + "ln2_bias", blk.ln2_bias);
    }
  }
};

struct EncodeOptions {
  double dropout = 0.0;
  bool train = false;
};

/// Everything the backward pass needs from one forward pass.
class EncoderTrace {
 public:
  struct Block {
    std::size_t first_query = 0;
    Matrix input;  // all rows
    Matrix q, k, v;
    std::vector<Matrix> probs;       // per head, softmax output
    std::vector<Matrix> attn_masks;  // per head, scaled keep mask (empty when unused)
    Matrix attn;                     // concatenated head outputs
    Matrix ln1_hat;
    Eigen::VectorXd ln1_inv;
    Matrix y1, ffn_pre, ffn_act;
    Matrix ffn_mask;  // scaled keep mask (empty when unused)
    Matrix ln2_hat;
    Eigen::VectorXd ln2_inv;
  };

  std::vector<ItemId> items;  // real (non-padding) items that were embedded
  std::vector<Block> blocks;
};

/// Row i = item_emb[item_i] + pos_emb[j] where j counts real items from the
/// start; padding items give zero rows.
Matrix embed(std::span<const ItemId> items, const ModelParams& params);

/// Runs all blocks over the non-padding rows of `embedded` and returns the
/// hidden state at the final position. Leading `padding_rows` rows are ignored.
Vector encode(const Matrix& embedded, std::size_t padding_rows, const ModelParams& params,
              const EncodeOptions& options, Rng* rng, EncoderTrace* trace = nullptr);

/// Embeds and encodes; keeps the items in `trace` for the embedding gradient.
Vector encode_sequence(std::span<const ItemId> items, const ModelParams& params, const EncodeOptions& options,
                       Rng* rng, EncoderTrace* trace = nullptr);

/// Hidden states of the last block at every position (evaluation mode).
Matrix encode_all_positions(std::span<const ItemId> items, const ModelParams& params);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(h).
void backward(const EncoderTrace& trace, const Vector& grad_h, const ModelParams& params, ModelParams& grads);

/// Scores h . m_v for items 1..item_count (entry i belongs to item i + 1).
Vector item_logits(const Vector& h, const ModelParams& params);

/// softmax(h M^T) over real items; the padding item is not part of the support.
Vector predict(const Vector& h, const Matrix& item_emb);

/// Versioned binary checkpoint: "RCKP", u32 version, six u64 shape fields,
/// u32 tensor count, then per tensor (u32 name length, name, u64 rows,
/// u64 cols, row-major f64 data). Little-endian throughout.
void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rcl
