#pragma once

#include <utility>

#include "dtnt/ops.hpp"

namespace dtnt {

enum class Activation { Relu, Gelu };

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T> struct LinearParams {
  Tensor<T> w;  // [in, out]
  Tensor<T> b;  // [out]
};

template <typename T> struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T> struct MsaParams {
  LinearParams<T> q, k, v, out;
  int heads = 1;
};

template <typename T> struct MlpParams {
  LinearParams<T> fc1, fc2;
  Activation act = Activation::Relu;
};

// Patch/word tokenizer: patches become sentences of the outer transformer,
// sub-patches become words of the inner one. The class token sits at
// sentence index 0 and owns position slot 0.
template <typename T> struct SentenceWordEmbedding {
  int patch_size = 0;
  int word_size = 0;
  int64_t n = 0;  // sentences per image
  int64_t m = 0;  // words per sentence
  int64_t sentence_dim = 0;
  int64_t word_dim = 0;
  LinearParams<T> sentence_proj;  // [C*patch^2, D]
  LinearParams<T> word_proj;      // [C*word^2, word_dim]
  Tensor<T> sentence_pos;         // [n+1, D]
  Tensor<T> word_pos;             // [m, word_dim]
  Tensor<T> class_token;          // [D]
  bool use_positions = true;
};

template <typename T> struct TNTBlock {
  int64_t m = 0;  // words per sentence, fixes the Vec() extent
  LayerNormParams<T> inner_ln1, inner_ln2;
  MsaParams<T> inner_msa;
  MlpParams<T> inner_mlp;
  LinearParams<T> word_to_sentence;  // [m*word_dim, D]
  LayerNormParams<T> outer_ln1, outer_ln2;
  MsaParams<T> outer_msa;
  MlpParams<T> outer_mlp;
};

// one BN-ReLU-conv3x3 unit inside a dense block
template <typename T> struct DenseLayer {
  Tensor<T> bn_gamma, bn_beta;
  BatchNormState<T> bn_state;
  Tensor<T> conv;  // [growth, c_in, 3, 3]
};

template <typename T> struct DenseBlock {
  int64_t in_channels = 0;
  int64_t growth_rate = 0;
  std::vector<DenseLayer<T>> layers;
  int64_t out_channels() const {
    return in_channels + static_cast<int64_t>(layers.size()) * growth_rate;
  }
};

template <typename T> struct TransitionParams {
  Tensor<T> conv;  // [floor(c/2), c, 1, 1]
};

template <typename T> struct ClassifierHead {
  Tensor<T> w;  // [D, C]
  Tensor<T> b;  // [C]
  int64_t classes() const { return b.numel(); }
};

// ---- parameter construction (deterministic, trunc-normal sigma 0.02) ----

template <typename T> LinearParams<T> make_linear(int64_t in, int64_t out, Rng& rng);
template <typename T> LayerNormParams<T> make_layer_norm(int64_t d);
template <typename T> MsaParams<T> make_msa(int64_t dim, int heads, Rng& rng);
template <typename T>
MlpParams<T> make_mlp(int64_t dim, int64_t hidden, Activation act, Rng& rng);
template <typename T>
SentenceWordEmbedding<T> make_embedding(int64_t channels, int64_t h, int64_t w,
                                        int patch_size, int word_size,
                                        int64_t sentence_dim, int64_t word_dim,
                                        bool use_positions, Rng& rng);
template <typename T>
TNTBlock<T> make_tnt_block(const SentenceWordEmbedding<T>& emb, int heads_outer,
                           int heads_inner, Activation act, Rng& rng);
template <typename T>
DenseBlock<T> make_dense_block(int64_t in_channels, int num_layers, int64_t growth_rate,
                               Rng& rng);
template <typename T> TransitionParams<T> make_transition(int64_t in_channels, Rng& rng);
template <typename T> ClassifierHead<T> make_head(int64_t dim, int64_t classes, Rng& rng);

// ---- forward passes ----

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act);

// standard scaled dot-product multi-head self-attention over rows of x [T,d]
template <typename T> Tensor<T> msa(const Tensor<T>& x, const MsaParams<T>& p);

template <typename T> Tensor<T> mlp(const Tensor<T>& x, const MlpParams<T>& p);

// image [C,H,W] -> sentences [n+1,D] (class token first), words [n,m,word_dim]
template <typename T>
std::pair<Tensor<T>, Tensor<T>> embed(const Tensor<T>& image,
                                      const SentenceWordEmbedding<T>& emb);

// inner transformer sublayers over the word stream
template <typename T>
Tensor<T> tnt_inner(const TNTBlock<T>& block, const Tensor<T>& words);

// additive FC(Vec(words_i)) into each non-class sentence
template <typename T>
Tensor<T> tnt_inject(const TNTBlock<T>& block, const Tensor<T>& sentences,
                     const Tensor<T>& words);

// outer transformer sublayers over the sentence stream
template <typename T>
Tensor<T> tnt_outer(const TNTBlock<T>& block, const Tensor<T>& sentences);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> tnt_forward(const TNTBlock<T>& block,
                                            const Tensor<T>& sentences,
                                            const Tensor<T>& words);

// x [N,c0,H,W] (or [c0,H,W], eval only); each layer consumes the running
// concatenation, spatial extents preserved
template <typename T>
Tensor<T> dense_block_forward(DenseBlock<T>& block, const Tensor<T>& x, Mode mode);

// 1x1 conv halving channels, then 2x2 average pool stride 2
template <typename T>
Tensor<T> transition_forward(const TransitionParams<T>& p, const Tensor<T>& x);

template <typename T>
Tensor<T> classify(const ClassifierHead<T>& head, const Tensor<T>& z);

template <typename T>
Tensor<T> classify_batch(const ClassifierHead<T>& head, const Tensor<T>& z);

// argmax with ties broken toward the lowest class index
template <typename T> int64_t predict(const Tensor<T>& probs_row);

}  // namespace dtnt
