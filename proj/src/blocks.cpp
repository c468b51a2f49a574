#include "dtnt/blocks.hpp"

#include <cmath>

namespace dtnt {

namespace {

// Residual-branch projections use the transformer-lineage sigma 0.02; the
// feed-forward trunk (convs, tokenizer projections) is fan-in scaled, else
// the input signal arrives at the first attention block an order of
// magnitude below the positional embeddings and training stalls.
template <typename T>
Tensor<T> trunc_normal(std::vector<int64_t> shape, Rng& rng, double sigma = 0.02) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(rng.truncated_normal(sigma));
  t.set_requires_grad(true);
  return t;
}

double xavier_sigma(int64_t fan_in, int64_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

double kaiming_sigma(int64_t fan_in) {
  return std::sqrt(2.0 / static_cast<double>(fan_in));
}

template <typename T> Tensor<T> param_zeros(std::vector<int64_t> shape) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template <typename T> Tensor<T> param_ones(std::vector<int64_t> shape) {
  Tensor<T> t = Tensor<T>::filled(std::move(shape), T(1));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

template <typename T>
LinearParams<T> make_linear_scaled(int64_t in, int64_t out, Rng& rng, double sigma) {
  return {trunc_normal<T>({in, out}, rng, sigma), param_zeros<T>({out})};
}

template <typename T> LinearParams<T> make_linear(int64_t in, int64_t out, Rng& rng) {
  return make_linear_scaled<T>(in, out, rng, 0.02);
}

template <typename T> LayerNormParams<T> make_layer_norm(int64_t d) {
  return {param_ones<T>({d}), param_zeros<T>({d})};
}

template <typename T> MsaParams<T> make_msa(int64_t dim, int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0)
    fail_shape("msa: dim " + std::to_string(dim) + " not divisible by heads " +
               std::to_string(heads));
  MsaParams<T> p;
  p.q = make_linear<T>(dim, dim, rng);
  p.k = make_linear<T>(dim, dim, rng);
  p.v = make_linear<T>(dim, dim, rng);
  p.out = make_linear<T>(dim, dim, rng);
  p.heads = heads;
  return p;
}

template <typename T>
MlpParams<T> make_mlp(int64_t dim, int64_t hidden, Activation act, Rng& rng) {
  return {make_linear<T>(dim, hidden, rng), make_linear<T>(hidden, dim, rng), act};
}

template <typename T>
SentenceWordEmbedding<T> make_embedding(int64_t channels, int64_t h, int64_t w,
                                        int patch_size, int word_size,
                                        int64_t sentence_dim, int64_t word_dim,
                                        bool use_positions, Rng& rng) {
  if (patch_size <= 0 || word_size <= 0 || h % patch_size != 0 || w % patch_size != 0)
    fail_shape("embedding: patch " + std::to_string(patch_size) +
               " does not divide input " + std::to_string(h) + "x" + std::to_string(w));
  if (patch_size % word_size != 0)
    fail_shape("embedding: word " + std::to_string(word_size) +
               " does not divide patch " + std::to_string(patch_size));
  SentenceWordEmbedding<T> e;
  e.patch_size = patch_size;
  e.word_size = word_size;
  e.n = (h / patch_size) * (w / patch_size);
  const int64_t per_side = patch_size / word_size;
  e.m = per_side * per_side;
  e.sentence_dim = sentence_dim;
  e.word_dim = word_dim;
  const int64_t patch_pixels = channels * patch_size * patch_size;
  const int64_t word_pixels = channels * word_size * word_size;
  e.sentence_proj = make_linear_scaled<T>(patch_pixels, sentence_dim, rng,
                                          xavier_sigma(patch_pixels, sentence_dim));
  e.word_proj = make_linear_scaled<T>(word_pixels, word_dim, rng,
                                      xavier_sigma(word_pixels, word_dim));
  e.sentence_pos = trunc_normal<T>({e.n + 1, sentence_dim}, rng);
  e.word_pos = trunc_normal<T>({e.m, word_dim}, rng);
  e.class_token = trunc_normal<T>({sentence_dim}, rng);
  e.use_positions = use_positions;
  return e;
}

template <typename T>
TNTBlock<T> make_tnt_block(const SentenceWordEmbedding<T>& emb, int heads_outer,
                           int heads_inner, Activation act, Rng& rng) {
  TNTBlock<T> b;
  b.m = emb.m;
  b.inner_ln1 = make_layer_norm<T>(emb.word_dim);
  b.inner_msa = make_msa<T>(emb.word_dim, heads_inner, rng);
  b.inner_ln2 = make_layer_norm<T>(emb.word_dim);
  b.inner_mlp = make_mlp<T>(emb.word_dim, 4 * emb.word_dim, act, rng);
  b.word_to_sentence = make_linear<T>(emb.m * emb.word_dim, emb.sentence_dim, rng);
  b.outer_ln1 = make_layer_norm<T>(emb.sentence_dim);
  b.outer_msa = make_msa<T>(emb.sentence_dim, heads_outer, rng);
  b.outer_ln2 = make_layer_norm<T>(emb.sentence_dim);
  b.outer_mlp = make_mlp<T>(emb.sentence_dim, 4 * emb.sentence_dim, act, rng);
  return b;
}

template <typename T>
DenseBlock<T> make_dense_block(int64_t in_channels, int num_layers, int64_t growth_rate,
                               Rng& rng) {
  DenseBlock<T> b;
  b.in_channels = in_channels;
  b.growth_rate = growth_rate;
  for (int i = 0; i < num_layers; ++i) {
    const int64_t c = in_channels + i * growth_rate;
    DenseLayer<T> l;
    l.bn_gamma = param_ones<T>({c});
    l.bn_beta = param_zeros<T>({c});
    l.conv = trunc_normal<T>({growth_rate, c, 3, 3}, rng, kaiming_sigma(c * 9));
    b.layers.push_back(std::move(l));
  }
  return b;
}

template <typename T> TransitionParams<T> make_transition(int64_t in_channels, Rng& rng) {
  return {trunc_normal<T>({in_channels / 2, in_channels, 1, 1}, rng,
                          xavier_sigma(in_channels, in_channels / 2))};
}

template <typename T> ClassifierHead<T> make_head(int64_t dim, int64_t classes, Rng& rng) {
  return {trunc_normal<T>({dim, classes}, rng), param_zeros<T>({classes})};
}

// ---- forwards ----

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearParams<T>& p) {
  return add_rows(matmul(x, p.w), p.b);
}

template <typename T> Tensor<T> activate(const Tensor<T>& x, Activation act) {
  return act == Activation::Relu ? relu(x) : gelu(x);
}

template <typename T> Tensor<T> msa(const Tensor<T>& x, const MsaParams<T>& p) {
  if (x.rank() != 2) fail_shape("msa: input must be [T,d], got " + shape_str(x.shape()));
  const int64_t d = x.dim(1);
  if (d != p.q.w.dim(0))
    fail_shape("msa: input width " + std::to_string(d) + " vs weights " +
               shape_str(p.q.w.shape()));
  if (d % p.heads != 0)
    fail_shape("msa: width " + std::to_string(d) + " not divisible by " +
               std::to_string(p.heads) + " heads");
  const int64_t dh = d / p.heads;
  Tensor<T> q = linear(x, p.q);
  Tensor<T> k = linear(x, p.k);
  Tensor<T> v = linear(x, p.v);
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor<T>> heads;
  heads.reserve(p.heads);
  for (int h = 0; h < p.heads; ++h) {
    Tensor<T> qh = slice(q, 1, h * dh, dh);
    Tensor<T> kh = slice(k, 1, h * dh, dh);
    Tensor<T> vh = slice(v, 1, h * dh, dh);
    Tensor<T> attn = softmax(scale(matmul(qh, transpose2d(kh)), inv_sqrt), 1);
    heads.push_back(matmul(attn, vh));
  }
  return linear(concat(heads, 1), p.out);
}

template <typename T> Tensor<T> mlp(const Tensor<T>& x, const MlpParams<T>& p) {
  return linear(activate(linear(x, p.fc1), p.act), p.fc2);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> embed(const Tensor<T>& image,
                                      const SentenceWordEmbedding<T>& emb) {
  if (image.rank() != 3)
    fail_shape("embed: image must be [C,H,W], got " + shape_str(image.shape()));
  const int64_t h = image.dim(1), w = image.dim(2);
  if (h % emb.patch_size != 0 || w % emb.patch_size != 0)
    fail_shape("embed: patch " + std::to_string(emb.patch_size) + " does not divide " +
               shape_str(image.shape()));
  const int64_t pw = w / emb.patch_size;
  const int64_t n = (h / emb.patch_size) * pw;
  if (n != emb.n)
    fail_shape("embed: image yields " + std::to_string(n) + " sentences, embedding has " +
               std::to_string(emb.n));

  // sentence stream
  Tensor<T> patches = unfold_cells(image, emb.patch_size, emb.patch_size);
  Tensor<T> sent = linear(patches, emb.sentence_proj);
  Tensor<T> cls = reshape(emb.class_token, {1, emb.sentence_dim});
  if (emb.use_positions) {
    sent = add(sent, slice(emb.sentence_pos, 0, 1, n));
    cls = add(cls, slice(emb.sentence_pos, 0, 0, 1));
  }
  Tensor<T> sentences = concat<T>({cls, sent}, 0);

  // word stream, regrouped so words of one sentence are contiguous
  Tensor<T> cells = unfold_cells(image, emb.word_size, emb.word_size);
  const int64_t per_side = emb.patch_size / emb.word_size;
  const int64_t gw = w / emb.word_size;
  std::vector<int64_t> idx(static_cast<size_t>(n * emb.m));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t py = i / pw, px = i % pw;
    for (int64_t j = 0; j < emb.m; ++j) {
      const int64_t wy = j / per_side, wx = j % per_side;
      idx[i * emb.m + j] = (py * per_side + wy) * gw + px * per_side + wx;
    }
  }
  Tensor<T> words = linear(gather_rows(cells, idx), emb.word_proj);
  if (emb.use_positions) words = add(words, tile_rows(emb.word_pos, n));
  return {sentences, reshape(words, {n, emb.m, emb.word_dim})};
}

template <typename T>
Tensor<T> tnt_inner(const TNTBlock<T>& block, const Tensor<T>& words) {
  if (words.rank() != 3)
    fail_shape("tnt: words must be [n,m,wd], got " + shape_str(words.shape()));
  const int64_t n = words.dim(0), m = words.dim(1), wd = words.dim(2);
  if (m != block.m)
    fail_shape("tnt: " + std::to_string(m) + " words per sentence, block expects " +
               std::to_string(block.m));
  Tensor<T> flat = reshape(words, {n * m, wd});
  Tensor<T> normed = layer_norm(flat, block.inner_ln1.gamma, block.inner_ln1.beta,
                                static_cast<T>(kLayerNormEps));
  std::vector<Tensor<T>> per_sentence;
  per_sentence.reserve(n);
  for (int64_t i = 0; i < n; ++i)
    per_sentence.push_back(msa(slice(normed, 0, i * m, m), block.inner_msa));
  Tensor<T> after_attn = add(flat, concat(per_sentence, 0));
  Tensor<T> normed2 = layer_norm(after_attn, block.inner_ln2.gamma, block.inner_ln2.beta,
                                 static_cast<T>(kLayerNormEps));
  Tensor<T> out = add(after_attn, mlp(normed2, block.inner_mlp));
  return reshape(out, {n, m, wd});
}

template <typename T>
Tensor<T> tnt_inject(const TNTBlock<T>& block, const Tensor<T>& sentences,
                     const Tensor<T>& words) {
  const int64_t n = words.dim(0), m = words.dim(1), wd = words.dim(2);
  if (sentences.rank() != 2 || sentences.dim(0) != n + 1)
    fail_shape("tnt: sentences " + shape_str(sentences.shape()) + " vs " +
               std::to_string(n) + " word groups");
  Tensor<T> vec = reshape(words, {n, m * wd});
  Tensor<T> delta = linear(vec, block.word_to_sentence);
  Tensor<T> cls = slice(sentences, 0, 0, 1);  // class token gets no injection
  Tensor<T> rest = add(slice(sentences, 0, 1, n), delta);
  return concat<T>({cls, rest}, 0);
}

template <typename T>
Tensor<T> tnt_outer(const TNTBlock<T>& block, const Tensor<T>& sentences) {
  Tensor<T> normed = layer_norm(sentences, block.outer_ln1.gamma, block.outer_ln1.beta,
                                static_cast<T>(kLayerNormEps));
  Tensor<T> after_attn = add(sentences, msa(normed, block.outer_msa));
  Tensor<T> normed2 = layer_norm(after_attn, block.outer_ln2.gamma, block.outer_ln2.beta,
                                 static_cast<T>(kLayerNormEps));
  return add(after_attn, mlp(normed2, block.outer_mlp));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> tnt_forward(const TNTBlock<T>& block,
                                            const Tensor<T>& sentences,
                                            const Tensor<T>& words) {
  Tensor<T> words_out = tnt_inner(block, words);
  Tensor<T> injected = tnt_inject(block, sentences, words_out);
  return {tnt_outer(block, injected), words_out};
}

template <typename T>
Tensor<T> dense_block_forward(DenseBlock<T>& block, const Tensor<T>& x, Mode mode) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3)
    fail_shape("dense block: input must be [N,C,H,W] or [C,H,W], got " +
               shape_str(x.shape()));
  Tensor<T> cur = batched ? x
                          : reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (cur.dim(1) != block.in_channels)
    fail_shape("dense block: " + std::to_string(cur.dim(1)) + " channels, block expects " +
               std::to_string(block.in_channels));
  std::vector<Tensor<T>> features{cur};
  for (DenseLayer<T>& layer : block.layers) {
    Tensor<T> input = features.size() == 1 ? features[0] : concat(features, 1);
    Tensor<T> normed =
        batch_norm(input, layer.bn_gamma, layer.bn_beta, layer.bn_state, mode,
                   static_cast<T>(kBatchNormEps), static_cast<T>(kBatchNormMomentum));
    Tensor<T> out = conv2d(relu(normed), layer.conv, 1, 1);
    features.push_back(out);
  }
  Tensor<T> result = features.size() == 1 ? features[0] : concat(features, 1);
  if (!batched)
    result = reshape(result, {result.dim(1), result.dim(2), result.dim(3)});
  return result;
}

template <typename T>
Tensor<T> transition_forward(const TransitionParams<T>& p, const Tensor<T>& x) {
  const bool batched = x.rank() == 4;
  const int64_t h = x.dim(batched ? 2 : 1), w = x.dim(batched ? 3 : 2);
  if (h < 2 || w < 2)
    fail_shape("transition: spatial extent " + std::to_string(h) + "x" +
               std::to_string(w) + " below 2");
  return avg_pool2d(conv2d(x, p.conv, 1, 0), 2, 2);
}

template <typename T>
Tensor<T> classify_batch(const ClassifierHead<T>& head, const Tensor<T>& z) {
  if (z.rank() != 2 || z.dim(1) != head.w.dim(0))
    fail_shape("classify: features " + shape_str(z.shape()) + " vs head " +
               shape_str(head.w.shape()));
  return softmax(add_rows(matmul(z, head.w), head.b), 1);
}

template <typename T>
Tensor<T> classify(const ClassifierHead<T>& head, const Tensor<T>& z) {
  if (z.rank() != 1 || z.dim(0) != head.w.dim(0))
    fail_shape("classify: feature " + shape_str(z.shape()) + " vs head " +
               shape_str(head.w.shape()));
  Tensor<T> probs = classify_batch(head, reshape(z, {1, z.dim(0)}));
  return reshape(probs, {head.classes()});
}

template <typename T> int64_t predict(const Tensor<T>& probs_row) {
  const auto& v = probs_row.data();
  int64_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int64_t>(i);
  return best;
}

#define DTNT_INSTANTIATE_BLOCKS(T)                                                     \
  template LinearParams<T> make_linear<T>(int64_t, int64_t, Rng&);                     \
  template LayerNormParams<T> make_layer_norm<T>(int64_t);                             \
  template MsaParams<T> make_msa<T>(int64_t, int, Rng&);                               \
  template MlpParams<T> make_mlp<T>(int64_t, int64_t, Activation, Rng&);               \
  template SentenceWordEmbedding<T> make_embedding<T>(int64_t, int64_t, int64_t, int,  \
                                                      int, int64_t, int64_t, bool,     \
                                                      Rng&);                           \
  template TNTBlock<T> make_tnt_block<T>(const SentenceWordEmbedding<T>&, int, int,    \
                                         Activation, Rng&);                            \
  template DenseBlock<T> make_dense_block<T>(int64_t, int, int64_t, Rng&);             \
  template TransitionParams<T> make_transition<T>(int64_t, Rng&);                      \
  template ClassifierHead<T> make_head<T>(int64_t, int64_t, Rng&);                     \
  template Tensor<T> linear<T>(const Tensor<T>&, const LinearParams<T>&);              \
  template Tensor<T> activate<T>(const Tensor<T>&, Activation);                        \
  template Tensor<T> msa<T>(const Tensor<T>&, const MsaParams<T>&);                    \
  template Tensor<T> mlp<T>(const Tensor<T>&, const MlpParams<T>&);                    \
  template std::pair<Tensor<T>, Tensor<T>> embed<T>(const Tensor<T>&,                  \
                                                    const SentenceWordEmbedding<T>&);  \
  template Tensor<T> tnt_inner<T>(const TNTBlock<T>&, const Tensor<T>&);               \
  template Tensor<T> tnt_inject<T>(const TNTBlock<T>&, const Tensor<T>&,               \
                                   const Tensor<T>&);                                  \
  template Tensor<T> tnt_outer<T>(const TNTBlock<T>&, const Tensor<T>&);               \
  template std::pair<Tensor<T>, Tensor<T>> tnt_forward<T>(                             \
      const TNTBlock<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> dense_block_forward<T>(DenseBlock<T>&, const Tensor<T>&, Mode);   \
  template Tensor<T> transition_forward<T>(const TransitionParams<T>&,                 \
                                           const Tensor<T>&);                          \
  template Tensor<T> classify<T>(const ClassifierHead<T>&, const Tensor<T>&);          \
  template Tensor<T> classify_batch<T>(const ClassifierHead<T>&, const Tensor<T>&);    \
  template int64_t predict<T>(const Tensor<T>&);

DTNT_INSTANTIATE_BLOCKS(float)
DTNT_INSTANTIATE_BLOCKS(double)

#undef DTNT_INSTANTIATE_BLOCKS

}  // namespace dtnt
