#include "dtnt/model.hpp"

#include <algorithm>
#include <sstream>

namespace dtnt {

ModelConfig::Geometry ModelConfig::feature_geometry() const {
  int64_t h = (in_h + 2 * stem.padding - stem.kernel) / stem.stride + 1;
  int64_t w = (in_w + 2 * stem.padding - stem.kernel) / stem.stride + 1;
  int64_t c = stem.out_channels;
  for (const DenseStageSpec& s : dense_stage) {
    c += s.num_layers * s.growth_rate;  // dense block, spatial preserved
    c = c / 2;                          // transition conv
    h = (h - 2) / 2 + 1;                // 2x2 average pool stride 2
    w = (w - 2) / 2 + 1;
  }
  return {c, h, w};
}

void ModelConfig::validate() const {
  if (in_channels <= 0 || in_h <= 0 || in_w <= 0)
    fail_shape("config: input geometry must be positive");
  if (stem.out_channels <= 0 || stem.kernel <= 0 || stem.stride <= 0 || stem.padding < 0)
    fail_shape("config: invalid stem spec");
  if (stem.kernel > in_h + 2 * stem.padding || stem.kernel > in_w + 2 * stem.padding)
    fail_shape("config: stem kernel larger than padded input");
  for (size_t i = 0; i < dense_stage.size(); ++i)
    if (dense_stage[i].num_layers < 0 || dense_stage[i].growth_rate <= 0)
      fail_shape("config: invalid dense block " + std::to_string(i));
  if (classes < 2) fail_shape("config: need at least 2 classes");
  if (tnt.depth < 1 || tnt.sentence_dim <= 0 || tnt.word_dim <= 0)
    fail_shape("config: invalid tnt stage");
  Geometry g = feature_geometry();
  if (g.h < 1 || g.w < 1) fail_shape("config: dense stage consumed all spatial extent");
  if (tnt.patch_size <= 0 || g.h % tnt.patch_size != 0 || g.w % tnt.patch_size != 0)
    fail_shape("config: patch_size " + std::to_string(tnt.patch_size) +
               " does not divide dense-stage output " + std::to_string(g.h) + "x" +
               std::to_string(g.w) + " (tnt stage)");
  if (tnt.word_size <= 0 || tnt.patch_size % tnt.word_size != 0)
    fail_shape("config: word_size " + std::to_string(tnt.word_size) +
               " does not divide patch_size " + std::to_string(tnt.patch_size) +
               " (tnt stage)");
  if (tnt.heads_outer < 1 || tnt.sentence_dim % tnt.heads_outer != 0)
    fail_shape("config: heads_outer " + std::to_string(tnt.heads_outer) +
               " does not divide sentence_dim " + std::to_string(tnt.sentence_dim));
  if (tnt.heads_inner < 1 || tnt.word_dim % tnt.heads_inner != 0)
    fail_shape("config: heads_inner " + std::to_string(tnt.heads_inner) +
               " does not divide word_dim " + std::to_string(tnt.word_dim));
}

std::string ModelConfig::to_kv() const {
  std::ostringstream os;
  os << "in_channels=" << in_channels << '\n';
  os << "in_h=" << in_h << '\n';
  os << "in_w=" << in_w << '\n';
  os << "stem_channels=" << stem.out_channels << '\n';
  os << "stem_kernel=" << stem.kernel << '\n';
  os << "stem_stride=" << stem.stride << '\n';
  os << "stem_padding=" << stem.padding << '\n';
  os << "dense_blocks=" << dense_stage.size() << '\n';
  for (size_t i = 0; i < dense_stage.size(); ++i) {
    os << "dense" << i << "_layers=" << dense_stage[i].num_layers << '\n';
    os << "dense" << i << "_growth=" << dense_stage[i].growth_rate << '\n';
  }
  os << "tnt_depth=" << tnt.depth << '\n';
  os << "patch_size=" << tnt.patch_size << '\n';
  os << "word_size=" << tnt.word_size << '\n';
  os << "sentence_dim=" << tnt.sentence_dim << '\n';
  os << "word_dim=" << tnt.word_dim << '\n';
  os << "heads_outer=" << tnt.heads_outer << '\n';
  os << "heads_inner=" << tnt.heads_inner << '\n';
  os << "classes=" << classes << '\n';
  os << "activation=" << (activation == Activation::Relu ? "relu" : "gelu") << '\n';
  os << "positions=" << (use_positions ? 1 : 0) << '\n';
  os << "seed=" << seed << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail_value("config: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail_value("config: missing key '" + key + "'");
    return it->second;
  };
  auto geti = [&](const std::string& key) { return std::stoll(need(key)); };
  ModelConfig cfg;
  cfg.in_channels = geti("in_channels");
  cfg.in_h = geti("in_h");
  cfg.in_w = geti("in_w");
  cfg.stem.out_channels = geti("stem_channels");
  cfg.stem.kernel = static_cast<int>(geti("stem_kernel"));
  cfg.stem.stride = static_cast<int>(geti("stem_stride"));
  cfg.stem.padding = static_cast<int>(geti("stem_padding"));
  cfg.dense_stage.clear();
  const int64_t blocks = geti("dense_blocks");
  for (int64_t i = 0; i < blocks; ++i) {
    DenseStageSpec s;
    s.num_layers = static_cast<int>(geti("dense" + std::to_string(i) + "_layers"));
    s.growth_rate = geti("dense" + std::to_string(i) + "_growth");
    cfg.dense_stage.push_back(s);
  }
  cfg.tnt.depth = static_cast<int>(geti("tnt_depth"));
  cfg.tnt.patch_size = static_cast<int>(geti("patch_size"));
  cfg.tnt.word_size = static_cast<int>(geti("word_size"));
  cfg.tnt.sentence_dim = geti("sentence_dim");
  cfg.tnt.word_dim = geti("word_dim");
  cfg.tnt.heads_outer = static_cast<int>(geti("heads_outer"));
  cfg.tnt.heads_inner = static_cast<int>(geti("heads_inner"));
  cfg.classes = geti("classes");
  const std::string& act = need("activation");
  if (act == "relu")
    cfg.activation = Activation::Relu;
  else if (act == "gelu")
    cfg.activation = Activation::Gelu;
  else
    fail_value("config: unknown activation '" + act + "'");
  cfg.use_positions = geti("positions") != 0;
  cfg.seed = static_cast<uint64_t>(std::stoull(need("seed")));
  return cfg;
}

ModelConfig preset_config(const std::string& name) {
  ModelConfig cfg;
  if (name == "tiny") {
    cfg.in_channels = 1;
    cfg.stem = {8, 3, 1, 1};
    cfg.dense_stage = {{2, 4}};
    cfg.tnt = {2, 8, 4, 32, 16, 4, 2};
  } else if (name == "s12-like") {
    cfg.in_channels = 3;
    cfg.stem = {24, 3, 1, 1};
    cfg.dense_stage = {{4, 12}};
    cfg.tnt = {11, 8, 4, 288, 24, 6, 4};
  } else if (name == "s24-like") {
    cfg.in_channels = 3;
    cfg.stem = {32, 3, 1, 1};
    cfg.dense_stage = {{4, 16}};
    cfg.tnt = {11, 8, 4, 384, 24, 6, 4};
  } else {
    fail_value("unknown preset '" + name + "' (expected tiny, s12-like or s24-like)");
  }
  cfg.validate();
  return cfg;
}

template <typename T> Model<T> build_model(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(Rng::mix(cfg.seed, 0xd723));
  Model<T> m;
  m.cfg = cfg;
  m.stem_conv = Tensor<T>::zeros({cfg.stem.out_channels, cfg.in_channels,
                                  cfg.stem.kernel, cfg.stem.kernel});
  const double stem_sigma =
      std::sqrt(2.0 / static_cast<double>(cfg.in_channels * cfg.stem.kernel *
                                          cfg.stem.kernel));
  for (T& v : m.stem_conv.data()) v = static_cast<T>(rng.truncated_normal(stem_sigma));
  m.stem_conv.set_requires_grad(true);
  m.stem_bn_gamma = Tensor<T>::filled({cfg.stem.out_channels}, T(1));
  m.stem_bn_gamma.set_requires_grad(true);
  m.stem_bn_beta = Tensor<T>::zeros({cfg.stem.out_channels});
  m.stem_bn_beta.set_requires_grad(true);

  int64_t channels = cfg.stem.out_channels;
  for (const DenseStageSpec& s : cfg.dense_stage) {
    m.dense_blocks.push_back(make_dense_block<T>(channels, s.num_layers, s.growth_rate, rng));
    channels += s.num_layers * s.growth_rate;
    m.transitions.push_back(make_transition<T>(channels, rng));
    channels /= 2;
  }

  ModelConfig::Geometry g = cfg.feature_geometry();
  m.embedding = make_embedding<T>(g.channels, g.h, g.w, cfg.tnt.patch_size,
                                  cfg.tnt.word_size, cfg.tnt.sentence_dim,
                                  cfg.tnt.word_dim, cfg.use_positions, rng);
  for (int i = 0; i < cfg.tnt.depth; ++i)
    m.tnt_blocks.push_back(make_tnt_block<T>(m.embedding, cfg.tnt.heads_outer,
                                             cfg.tnt.heads_inner, cfg.activation, rng));
  m.head = make_head<T>(cfg.tnt.sentence_dim, cfg.classes, rng);
  return m;
}

template <typename T>
Tensor<T> model_forward(Model<T>& model, const Tensor<T>& batch, Mode mode) {
  if (batch.rank() != 4 || batch.dim(1) != model.cfg.in_channels ||
      batch.dim(2) != model.cfg.in_h || batch.dim(3) != model.cfg.in_w)
    fail_shape("forward: batch " + shape_str(batch.shape()) + " vs configured input " +
               std::to_string(model.cfg.in_channels) + "x" +
               std::to_string(model.cfg.in_h) + "x" + std::to_string(model.cfg.in_w));
  const int64_t n = batch.dim(0);

  Tensor<T> x = conv2d(batch, model.stem_conv, model.cfg.stem.stride,
                       model.cfg.stem.padding);
  x = batch_norm(x, model.stem_bn_gamma, model.stem_bn_beta, model.stem_bn_state, mode,
                 static_cast<T>(kBatchNormEps), static_cast<T>(kBatchNormMomentum));
  x = relu(x);
  for (size_t i = 0; i < model.dense_blocks.size(); ++i) {
    x = dense_block_forward(model.dense_blocks[i], x, mode);
    x = transition_forward(model.transitions[i], x);
  }

  const int64_t fc = x.dim(1), fh = x.dim(2), fw = x.dim(3);
  std::vector<Tensor<T>> class_tokens;
  class_tokens.reserve(n);
  for (int64_t im = 0; im < n; ++im) {
    Tensor<T> img = reshape(slice(x, 0, im, 1), {fc, fh, fw});
    auto [sentences, words] = embed(img, model.embedding);
    for (TNTBlock<T>& block : model.tnt_blocks)
      std::tie(sentences, words) = tnt_forward(block, sentences, words);
    class_tokens.push_back(slice(sentences, 0, 0, 1));
  }
  Tensor<T> z = class_tokens.size() == 1 ? class_tokens[0] : concat(class_tokens, 0);
  return classify_batch(model.head, z);
}

namespace {

template <typename T, typename Fn>
void visit_linear(const std::string& prefix, LinearParams<T>& p, Fn&& fn) {
  fn(prefix + ".w", p.w);
  fn(prefix + ".b", p.b);
}

template <typename T, typename Fn>
void visit_msa(const std::string& prefix, MsaParams<T>& p, Fn&& fn) {
  visit_linear(prefix + ".q", p.q, fn);
  visit_linear(prefix + ".k", p.k, fn);
  visit_linear(prefix + ".v", p.v, fn);
  visit_linear(prefix + ".out", p.out, fn);
}

template <typename T, typename Fn>
void visit_mlp(const std::string& prefix, MlpParams<T>& p, Fn&& fn) {
  visit_linear(prefix + ".fc1", p.fc1, fn);
  visit_linear(prefix + ".fc2", p.fc2, fn);
}

template <typename T, typename Fn>
void visit_ln(const std::string& prefix, LayerNormParams<T>& p, Fn&& fn) {
  fn(prefix + ".gamma", p.gamma);
  fn(prefix + ".beta", p.beta);
}

}  // namespace

template <typename T>
void visit_params(Model<T>& model,
                  const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  fn("stem.conv.w", model.stem_conv);
  fn("stem.bn.gamma", model.stem_bn_gamma);
  fn("stem.bn.beta", model.stem_bn_beta);
  for (size_t b = 0; b < model.dense_blocks.size(); ++b) {
    const std::string bp = "dense" + std::to_string(b);
    DenseBlock<T>& block = model.dense_blocks[b];
    for (size_t l = 0; l < block.layers.size(); ++l) {
      const std::string lp = bp + ".layer" + std::to_string(l);
      fn(lp + ".bn.gamma", block.layers[l].bn_gamma);
      fn(lp + ".bn.beta", block.layers[l].bn_beta);
      fn(lp + ".conv.w", block.layers[l].conv);
    }
    fn("trans" + std::to_string(b) + ".conv.w", model.transitions[b].conv);
  }
  visit_linear("embed.sentence", model.embedding.sentence_proj, fn);
  visit_linear("embed.word", model.embedding.word_proj, fn);
  fn("embed.sentence_pos", model.embedding.sentence_pos);
  fn("embed.word_pos", model.embedding.word_pos);
  fn("embed.class_token", model.embedding.class_token);
  for (size_t t = 0; t < model.tnt_blocks.size(); ++t) {
    const std::string tp = "tnt" + std::to_string(t);
    TNTBlock<T>& blk = model.tnt_blocks[t];
    visit_ln(tp + ".inner.ln1", blk.inner_ln1, fn);
    visit_msa(tp + ".inner.msa", blk.inner_msa, fn);
    visit_ln(tp + ".inner.ln2", blk.inner_ln2, fn);
    visit_mlp(tp + ".inner.mlp", blk.inner_mlp, fn);
    visit_linear(tp + ".word_to_sentence", blk.word_to_sentence, fn);
    visit_ln(tp + ".outer.ln1", blk.outer_ln1, fn);
    visit_msa(tp + ".outer.msa", blk.outer_msa, fn);
    visit_ln(tp + ".outer.ln2", blk.outer_ln2, fn);
    visit_mlp(tp + ".outer.mlp", blk.outer_mlp, fn);
  }
  fn("head.w", model.head.w);
  fn("head.b", model.head.b);
}

template <typename T>
void visit_bn_states(
    Model<T>& model,
    const std::function<void(const std::string&, BatchNormState<T>&)>& fn) {
  fn("stem.bn", model.stem_bn_state);
  for (size_t b = 0; b < model.dense_blocks.size(); ++b)
    for (size_t l = 0; l < model.dense_blocks[b].layers.size(); ++l)
      fn("dense" + std::to_string(b) + ".layer" + std::to_string(l) + ".bn",
         model.dense_blocks[b].layers[l].bn_state);
}

template <typename T> int64_t param_count(Model<T>& model) {
  int64_t total = 0;
  visit_params<T>(model, [&](const std::string&, Tensor<T>& t) { total += t.numel(); });
  return total;
}

template <typename T>
std::map<std::string, int64_t> param_count_by_stage(Model<T>& model) {
  std::map<std::string, int64_t> by_stage;
  visit_params<T>(model, [&](const std::string& name, Tensor<T>& t) {
    by_stage[name.substr(0, name.find('.'))] += t.numel();
  });
  return by_stage;
}

template <typename T> Model<T> clone_model(const Model<T>& model) {
  Model<T> copy = build_model<T>(model.cfg);
  Model<T>& src = const_cast<Model<T>&>(model);
  std::vector<Tensor<T>*> src_params, dst_params;
  visit_params<T>(src, [&](const std::string&, Tensor<T>& t) { src_params.push_back(&t); });
  visit_params<T>(copy, [&](const std::string&, Tensor<T>& t) { dst_params.push_back(&t); });
  for (size_t i = 0; i < src_params.size(); ++i)
    dst_params[i]->data() = src_params[i]->data();
  std::vector<BatchNormState<T>*> src_states, dst_states;
  visit_bn_states<T>(src, [&](const std::string&, BatchNormState<T>& s) {
    src_states.push_back(&s);
  });
  visit_bn_states<T>(copy, [&](const std::string&, BatchNormState<T>& s) {
    dst_states.push_back(&s);
  });
  for (size_t i = 0; i < src_states.size(); ++i) *dst_states[i] = *src_states[i];
  return copy;
}

#define DTNT_INSTANTIATE_MODEL(T)                                                      \
  template Model<T> build_model<T>(const ModelConfig&);                                \
  template Tensor<T> model_forward<T>(Model<T>&, const Tensor<T>&, Mode);              \
  template void visit_params<T>(                                                       \
      Model<T>&, const std::function<void(const std::string&, Tensor<T>&)>&);          \
  template void visit_bn_states<T>(                                                    \
      Model<T>&, const std::function<void(const std::string&, BatchNormState<T>&)>&);  \
  template int64_t param_count<T>(Model<T>&);                                          \
  template std::map<std::string, int64_t> param_count_by_stage<T>(Model<T>&);          \
  template Model<T> clone_model<T>(const Model<T>&);

DTNT_INSTANTIATE_MODEL(float)
DTNT_INSTANTIATE_MODEL(double)

#undef DTNT_INSTANTIATE_MODEL

}  // namespace dtnt
