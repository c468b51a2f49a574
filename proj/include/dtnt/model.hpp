#pragma once

#include <map>
#include <string>

#include "dtnt/blocks.hpp"

namespace dtnt {

struct StemSpec {
  int64_t out_channels = 8;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

struct DenseStageSpec {
  int num_layers = 2;
  int64_t growth_rate = 4;
};

struct TntStageSpec {
  int depth = 2;
  int patch_size = 8;
  int word_size = 4;
  int64_t sentence_dim = 32;
  int64_t word_dim = 16;
  int heads_outer = 4;
  int heads_inner = 2;
};

struct ModelConfig {
  int64_t in_channels = 1;
  int64_t in_h = 64;
  int64_t in_w = 64;
  StemSpec stem;
  std::vector<DenseStageSpec> dense_stage;  // a transition follows each block
  TntStageSpec tnt;
  int64_t classes = 2;
  Activation activation = Activation::Relu;
  bool use_positions = true;
  uint64_t seed = 0;

  // geometry after the stem conv and the dense stage (channels, h, w)
  struct Geometry {
    int64_t channels, h, w;
  };
  Geometry feature_geometry() const;

  // throws with the offending stage named
  void validate() const;

  // canonical text form; from_kv(to_kv()) is the identity
  std::string to_kv() const;
  static ModelConfig from_kv(const std::string& text);
};

// named presets: "tiny" (desk tests), "s12-like", "s24-like"
ModelConfig preset_config(const std::string& name);

template <typename T> struct Model {
  ModelConfig cfg;
  Tensor<T> stem_conv;
  Tensor<T> stem_bn_gamma, stem_bn_beta;
  BatchNormState<T> stem_bn_state;
  std::vector<DenseBlock<T>> dense_blocks;
  std::vector<TransitionParams<T>> transitions;
  SentenceWordEmbedding<T> embedding;
  std::vector<TNTBlock<T>> tnt_blocks;
  ClassifierHead<T> head;
};

template <typename T> Model<T> build_model(const ModelConfig& cfg);

// batch [N,C,H,W] -> row-stochastic probabilities [N,classes]
template <typename T>
Tensor<T> model_forward(Model<T>& model, const Tensor<T>& batch, Mode mode);

// visits every learnable tensor in a fixed construction order
template <typename T>
void visit_params(Model<T>& model,
                  const std::function<void(const std::string&, Tensor<T>&)>& fn);

// visits batch-norm running statistics (persistent but not learned)
template <typename T>
void visit_bn_states(Model<T>& model,
                     const std::function<void(const std::string&, BatchNormState<T>&)>& fn);

template <typename T> int64_t param_count(Model<T>& model);

// per-stage breakdown keyed by the first segment of each parameter name
template <typename T> std::map<std::string, int64_t> param_count_by_stage(Model<T>& model);

// deep copy: fresh buffers for every parameter and running stat
template <typename T> Model<T> clone_model(const Model<T>& model);

}  // namespace dtnt
