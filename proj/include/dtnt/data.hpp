#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dtnt/tensor.hpp"

namespace dtnt {

struct DataItem {
  Tensor<float> image;  // [C,H,W], values in [0,1]
  int label = 0;
  std::string source;  // file path or synthetic id
};

struct LabeledDataset {
  std::vector<DataItem> items;
  std::vector<std::string> class_names;  // index 0 = "sedan" by convention
  std::string provenance;
  uint64_t seed = 0;

  std::vector<int64_t> class_counts() const;
  size_t size() const { return items.size(); }
};

struct SplitSpec {
  double train_fraction = 0.8;
  bool balance = true;
  uint64_t seed = 0;
};

// per-channel standardization statistics, computed on the train split only
struct NormStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

// <root>/<class>/*.png with 64x64 images of 1 or 3 channels, enumerated
// lexicographically; the sedan/pickup pair keeps its canonical order
LabeledDataset load_dataset(const std::string& root_dir);

// downsample every class to the minority count (without replacement), then
// reshuffle; deterministic for a given seed
LabeledDataset balance_classes(const LabeledDataset& ds, uint64_t seed);

// stratified shuffle split; train size = round(fraction * N), per-class
// counts within 1 of exact proportionality
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        const SplitSpec& spec);

// index batches for one epoch: batch size = max(1, floor(fraction * N)),
// short final batch kept, fresh shuffle from the given seed
std::vector<std::vector<size_t>> make_batches(const LabeledDataset& ds, double fraction,
                                              uint64_t epoch_seed);

// built-in 64x64 grayscale corpus: "sedan" is a filled rounded rectangle,
// "pickup" adds a lighter bed over the rear 40%; randomized pose, brightness
// and background texture, bit-reproducible for (n_per_class, seed)
LabeledDataset synth_generate(int n_per_class, uint64_t seed);

NormStats compute_norm_stats(const LabeledDataset& ds);

// [N,C,H,W] standardized batch plus labels for the given item indices
std::pair<Tensor<float>, std::vector<int>> assemble_batch(
    const LabeledDataset& ds, const std::vector<size_t>& indices, const NormStats& stats);

// standardize a single [C,H,W] image
Tensor<float> standardize(const Tensor<float>& image, const NormStats& stats);

// run manifest (CSV: seed, class counts, split sizes, batch size)
void write_manifest(const std::string& path, uint64_t seed,
                    const LabeledDataset& full, const LabeledDataset& train,
                    const LabeledDataset& test, size_t batch_size);

}  // namespace dtnt
