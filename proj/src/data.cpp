#include "dtnt/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dtnt/png_io.hpp"

namespace fs = std::filesystem;

namespace dtnt {

std::vector<int64_t> LabeledDataset::class_counts() const {
  std::vector<int64_t> counts(class_names.size(), 0);
  for (const DataItem& item : items) {
    if (item.label < 0 || static_cast<size_t>(item.label) >= class_names.size())
      fail_value("dataset: label " + std::to_string(item.label) + " out of range");
    ++counts[static_cast<size_t>(item.label)];
  }
  return counts;
}

LabeledDataset load_dataset(const std::string& root_dir) {
  if (!fs::is_directory(root_dir)) fail_io("dataset root '" + root_dir + "' not found");
  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root_dir))
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) fail_io("dataset root '" + root_dir + "' has no class directories");
  // canonical order for the sedan/pickup pair: sedan is the positive class
  if (classes.size() == 2 && classes[0] == "pickup" && classes[1] == "sedan")
    std::swap(classes[0], classes[1]);

  LabeledDataset ds;
  ds.class_names = classes;
  ds.provenance = fs::path(root_dir).filename().string();
  int channels = 0;
  for (size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root_dir) / classes[c]))
      if (entry.is_regular_file() && entry.path().extension() == ".png")
        files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
      fail_io("class directory '" + classes[c] + "' has no png images");
    for (const std::string& file : files) {
      ImageU8 img = read_png(file);
      if (img.width != 64 || img.height != 64)
        fail_value("image '" + file + "' is " + std::to_string(img.width) + "x" +
                   std::to_string(img.height) + ", expected 64x64");
      if (channels == 0) channels = img.channels;
      if (img.channels != channels)
        fail_value("image '" + file + "' has " + std::to_string(img.channels) +
                   " channels, dataset uses " + std::to_string(channels));
      ds.items.push_back({image_to_tensor(img), static_cast<int>(c), file});
    }
  }
  return ds;
}

LabeledDataset balance_classes(const LabeledDataset& ds, uint64_t seed) {
  const std::vector<int64_t> counts = ds.class_counts();
  for (size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0)
      fail_value("balance: class '" + ds.class_names[c] + "' has no items");
  const int64_t target = *std::min_element(counts.begin(), counts.end());

  Rng rng(Rng::mix(seed, 0xba1a));
  std::vector<size_t> keep;
  for (size_t c = 0; c < counts.size(); ++c) {
    std::vector<size_t> members;
    for (size_t i = 0; i < ds.items.size(); ++i)
      if (ds.items[i].label == static_cast<int>(c)) members.push_back(i);
    rng.shuffle(members);
    members.resize(static_cast<size_t>(target));
    keep.insert(keep.end(), members.begin(), members.end());
  }
  rng.shuffle(keep);

  LabeledDataset out;
  out.class_names = ds.class_names;
  out.provenance = ds.provenance;
  out.seed = seed;
  out.items.reserve(keep.size());
  for (size_t i : keep) out.items.push_back(ds.items[i]);
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& input,
                                                        const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    fail_value("split: train_fraction must lie in (0,1)");
  LabeledDataset ds = spec.balance ? balance_classes(input, spec.seed) : input;
  const int64_t n = static_cast<int64_t>(ds.items.size());
  if (n < 2) fail_value("split: need at least 2 items, got " + std::to_string(n));

  const std::vector<int64_t> counts = ds.class_counts();
  const size_t num_classes = counts.size();
  const int64_t train_total = std::llround(spec.train_fraction * static_cast<double>(n));

  // largest-remainder allocation of the train quota across classes
  std::vector<int64_t> quota(num_classes);
  std::vector<std::pair<double, size_t>> remainder;
  int64_t allocated = 0;
  for (size_t c = 0; c < num_classes; ++c) {
    const double exact = spec.train_fraction * static_cast<double>(counts[c]);
    quota[c] = static_cast<int64_t>(std::floor(exact));
    allocated += quota[c];
    remainder.push_back({exact - std::floor(exact), c});
  }
  std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // ties to the lower class index
  });
  for (int64_t extra = train_total - allocated; extra > 0; --extra)
    ++quota[remainder[static_cast<size_t>(train_total - allocated - extra)].second];

  Rng rng(Rng::mix(spec.seed, 0x5917));
  std::vector<size_t> train_idx, test_idx;
  for (size_t c = 0; c < num_classes; ++c) {
    std::vector<size_t> members;
    for (size_t i = 0; i < ds.items.size(); ++i)
      if (ds.items[i].label == static_cast<int>(c)) members.push_back(i);
    rng.shuffle(members);
    for (size_t i = 0; i < members.size(); ++i)
      (static_cast<int64_t>(i) < quota[c] ? train_idx : test_idx).push_back(members[i]);
  }
  rng.shuffle(train_idx);
  rng.shuffle(test_idx);

  auto build = [&](const std::vector<size_t>& idx) {
    LabeledDataset out;
    out.class_names = ds.class_names;
    out.provenance = ds.provenance;
    out.seed = spec.seed;
    out.items.reserve(idx.size());
    for (size_t i : idx) out.items.push_back(ds.items[i]);
    return out;
  };
  return {build(train_idx), build(test_idx)};
}

std::vector<std::vector<size_t>> make_batches(const LabeledDataset& ds, double fraction,
                                              uint64_t epoch_seed) {
  if (ds.items.empty()) fail_value("batches: empty training set");
  if (!(fraction > 0.0 && fraction <= 1.0))
    fail_value("batches: fraction must lie in (0,1]");
  const size_t n = ds.items.size();
  const size_t batch_size = std::max<size_t>(
      1, static_cast<size_t>(std::floor(fraction * static_cast<double>(n))));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::mix(epoch_seed, 0xbac4));
  rng.shuffle(order);
  std::vector<std::vector<size_t>> batches;
  for (size_t at = 0; at < n; at += batch_size) {
    const size_t end = std::min(n, at + batch_size);
    batches.emplace_back(order.begin() + static_cast<ptrdiff_t>(at),
                         order.begin() + static_cast<ptrdiff_t>(end));
  }
  return batches;
}

namespace {

double hash01(uint64_t seed, uint64_t salt) {
  return (Rng::mix(seed, salt) >> 11) * 0x1.0p-53;
}

Tensor<float> render_vehicle(bool pickup, uint64_t image_seed) {
  Rng rng(image_seed);
  const double length = rng.uniform(28.0, 34.0);
  const double width = length * rng.uniform(0.38, 0.48);
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double cx = 31.5 + rng.uniform(-8.0, 8.0);
  const double cy = 31.5 + rng.uniform(-8.0, 8.0);
  const double body = rng.uniform(0.45, 0.70);
  const double corner = rng.uniform(2.5, 4.5);
  const double bg_base = rng.uniform(0.15, 0.35);
  const double bg_amp = rng.uniform(0.03, 0.07);
  const double bed_gain = rng.uniform(0.22, 0.30);
  const double bed = std::min(0.97, body + bed_gain);

  const double ca = std::cos(angle), sa = std::sin(angle);
  const double hl = length / 2.0, hw = width / 2.0;

  Tensor<float> img = Tensor<float>::zeros({1, 64, 64});
  float* px = img.data().data();
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double noise = (hash01(image_seed, static_cast<uint64_t>(y) * 64 + x) - 0.5);
      const double background = bg_base + 2.0 * bg_amp * noise;
      double acc = 0.0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double ox = x + 0.25 + 0.5 * sx - cx;
          const double oy = y + 0.25 + 0.5 * sy - cy;
          const double dx = ox * ca + oy * sa;   // along the vehicle
          const double dy = -ox * sa + oy * ca;  // across the vehicle
          // signed distance to a rounded rectangle
          const double qx = std::abs(dx) - (hl - corner);
          const double qy = std::abs(dy) - (hw - corner);
          const double ex = std::max(qx, 0.0), ey = std::max(qy, 0.0);
          const double dist =
              std::min(std::max(qx, qy), 0.0) + std::sqrt(ex * ex + ey * ey) - corner;
          double v = background;
          if (dist <= 0.0) {
            v = body;
            if (pickup && dx >= hl - 0.4 * length && dx <= hl - 0.5 &&
                std::abs(dy) <= hw - 1.0)
              v = bed;
          }
          acc += v;
        }
      px[y * 64 + x] = static_cast<float>(std::clamp(acc / 4.0, 0.02, 0.98));
    }
  return img;
}

}  // namespace

LabeledDataset synth_generate(int n_per_class, uint64_t seed) {
  if (n_per_class < 1) fail_value("synth: n_per_class must be >= 1");
  LabeledDataset ds;
  ds.class_names = {"sedan", "pickup"};
  ds.provenance = "synthetic";
  ds.seed = seed;
  ds.items.reserve(static_cast<size_t>(2 * n_per_class));
  for (int cls = 0; cls < 2; ++cls)
    for (int i = 0; i < n_per_class; ++i) {
      const uint64_t image_seed =
          Rng::mix(seed, static_cast<uint64_t>(cls) * static_cast<uint64_t>(n_per_class) +
                             static_cast<uint64_t>(i));
      ds.items.push_back({render_vehicle(cls == 1, image_seed), cls,
                          ds.class_names[static_cast<size_t>(cls)] + "/" +
                              std::to_string(i)});
    }
  return ds;
}

NormStats compute_norm_stats(const LabeledDataset& ds) {
  if (ds.items.empty()) fail_value("norm stats: empty dataset");
  const int64_t channels = ds.items[0].image.dim(0);
  std::vector<double> sum(static_cast<size_t>(channels), 0.0);
  std::vector<double> sum_sq(static_cast<size_t>(channels), 0.0);
  int64_t per_channel = 0;
  for (const DataItem& item : ds.items) {
    const int64_t plane = item.image.dim(1) * item.image.dim(2);
    per_channel += plane;
    const float* p = item.image.data().data();
    for (int64_t c = 0; c < channels; ++c)
      for (int64_t i = 0; i < plane; ++i) {
        const double v = p[c * plane + i];
        sum[static_cast<size_t>(c)] += v;
        sum_sq[static_cast<size_t>(c)] += v * v;
      }
  }
  NormStats stats;
  for (int64_t c = 0; c < channels; ++c) {
    const double mean = sum[static_cast<size_t>(c)] / static_cast<double>(per_channel);
    const double var =
        sum_sq[static_cast<size_t>(c)] / static_cast<double>(per_channel) - mean * mean;
    stats.mean.push_back(static_cast<float>(mean));
    stats.stddev.push_back(var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f);
  }
  return stats;
}

Tensor<float> standardize(const Tensor<float>& image, const NormStats& stats) {
  if (image.rank() != 3 || image.dim(0) != static_cast<int64_t>(stats.mean.size()))
    fail_shape("standardize: image " + shape_str(image.shape()) + " vs stats for " +
               std::to_string(stats.mean.size()) + " channels");
  Tensor<float> out = image.clone_values();
  const int64_t plane = image.dim(1) * image.dim(2);
  float* p = out.data().data();
  for (size_t c = 0; c < stats.mean.size(); ++c)
    for (int64_t i = 0; i < plane; ++i)
      p[static_cast<int64_t>(c) * plane + i] =
          (p[static_cast<int64_t>(c) * plane + i] - stats.mean[c]) / stats.stddev[c];
  return out;
}

std::pair<Tensor<float>, std::vector<int>> assemble_batch(const LabeledDataset& ds,
                                                          const std::vector<size_t>& indices,
                                                          const NormStats& stats) {
  if (indices.empty()) fail_value("batch: no indices");
  const Tensor<float>& first = ds.items[indices[0]].image;
  const int64_t c = first.dim(0), h = first.dim(1), w = first.dim(2);
  Tensor<float> batch = Tensor<float>::zeros({static_cast<int64_t>(indices.size()), c, h, w});
  std::vector<int> labels;
  labels.reserve(indices.size());
  float* dst = batch.data().data();
  const int64_t stride = c * h * w;
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.items.size()) fail_value("batch: index out of range");
    Tensor<float> std_img = standardize(ds.items[indices[i]].image, stats);
    std::copy(std_img.data().begin(), std_img.data().end(),
              dst + static_cast<int64_t>(i) * stride);
    labels.push_back(ds.items[indices[i]].label);
  }
  return {batch, labels};
}

void write_manifest(const std::string& path, uint64_t seed, const LabeledDataset& full,
                    const LabeledDataset& train, const LabeledDataset& test,
                    size_t batch_size) {
  std::ofstream os(path);
  if (!os) fail_io("cannot write manifest '" + path + "'");
  os << "# dtnt-manifest-v1\n";
  os << "key,value\n";
  os << "seed," << seed << '\n';
  os << "classes,";
  for (size_t i = 0; i < full.class_names.size(); ++i)
    os << (i ? ";" : "") << full.class_names[i];
  os << '\n';
  const std::vector<int64_t> counts = full.class_counts();
  for (size_t i = 0; i < counts.size(); ++i)
    os << "count_" << full.class_names[i] << ',' << counts[i] << '\n';
  os << "train_size," << train.size() << '\n';
  os << "test_size," << test.size() << '\n';
  os << "batch_size," << batch_size << '\n';
}

}  // namespace dtnt
