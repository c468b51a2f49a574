#include "dtnt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace dtnt {

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32(std::ostream& os, float v) {
  write_u32(os, std::bit_cast<uint32_t>(v));
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail_io("checkpoint truncated");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) fail_io("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

struct Record {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> values;
};

template <typename T> std::vector<Record> collect_records(Model<T>& model) {
  std::vector<Record> records;
  visit_params<T>(model, [&](const std::string& name, Tensor<T>& t) {
    Record r;
    r.name = name;
    r.shape = t.shape();
    r.values.reserve(t.data().size());
    for (T v : t.data()) r.values.push_back(static_cast<float>(v));
    records.push_back(std::move(r));
  });
  visit_bn_states<T>(model, [&](const std::string& name, BatchNormState<T>& s) {
    if (s.mean.empty())
      fail_io("checkpoint: running stats for '" + name + "' not materialized");
    Record mean{name + ".running_mean", {static_cast<int64_t>(s.mean.size())}, {}};
    Record var{name + ".running_var", {static_cast<int64_t>(s.var.size())}, {}};
    for (T v : s.mean) mean.values.push_back(static_cast<float>(v));
    for (T v : s.var) var.values.push_back(static_cast<float>(v));
    records.push_back(std::move(mean));
    records.push_back(std::move(var));
  });
  std::sort(records.begin(), records.end(),
            [](const Record& a, const Record& b) { return a.name < b.name; });
  for (size_t i = 1; i < records.size(); ++i)
    if (records[i].name == records[i - 1].name)
      fail_io("checkpoint: duplicate tensor name '" + records[i].name + "'");
  return records;
}

}  // namespace

template <typename T>
void save_checkpoint(Model<T>& model, const std::string& path,
                     const std::map<std::string, std::string>& metadata) {
  // BN stats may be unallocated if the model never ran; materialize defaults
  // so the record set does not depend on usage history.
  std::vector<std::pair<std::string, int64_t>> channel_of;
  visit_params<T>(model, [&](const std::string& name, Tensor<T>& t) {
    const std::string suffix = ".bn.gamma";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      channel_of.emplace_back(name.substr(0, name.size() - std::string(".gamma").size()),
                              t.numel());
  });
  visit_bn_states<T>(model, [&](const std::string& name, BatchNormState<T>& s) {
    if (!s.mean.empty()) return;
    for (const auto& [pname, c] : channel_of)
      if (pname == name) {
        s.mean.assign(static_cast<size_t>(c), T(0));
        s.var.assign(static_cast<size_t>(c), T(1));
      }
  });

  std::ofstream os(path, std::ios::binary);
  if (!os) fail_io("cannot write checkpoint '" + path + "'");
  os.write("DTNT", 4);
  write_u32(os, kCheckpointVersion);
  // one canonical text block: the model config followed by meta.* keys
  std::string cfg_text = model.cfg.to_kv();
  for (const auto& [k, v] : metadata) cfg_text += "meta." + k + "=" + v + "\n";
  write_u64(os, cfg_text.size());
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  std::vector<Record> records = collect_records(model);
  write_u64(os, records.size());
  for (const Record& r : records) {
    write_u32(os, static_cast<uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    write_u32(os, static_cast<uint32_t>(r.shape.size()));
    for (int64_t e : r.shape) write_u64(os, static_cast<uint64_t>(e));
    for (float v : r.values) write_f32(os, v);
  }
  if (!os) fail_io("write failed for checkpoint '" + path + "'");
}

Model<float> load_checkpoint(const std::string& path,
                             std::map<std::string, std::string>* metadata) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_io("cannot read checkpoint '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DTNT", 4) != 0)
    fail_io("'" + path + "' is not a checkpoint (bad magic)");
  const uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    fail_io("checkpoint version " + std::to_string(version) + ", expected " +
            std::to_string(kCheckpointVersion));
  const uint64_t cfg_len = read_u64(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) fail_io("checkpoint truncated in config block");
  if (metadata) {
    metadata->clear();
    size_t pos = 0;
    while (pos < cfg_text.size()) {
      size_t nl = cfg_text.find('\n', pos);
      if (nl == std::string::npos) nl = cfg_text.size();
      const std::string line = cfg_text.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.rfind("meta.", 0) != 0) continue;
      const size_t eq = line.find('=');
      if (eq != std::string::npos)
        (*metadata)[line.substr(5, eq - 5)] = line.substr(eq + 1);
    }
  }

  Model<float> model = build_model<float>(ModelConfig::from_kv(cfg_text));

  std::map<std::string, Tensor<float>*> params;
  visit_params<float>(model, [&](const std::string& name, Tensor<float>& t) {
    params[name] = &t;
  });
  std::map<std::string, std::pair<BatchNormState<float>*, bool>> stats;  // bool: is mean
  visit_bn_states<float>(model, [&](const std::string& name, BatchNormState<float>& s) {
    stats[name + ".running_mean"] = {&s, true};
    stats[name + ".running_var"] = {&s, false};
  });

  std::map<std::string, bool> seen;
  for (const auto& [name, t] : params) seen[name] = false;
  for (const auto& [name, st] : stats) seen[name] = false;

  const uint64_t count = read_u64(is);
  std::string prev_name;
  for (uint64_t r = 0; r < count; ++r) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) fail_io("checkpoint truncated in record names");
    if (r > 0 && !(prev_name < name))
      fail_io("checkpoint records not sorted at '" + name + "'");
    prev_name = name;
    const uint32_t rank = read_u32(is);
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int64_t>(read_u64(is));
      numel *= shape[i];
    }
    std::vector<float> values(static_cast<size_t>(numel));
    for (float& v : values) v = read_f32(is);

    auto pit = params.find(name);
    if (pit != params.end()) {
      if (pit->second->shape() != shape)
        fail_io("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                ", model expects " + shape_str(pit->second->shape()));
      pit->second->data() = values;
      seen[name] = true;
      continue;
    }
    auto sit = stats.find(name);
    if (sit != stats.end()) {
      auto& [state, is_mean] = sit->second;
      if (is_mean)
        state->mean = values;
      else
        state->var = values;
      seen[name] = true;
      continue;
    }
    fail_io("checkpoint has extra tensor '" + name + "'");
  }
  for (const auto& [name, got] : seen)
    if (!got) fail_io("checkpoint is missing tensor '" + name + "'");
  return model;
}

template void save_checkpoint<float>(Model<float>&, const std::string&,
                                     const std::map<std::string, std::string>&);
template void save_checkpoint<double>(Model<double>&, const std::string&,
                                      const std::map<std::string, std::string>&);

}  // namespace dtnt
