#include "dtnt/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "dtnt/checkpoint.hpp"
#include "dtnt/fog.hpp"
#include "dtnt/gradcheck_suite.hpp"
#include "dtnt/png_io.hpp"
#include "dtnt/report.hpp"
#include "dtnt/train.hpp"

namespace fs = std::filesystem;

namespace dtnt {

namespace {

// ---- RunConfig: key=value file, '#' comments, CLI flags override ----

struct KeyValue {
  std::map<std::string, std::string> values;

  void set(const std::string& key, const std::string& value) { values[key] = value; }
  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }
};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

KeyValue parse_config_file(const std::string& path,
                           const std::vector<std::string>& known_keys) {
  std::ifstream is(path);
  if (!is) fail_io("cannot read config '" + path + "'");
  KeyValue kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("config", "line " + std::to_string(line_no) +
                                               " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    if (std::find(known_keys.begin(), known_keys.end(), key) == known_keys.end())
      throw CLI::ValidationError("config", "unknown key '" + key + "'");
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

constexpr const char* kToolVersion = "0.1.0";

void write_resolved_config(const std::string& path, KeyValue kv) {
  kv.set("dtnt_version", kToolVersion);
  kv.set("checkpoint_format", std::to_string(kCheckpointVersion));
  std::ofstream os(path);
  if (!os) fail_io("cannot write '" + path + "'");
  for (const auto& [k, v] : kv.values) os << k << " = " << v << '\n';
}

std::string format_beta(double beta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", beta);
  return buf;
}

std::string join_floats(const std::vector<float>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v[i]));
    os << buf;
  }
  return os.str();
}

std::vector<float> split_floats(const std::string& s) {
  std::vector<float> out;
  std::istringstream is(s);
  std::string field;
  while (std::getline(is, field, ',')) out.push_back(std::stof(field));
  return out;
}

LabeledDataset fog_dataset(const LabeledDataset& ds, double beta) {
  LabeledDataset out = ds;
  for (DataItem& item : out.items) {
    FogParams p = FogParams::make(beta, item.image.dim(1), item.image.dim(2));
    item.image = apply_fog(item.image, p).image;
  }
  return out;
}

// ---- subcommands ----

int cmd_synth(int n, uint64_t seed, const std::string& out_dir) {
  LabeledDataset ds = synth_generate(n, seed);
  for (const std::string& cls : ds.class_names)
    fs::create_directories(fs::path(out_dir) / cls);
  std::vector<int> written(ds.class_names.size(), 0);
  for (const DataItem& item : ds.items) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05d.png", written[item.label]++);
    write_png((fs::path(out_dir) / ds.class_names[item.label] / name).string(),
              tensor_to_image(item.image));
  }
  KeyValue kv;
  kv.set("command", "synth");
  kv.set("n", std::to_string(n));
  kv.set("seed", std::to_string(seed));
  kv.set("out", out_dir);
  write_resolved_config((fs::path(out_dir) / "config.txt").string(), kv);
  std::cout << "wrote " << ds.items.size() << " images under " << out_dir << "\n";
  return 0;
}

int cmd_augment(double beta, const std::string& in_dir, const std::string& out_dir) {
  if (!fs::is_directory(in_dir)) fail_io("input directory '" + in_dir + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) fail_io("no png files under '" + in_dir + "'");

  fs::create_directories(out_dir);
  std::ofstream manifest(fs::path(out_dir) / "manifest.csv");
  manifest << "# dtnt-augment-v1\n";
  manifest << "filename,beta,clamp_count\n";
  for (const fs::path& file : files) {
    const fs::path rel = fs::relative(file, in_dir);
    const fs::path dest = fs::path(out_dir) / rel;
    fs::create_directories(dest.parent_path());
    Tensor<float> img = image_to_tensor(read_png(file.string()));
    FogParams p = FogParams::make(beta, img.dim(1), img.dim(2));
    FogResult fogged = apply_fog(img, p);
    write_png(dest.string(), tensor_to_image(fogged.image));
    manifest << rel.string() << ',' << format_beta(beta) << ',' << fogged.clamp_count()
             << '\n';
  }
  KeyValue kv;
  kv.set("command", "augment");
  kv.set("beta", format_beta(beta));
  kv.set("in", in_dir);
  kv.set("out", out_dir);
  write_resolved_config((fs::path(out_dir) / "config.txt").string(), kv);
  std::cout << "fogged " << files.size() << " images at beta " << format_beta(beta)
            << " into " << out_dir << "\n";
  return 0;
}

struct TrainOptions {
  std::string data;
  int synth_n = 0;
  std::string preset = "tiny";
  std::string out = "run";
  uint64_t seed = 0;
  int epochs = 50;
  double max_lr = 2e-3;
  double weight_decay = 0.05;
  std::string schedule = "cosine";
  std::string loss = "rmse";
  double batch_fraction = 0.01;
  double train_fraction = 0.8;
  bool balance = true;
  std::string eval_betas;  // comma list; trained model re-evaluated per level
};

std::vector<double> parse_beta_list(const std::string& s) {
  std::vector<double> betas;
  std::istringstream is(s);
  std::string field;
  while (std::getline(is, field, ',')) {
    if (field.empty()) continue;
    betas.push_back(std::stod(field));
  }
  return betas;
}

int cmd_train(const TrainOptions& opt) {
  if (opt.data.empty() && opt.synth_n <= 0)
    throw CLI::ValidationError("train", "need --data or --synth");

  LabeledDataset full = opt.synth_n > 0 ? synth_generate(opt.synth_n, opt.seed)
                                        : load_dataset(opt.data);
  SplitSpec spec{opt.train_fraction, opt.balance, opt.seed};
  auto [train_set, test_set] = split_dataset(full, spec);

  ModelConfig cfg = preset_config(opt.preset);
  cfg.seed = opt.seed;
  if (!train_set.items.empty()) {
    cfg.in_channels = train_set.items[0].image.dim(0);
    cfg.in_h = train_set.items[0].image.dim(1);
    cfg.in_w = train_set.items[0].image.dim(2);
    cfg.validate();
  }
  Model<float> model = build_model<float>(cfg);

  Hyperparams hp;
  hp.max_lr = opt.max_lr;
  hp.weight_decay = opt.weight_decay;
  hp.epochs = opt.epochs;
  hp.seed = opt.seed;
  if (opt.schedule == "cosine")
    hp.schedule = Hyperparams::Schedule::Cosine;
  else if (opt.schedule == "constant")
    hp.schedule = Hyperparams::Schedule::Constant;
  else
    throw CLI::ValidationError("train", "schedule must be cosine or constant");
  if (opt.loss == "rmse")
    hp.loss = Hyperparams::LossKind::Rmse;
  else if (opt.loss == "cross_entropy")
    hp.loss = Hyperparams::LossKind::CrossEntropy;
  else
    throw CLI::ValidationError("train", "loss must be rmse or cross_entropy");

  fs::create_directories(opt.out);
  std::cout << "preset " << opt.preset << ": " << param_count(model) << " parameters\n";
  for (const auto& [stage, count] : param_count_by_stage(model))
    std::cout << "  " << stage << ": " << count << "\n";

  TrainResult<float> result =
      train(model, train_set, test_set, hp, opt.batch_fraction,
            [](const EpochStats& e) {
              std::cout << "epoch " << e.epoch << ": lr " << format_fixed(e.lr, 6)
                        << " loss " << format_fixed(e.train_loss, 6) << " train_acc "
                        << format_fixed(e.train_acc, 4) << " test_acc "
                        << format_fixed(e.test_acc, 4) << "\n";
              return true;
            });

  const size_t batch_size = std::max<size_t>(
      1, static_cast<size_t>(opt.batch_fraction * static_cast<double>(train_set.size())));
  write_manifest((fs::path(opt.out) / "manifest.csv").string(), opt.seed, full,
                 train_set, test_set, batch_size);
  write_history_csv((fs::path(opt.out) / "history.csv").string(), result.history);
  write_confusion_csv((fs::path(opt.out) / "confusion.csv").string(),
                      result.final_confusion);

  std::map<std::string, std::string> meta;
  meta["epoch"] = std::to_string(hp.epochs);
  meta["norm_mean"] = join_floats(result.stats.mean);
  meta["norm_std"] = join_floats(result.stats.stddev);
  save_checkpoint(model, (fs::path(opt.out) / "final.dtnt").string(), meta);
  if (result.best_epoch > 0) {
    meta["epoch"] = std::to_string(result.best_epoch);
    save_checkpoint(result.best, (fs::path(opt.out) / "best.dtnt").string(), meta);
  }

  // Table-shaped sweep: the trained model against each requested fog level
  if (!opt.eval_betas.empty()) {
    const std::string results = (fs::path(opt.out) / "results.csv").string();
    append_result_row(results, {opt.preset, "normal", result.final_confusion});
    for (double beta : parse_beta_list(opt.eval_betas)) {
      LabeledDataset fogged = fog_dataset(test_set, beta);
      const ConfusionMatrix cm = evaluate(model, fogged, result.stats);
      append_result_row(results, {opt.preset, "fog" + format_beta(beta), cm});
      std::cout << "fog" << format_beta(beta) << " test accuracy "
                << format_fixed(metrics(cm).accuracy, 4) << "\n";
    }
    emit_report(read_result_rows(results), opt.out);
  }

  KeyValue kv;
  kv.set("command", "train");
  kv.set("data", opt.synth_n > 0 ? "" : opt.data);
  kv.set("synth_n", std::to_string(opt.synth_n));
  kv.set("preset", opt.preset);
  kv.set("out", opt.out);
  kv.set("seed", std::to_string(opt.seed));
  kv.set("epochs", std::to_string(opt.epochs));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", opt.max_lr);
  kv.set("max_lr", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", opt.weight_decay);
  kv.set("weight_decay", buf);
  kv.set("schedule", opt.schedule);
  kv.set("loss", opt.loss);
  std::snprintf(buf, sizeof(buf), "%.9g", opt.batch_fraction);
  kv.set("batch_fraction", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", opt.train_fraction);
  kv.set("train_fraction", buf);
  kv.set("balance", opt.balance ? "1" : "0");
  kv.set("eval_betas", opt.eval_betas);
  write_resolved_config((fs::path(opt.out) / "config.txt").string(), kv);

  if (!result.history.empty()) {
    const EpochStats& last = result.history.back();
    std::cout << "final test accuracy " << format_fixed(last.test_acc, 4) << ", best "
              << format_fixed(result.best_test_acc, 4) << " at epoch "
              << result.best_epoch << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data, int synth_n,
             uint64_t seed, double beta, const std::string& tag,
             const std::string& results_path, const std::string& out_dir) {
  std::map<std::string, std::string> meta;
  Model<float> model = load_checkpoint(model_path, &meta);
  if (!meta.count("norm_mean") || !meta.count("norm_std"))
    fail_io("checkpoint metadata lacks normalization stats");
  NormStats stats{split_floats(meta["norm_mean"]), split_floats(meta["norm_std"])};

  LabeledDataset ds = synth_n > 0 ? synth_generate(synth_n, seed) : load_dataset(data);
  if (beta > 0) ds = fog_dataset(ds, beta);

  const ConfusionMatrix cm = evaluate(model, ds, stats);
  const MetricsResult m = metrics(cm);
  const std::string condition = beta > 0 ? "fog" + format_beta(beta) : "normal";
  std::cout << tag << " " << condition << ": accuracy " << format_fixed(m.accuracy, 4)
            << " precision " << format_fixed(m.precision, 4) << " recall "
            << format_fixed(m.recall, 4) << " f1 " << format_fixed(m.f1, 4) << "\n";

  if (!results_path.empty()) append_result_row(results_path, {tag, condition, cm});
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_confusion_csv((fs::path(out_dir) / "confusion.csv").string(), cm);
    KeyValue kv;
    kv.set("command", "eval");
    kv.set("model", model_path);
    kv.set("data", synth_n > 0 ? "" : data);
    kv.set("synth_n", std::to_string(synth_n));
    kv.set("seed", std::to_string(seed));
    kv.set("beta", format_beta(beta));
    kv.set("tag", tag);
    write_resolved_config((fs::path(out_dir) / "config.txt").string(), kv);
  }
  return 0;
}

int cmd_report(const std::string& results_path, const std::string& out_dir) {
  emit_report(read_result_rows(results_path), out_dir);
  std::cout << "wrote " << out_dir << "/report.csv and report.md\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Dense-TNT vehicle type classifier"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  int synth_n = 16;
  uint64_t synth_seed = 0;
  std::string synth_out = "synthetic";
  synth->add_option("--n", synth_n, "images per class")->required();
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // augment
  auto* augment = app.add_subcommand("augment", "apply synthetic fog to a directory");
  double aug_beta = kFogLight;
  std::string aug_in, aug_out;
  augment->add_option("--beta", aug_beta, "scattering coefficient")->required();
  augment->add_option("--in", aug_in, "input directory")->required();
  augment->add_option("--out", aug_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  TrainOptions topt;
  std::string config_path;
  train_cmd->add_option("--config", config_path, "key=value config file");
  auto* o_data = train_cmd->add_option("--data", topt.data, "dataset root");
  auto* o_synth = train_cmd->add_option("--synth", topt.synth_n, "synthetic images per class");
  auto* o_preset = train_cmd->add_option("--preset", topt.preset, "tiny, s12-like or s24-like");
  auto* o_out = train_cmd->add_option("--out", topt.out, "run directory");
  auto* o_seed = train_cmd->add_option("--seed", topt.seed, "rng seed");
  auto* o_epochs = train_cmd->add_option("--epochs", topt.epochs, "training epochs");
  auto* o_lr = train_cmd->add_option("--max-lr", topt.max_lr, "max learning rate");
  auto* o_wd = train_cmd->add_option("--weight-decay", topt.weight_decay, "decoupled decay");
  auto* o_sched = train_cmd->add_option("--schedule", topt.schedule, "cosine or constant");
  auto* o_loss = train_cmd->add_option("--loss", topt.loss, "rmse or cross_entropy");
  auto* o_bf = train_cmd->add_option("--batch-fraction", topt.batch_fraction,
                                     "batch size as a fraction of the training set");
  auto* o_tf = train_cmd->add_option("--train-fraction", topt.train_fraction, "train split");
  auto* o_bal = train_cmd->add_option("--balance", topt.balance, "balance classes first");
  auto* o_eb = train_cmd->add_option("--eval-betas", topt.eval_betas,
                                     "comma list of fog levels to evaluate after training");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_model, eval_data, eval_tag = "model", eval_results, eval_out;
  int eval_synth = 0;
  uint64_t eval_seed = 0;
  double eval_beta = 0.0;
  eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset root");
  eval_cmd->add_option("--synth", eval_synth, "synthetic images per class");
  eval_cmd->add_option("--seed", eval_seed, "seed for --synth");
  eval_cmd->add_option("--beta", eval_beta, "fog level applied to the inputs");
  eval_cmd->add_option("--tag", eval_tag, "model tag for reports");
  eval_cmd->add_option("--results", eval_results, "results csv to append to");
  eval_cmd->add_option("--out", eval_out, "directory for confusion.csv");

  // gradcheck
  app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

  // report
  auto* report_cmd = app.add_subcommand("report", "format results as csv + markdown");
  std::string rep_results, rep_out = "report";
  report_cmd->add_option("--results", rep_results, "results csv")->required();
  report_cmd->add_option("--out", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_n, synth_seed, synth_out);
    if (augment->parsed()) return cmd_augment(aug_beta, aug_in, aug_out);
    if (train_cmd->parsed()) {
      if (!config_path.empty()) {
        const std::vector<std::string> known = {
            "data",   "synth_n",        "preset",         "out",
            "seed",   "epochs",         "max_lr",         "weight_decay",
            "schedule", "loss",         "batch_fraction", "train_fraction",
            "balance", "eval_betas"};
        KeyValue kv = parse_config_file(config_path, known);
        // file values apply only where the command line did not override
        if (kv.has("data") && o_data->count() == 0) topt.data = kv.get("data", "");
        if (kv.has("synth_n") && o_synth->count() == 0)
          topt.synth_n = std::stoi(kv.get("synth_n", "0"));
        if (kv.has("preset") && o_preset->count() == 0) topt.preset = kv.get("preset", "");
        if (kv.has("out") && o_out->count() == 0) topt.out = kv.get("out", "");
        if (kv.has("seed") && o_seed->count() == 0)
          topt.seed = std::stoull(kv.get("seed", "0"));
        if (kv.has("epochs") && o_epochs->count() == 0)
          topt.epochs = std::stoi(kv.get("epochs", "50"));
        if (kv.has("max_lr") && o_lr->count() == 0)
          topt.max_lr = std::stod(kv.get("max_lr", "2e-3"));
        if (kv.has("weight_decay") && o_wd->count() == 0)
          topt.weight_decay = std::stod(kv.get("weight_decay", "0.05"));
        if (kv.has("schedule") && o_sched->count() == 0)
          topt.schedule = kv.get("schedule", "cosine");
        if (kv.has("loss") && o_loss->count() == 0) topt.loss = kv.get("loss", "rmse");
        if (kv.has("batch_fraction") && o_bf->count() == 0)
          topt.batch_fraction = std::stod(kv.get("batch_fraction", "0.01"));
        if (kv.has("train_fraction") && o_tf->count() == 0)
          topt.train_fraction = std::stod(kv.get("train_fraction", "0.8"));
        if (kv.has("balance") && o_bal->count() == 0)
          topt.balance = kv.get("balance", "1") != "0";
        if (kv.has("eval_betas") && o_eb->count() == 0)
          topt.eval_betas = kv.get("eval_betas", "");
      }
      return cmd_train(topt);
    }
    if (eval_cmd->parsed())
      return cmd_eval(eval_model, eval_data, eval_synth, eval_seed, eval_beta, eval_tag,
                      eval_results, eval_out);
    if (app.get_subcommand("gradcheck")->parsed())
      return gradcheck_report(std::cout) ? 0 : 1;
    if (report_cmd->parsed()) return cmd_report(rep_results, rep_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dtnt
