// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "actrec/classifiers.hpp"
#include "actrec/cli.hpp"
#include "actrec/dataio.hpp"
#include "actrec/eval.hpp"
#include "actrec/finetune.hpp"
#include "actrec/network.hpp"

namespace actrec::cli {
namespace fs = std::filesystem;
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Resolved configuration, echoed before a command does any work.
class ConfigEcho {
 public:
  explicit ConfigEcho(std::string command) : command_(std::move(command)) {}
  template <typename T>
  ConfigEcho& add(const std::string& key, const T& value) {
    std::ostringstream os;
    os << std::setprecision(10) << value;
    entries_.emplace_back(key, os.str());
    return *this;
  }
  void print(std::ostream& out) const {
    out << "# " << command_ << " configuration\n";
    for (const auto& [k, v] : entries_) out << "#   " << k << " = " << v << '\n';
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

ArchSpec arch_from_flag(const std::string& arch) {
  if (arch.empty() || arch == "default") return default_arch();
  return load_arch(arch);
}

struct PreprocessFlags {
  int resize = 256;
  int crop = 227;
  std::vector<float> means{0.0f, 0.0f, 0.0f};
  std::string means_manifest;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--resize", resize, "Shorter-side size after resizing")->capture_default_str();
    cmd->add_option("--crop", crop, "Square center crop side")->capture_default_str();
    cmd->add_option("--means", means, "Per-channel means r,g,b")->delimiter(',')->expected(3);
    cmd->add_option("--means-from", means_manifest,
                    "Compute per-channel means from this manifest instead");
  }

  PreprocessConfig resolve() const {
    PreprocessConfig cfg;
    cfg.resize_to = resize;
    cfg.crop = crop;
    if (!means_manifest.empty()) {
      const DatasetManifest m = load_manifest(means_manifest);
      cfg.channel_means = compute_means(m, cfg, fs::path(means_manifest).parent_path());
    } else {
      cfg.channel_means = {means[0], means[1], means[2]};
    }
    return cfg;
  }

  void echo(ConfigEcho& e, const PreprocessConfig& cfg) const {
    std::ostringstream os;
    os << cfg.channel_means[0] << ',' << cfg.channel_means[1] << ',' << cfg.channel_means[2];
    e.add("resize", cfg.resize_to).add("crop", cfg.crop).add("means", os.str());
    if (!means_manifest.empty()) e.add("means_from", means_manifest);
  }
};

std::vector<int> resolve_taps(const std::vector<int>& flag, const ArchSpec& spec) {
  std::vector<int> taps = flag.empty() ? spec.taps : flag;
  std::sort(taps.begin(), taps.end());
  if (taps.empty()) throw UsageError("no taps given and the architecture declares none");
  if (std::adjacent_find(taps.begin(), taps.end()) != taps.end()) {
    throw UsageError("duplicate tap index");
  }
  return taps;
}

FeatureSet extract_features(const Network& net, const DatasetManifest& manifest,
                            const std::vector<int>& taps, const PreprocessConfig& pre,
                            const fs::path& base_dir) {
  FeatureSet set;
  set.classes = manifest.classes;
  for (const Sample& s : manifest.samples) {
    const Tensor input = preprocess(decode_image(resolve_image_path(base_dir, s.image_path)), pre);
    const ForwardResult r = forward(net, input, Mode::Infer, nullptr, taps);
    std::vector<FeatureVector> parts;
    for (int t : taps) parts.push_back(r.taps.at(t));
    FeatureRecord rec;
    rec.features = concat_features(parts).values;
    rec.label = manifest.label_index(s.label);
    rec.video_id = s.video_id;
    set.records.push_back(std::move(rec));
  }
  set.dim = set.records.front().features.size();
  return set;
}

struct ClassifierFlags {
  std::string algo = "svm";
  double C = 1.0;
  int exponent = 2;
  bool no_standardize = false;
  std::size_t k = 3;
  int max_depth = 20;
  std::size_t min_leaf = 2;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--algo", algo, "svm | knn | tree")->capture_default_str();
    cmd->add_option("--C", C, "SVM box constraint")->capture_default_str();
    cmd->add_option("--exponent", exponent, "Polynomial kernel exponent")->capture_default_str();
    cmd->add_flag("--no-standardize", no_standardize, "Skip SVM feature standardization");
    cmd->add_option("--k", k, "Neighbours for knn")->capture_default_str();
    cmd->add_option("--max-depth", max_depth, "Tree depth limit")->capture_default_str();
    cmd->add_option("--min-leaf", min_leaf, "Tree minimum node size")->capture_default_str();
  }

  void check() const {
    if (algo != "svm" && algo != "knn" && algo != "tree") {
      throw UsageError("unknown classifier '" + algo + "' (expected svm, knn or tree)");
    }
  }

  void echo(ConfigEcho& e) const {
    e.add("algo", algo);
    if (algo == "svm") {
      e.add("C", C).add("exponent", exponent).add("standardize", no_standardize ? "no" : "yes");
    } else if (algo == "knn") {
      e.add("k", k);
    } else {
      e.add("max_depth", max_depth).add("min_leaf", min_leaf);
    }
  }

  std::vector<Prediction> classify(const FeatureSet& train, const FeatureSet& test) const {
    if (train.dim != test.dim) {
      throw ShapeError("feature dimensions differ: train " + std::to_string(train.dim) +
                       ", test " + std::to_string(test.dim));
    }
    std::vector<std::size_t> labels;
    if (algo == "svm") {
      SvmOptions o;
      o.C = C;
      o.exponent = exponent;
      o.standardize = !no_standardize;
      const SvmModel model = svm_train(train, o);
      for (const auto& r : test.records) labels.push_back(svm_predict(model, r.features));
    } else if (algo == "knn") {
      for (const auto& r : test.records) labels.push_back(knn_predict(train, k, r.features));
    } else {
      TreeOptions o;
      o.max_depth = max_depth;
      o.min_leaf = min_leaf;
      const auto tree = tree_train(train, o);
      for (const auto& r : test.records) labels.push_back(tree_predict(*tree, r.features));
    }
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      preds.push_back({i, test.records[i].video_id, train.classes[labels[i]]});
    }
    return preds;
  }
};

struct EvaluationReport {
  ConfusionMatrix matrix{{}};
  double frame_accuracy = 0.0;
  std::optional<double> video_accuracy;
  std::size_t videos = 0;
};

EvaluationReport evaluate_predictions(const std::vector<Prediction>& preds,
                                      const DatasetManifest& truth, bool by_video) {
  if (preds.empty()) throw ConfigError("no predictions to evaluate");
  if (preds.size() != truth.samples.size()) {
    throw ConfigError("prediction count " + std::to_string(preds.size()) +
                      " does not match the manifest's " + std::to_string(truth.samples.size()) +
                      " samples");
  }
  std::set<std::string> names(truth.classes.begin(), truth.classes.end());
  for (const auto& p : preds) names.insert(p.label);
  std::vector<std::string> classes(names.begin(), names.end());
  auto index_of = [&](const std::string& name) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), name) -
                                    classes.begin());
  };
  std::vector<bool> seen(truth.samples.size(), false);
  std::vector<std::size_t> p_idx, t_idx;
  std::vector<std::pair<std::string, std::size_t>> frames;
  VideoVotes video_truth;
  for (const auto& p : preds) {
    if (p.sample_index >= truth.samples.size() || seen[p.sample_index]) {
      throw ConfigError("prediction for sample " + std::to_string(p.sample_index) +
                        " has no unique match in the manifest");
    }
    seen[p.sample_index] = true;
    const Sample& s = truth.samples[p.sample_index];
    if (s.video_id != p.video_id) {
      throw ConfigError("sample " + std::to_string(p.sample_index) + " belongs to video '" +
                        s.video_id + "', prediction names '" + p.video_id + "'");
    }
    p_idx.push_back(index_of(p.label));
    t_idx.push_back(index_of(s.label));
    if (by_video) {
      if (s.video_id.empty()) throw ConfigError("video grouping needs video ids on every sample");
      frames.emplace_back(s.video_id, p_idx.back());
      video_truth[s.video_id] = t_idx.back();
    }
  }
  EvaluationReport report;
  report.matrix = confusion(p_idx, t_idx, classes);
  report.frame_accuracy = accuracy(report.matrix);
  if (by_video) {
    report.video_accuracy = video_accuracy(majority_vote(frames), video_truth);
    report.videos = video_truth.size();
  }
  return report;
}

std::map<int, int> parse_head_flags(const std::vector<std::string>& heads) {
  std::map<int, int> sizes;
  for (const std::string& h : heads) {
    // f19=6144 or 19=6144
    const auto eq = h.find('=');
    std::string layer = h.substr(0, eq);
    if (!layer.empty() && (layer[0] == 'f' || layer[0] == 'F')) layer.erase(0, 1);
    if (!layer.empty() && (layer[0] == 'c' || layer[0] == 'C')) layer.erase(0, 1);
    int index = 0, size = 0;
    const std::string value = eq == std::string::npos ? "" : h.substr(eq + 1);
    const auto r1 = std::from_chars(layer.data(), layer.data() + layer.size(), index);
    const auto r2 = std::from_chars(value.data(), value.data() + value.size(), size);
    if (eq == std::string::npos || r1.ec != std::errc() || r2.ec != std::errc() ||
        r1.ptr != layer.data() + layer.size() || r2.ptr != value.data() + value.size()) {
      throw UsageError("bad --head value '" + h + "' (expected f19=6144)");
    }
    sizes[index] = size;
  }
  return sizes;
}

struct FinetuneFlags {
  double lr = 1e-4;
  long iters = 20'000;
  int batch = 32;
  std::vector<std::string> heads;
  std::vector<int> trainable;
  long log_stride = 100;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "SGD learning rate")->capture_default_str();
    cmd->add_option("--iters", iters, "SGD iterations")->capture_default_str();
    cmd->add_option("--batch", batch, "Minibatch size")->capture_default_str();
    cmd->add_option("--head", heads, "Head size override, e.g. f19=6144")->delimiter(',');
    cmd->add_option("--trainable", trainable, "Trainable fc layers (default: all)")->delimiter(',');
    cmd->add_option("--log-stride", log_stride, "Iterations between loss log entries")
        ->capture_default_str();
  }

  FinetuneConfig resolve(std::uint64_t seed, const std::map<int, int>& sizes) const {
    FinetuneConfig cfg;
    cfg.learning_rate = lr;
    cfg.iterations = iters;
    cfg.batch_size = batch;
    cfg.head_sizes = sizes;
    cfg.trainable = trainable;
    cfg.seed = seed;
    cfg.log_stride = log_stride;
    return cfg;
  }

  void echo(ConfigEcho& e, const FinetuneConfig& cfg) const {
    std::string heads_str;
    for (const auto& [k, v] : cfg.head_sizes) {
      heads_str += (heads_str.empty() ? "" : ",") + ("f" + std::to_string(k)) + "=" + std::to_string(v);
    }
    e.add("lr", cfg.learning_rate)
        .add("iters", cfg.iterations)
        .add("batch", cfg.batch_size)
        .add("head", heads_str.empty() ? "(unchanged)" : heads_str)
        .add("trainable", cfg.trainable.empty() ? "all fc" : join_ints(cfg.trainable))
        .add("log_stride", cfg.log_stride)
        .add("seed", cfg.seed);
  }
};

// Head replacement, training, and the metadata header written with the arch.
struct FinetuneOutcome {
  TrainResult trained;
  std::vector<int> fresh_layers;
};

FinetuneOutcome run_finetune(const Network& base, const DatasetManifest& train,
                             std::size_t num_classes, const FinetuneConfig& cfg,
                             const PreprocessConfig& pre, const fs::path& base_dir) {
  if (train.classes.size() > num_classes) {
    throw ConfigError("training manifest has " + std::to_string(train.classes.size()) +
                      " classes but --classes is " + std::to_string(num_classes));
  }
  Rng init = Rng(cfg.seed).substream("init");
  Network head = replace_head(base, cfg.head_sizes, num_classes, init);
  FinetuneOutcome out;
  for (const LayerSpec& l : head.spec.layers) {
    if (l.kind == LayerKind::Fc && !(base.params[l.index - 1] == head.params[l.index - 1])) {
      out.fresh_layers.push_back(l.index);
    }
  }
  out.trained = train_head(std::move(head), train, cfg, pre, base_dir);
  return out;
}

void write_finetuned_arch(const FinetuneOutcome& o, const FinetuneConfig& cfg,
                          const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write architecture file " + path.string());
  out << "# fine-tuned head: lr=" << cfg.learning_rate << " iters=" << cfg.iterations
      << " batch=" << cfg.batch_size << " seed=" << cfg.seed << '\n'
      << "# freshly initialized fc layers: " << join_ints(o.fresh_layers) << '\n'
      << format_arch(o.trained.net.spec);
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kUsage;
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const NumericError*>(&e)) return kDiverged;
  if (const auto* sweep = dynamic_cast<const SweepError*>(&e)) {
    try {
      std::rethrow_if_nested(*sweep);
    } catch (const std::exception& inner) {
      return exit_code_for(inner);
    }
  }
  return kData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks) {
  CLI::App app{"Frame-level action recognition with convolutional features"};
  app.require_subcommand(1);
  std::function<void()> action;

  std::uint64_t seed = 0;

  // split
  std::string split_manifest, out_train, out_test;
  double test_fraction = 0.2;
  auto* split = app.add_subcommand("split", "Video-consistent train/test split");
  split->add_option("--manifest", split_manifest, "Input manifest")->required();
  split->add_option("--test-fraction", test_fraction, "Fraction of each class's videos for test")
      ->capture_default_str();
  split->add_option("--seed", seed, "Random seed")->capture_default_str();
  split->add_option("--out-train", out_train, "Training manifest output")->required();
  split->add_option("--out-test", out_test, "Test manifest output")->required();
  split->callback([&] {
    action = [&] {
      if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw UsageError("--test-fraction must lie strictly between 0 and 1");
      }
      ConfigEcho e("split");
      e.add("manifest", split_manifest).add("test_fraction", test_fraction).add("seed", seed)
          .add("out_train", out_train).add("out_test", out_test);
      e.print(out);
      const DatasetManifest m = load_manifest(split_manifest);
      const SplitResult r = split_by_video(m, test_fraction, seed);
      save_manifest(r.train, out_train);
      save_manifest(r.test, out_test);
      auto videos = [](const DatasetManifest& d, const std::string& label) {
        std::set<std::string> ids;
        for (const Sample& s : d.samples)
          if (s.label == label) ids.insert(s.video_id);
        return ids.size();
      };
      out << "class\ttrain_videos\ttest_videos\n";
      for (const std::string& c : m.classes) {
        out << c << '\t' << videos(r.train, c) << '\t' << videos(r.test, c) << '\n';
      }
      out << "frames: " << r.train.samples.size() << " train, " << r.test.samples.size()
          << " test\n";
    };
  });

  // init
  std::string init_arch = "default", init_out;
  double init_std = 0.01;
  auto* init = app.add_subcommand("init", "Write randomly initialized weights for an architecture");
  init->add_option("--arch", init_arch, "Architecture file or 'default'")->capture_default_str();
  init->add_option("--seed", seed, "Random seed")->capture_default_str();
  init->add_option("--stddev", init_std, "Weight standard deviation")->capture_default_str();
  init->add_option("--out", init_out, "Weight file output")->required();
  init->callback([&] {
    action = [&] {
      ConfigEcho e("init");
      e.add("arch", init_arch).add("seed", seed).add("stddev", init_std).add("out", init_out);
      e.print(out);
      const ArchSpec spec = arch_from_flag(init_arch);
      Rng rng = Rng(seed).substream("init");
      save_weights(init_weights(spec, rng, init_std), init_out);
      out << "wrote " << init_out << '\n';
    };
  });

  // extract
  std::string ex_arch = "default", ex_weights, ex_manifest, ex_out;
  std::vector<int> ex_taps;
  PreprocessFlags ex_pre;
  auto* extract = app.add_subcommand("extract", "Extract tapped fc features into a FEAT file");
  extract->add_option("--arch", ex_arch, "Architecture file or 'default'")->capture_default_str();
  extract->add_option("--weights", ex_weights, "Weight file")->required();
  extract->add_option("--manifest", ex_manifest, "Images to featurize")->required();
  extract->add_option("--taps", ex_taps, "fc layers to tap (default: the arch's taps)")
      ->delimiter(',');
  extract->add_option("--out", ex_out, "FEAT output")->required();
  ex_pre.add_to(extract);
  extract->callback([&] {
    action = [&] {
      const ArchSpec spec = arch_from_flag(ex_arch);
      const std::vector<int> taps = resolve_taps(ex_taps, spec);
      const PreprocessConfig pre = ex_pre.resolve();
      ConfigEcho e("extract");
      e.add("arch", ex_arch).add("weights", ex_weights).add("manifest", ex_manifest)
          .add("taps", join_ints(taps)).add("out", ex_out);
      ex_pre.echo(e, pre);
      e.print(out);
      const Network net = load_weights(spec, ex_weights);
      const DatasetManifest m = load_manifest(ex_manifest);
      const FeatureSet set =
          extract_features(net, m, taps, pre, fs::path(ex_manifest).parent_path());
      save_features(set, ex_out);
      out << "wrote " << set.records.size() << " records of dimension " << set.dim << " to "
          << ex_out << '\n';
    };
  });

  // finetune
  std::string ft_arch = "default", ft_weights, ft_train, ft_out, ft_out_arch, ft_loss;
  std::size_t ft_classes = 0;
  FinetuneFlags ft;
  PreprocessFlags ft_pre;
  auto* finetune = app.add_subcommand("finetune", "Head-only fine-tuning by SGD");
  finetune->add_option("--arch", ft_arch, "Architecture file or 'default'")->capture_default_str();
  finetune->add_option("--weights", ft_weights, "Starting weight file")->required();
  finetune->add_option("--train", ft_train, "Training manifest")->required();
  finetune->add_option("--classes", ft_classes, "Number of classes for the new head")->required();
  finetune->add_option("--seed", seed, "Random seed")->capture_default_str();
  finetune->add_option("--out", ft_out, "Fine-tuned weight file")->required();
  finetune->add_option("--out-arch", ft_out_arch, "Architecture output (default: <out>.arch)");
  finetune->add_option("--loss-log", ft_loss, "Loss log output (default: <out>.loss.tsv)");
  ft.add_to(finetune);
  ft_pre.add_to(finetune);
  finetune->callback([&] {
    action = [&] {
      if (ft_classes < 2) throw UsageError("--classes must be at least 2");
      const FinetuneConfig cfg = ft.resolve(seed, parse_head_flags(ft.heads));
      const PreprocessConfig pre = ft_pre.resolve();
      if (ft_out_arch.empty()) ft_out_arch = ft_out + ".arch";
      if (ft_loss.empty()) ft_loss = ft_out + ".loss.tsv";
      ConfigEcho e("finetune");
      e.add("arch", ft_arch).add("weights", ft_weights).add("train", ft_train)
          .add("classes", ft_classes);
      ft.echo(e, cfg);
      ft_pre.echo(e, pre);
      e.add("out", ft_out).add("out_arch", ft_out_arch).add("loss_log", ft_loss);
      e.print(out);
      const ArchSpec spec = arch_from_flag(ft_arch);
      const Network base = load_weights(spec, ft_weights);
      const DatasetManifest m = load_manifest(ft_train);
      const FinetuneOutcome o =
          run_finetune(base, m, ft_classes, cfg, pre, fs::path(ft_train).parent_path());
      save_weights(o.trained.net, ft_out);
      write_finetuned_arch(o, cfg, ft_out_arch);
      write_text(ft_loss, format_loss_log(o.trained.log));
      for (const LayerSpec& l : o.trained.net.spec.layers) {
        if (l.kind == LayerKind::Fc) out << "fc" << l.index << " out " << l.fc().out << '\n';
      }
      out << "freshly initialized fc layers: " << join_ints(o.fresh_layers) << '\n';
      if (!o.trained.log.empty()) out << "final loss " << o.trained.log.back().loss << '\n';
    };
  });

  // classify
  std::string cl_train, cl_test, cl_out;
  ClassifierFlags cl;
  auto* classify = app.add_subcommand("classify", "Train a classifier on FEAT files and predict");
  classify->add_option("--train", cl_train, "Training FEAT file")->required();
  classify->add_option("--test", cl_test, "Test FEAT file")->required();
  classify->add_option("--out", cl_out, "Predictions output")->required();
  cl.add_to(classify);
  classify->callback([&] {
    action = [&] {
      cl.check();
      ConfigEcho e("classify");
      e.add("train", cl_train).add("test", cl_test).add("out", cl_out);
      cl.echo(e);
      e.print(out);
      const FeatureSet train = load_features(cl_train);
      const FeatureSet test = load_features(cl_test);
      const auto preds = cl.classify(train, test);
      save_predictions(preds, cl_out);
      out << "wrote " << preds.size() << " predictions to " << cl_out << '\n';
    };
  });

  // evaluate
  std::string ev_preds, ev_truth, ev_matrix;
  bool ev_video = false;
  auto* evaluate = app.add_subcommand("evaluate", "Confusion matrix and accuracy");
  evaluate->add_option("--predictions", ev_preds, "Predictions file")->required();
  evaluate->add_option("--truth", ev_truth, "Manifest the predictions were made for")->required();
  evaluate->add_flag("--group-by-video", ev_video, "Also report per-video majority vote accuracy");
  evaluate->add_option("--out-matrix", ev_matrix, "Write the confusion matrix as TSV");
  evaluate->callback([&] {
    action = [&] {
      ConfigEcho e("evaluate");
      e.add("predictions", ev_preds).add("truth", ev_truth)
          .add("group_by_video", ev_video ? "yes" : "no");
      if (!ev_matrix.empty()) e.add("out_matrix", ev_matrix);
      e.print(out);
      const auto preds = load_predictions(ev_preds);
      const DatasetManifest truth = load_manifest(ev_truth);
      const EvaluationReport r = evaluate_predictions(preds, truth, ev_video);
      out << r.matrix.to_tsv();
      out << "frame accuracy: " << percent(r.frame_accuracy) << " (" << r.matrix.trace() << "/"
          << r.matrix.total() << ")\n";
      if (r.video_accuracy) {
        const auto correct = static_cast<std::size_t>(
            std::llround(*r.video_accuracy * static_cast<double>(r.videos)));
        out << "video accuracy: " << percent(*r.video_accuracy) << " (" << correct << "/"
            << r.videos << ")\n";
      }
      if (!ev_matrix.empty()) write_text(ev_matrix, r.matrix.to_tsv());
    };
  });

  // sweep
  std::string sw_arch = "default", sw_weights, sw_train, sw_test, sw_work = "sweep_work";
  int sw_layer = 19, sw_rounds = 1, sw_granularity = 512;
  std::vector<int> sw_initial{2048, 4096, 8192};
  std::vector<int> sw_taps;
  std::size_t sw_classes = 0;
  FinetuneFlags sw_ft;
  PreprocessFlags sw_pre;
  ClassifierFlags sw_cl;
  auto* sweep = app.add_subcommand("sweep", "Midpoint search over one fc layer's size");
  sweep->add_option("--layer", sw_layer, "fc layer to resize")->capture_default_str();
  sweep->add_option("--initial", sw_initial, "Three initial sizes")->delimiter(',')->expected(3)
      ->capture_default_str();
  sweep->add_option("--rounds", sw_rounds, "Refinement rounds")->capture_default_str();
  sweep->add_option("--granularity", sw_granularity, "Sizes are multiples of this")
      ->capture_default_str();
  sweep->add_option("--arch", sw_arch, "Architecture file or 'default'")->capture_default_str();
  sweep->add_option("--weights", sw_weights, "Starting weight file");
  sweep->add_option("--train", sw_train, "Training manifest");
  sweep->add_option("--test", sw_test, "Test manifest");
  sweep->add_option("--classes", sw_classes, "Number of classes for the head");
  sweep->add_option("--taps", sw_taps, "Feature taps (default: the arch's taps)")->delimiter(',');
  sweep->add_option("--work-dir", sw_work, "Directory for per-size artifacts")->capture_default_str();
  sweep->add_option("--seed", seed, "Random seed")->capture_default_str();
  sw_ft.add_to(sweep);
  sw_pre.add_to(sweep);
  sw_cl.add_to(sweep);
  sweep->callback([&] {
    action = [&] {
      std::vector<int> sorted = sw_initial;
      std::sort(sorted.begin(), sorted.end());
      if (sorted.size() != 3 || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw UsageError("--initial needs three distinct sizes");
      }
      if (sorted[0] <= 0 || sw_rounds < 0 || sw_granularity < 1) {
        throw UsageError("sizes and granularity must be positive and rounds non-negative");
      }
      sw_cl.check();
      ConfigEcho e("sweep");
      e.add("layer", sw_layer).add("initial", join_ints(sorted)).add("rounds", sw_rounds)
          .add("granularity", sw_granularity).add("seed", seed);
      std::function<double(int)> evaluator = hooks.sweep_evaluator;
      if (!evaluator) {
        if (sw_weights.empty() || sw_train.empty() || sw_test.empty() || sw_classes < 2) {
          throw UsageError("sweep needs --weights, --train, --test and --classes");
        }
        const FinetuneConfig base_cfg = sw_ft.resolve(seed, parse_head_flags(sw_ft.heads));
        const PreprocessConfig pre = sw_pre.resolve();
        e.add("arch", sw_arch).add("weights", sw_weights).add("train", sw_train)
            .add("test", sw_test).add("classes", sw_classes).add("work_dir", sw_work);
        sw_ft.echo(e, base_cfg);
        sw_pre.echo(e, pre);
        sw_cl.echo(e);
        evaluator = [&, base_cfg, pre](int size) {
          const ArchSpec spec = arch_from_flag(sw_arch);
          const Network base = load_weights(spec, sw_weights);
          const DatasetManifest train = load_manifest(sw_train);
          const DatasetManifest test = load_manifest(sw_test);
          FinetuneConfig cfg = base_cfg;
          cfg.head_sizes[sw_layer] = size;
          const FinetuneOutcome o = run_finetune(base, train, sw_classes, cfg, pre,
                                                 fs::path(sw_train).parent_path());
          const fs::path dir = fs::path(sw_work) / ("size_" + std::to_string(size));
          fs::create_directories(dir);
          save_weights(o.trained.net, dir / "weights.cnnw");
          write_finetuned_arch(o, cfg, dir / "weights.cnnw.arch");
          write_text(dir / "loss.tsv", format_loss_log(o.trained.log));
          const std::vector<int> taps = resolve_taps(sw_taps, o.trained.net.spec);
          const FeatureSet ftrain = extract_features(o.trained.net, train, taps, pre,
                                                     fs::path(sw_train).parent_path());
          const FeatureSet ftest = extract_features(o.trained.net, test, taps, pre,
                                                    fs::path(sw_test).parent_path());
          save_features(ftrain, dir / "train.feat");
          save_features(ftest, dir / "test.feat");
          const auto preds = sw_cl.classify(ftrain, ftest);
          save_predictions(preds, dir / "predictions.tsv");
          return evaluate_predictions(preds, test, false).frame_accuracy;
        };
      } else {
        e.add("evaluator", "injected");
      }
      e.print(out);
      const SweepResult r = sweep_layer_size(evaluator, {sorted[0], sorted[1], sorted[2]},
                                             sw_rounds, sw_granularity);
      out << "step\tF" << sw_layer << "\taccuracy\n";
      for (std::size_t i = 0; i < r.trace.size(); ++i) {
        out << i + 1 << '\t' << r.trace[i].size << '\t' << percent(r.trace[i].accuracy) << '\n';
      }
      out << "best F" << sw_layer << " = " << r.best_size << " (" << percent(r.best_accuracy)
          << ")\n";
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    if (const CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << sub->help();
    }
    return kUsage;
  }
  if (!action) return kUsage;
  try {
    action();
  } catch (const SweepError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}

}  // namespace actrec::cli
