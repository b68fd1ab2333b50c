// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. `--only N` runs a
// single criterion; the exit status is nonzero if any selected one fails.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <cstring>
#include <functional>
#include <map>
#include <array>
#include <iterator>
#include <variant>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "actrec/classifiers.hpp"
#include "actrec/dataio.hpp"
#include "actrec/eval.hpp"
#include "actrec/finetune.hpp"
#include "actrec/layers.hpp"
#include "actrec/network.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace {

using namespace actrec;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<void(Verdict&)> body;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

// 1. Frame accuracy of the published confusion matrix.
void published_confusion(Verdict& v) {
  const ConfusionMatrix m = fixtures::published_confusion();
  const double pct = 100.0 * accuracy(m);
  v.check(m.trace() == 1715, "trace 1715");
  v.check(m.total() == 2383, "total 2383");
  v.check(std::abs(pct - 71.96) <= 0.02, "within 0.02pp of 71.96");
  v.detail << m.trace() << "/" << m.total() << " = " << fmt(pct, 3) << "% vs 71.96%";
}

// 2. Majority vote over 28 kicking and 20 running frames of one video.
void voting_example(Verdict& v) {
  const std::vector<std::string> classes{"kicking", "running"};
  std::vector<std::pair<std::string, std::size_t>> frames;
  std::vector<std::size_t> preds, truth;
  for (int i = 0; i < 48; ++i) {
    const std::size_t p = i < 28 ? 0 : 1;
    frames.emplace_back("kick_video", p);
    preds.push_back(p);
    truth.push_back(0);
  }
  const VideoVotes votes = majority_vote(frames);
  const double frame = 100.0 * accuracy(confusion(preds, truth, classes));
  const double video = 100.0 * video_accuracy(votes, {{"kick_video", 0}});
  v.check(classes[votes.at("kick_video")] == "kicking", "video voted kicking");
  v.check(std::abs(frame - 58.3) <= 0.05, "frame accuracy 58.3 +- 0.05");
  v.check(video == 100.0, "video accuracy 100");
  v.detail << "vote=" << classes[votes.at("kick_video")] << " frame=" << fmt(frame, 2)
           << "% video=" << fmt(video, 1) << "%";
}

// 3. Tap lengths of the default architecture on a 227x227 input.
void shape_chain(Verdict& v) {
  const ArchSpec spec = default_arch();
  Rng rng(3);
  const Network net = init_weights(spec, rng);
  const Tensor input = oracle::random_tensor(spec.input, rng, 0.0, 255.0);
  const std::vector<int> taps{16, 19, 22};
  const ForwardResult r = forward(net, input, Mode::Infer, nullptr, taps);
  const std::size_t f16 = r.taps.at(16).values.size();
  const std::size_t f19 = r.taps.at(19).values.size();
  const std::size_t f22 = r.taps.at(22).values.size();
  const std::array<FeatureVector, 2> pair{r.taps.at(16), r.taps.at(19)};
  const std::array<FeatureVector, 3> triple{r.taps.at(16), r.taps.at(19), r.taps.at(22)};
  const std::size_t p = concat_features(pair).values.size();
  const std::size_t t = concat_features(triple).values.size();
  v.check(f16 == 4096 && f19 == 4096 && f22 == 1000, "tap lengths 4096/4096/1000");
  v.check(p == 8192, "F16+F19 = 8192");
  v.check(t == 9192, "F16+F19+F22 = 9192");
  bool finite = true;
  for (float x : r.logits) finite = finite && std::isfinite(x);
  v.check(finite, "finite logits");
  v.detail << "F16=" << f16 << " F19=" << f19 << " F22=" << f22 << " F16+F19=" << p
           << " F16+F19+F22=" << t;
}

// 4. Kernels against naive loops.
void kernel_oracles(Verdict& v) {
  Rng rng(4);
  double conv_err = 0.0, lrn_err = 0.0;
  std::size_t conv_n = 0, pool_n = 0, lrn_n = 0, pool_mismatch = 0, identity_mismatch = 0;
  auto dim = [&](std::size_t hi) { return 1 + rng.below(hi); };
  while (conv_n < 100) {
    const std::size_t c = dim(6), h = dim(8), w = dim(8);
    ConvParams p;
    p.kernel = static_cast<int>(dim(5));
    p.stride = static_cast<int>(dim(3));
    p.pad = static_cast<int>(rng.below(3));
    p.out_channels = static_cast<int>(dim(6));
    if (h + 2 * static_cast<std::size_t>(p.pad) < static_cast<std::size_t>(p.kernel) ||
        w + 2 * static_cast<std::size_t>(p.pad) < static_cast<std::size_t>(p.kernel)) {
      continue;
    }
    const auto k = static_cast<std::size_t>(p.kernel);
    p.weights = oracle::random_tensor(Shape{static_cast<std::size_t>(p.out_channels), c, k, k}, rng);
    p.bias = oracle::random_vector(static_cast<std::size_t>(p.out_channels), rng);
    const Tensor in = oracle::random_tensor(Shape{c, h, w}, rng);
    const Tensor got = conv_forward(in, p), want = oracle::conv(in, p);
    for (std::size_t i = 0; i < got.size(); ++i) conv_err = std::max(conv_err, double(std::abs(got[i] - want[i])));
    ++conv_n;
  }
  while (pool_n < 100) {
    const int k = static_cast<int>(dim(3)), s = static_cast<int>(dim(3));
    const Tensor in = oracle::random_tensor(
        Shape{dim(6), static_cast<std::size_t>(k) + rng.below(6), static_cast<std::size_t>(k) + rng.below(6)},
        rng);
    if (!(maxpool_forward(in, k, s) == oracle::maxpool(in, k, s))) ++pool_mismatch;
    ++pool_n;
  }
  while (lrn_n < 100) {
    const Tensor in = oracle::random_tensor(Shape{dim(6), dim(8), dim(8)}, rng, -4.0, 4.0);
    const int n = 1 + 2 * static_cast<int>(rng.below(3));
    const double alpha = rng.uniform(), beta = 0.25 + rng.uniform(), k = 1.0 + rng.uniform();
    const Tensor got = lrn_forward(in, LrnParams{k, n, alpha, beta});
    const Tensor want = oracle::lrn(in, k, n, alpha, beta);
    for (std::size_t i = 0; i < got.size(); ++i) lrn_err = std::max(lrn_err, double(std::abs(got[i] - want[i])));
    if (!(lrn_forward(in, LrnParams{1.0, n, 0.0, beta}) == in)) ++identity_mismatch;
    ++lrn_n;
  }
  v.check(conv_err <= 1e-5, "conv within 1e-5");
  v.check(pool_mismatch == 0, "maxpool exact");
  v.check(lrn_err <= 1e-5, "lrn within 1e-5");
  v.check(identity_mismatch == 0, "lrn identity exact");
  v.detail << "conv max|err|=" << conv_err << " (" << conv_n << "), maxpool mismatches=" << pool_mismatch
           << " (" << pool_n << "), lrn max|err|=" << lrn_err << " (" << lrn_n
           << "), identity mismatches=" << identity_mismatch;
}

// 5. Backward passes against central differences of double-precision losses.
void gradient_checks(Verdict& v) {
  Rng rng(5);
  double worst_fc = 0.0, worst_relu = 0.0, worst_ce = 0.0;
  for (int point = 0; point < 20; ++point) {
    // fc: L = c . (W x + b)
    const std::size_t in = 2 + rng.below(7), out = 1 + rng.below(5);
    FcParams p;
    p.out_dim = static_cast<int>(out);
    p.weights = oracle::random_tensor(Shape{out, in}, rng);
    p.bias = oracle::random_vector(out, rng);
    const auto x = oracle::random_vector(in, rng);
    const auto c = oracle::random_vector(out, rng);
    const FcGradients g = fc_backward(x, p, c);
    std::vector<double> w(p.weights.storage().begin(), p.weights.storage().end());
    std::vector<double> xd(x.begin(), x.end());
    std::vector<double> bd(p.bias.begin(), p.bias.end());
    auto loss = [&](std::span<const double> ws, std::span<const double> xs, std::span<const double> bs) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        double a = bs[o];
        for (std::size_t i = 0; i < in; ++i) a += ws[o * in + i] * xs[i];
        s += c[o] * a;
      }
      return s;
    };
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double fd = oracle::central_difference([&](auto ws) { return loss(ws, xd, bd); }, w, k);
      worst_fc = std::max(worst_fc, oracle::relative_error(g.grad_w[k], fd));
    }
    for (std::size_t i = 0; i < in; ++i) {
      const double fd = oracle::central_difference([&](auto xs) { return loss(w, xs, bd); }, xd, i);
      worst_fc = std::max(worst_fc, oracle::relative_error(g.grad_x[i], fd));
    }
    for (std::size_t o = 0; o < out; ++o) {
      const double fd = oracle::central_difference([&](auto bs) { return loss(w, xd, bs); }, bd, o);
      worst_fc = std::max(worst_fc, oracle::relative_error(g.grad_b[o], fd));
    }

    // relu: L = c . relu(x), away from the kink
    const std::size_t n = 2 + rng.below(10);
    Tensor rx(Shape{n}), up(Shape{n});
    std::vector<double> rxd(n), cd(n);
    for (std::size_t i = 0; i < n; ++i) {
      double val = rng.uniform() * 2.0 - 1.0;
      if (std::abs(val) < 0.01) val += 0.05;
      rx[i] = static_cast<float>(val);
      rxd[i] = rx[i];
      cd[i] = rng.normal();
      up[i] = static_cast<float>(cd[i]);
    }
    const Tensor rg = relu_backward(rx, up);
    for (std::size_t i = 0; i < n; ++i) {
      const double fd = oracle::central_difference(
          [&](std::span<const double> xs) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += cd[j] * std::max(0.0, xs[j]);
            return s;
          },
          rxd, i);
      worst_relu = std::max(worst_relu, oracle::relative_error(rg[i], fd, 1e-6));
    }

    // softmax + cross-entropy with respect to the logits
    const std::size_t k = 2 + rng.below(9), label = rng.below(k);
    const auto z = oracle::random_vector(k, rng, -3.0, 3.0);
    std::vector<double> zd(z.begin(), z.end());
    const CrossEntropyResult ce = cross_entropy(softmax(z), label);
    for (std::size_t i = 0; i < k; ++i) {
      const double fd = oracle::central_difference(
          [&](std::span<const double> zs) {
            double mx = zs[0];
            for (double q : zs) mx = std::max(mx, q);
            double tot = 0.0;
            for (double q : zs) tot += std::exp(q - mx);
            return -(zs[label] - mx - std::log(tot));
          },
          zd, i);
      worst_ce = std::max(worst_ce, oracle::relative_error(ce.grad_logits[i], fd, 1e-6));
    }
  }

  // fresh head on a random backbone output
  Rng init(55);
  const Network backbone = init_weights(fixtures::tiny_arch(), init, 0.3);
  double worst_init = 0.0;
  for (std::size_t classes : {2u, 5u, 9u}) {
    Rng head(classes);
    const Network net = replace_head(backbone, {{16, 32}, {19, 32}}, classes, head);
    const auto x = oracle::random_vector(net.fc(16).weights.shape()[1], init, 0.0, 5.0);
    HeadGradients none = HeadGradients::zeros(net, {});
    const double loss = accumulate_head_gradients(net, x, 0, Mode::Infer, nullptr, none);
    worst_init = std::max(worst_init, std::abs(loss - std::log(static_cast<double>(classes))));
  }
  v.check(worst_fc < 1e-4, "fc rel err < 1e-4");
  v.check(worst_relu < 1e-4, "relu rel err < 1e-4");
  v.check(worst_ce < 1e-4, "softmax/cross-entropy rel err < 1e-4");
  v.check(worst_init <= 0.1, "initial loss within 0.1 of ln k");
  v.detail << "max rel err fc=" << worst_fc << " relu=" << worst_relu << " ce=" << worst_ce
           << "; max |loss0 - ln k|=" << fmt(worst_init, 5);
}

// 6. Head-only SGD on the four-image toy set.
void finetune_convergence(Verdict& v) {
  fixtures::TempDir dir;
  const DatasetManifest man = fixtures::write_toy_images(dir.path(), 16);
  const Network net = fixtures::toy_finetune_network(1);
  FinetuneConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.iterations = 500;
  cfg.seed = 1;
  cfg.log_stride = 50;
  const PreprocessConfig pre{16, 16, {120.0f, 120.0f, 120.0f}};
  const TrainResult r = train_head(net, man, cfg, pre, dir.path());
  bool frozen = true;
  for (int i = 1; i < first_fc_index(net.spec); ++i) {
    frozen = frozen && r.net.params[static_cast<std::size_t>(i - 1)] == net.params[static_cast<std::size_t>(i - 1)];
  }
  const double final_loss = r.log.back().loss;
  v.check(r.log.back().iteration == 499, "500 iterations");
  v.check(final_loss < 0.1, "final minibatch loss < 0.1");
  v.check(frozen, "layers 1-15 bitwise unchanged");
  v.detail << "lr=" << cfg.learning_rate << " loss " << fmt(r.log.front().loss) << " -> "
           << fmt(final_loss) << " at iteration " << r.log.back().iteration
           << ", backbone " << (frozen ? "unchanged" : "CHANGED");
}

// 7. Quadratic-kernel SMO on XOR.
void svm_xor(Verdict& v) {
  FeatureSet s;
  s.dim = 2;
  s.classes = {"a", "b"};
  s.records = {{{1, 1}, 0, "p"}, {{-1, -1}, 0, "q"}, {{1, -1}, 1, "r"}, {{-1, 1}, 1, "s"}};
  const SvmModel m = svm_train(s, SvmOptions{});
  std::size_t correct = 0;
  for (const auto& r : s.records) correct += svm_predict(m, r.features) == r.label ? 1 : 0;
  double residual = 0.0;
  for (const auto& pm : m.machines) residual = std::max(residual, std::abs(pm.dual_residual()));
  v.check(correct == 4, "4/4 correct");
  v.check(residual <= 1e-6, "sum alpha*y within 1e-6");
  v.detail << correct << "/4 correct, max |sum alpha*y|=" << residual << " over "
           << m.machines.size() << " machine(s)";
}

// 8. Published sweep sequence with a stub evaluator.
void sweep_sequence(Verdict& v) {
  std::vector<int> calls;
  const SweepResult r = sweep_layer_size(
      [&](int size) {
        calls.push_back(size);
        return size == 4096 ? 0.72 : size == 8192 ? 0.70 : 0.65;
      },
      {2048, 4096, 8192}, 1);
  const std::vector<int> after(calls.begin() + std::min<std::ptrdiff_t>(3, static_cast<std::ptrdiff_t>(calls.size())), calls.end());
  v.check(after == std::vector<int>{6144, 5120, 7168}, "next evaluations 6144, 5120, 7168");
  v.detail << "evaluated";
  for (int c : calls) v.detail << ' ' << c;
  v.detail << "; best " << r.best_size;
}

// 9. Video split on the published per-class totals.
void split_counts(Verdict& v) {
  const DatasetManifest m = fixtures::published_split_manifest(3);
  const SplitResult a = split_by_video(m, 0.2, 11);
  const SplitResult b = split_by_video(m, 0.2, 11);
  std::set<std::string> train_videos;
  for (const auto& s : a.train.samples) train_videos.insert(s.video_id);
  bool disjoint = true;
  std::map<std::string, std::set<std::string>> test_by_class;
  for (const auto& s : a.test.samples) {
    disjoint = disjoint && train_videos.count(s.video_id) == 0;
    test_by_class[s.label].insert(s.video_id);
  }
  std::ostringstream got, want;
  bool counts_match = true;
  for (const auto& row : fixtures::published_split()) {
    const std::size_t n = test_by_class[row.activity].size();
    counts_match = counts_match && n == row.test_videos;
    got << (got.tellp() > 0 ? "," : "") << n;
    want << (want.tellp() > 0 ? "," : "") << row.test_videos;
  }
  v.check(counts_match, "per-class test counts equal the published column");
  v.check(disjoint, "no video spans both sides");
  v.check(a.train == b.train && a.test == b.test, "deterministic per seed");
  v.detail << "test videos (" << got.str() << ") vs published (" << want.str() << ")";
}

// 10. Weight, FEAT and architecture round-trips.
void round_trips(Verdict& v) {
  fixtures::TempDir dir;
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  Rng rng(10);
  const Network net = init_weights(fixtures::tiny_arch(), rng, 0.5);
  save_weights(net, dir / "a.cnnw");
  const Network back = load_weights(net.spec, dir / "a.cnnw");
  save_weights(back, dir / "b.cnnw");
  bool weights_ok = back == net && bytes(dir / "a.cnnw") == bytes(dir / "b.cnnw");
  // bit patterns, not float equality
  for (std::size_t i = 0; i < net.params.size() && weights_ok; ++i) {
    if (const auto* p = std::get_if<FcParams>(&net.params[i])) {
      const auto& q = std::get<FcParams>(back.params[i]);
      weights_ok = std::memcmp(p->weights.storage().data(), q.weights.storage().data(),
                               p->weights.size() * sizeof(float)) == 0;
    }
  }

  FeatureSet set = fixtures::gaussian_clusters(3, 5, 7, 1.0, 1.0, 10);
  set.records[0].features[0] = -0.0f;
  set.records[1].features[1] = 1e-40f;  // subnormal
  save_features(set, dir / "a.feat");
  const FeatureSet fback = load_features(dir / "a.feat");
  save_features(fback, dir / "b.feat");
  bool feat_ok = bytes(dir / "a.feat") == bytes(dir / "b.feat") && fback == set &&
                 std::signbit(fback.records[0].features[0]);

  bool arch_ok = true;
  for (const ArchSpec& spec : {default_arch(), fixtures::tiny_arch()}) {
    arch_ok = arch_ok && parse_arch(format_arch(spec)) == spec;
  }
  v.check(weights_ok, "weights bitwise");
  v.check(feat_ok, "FEAT bitwise");
  v.check(arch_ok, "arch structural");
  v.detail << "weights " << (weights_ok ? "exact" : "differ") << ", FEAT "
           << (feat_ok ? "exact" : "differ") << ", arch " << (arch_ok ? "equal" : "differ");
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "published confusion matrix frame accuracy", 1.0, published_confusion},
      {2, "kicking video majority vote", 1.0, voting_example},
      {3, "default architecture tap lengths", 10.0, shape_chain},
      {4, "conv/maxpool/LRN naive-loop oracles", 30.0, kernel_oracles},
      {5, "finite-difference gradients and initial loss", 30.0, gradient_checks},
      {6, "head-only fine-tune convergence", 60.0, finetune_convergence},
      {7, "polynomial SVM on XOR", 10.0, svm_xor},
      {8, "layer-size sweep sequence", 1.0, sweep_sequence},
      {9, "video split counts", 1.0, split_counts},
      {10, "file format round-trips", 10.0, round_trips},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  for (const Criterion& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "[exception: " << e.what() << "]";
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    v.check(secs < c.budget_seconds, "runtime budget " + fmt(c.budget_seconds, 0) + " s");
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.title << " | "
              << v.detail.str() << " | " << fmt(secs, 3) << " s (budget " << c.budget_seconds
              << " s)\n";
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
