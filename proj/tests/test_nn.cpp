#include "ecgid/nn/checkpoint.hpp"
#include "ecgid/nn/dual_expert.hpp"
#include "ecgid/nn/kernels.hpp"
#include "nn_support.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace ecgid;
using namespace ecgid::nn;
using namespace ecgid::testing;

namespace {

BeatSet toy_set(int per_class, int classes, double noise, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01(0.0, noise);
  BeatSet s;
  s.beats = Tensor(static_cast<std::size_t>(per_class * classes), 1, 110);
  std::size_t row = 0;
  for (int k = 0; k < classes; ++k)
    for (int i = 0; i < per_class; ++i, ++row) {
      const auto b = ecgid::testing::gaussian_beat(62.0 + 12.0 * k, 5.0, 0.2 + 0.15 * k);
      for (std::size_t j = 0; j < 110; ++j) s.beats.at(row, 0, j) = b.samples[j] + n01(rng);
      s.labels.push_back(k);
    }
  return s;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 30;
  cfg.patience = 5;
  cfg.head.hidden_units = 32;
  cfg.head.dropout = 0.2;
  return cfg;
}

}  // namespace

TEST_CASE("layer gradients match central differences") {
  Rng rng(17);
  std::uniform_int_distribution<int> small(1, 4), len(3, 12), k(1, 5), stride(1, 2);

  SUBCASE("conv1d") {
    for (int trial = 0; trial < 20; ++trial) {
      const int kernel = k(rng);
      const int l = std::max(len(rng), kernel);
      Conv1d conv(LayerSpec::conv(small(rng), small(rng), kernel, stride(rng), trial % 3, trial % 2 == 0));
      conv.initialize(rng);
      const auto e = gradient_check(conv, random_tensor(static_cast<std::size_t>(small(rng)),
                                                         static_cast<std::size_t>(conv.spec().in_channels),
                                                         static_cast<std::size_t>(l), rng),
                                    rng);
      CHECK(e.input < 1e-4);
      CHECK(e.params < 1e-4);
    }
  }
  SUBCASE("batch_norm") {
    for (int trial = 0; trial < 20; ++trial) {
      BatchNorm bn(LayerSpec::batch_norm(small(rng)));
      bn.initialize(rng);
      const auto e = gradient_check(bn, random_tensor(static_cast<std::size_t>(small(rng) + 1),
                                                      static_cast<std::size_t>(bn.spec().in_channels),
                                                      static_cast<std::size_t>(len(rng)), rng),
                                    rng);
      CHECK(e.input < 1e-4);
      CHECK(e.params < 1e-4);
    }
  }
  SUBCASE("fully_connected") {
    for (int trial = 0; trial < 20; ++trial) {
      const int in = len(rng);
      FullyConnected fc(LayerSpec::fully_connected(in, len(rng)));
      fc.initialize(rng);
      const auto e = gradient_check(fc, random_tensor(static_cast<std::size_t>(small(rng)),
                                                      static_cast<std::size_t>(in), 1, rng),
                                    rng);
      CHECK(e.input < 1e-4);
      CHECK(e.params < 1e-4);
    }
  }
  SUBCASE("relu, max_pool, flatten") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto n = static_cast<std::size_t>(small(rng));
      const auto c = static_cast<std::size_t>(small(rng));
      const auto l = static_cast<std::size_t>(len(rng));
      ReLU relu;
      CHECK(gradient_check(relu, spread_tensor(n, c, l, rng), rng).input < 1e-4);
      MaxPool pool(LayerSpec::max_pool(2 + trial % 2));
      CHECK(gradient_check(pool, spread_tensor(n, c, l, rng), rng).input < 1e-4);
      Flatten flat;
      CHECK(gradient_check(flat, random_tensor(n, c, l, rng), rng).input < 1e-4);
    }
  }
  SUBCASE("dropout and softmax") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto n = static_cast<std::size_t>(small(rng));
      const auto f = static_cast<std::size_t>(len(rng));
      Dropout drop(LayerSpec::dropout(0.3));
      CHECK(gradient_check(drop, random_tensor(n, f, 1, rng), rng).input < 1e-4);
      Softmax sm;
      CHECK(gradient_check(sm, random_tensor(n, f, 1, rng, -3.0, 3.0), rng).input < 1e-4);
    }
  }
}

TEST_CASE("cross_entropy gradient") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 5), k = 2 + static_cast<std::size_t>(trial % 7);
    Tensor z = random_tensor(n, k, 1, rng, -4.0, 4.0);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>((i * 7 + static_cast<std::size_t>(trial)) % k);
    Tensor g;
    cross_entropy(z, y, &g);
    std::vector<double> num(z.data.size());
    for (std::size_t i = 0; i < z.data.size(); ++i) {
      const double v = z.data[i];
      z.data[i] = v + 1e-5;
      const double up = cross_entropy(z, y);
      z.data[i] = v - 1e-5;
      const double down = cross_entropy(z, y);
      z.data[i] = v;
      num[i] = (up - down) / 2e-5;
    }
    CHECK(rel_error(g.data, num) < 1e-4);
  }
  Tensor z(1, 3, 1);
  const std::vector<int> y{0};
  CHECK(cross_entropy(z, y) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("serial and parallel kernels agree") {
  Rng rng(8);
  std::uniform_int_distribution<int> dim(1, 40), k(1, 7);
  auto fill = [&](std::size_t n) {
    std::vector<double> v(n);
    std::uniform_real_distribution<double> u(-1, 1);
    for (double& x : v) x = u(rng);
    return v;
  };
  auto max_diff = [](const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
  };
  for (int trial = 0; trial < 20; ++trial) {
    kernels::ConvShape s;
    s.batch = static_cast<std::size_t>(dim(rng));
    s.in_channels = static_cast<std::size_t>(k(rng));
    s.out_channels = static_cast<std::size_t>(dim(rng));
    s.kernel = static_cast<std::size_t>(k(rng));
    s.in_length = s.kernel + static_cast<std::size_t>(dim(rng));
    s.padding = static_cast<std::size_t>(trial % 3);
    s.stride = 1 + static_cast<std::size_t>(trial % 2);
    const auto in = fill(s.batch * s.in_channels * s.in_length);
    const auto w = fill(s.out_channels * s.in_channels * s.kernel);
    const auto b = fill(s.out_channels);
    const auto go = fill(s.batch * s.out_channels * s.out_length());
    std::vector<double> o1(go.size()), o2(go.size());
    kernels::serial::conv1d_forward(s, in, w, b, o1);
    kernels::parallel::conv1d_forward(s, in, w, b, o2);
    CHECK(max_diff(o1, o2) < 1e-10);
    std::vector<double> gi1(in.size()), gi2(in.size()), gw1(w.size(), 0.5), gw2(w.size(), 0.5), gb1(b.size()),
        gb2(b.size());
    kernels::serial::conv1d_backward(s, in, w, go, gi1, gw1, gb1);
    kernels::parallel::conv1d_backward(s, in, w, go, gi2, gw2, gb2);
    CHECK(max_diff(gi1, gi2) < 1e-10);
    CHECK(max_diff(gw1, gw2) < 1e-10);
    CHECK(max_diff(gb1, gb2) < 1e-10);

    kernels::DenseShape d{static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng) * 5),
                          static_cast<std::size_t>(dim(rng))};
    const auto din = fill(d.batch * d.in_features);
    const auto dw = fill(d.out_features * d.in_features);
    const auto db = fill(d.out_features);
    const auto dgo = fill(d.batch * d.out_features);
    std::vector<double> do1(dgo.size()), do2(dgo.size());
    kernels::serial::dense_forward(d, din, dw, db, do1);
    kernels::parallel::dense_forward(d, din, dw, db, do2);
    CHECK(max_diff(do1, do2) < 1e-10);
    std::vector<double> dgi1(din.size()), dgi2(din.size()), dgw1(dw.size()), dgw2(dw.size()), dgb1(db.size()),
        dgb2(db.size());
    kernels::serial::dense_backward(d, din, dw, dgo, dgi1, dgw1, dgb1);
    kernels::parallel::dense_backward(d, din, dw, dgo, dgi2, dgw2, dgb2);
    CHECK(max_diff(dgi1, dgi2) < 1e-10);
    CHECK(max_diff(dgw1, dgw2) < 1e-10);
    CHECK(max_diff(dgb1, dgb2) < 1e-10);
  }
}

TEST_CASE("conv1d matches a direct-sum oracle") {
  Rng rng(21);
  const std::size_t n = 2, ci = 3, co = 4, l = 9, kk = 3, pad = 1;
  Conv1d conv(LayerSpec::conv(3, 4, 3, 1, 1));
  conv.initialize(rng);
  const Tensor x = random_tensor(n, ci, l, rng);
  const Tensor y = conv.infer(x);
  REQUIRE(y.length == l);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t t = 0; t < l; ++t) {
        double acc = conv.bias()[o];
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t j = 0; j < kk; ++j) {
            const long src = static_cast<long>(t + j) - static_cast<long>(pad);
            if (src < 0 || src >= static_cast<long>(l)) continue;
            acc += conv.weights()[(o * ci + c) * kk + j] * x.at(b, c, static_cast<std::size_t>(src));
          }
        CHECK(y.at(b, o, t) == doctest::Approx(acc).epsilon(1e-12));
      }

  Conv1d identity(LayerSpec::conv(1, 1, 1));
  identity.weights() = {1.0};
  identity.bias() = {0.0};
  const Tensor z = random_tensor(3, 1, 20, rng);
  CHECK(identity.infer(z).data == z.data);
}

TEST_CASE("standard CNN shapes") {
  // Same-padded convolutions keep the length; each pool halves it (floor).
  auto oracle = [](int l) { return static_cast<std::size_t>(64 * ((l / 2) / 2)); };
  for (int l : {50, 70, 110}) {
    CHECK(backbone_width(l) == oracle(l));
    const auto m = build_standard_cnn(l, 7, 1);
    CHECK(m.size() == kBackboneLayers + 5);
    CHECK(m.shape_after(kBackboneLayers).size() == oracle(l));
    CHECK(m.output_shape() == Shape{7, 1});
    CHECK(m.layer(kBackboneLayers - 1).spec().kind == LayerKind::flatten);
  }
  CHECK(backbone_width(110) == 1728);
  CHECK(backbone_width(50) + backbone_width(70) == 1856);
  CHECK_THROWS_AS(build_standard_cnn(100, 3, 1), ConfigError);
  CHECK_THROWS_AS(build_standard_cnn(110, 0, 1), ConfigError);
  HeadSpec bad;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(build_standard_cnn(110, 3, 1, bad), ConfigError);
  bad = {};
  bad.hidden_units = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const auto head = classifier_head(1856, 9, {64, 0.25});
  REQUIRE(head.size() == 5);
  CHECK(head[0] == LayerSpec::fully_connected(1856, 64));
  CHECK(head[2].dropout_rate == 0.25);
  CHECK(head[3] == LayerSpec::fully_connected(64, 9));

  CHECK_THROWS_AS(Sequential({1, 10}, {LayerSpec::fully_connected(5, 3)}, 1), std::invalid_argument);
}

TEST_CASE("inference outputs are probability rows") {
  const auto m = build_standard_cnn(110, 5, 3);
  Rng rng(1);
  const Tensor p = m.infer(random_tensor(8, 1, 110, rng));
  REQUIRE(p.batch == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(p.at(i, k, 0) >= 0.0);
      s += p.at(i, k, 0);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor z = m.infer_logits(random_tensor(2, 1, 110, rng));
  const Tensor q = softmax_rows(z);
  double s = 0.0;
  for (std::size_t k = 0; k < 5; ++k) s += q.at(1, k, 0);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("batch norm") {
  Rng rng(6);
  BatchNorm bn(LayerSpec::batch_norm(3));
  const Tensor x = random_tensor(16, 3, 10, rng, 2.0, 5.0);

  SUBCASE("training output is standardized per channel") {
    const Tensor y = bn.forward(x, Mode::train, rng);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t n = 0; n < 16; ++n)
        for (std::size_t l = 0; l < 10; ++l) m += y.at(n, c, l);
      m /= 160.0;
      for (std::size_t n = 0; n < 16; ++n)
        for (std::size_t l = 0; l < 10; ++l) v += std::pow(y.at(n, c, l) - m, 2);
      v /= 160.0;
      CHECK(std::abs(m) < 1e-12);
      CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
    }
    CHECK(bn.running_mean()[0] > 0.0);
  }
  SUBCASE("inference uses running statistics, matching the stateless pass") {
    bn.running_mean() = {1.0, 2.0, 3.0};
    bn.running_var() = {4.0, 1.0, 0.25};
    const Tensor a = bn.forward(x, Mode::infer, rng);
    const Tensor b = bn.infer(x);
    CHECK(a.data == b.data);
    CHECK(b.at(0, 0, 0) == doctest::Approx((x.at(0, 0, 0) - 1.0) / std::sqrt(4.0 + BatchNorm::kEps)));
    CHECK(bn.running_mean() == std::vector<double>{1.0, 2.0, 3.0});
  }
}

TEST_CASE("dropout") {
  Rng rng(2);
  const Tensor x = random_tensor(50, 40, 1, rng);
  Dropout none(LayerSpec::dropout(0.0));
  CHECK(none.forward(x, Mode::train, rng).data == x.data);
  Dropout half(LayerSpec::dropout(0.5));
  CHECK(half.infer(x).data == x.data);
  const Tensor y = half.forward(x, Mode::train, rng);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (y.data[i] == 0.0)
      ++zeros;
    else
      CHECK(y.data[i] == doctest::Approx(2.0 * x.data[i]));
  }
  CHECK(zeros > 800);
  CHECK(zeros < 1200);
}

TEST_CASE("early stopping") {
  EarlyStopping s(20);
  CHECK(s.update(1.0));
  int epoch = 1;
  while (!s.should_stop()) {
    CHECK_FALSE(s.update(1.0));  // equal is not an improvement
    ++epoch;
  }
  CHECK(epoch == 21);
  CHECK(s.best_epoch() == 1);

  EarlyStopping t(2);
  t.update(3.0);
  t.update(2.0);
  t.update(2.5);
  CHECK_FALSE(t.should_stop());
  t.update(2.0);
  CHECK(t.should_stop());
  CHECK(t.best_epoch() == 2);
}

TEST_CASE("training") {
  const BeatSet tr = toy_set(40, 3, 0.05, 1), va = toy_set(15, 3, 0.05, 2), te = toy_set(30, 3, 0.05, 3);
  auto cfg = small_config();

  SUBCASE("separable toy set") {
    const auto m = train_standard_cnn(tr, va, 3, cfg, 11);
    const auto pred = m.predict(te.beats);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == te.labels[i];
    CHECK(static_cast<double>(ok) / static_cast<double>(pred.size()) >= 0.99);
    REQUIRE(m.histories.size() == 1);
    CHECK(m.histories[0].best_epoch >= 1);
  }
  SUBCASE("fully frozen model never changes and stops after patience + 1 epochs") {
    auto model = build_standard_cnn(110, 3, 5, cfg.head);
    model.freeze_all();
    const auto before = model.parameter_hash();
    cfg.patience = 20;
    cfg.max_epochs = 50;
    const auto hist = train(model, {tr.beats, tr.labels}, {va.beats, va.labels}, cfg);
    CHECK(model.parameter_hash() == before);
    CHECK(hist.epochs_run == 21);
    CHECK(hist.stopped_early);
    CHECK(hist.best_epoch == 1);
  }
  SUBCASE("same seed, same parameters; independent of the kernel backend") {
    cfg.max_epochs = 3;
    const auto a = train_standard_cnn(tr, va, 3, cfg, 9);
    const auto b = train_standard_cnn(tr, va, 3, cfg, 9);
    CHECK(a.head.parameter_hash() == b.head.parameter_hash());
    CHECK(a.backbones[0].parameter_hash() == b.backbones[0].parameter_hash());
    const auto c = train_standard_cnn(tr, va, 3, cfg, 10);
    CHECK(a.head.parameter_hash() != c.head.parameter_hash());

    kernels::set_backend(kernels::Backend::serial);
    const auto s = train_standard_cnn(tr, va, 3, cfg, 9);
    kernels::set_backend(kernels::Backend::parallel);
    const Tensor pa = a.probabilities(te.beats), ps = s.probabilities(te.beats);
    double m = 0.0;
    for (std::size_t i = 0; i < pa.data.size(); ++i) m = std::max(m, std::abs(pa.data[i] - ps.data[i]));
    CHECK(m < 1e-8);
  }
  SUBCASE("invalid configuration") {
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train_standard_cnn(tr, va, 3, cfg, 1), ConfigError);
  }
}

TEST_CASE("two-stage dual expert") {
  const BeatSet tr = toy_set(30, 4, 0.05, 4), va = toy_set(10, 4, 0.05, 5);
  auto cfg = small_config();
  cfg.max_epochs = 3;
  const std::vector<BeatSlice> slices{kPqrsSlice, kStSlice};
  auto s1 = train_stage1(tr, va, slices, 4, cfg, 7);
  REQUIRE(s1.backbones.size() == 2);
  CHECK(s1.backbones[0].size() == kBackboneLayers);
  CHECK_FALSE(s1.backbones[0].any_trainable());
  const auto h0 = s1.backbones[0].parameter_hash(), h1 = s1.backbones[1].parameter_hash();

  auto m = train_stage2(s1.backbones, slices, tr, va, 3, 1, cfg, 8);
  CHECK(m.feature_width() == 1856);
  CHECK(m.backbones[0].parameter_hash() == h0);
  CHECK(m.backbones[1].parameter_hash() == h1);
  CHECK(m.head.output_shape() == Shape{4, 1});
  CHECK(m.histories.size() == 1);  // stage-I histories stay with s1
  CHECK(s1.histories.size() == 2);

  const Tensor full = m.logits(va.beats);
  prune_aux_classes(m, 3);
  CHECK(m.num_aux == 0);
  CHECK(m.head.output_shape() == Shape{3, 1});
  const Tensor pruned = m.logits(va.beats);
  for (std::size_t i = 0; i < va.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(pruned.at(i, k, 0) == full.at(i, k, 0));
  CHECK_THROWS(prune_aux_classes(m, 5));

  SUBCASE("checkpoint round-trip") {
    std::stringstream ss;
    write_checkpoint(ss, m);
    const std::string bytes = ss.str();
    const auto r = read_checkpoint(ss);
    CHECK(r.slices == m.slices);
    CHECK(r.num_target == 3);
    CHECK(r.head.parameter_hash() == m.head.parameter_hash());
    CHECK(r.backbones[1].parameter_hash() == h1);
    CHECK(r.histories.size() == m.histories.size());
    CHECK(r.histories[0].val_loss == m.histories[0].val_loss);
    CHECK(r.logits(va.beats).data == pruned.data);
    CHECK(layer_manifest(r) == layer_manifest(m));
    std::stringstream again;
    write_checkpoint(again, r);
    CHECK(again.str() == bytes);

    std::stringstream bad("not a checkpoint");
    CHECK_THROWS(read_checkpoint(bad));
  }
}

TEST_CASE("pruning keeps the retained logits bit-identical") {
  Rng rng(33);
  for (const auto& [total, kept] : std::vector<std::pair<int, int>>{{26, 20}, {4, 3}, {40, 20}, {17, 16}}) {
    Sequential head({1856, 1}, classifier_head(1856, total, {128, 0.5}), static_cast<std::uint64_t>(total));
    const Tensor x = random_tensor(100, 1856, 1, rng);
    const Tensor before = head.infer_logits(x);
    prune_aux_classes(head, kept);
    const Tensor after = head.infer_logits(x);
    REQUIRE(after.channels == static_cast<std::size_t>(kept));
    std::size_t same = 0;
    for (std::size_t i = 0; i < 100; ++i)
      for (std::size_t k = 0; k < static_cast<std::size_t>(kept); ++k) same += after.at(i, k, 0) == before.at(i, k, 0);
    CHECK(same == 100 * static_cast<std::size_t>(kept));
  }
}

TEST_CASE("slices and label maps") {
  std::vector<BeatTemplate> beats{ecgid::testing::gaussian_beat(70.0), ecgid::testing::gaussian_beat(80.0)};
  const Tensor t = beats_to_tensor(beats, kFullSlice);
  CHECK(t.batch == 2);
  const Tensor st = slice_beats(t, kStSlice);
  CHECK(st.length == 70);
  CHECK(st.at(1, 0, 0) == beats[1].samples[40]);
  CHECK(beats_to_tensor(beats, kPqrsSlice).at(0, 0, 49) == beats[0].samples[49]);

  const LabelMap lm({"b", "a"}, {"z", "c"});
  CHECK(lm.label("a") == 0);
  CHECK(lm.label("b") == 1);
  CHECK(lm.label("c") == 2);
  CHECK(lm.subject(3) == "z");
  CHECK(lm.num_classes() == 4);
  CHECK_THROWS(lm.label("q"));
  CHECK_THROWS_AS(LabelMap({"a", "b"}, {"b"}), ConfigError);
}
