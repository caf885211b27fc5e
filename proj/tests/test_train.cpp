#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "lesionprior/fixture.hpp"
#include "lesionprior/train.hpp"
#include "support.hpp"

using namespace lesionprior;

namespace {

// 1 x C x 1 x 1 x V logits from per-voxel rows.
Tensor5 logits_1d(const std::vector<std::vector<double>>& rows) {
  const std::size_t V = rows.size(), C = rows.front().size();
  Tensor5 t(1, C, 1, 1, V);
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t c = 0; c < C; ++c) t.at(0, c, 0, 0, v) = rows[v][c];
  }
  return t;
}

double ce_oracle(const std::vector<double>& z, std::size_t target) {
  double s = 0.0;
  for (double x : z) s += std::exp(x);
  return std::log(s) - z[target];
}

std::vector<TrainingCase> small_dataset(std::size_t cases, std::size_t size, std::uint64_t seed) {
  FixtureOptions o;
  o.cases = cases;
  o.size = size;
  o.seed = seed;
  std::vector<TrainingCase> out;
  for (auto& c : make_fixture(o)) {
    std::vector<ScalarVolume> mods(c.modalities.begin(), c.modalities.end());
    out.push_back({c.id, fuse_channels(normalize_modalities(mods), {}), c.gt});
  }
  return out;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("hard negative mining selects the hardest negatives") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<std::vector<double>> rows(12, std::vector<double>(4));
  for (auto& r : rows) {
    for (double& x : r) x = u(rng);
  }
  std::vector<std::uint8_t> t(12, 0);
  t[3] = 2;
  t[8] = 1;
  const MinedLoss m = hard_negative_ce(logits_1d(rows), t);
  CHECK(m.positives == 2);
  CHECK(m.negatives_selected == 6);

  std::vector<std::pair<double, std::size_t>> neg;
  for (std::size_t i = 0; i < 12; ++i) {
    if (t[i] == 0) neg.emplace_back(-ce_oracle(rows[i], 0), i);
  }
  std::sort(neg.begin(), neg.end());
  std::vector<std::uint8_t> expect(12, 0);
  expect[3] = expect[8] = 1;
  for (int k = 0; k < 6; ++k) expect[neg[k].second] = 1;
  CHECK(m.selected == expect);

  double sum = 0.0;
  for (std::size_t i = 0; i < 12; ++i) {
    if (expect[i]) sum += ce_oracle(rows[i], t[i]);
  }
  CHECK(m.loss == doctest::Approx(sum / 8.0).epsilon(1e-12));
}

TEST_CASE("mining is capped by the available negatives") {
  const std::vector<std::vector<double>> rows{{0.1, 0.2}, {0.3, -0.1}, {1.0, 0.0}};
  const MinedLoss m = hard_negative_ce(logits_1d(rows), std::vector<std::uint8_t>{1, 1, 0});
  CHECK(m.negatives_selected == 1);
  CHECK(m.selected == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("uniform logits give ln 4 per voxel") {
  const std::vector<std::vector<double>> rows(10, std::vector<double>(4, 0.7));
  std::vector<std::uint8_t> t(10, 0);
  t[0] = 3;
  const MinedLoss m = hard_negative_ce(logits_1d(rows), t);
  CHECK(m.loss == doctest::Approx(std::log(4.0)));
  for (double ce : m.voxel_ce) CHECK(ce == doctest::Approx(1.38629436));
  // equal CE everywhere: the lowest-index negatives win
  CHECK(m.selected == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("no positives keeps one percent of the voxels") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> rows(250, std::vector<double>(3));
  for (auto& r : rows) {
    for (double& x : r) x = u(rng);
  }
  const MinedLoss m = hard_negative_ce(logits_1d(rows), std::vector<std::uint8_t>(250, 0));
  CHECK(m.positives == 0);
  CHECK(m.negatives_selected == 3);
}

TEST_CASE("a large ratio reduces to plain cross entropy") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<std::vector<double>> rows(20, std::vector<double>(4));
  for (auto& r : rows) {
    for (double& x : r) x = u(rng);
  }
  std::vector<std::uint8_t> t(20, 0);
  t[1] = 1;
  t[5] = 3;
  t[11] = 2;
  const Tensor5 l = logits_1d(rows);
  const std::vector<double> ce = voxel_cross_entropy(l, t);
  const double mean = std::accumulate(ce.begin(), ce.end(), 0.0) / 20.0;
  CHECK(hard_negative_ce(l, t, 17.0 / 3.0).loss == doctest::Approx(mean).epsilon(1e-12));
  CHECK(hard_negative_ce(l, t, 1e6).loss == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("mined set maximizes the loss over negative subsets of equal size") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t V = 6 + trial % 7;  // up to 12 voxels
    std::vector<std::vector<double>> rows(V, std::vector<double>(3));
    for (auto& r : rows) {
      for (double& x : r) x = u(rng);
    }
    std::vector<std::uint8_t> t(V, 0);
    t[trial % V] = 1 + trial % 2;
    if (trial % 3 == 0) t[(trial + 1) % V] = 2;
    const MinedLoss m = hard_negative_ce(logits_1d(rows), t);
    const std::size_t k = m.negatives_selected;
    CHECK(k == std::min<std::size_t>(3 * m.positives, V - m.positives));

    std::vector<std::size_t> negs;
    for (std::size_t i = 0; i < V; ++i) {
      if (t[i] == 0) negs.push_back(i);
    }
    double chosen = 0.0;
    for (std::size_t i : negs) chosen += m.selected[i] ? m.voxel_ce[i] : 0.0;
    // Enumerate every k-subset of the negatives.
    double best = -1.0;
    for (std::uint32_t mask = 0; mask < (1u << negs.size()); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
      double s = 0.0;
      for (std::size_t b = 0; b < negs.size(); ++b) {
        if (mask & (1u << b)) s += m.voxel_ce[negs[b]];
      }
      best = std::max(best, s);
    }
    CHECK(chosen == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("mined loss gradient matches finite differences") {
  std::mt19937_64 rng(5);
  Tensor5 l = testing::random_tensor({2, 4, 2, 2, 3}, rng, -2.0, 2.0);
  std::vector<std::uint8_t> t(24, 0);
  t[2] = 3;
  t[13] = 1;
  t[20] = 2;
  const MinedLoss base = hard_negative_ce(l, t);
  auto loss = [&] { return hard_negative_ce(l, t).loss; };
  // Selection is locally constant, so the mined loss is smooth here.
  CHECK(testing::max_gradient_error(l.data, base.dlogits.data, loss) < 1e-4);
}

TEST_CASE("AMSGrad step") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> theta{0.0}, g{0.1}, m{0.0}, v{0.0}, vmax{0.0};
  amsgrad_update(theta, g, m, v, vmax, 1, 1e-3, cfg);
  // m_hat = g and v_hat = g^2 on the first step.
  CHECK(std::abs(theta[0] - (-1e-3 * 0.1 / (0.1 + 1e-8))) < 1e-12);
  CHECK(std::abs(theta[0] + 9.99999e-4) < 1e-9);

  std::vector<double> th{1.5, -2.0}, zero{0.0, 0.0}, m2{0, 0}, v2{0, 0}, x2{0, 0};
  for (std::uint64_t s = 1; s <= 5; ++s) amsgrad_update(th, zero, m2, v2, x2, s, 1e-2, cfg);
  CHECK(th == std::vector<double>{1.5, -2.0});

  cfg.weight_decay = 0.1;
  std::vector<double> th3{2.0}, m3{0}, v3{0}, x3{0};
  amsgrad_update(th3, std::vector<double>{0.0}, m3, v3, x3, 1, 1e-3, cfg);
  CHECK(th3[0] == doctest::Approx(2.0 - 1e-3 * 0.2 / (0.2 + 1e-8)));

  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.0, 3.0);
  std::vector<double> p(16, 0.5), mm(16), vv(16), vx(16), prev(16, 0.0);
  bool monotone = true;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    std::vector<double> grad(16);
    const double sc = scale(rng);
    for (double& x : grad) x = sc * n(rng);
    amsgrad_update(p, grad, mm, vv, vx, s, 1e-3, AdamConfig{});
    for (std::size_t i = 0; i < 16; ++i) {
      monotone = monotone && vx[i] >= prev[i] && vv[i] >= 0.0;
      prev[i] = vx[i];
    }
  }
  CHECK(monotone);
}

TEST_CASE("learning-rate schedule") {
  CHECK(lr_schedule(0, 1e-3, 300, LrMode::Normalized) == doctest::Approx(1e-3));
  CHECK(lr_schedule(0, 1e-3, 300, LrMode::Literal) == doctest::Approx(1e-3));
  CHECK(lr_schedule(300, 1e-3, 300, LrMode::Normalized) == doctest::Approx(1e-4));
  CHECK(lr_schedule(2, 1e-3, 300, LrMode::Literal) == doctest::Approx(1e-5));
  for (LrMode mode : {LrMode::Normalized, LrMode::Literal}) {
    for (int e = 0; e < 300; ++e) CHECK(lr_schedule(e + 1, 1e-3, 300, mode) <= lr_schedule(e, 1e-3, 300, mode));
  }
  CHECK(parse_lr_mode("literal") == LrMode::Literal);
  CHECK_THROWS_AS(parse_lr_mode("cosine"), Error);
}

TEST_CASE("patch sampling") {
  const auto data = small_dataset(1, 8, 3);
  const TrainingCase& c = data.front();
  std::mt19937_64 rng(1);
  const Patch full = sample_patch(c, {8, 8, 8}, rng);
  CHECK(full.corner == Dims{0, 0, 0});
  CHECK(batch_tensor({full}, 4).data == volume_tensor(c.input).data);

  std::mt19937_64 a(9), b(9);
  CHECK(sample_patch(c, {4, 4, 4}, a).corner == sample_patch(c, {4, 4, 4}, b).corner);
  CHECK_THROWS_AS(sample_patch(c, {9, 4, 4}, a), Error);

  // 4 possible corners per axis for a 5-voxel patch in 8 voxels.
  std::array<int, 4> freq{};
  std::mt19937_64 r(17);
  for (int i = 0; i < 10000; ++i) ++freq[sample_patch(c, {5, 1, 1}, r).corner[0]];
  double chi2 = 0.0;
  for (int f : freq) chi2 += (f - 2500.0) * (f - 2500.0) / 2500.0;
  CHECK(chi2 < 16.27);  // 3 degrees of freedom, p = 0.001

  const Patch p = crop_patch(c, {1, 2, 3}, {2, 2, 2});
  CHECK(p.channels[0] == c.input.channels[0](1, 2, 3));
  CHECK(p.channels[8 + 7] == c.input.channels[1](2, 3, 4));
  CHECK(p.classes[7] == code_to_class(c.gt(2, 3, 4)));
}

TEST_CASE("batch partition") {
  CHECK(batch_sizes(3, 2) == std::vector<std::size_t>{2, 1});
  CHECK(batch_sizes(6, 2) == std::vector<std::size_t>{2, 2, 2});
  CHECK(batch_sizes(1, 4) == std::vector<std::size_t>{1});
}

TEST_CASE("training config JSON") {
  TrainConfig c;
  c.patch_size = {16, 24, 32};
  c.epochs = 7;
  c.l0 = 0.02;
  c.lr_mode = LrMode::Literal;
  c.network.base_width = 4;
  const TrainConfig r = train_config_from_json(train_config_to_json(c));
  CHECK(r.patch_size == c.patch_size);
  CHECK(r.epochs == 7);
  CHECK(r.l0 == 0.02);
  CHECK(r.lr_mode == LrMode::Literal);
  CHECK(r.network.base_width == 4);
  CHECK(train_config_from_json(R"({"patch_size": 16})").patch_size == Dims{16, 16, 16});
  CHECK_THROWS_AS(train_config_from_json(R"({"batch_size": 0})"), Error);
  CHECK_THROWS_AS(train_config_from_json("{"), Error);
}

TEST_CASE("training loop") {
  const auto data = small_dataset(3, 16, 5);
  TrainConfig c;
  c.patch_size = {16, 16, 16};
  c.epochs = 2;
  c.l0 = 1e-2;
  c.seed = 4;
  c.network.base_width = 4;
  c.network.levels = 2;

  SUBCASE("three cases at batch size 2 run batches of 2 and 1") {
    const TrainResult r = train_loop(data, c);
    CHECK(r.step_losses.size() == 4);
    CHECK(r.log.size() == 2);
    CHECK(r.log[1].lr < r.log[0].lr);
  }

  SUBCASE("same seed gives identical checkpoints") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "lesionprior_train_test";
    fs::create_directories(dir);
    save_checkpoint(train_loop(data, c).params, (dir / "a.ckpt").string());
    save_checkpoint(train_loop(data, c).params, (dir / "b.ckpt").string());
    c.seed = 5;
    save_checkpoint(train_loop(data, c).params, (dir / "c.ckpt").string());
    CHECK(file_bytes((dir / "a.ckpt").string()) == file_bytes((dir / "b.ckpt").string()));
    CHECK(file_bytes((dir / "a.ckpt").string()) != file_bytes((dir / "c.ckpt").string()));
    fs::remove_all(dir);
  }

  SUBCASE("loss on a fixed batch falls after 50 steps") {
    const std::vector<TrainingCase> two(data.begin(), data.begin() + 2);
    c.epochs = 50;
    c.network.dropout = 0.0;
    auto batch_loss = [&](const NetParams& p) {
      std::vector<Patch> patches;
      std::vector<std::uint8_t> targets;
      for (const auto& tc : two) {
        patches.push_back(crop_patch(tc, {0, 0, 0}, {16, 16, 16}));
        targets.insert(targets.end(), patches.back().classes.begin(), patches.back().classes.end());
      }
      return hard_negative_ce(UNet(p.config).infer(p, batch_tensor(patches, 4)), targets).loss;
    };
    UNetConfig net = c.network;
    net.in_channels = 4;
    const double before = batch_loss(init_params(net, c.seed));
    const double after = batch_loss(train_loop(two, c).params);
    CHECK(after < 0.5 * before);
  }

  SUBCASE("inconsistent inputs") {
    CHECK_THROWS_AS(train_loop({}, c), Error);
    auto mixed = data;
    mixed[1].input.channels.pop_back();
    CHECK_THROWS_AS(train_loop(mixed, c), Error);
  }
}

TEST_CASE("prediction") {
  UNetConfig cfg;
  cfg.in_channels = 2;
  cfg.base_width = 4;
  cfg.levels = 3;
  NetParams p = init_params(cfg, 1);
  const Geometry g = Geometry::with_spacing({5, 6, 7}, {1, 1, 1});
  MultiChannelVolume in;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int c = 0; c < 2; ++c) {
    ScalarVolume v(g);
    for (double& x : v.values()) x = n(rng);
    in.channels.push_back(v);
    in.names.push_back("c" + std::to_string(c));
  }

  CHECK(predict(p, in).dims() == g.dims);
  CHECK(predict(p, in) == predict(p, in));

  auto& head_w = p.tensors[p.tensors.size() - 2].values;
  auto& head_b = p.tensors.back().values;
  std::fill(head_w.begin(), head_w.end(), 0.0);
  head_b = {10.0, 0.0, 0.0, 0.0};
  {
    const LabelVolume out = predict(p, in);
    for (auto x : out.data()) CHECK(x == 0);
  }
  head_b = {0.0, 5.0, 5.0, 5.0};  // tie between classes 1..3
  {
    const LabelVolume out = predict(p, in);
    for (auto x : out.data()) CHECK(x == 1);
  }
  head_b = {0.0, 0.0, 0.0, 5.0};
  {
    const LabelVolume out = predict(p, in);
    for (auto x : out.data()) CHECK(x == 4);
  }

  MultiChannelVolume wrong = in;
  wrong.channels.pop_back();
  CHECK_THROWS_AS(predict(p, wrong), Error);
}

TEST_CASE("ensemble averages member probabilities") {
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.base_width = 4;
  cfg.levels = 1;
  const Geometry g = Geometry::with_spacing({2, 1, 1}, {1, 1, 1});
  MultiChannelVolume in;
  in.channels.emplace_back(g, std::vector<double>{-1.0, 2.0});
  in.names = {"x"};

  std::vector<NetParams> members;
  for (std::uint64_t s : {3, 4, 5}) {
    NetParams p = init_params(cfg, s);
    std::mt19937_64 rng(s);
    std::normal_distribution<double> n(0.0, 2.0);
    for (double& b : p.tensors.back().values) b = n(rng);  // spread the head biases
    members.push_back(p);
  }

  const LabelVolume single = ensemble_predict({members[0]}, in);
  CHECK(single == predict(members[0], in));
  CHECK(ensemble_predict({members[1], members[1], members[1]}, in) == predict(members[1], in));

  std::vector<std::vector<double>> mean(4, std::vector<double>(2, 0.0));
  for (const auto& m : members) {
    const auto pr = predict_probabilities(m, in);
    for (int c = 0; c < 4; ++c) {
      for (int v = 0; v < 2; ++v) mean[c][v] += pr[c][v] / 3.0;
    }
  }
  const LabelVolume e = ensemble_predict(members, in);
  for (int v = 0; v < 2; ++v) {
    int best = 0;
    for (int c = 1; c < 4; ++c) {
      if (mean[c][v] > mean[best][v]) best = c;
    }
    CHECK(e[v] == kClassToCode[best]);
  }

  UNetConfig other = cfg;
  other.base_width = 8;
  CHECK_THROWS_AS(ensemble_predict({members[0], init_params(other, 1)}, in), Error);
  CHECK_THROWS_AS(ensemble_predict({}, in), Error);
}
