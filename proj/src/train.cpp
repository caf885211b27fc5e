#include "lesionprior/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace lesionprior {

std::uint8_t code_to_class(std::uint8_t code) {
  switch (code) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default: throw Error("label code " + std::to_string(code) + " is not a BraTS label");
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_targets(const Tensor5& logits, std::span<const std::uint8_t> targets) {
  if (targets.size() != logits.batch() * logits.spatial()) {
    throw Error("loss: target count does not match logits");
  }
  for (std::uint8_t t : targets) {
    if (t >= logits.channels()) throw Error("loss: target class out of range");
  }
}

// Softmax probabilities into `prob` (C entries) and the voxel CE.
double voxel_softmax(const Tensor5& logits, std::size_t n, std::size_t s, std::uint8_t target,
                     double* prob) {
  const std::size_t C = logits.channels();
  const std::size_t S = logits.spatial();
  const double* base = logits.data.data() + logits.offset(n, 0) + s;
  double mx = base[0];
  for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, base[c * S]);
  double z = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    prob[c] = std::exp(base[c * S] - mx);
    z += prob[c];
  }
  for (std::size_t c = 0; c < C; ++c) prob[c] /= z;
  return std::log(z) + mx - base[target * S];
}

}  // namespace

std::vector<double> voxel_cross_entropy(const Tensor5& logits,
                                        std::span<const std::uint8_t> targets) {
  check_targets(logits, targets);
  const std::size_t S = logits.spatial();
  std::vector<double> ce(targets.size());
  std::vector<double> prob(logits.channels());
  for (std::size_t n = 0; n < logits.batch(); ++n) {
    for (std::size_t s = 0; s < S; ++s) {
      ce[n * S + s] = voxel_softmax(logits, n, s, targets[n * S + s], prob.data());
    }
  }
  return ce;
}

MinedLoss hard_negative_ce(const Tensor5& logits, std::span<const std::uint8_t> targets,
                           double neg_pos_ratio) {
  if (!(neg_pos_ratio >= 0.0)) throw Error("neg_pos_ratio must be non-negative");
  MinedLoss r;
  r.voxel_ce = voxel_cross_entropy(logits, targets);
  const std::size_t total = targets.size();

  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < total; ++i) {
    if (targets[i] != 0) {
      ++r.positives;
    } else {
      negatives.push_back(i);
    }
  }
  std::size_t k = 0;
  if (r.positives == 0) {
    k = static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(total)));
  } else {
    const double want = std::floor(neg_pos_ratio * static_cast<double>(r.positives));
    k = want >= static_cast<double>(negatives.size()) ? negatives.size()
                                                       : static_cast<std::size_t>(want);
  }
  k = std::min(k, negatives.size());

  // negatives is in ascending index order; stable sort keeps lower index first on ties.
  std::stable_sort(negatives.begin(), negatives.end(),
                   [&](std::size_t a, std::size_t b) { return r.voxel_ce[a] > r.voxel_ce[b]; });
  r.selected.assign(total, 0);
  for (std::size_t i = 0; i < total; ++i) r.selected[i] = targets[i] != 0;
  for (std::size_t i = 0; i < k; ++i) r.selected[negatives[i]] = 1;
  r.negatives_selected = k;

  const std::size_t count = r.positives + k;
  if (count == 0) throw Error("hard_negative_ce: empty selection");
  const double inv = 1.0 / static_cast<double>(count);

  r.dlogits = Tensor5(logits.batch(), logits.channels(), logits.shape[2], logits.shape[3],
                      logits.shape[4]);
  const std::size_t S = logits.spatial();
  const std::size_t C = logits.channels();
  std::vector<double> prob(C);
  double sum = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    if (!r.selected[i]) continue;
    sum += r.voxel_ce[i];
    const std::size_t n = i / S, s = i % S;
    voxel_softmax(logits, n, s, targets[i], prob.data());
    double* d = r.dlogits.data.data() + r.dlogits.offset(n, 0) + s;
    for (std::size_t c = 0; c < C; ++c) {
      d[c * S] = (prob[c] - (c == targets[i] ? 1.0 : 0.0)) * inv;
    }
  }
  r.loss = sum * inv;
  return r;
}

// ---------------------------------------------------------------------------

OptState OptState::zeros_like(const NetParams& p) {
  OptState s;
  for (const auto& t : p.tensors) {
    s.m.emplace_back(t.values.size(), 0.0);
    s.v.emplace_back(t.values.size(), 0.0);
    s.vmax.emplace_back(t.values.size(), 0.0);
  }
  return s;
}

void amsgrad_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                    std::span<double> v, std::span<double> vmax, std::uint64_t step, double lr,
                    const AdamConfig& cfg) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size() ||
      vmax.size() != theta.size()) {
    throw Error("adam: buffer shapes disagree");
  }
  if (step < 1) throw Error("adam: step index is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i] + cfg.weight_decay * theta[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    vmax[i] = std::max(vmax[i], vhat);
    theta[i] -= lr * mhat / (std::sqrt(vmax[i]) + cfg.eps);
  }
}

void adam_amsgrad_step(NetParams& params, const Gradients& grads, OptState& state, double lr,
                       const AdamConfig& cfg) {
  if (grads.size() != params.tensors.size() || state.m.size() != params.tensors.size()) {
    throw Error("adam: gradient list does not match parameters");
  }
  ++state.step;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    amsgrad_update(params.tensors[t].values, grads[t], state.m[t], state.v[t], state.vmax[t],
                   state.step, lr, cfg);
  }
}

// ---------------------------------------------------------------------------

LrMode parse_lr_mode(const std::string& s) {
  if (s == "normalized") return LrMode::Normalized;
  if (s == "literal") return LrMode::Literal;
  throw Error("unknown lr mode '" + s + "' (expected normalized or literal)");
}

const char* lr_mode_name(LrMode m) { return m == LrMode::Literal ? "literal" : "normalized"; }

double lr_schedule(double epoch, double l0, double total, LrMode mode) {
  if (epoch < 0.0) throw Error("lr_schedule: negative epoch");
  if (mode == LrMode::Literal) return l0 * std::pow(0.1, epoch);
  if (!(total > 0.0)) throw Error("lr_schedule: total epochs must be positive");
  return l0 * std::pow(0.1, epoch / total);
}

Patch crop_patch(const TrainingCase& c, const Dims& corner, const Dims& size) {
  const Dims& d = c.gt.dims();
  for (int a = 0; a < 3; ++a) {
    if (size[a] < 1 || corner[a] + size[a] > d[a]) throw Error("patch does not fit in volume");
  }
  for (const auto& ch : c.input.channels) require_same_grid(ch, c.gt, "crop_patch");
  Patch p;
  p.corner = corner;
  p.size = size;
  const std::size_t S = size[0] * size[1] * size[2];
  p.channels.resize(c.input.channel_count() * S);
  p.classes.resize(S);
  for (std::size_t ch = 0; ch < c.input.channel_count(); ++ch) {
    const ScalarVolume& v = c.input.channels[ch];
    std::size_t o = ch * S;
    for (std::size_t k = 0; k < size[2]; ++k) {
      for (std::size_t j = 0; j < size[1]; ++j) {
        for (std::size_t i = 0; i < size[0]; ++i) {
          p.channels[o++] = v(corner[0] + i, corner[1] + j, corner[2] + k);
        }
      }
    }
  }
  std::size_t o = 0;
  for (std::size_t k = 0; k < size[2]; ++k) {
    for (std::size_t j = 0; j < size[1]; ++j) {
      for (std::size_t i = 0; i < size[0]; ++i) {
        p.classes[o++] = code_to_class(c.gt(corner[0] + i, corner[1] + j, corner[2] + k));
      }
    }
  }
  return p;
}

Patch sample_patch(const TrainingCase& c, const Dims& size, std::mt19937_64& rng) {
  const Dims& d = c.gt.dims();
  Dims corner{};
  for (int a = 0; a < 3; ++a) {
    if (size[a] < 1 || size[a] > d[a]) {
      throw Error("patch size " + std::to_string(size[a]) + " exceeds volume extent " +
                  std::to_string(d[a]));
    }
    std::uniform_int_distribution<std::size_t> u(0, d[a] - size[a]);
    corner[a] = u(rng);
  }
  return crop_patch(c, corner, size);
}

Tensor5 batch_tensor(const std::vector<Patch>& patches, std::size_t channels) {
  if (patches.empty()) throw Error("empty batch");
  const Dims& s = patches.front().size;
  Tensor5 t(patches.size(), channels, s[2], s[1], s[0]);
  for (std::size_t n = 0; n < patches.size(); ++n) {
    if (patches[n].size != s) throw Error("batch patches differ in size");
    std::copy(patches[n].channels.begin(), patches[n].channels.end(),
              t.data.begin() + static_cast<long>(t.offset(n, 0)));
  }
  return t;
}

Tensor5 volume_tensor(const MultiChannelVolume& v) {
  const Dims& d = v.geometry().dims;
  Tensor5 t(1, v.channel_count(), d[2], d[1], d[0]);
  for (std::size_t c = 0; c < v.channel_count(); ++c) {
    require_same_grid(v.channels.front(), v.channels[c], "volume_tensor");
    std::copy(v.channels[c].values().begin(), v.channels[c].values().end(),
              t.data.begin() + static_cast<long>(t.offset(0, c)));
  }
  return t;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  for (std::size_t s : patch_size) {
    if (s < 1) throw Error("train config: patch size must be positive");
  }
  if (batch_size < 1 || epochs < 1) throw Error("train config: batch size and epochs must be >= 1");
  if (!(l0 > 0.0) || weight_decay < 0.0) throw Error("train config: invalid learning rate or decay");
  if (!(neg_pos_ratio >= 1.0)) throw Error("train config: neg_pos_ratio must be >= 1");
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    if (j.contains("patch_size")) {
      const auto& p = j["patch_size"];
      if (p.is_array()) {
        c.patch_size = p.get<std::array<std::size_t, 3>>();
      } else {
        const auto s = p.get<std::size_t>();
        c.patch_size = {s, s, s};
      }
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.l0 = j.value("l0", c.l0);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.neg_pos_ratio = j.value("neg_pos_ratio", c.neg_pos_ratio);
    c.seed = j.value("seed", c.seed);
    if (j.contains("lr_mode")) c.lr_mode = parse_lr_mode(j["lr_mode"].get<std::string>());
    if (j.contains("network")) {
      const auto& n = j["network"];
      c.network.n_classes = n.value("n_classes", c.network.n_classes);
      c.network.base_width = n.value("base_width", c.network.base_width);
      c.network.levels = n.value("levels", c.network.levels);
      c.network.groups = n.value("groups", c.network.groups);
      c.network.dropout = n.value("dropout", c.network.dropout);
      c.network.gn_eps = n.value("gn_eps", c.network.gn_eps);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json j = {{"patch_size", c.patch_size},
                      {"batch_size", c.batch_size},
                      {"epochs", c.epochs},
                      {"l0", c.l0},
                      {"weight_decay", c.weight_decay},
                      {"neg_pos_ratio", c.neg_pos_ratio},
                      {"seed", c.seed},
                      {"lr_mode", lr_mode_name(c.lr_mode)},
                      {"network",
                       {{"n_classes", c.network.n_classes},
                        {"base_width", c.network.base_width},
                        {"levels", c.network.levels},
                        {"groups", c.network.groups},
                        {"dropout", c.network.dropout},
                        {"gn_eps", c.network.gn_eps}}}};
  return j.dump(2);
}

std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; i += batch_size) out.push_back(std::min(batch_size, n - i));
  return out;
}

TrainResult train_loop(const std::vector<TrainingCase>& dataset, const TrainConfig& config,
                       const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (dataset.empty()) throw Error("train_loop: empty dataset");
  const std::size_t channels = dataset.front().input.channel_count();
  for (const auto& c : dataset) {
    if (c.input.channel_count() != channels) {
      throw Error("train_loop: case " + c.id + " has a different channel count");
    }
  }
  UNetConfig net = config.network;
  net.in_channels = channels;
  const UNet model(net);

  TrainResult result;
  result.params = init_params(net, config.seed);
  OptState state = OptState::zeros_like(result.params);
  AdamConfig adam;
  adam.weight_decay = config.weight_decay;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(static_cast<double>(epoch), config.l0,
                                  static_cast<double>(config.epochs), config.lr_mode);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    std::size_t pos = 0;
    const auto sizes = batch_sizes(order.size(), config.batch_size);
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      std::vector<Patch> patches;
      std::vector<std::uint8_t> targets;
      for (std::size_t i = 0; i < sizes[b]; ++i) {
        patches.push_back(sample_patch(dataset[order[pos++]], config.patch_size, rng));
        targets.insert(targets.end(), patches.back().classes.begin(), patches.back().classes.end());
      }
      const Tensor5 x = batch_tensor(patches, channels);
      UNet::Cache cache;
      const Tensor5 logits = model.forward(result.params, x, true, rng, &cache);
      const MinedLoss loss = hard_negative_ce(logits, targets, config.neg_pos_ratio);
      if (!std::isfinite(loss.loss)) {
        throw TrainingDiverged("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(b) +
                               " (lr " + std::to_string(lr) + ")");
      }
      const Gradients grads = model.backward(result.params, cache, loss.dlogits);
      adam_amsgrad_step(result.params, grads, state, lr, adam);
      result.step_losses.push_back(loss.loss);
      epoch_loss += loss.loss;
    }
    const EpochLog entry{epoch, lr, epoch_loss / static_cast<double>(sizes.size())};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,lr,loss\n";
  for (const auto& e : log) out << e.epoch << ',' << e.lr << ',' << e.loss << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

// Logits [class][voxel] on the volume grid.
std::vector<std::vector<double>> volume_logits(const NetParams& params,
                                               const MultiChannelVolume& input) {
  if (input.channel_count() != params.config.in_channels) {
    throw Error("predict: input has " + std::to_string(input.channel_count()) +
                " channels, checkpoint expects " + std::to_string(params.config.in_channels));
  }
  const UNet model(params.config);
  const Dims& d = input.geometry().dims;
  const std::size_t div = params.config.divisor();
  Dims padded{};
  for (int a = 0; a < 3; ++a) padded[a] = (d[a] + div - 1) / div * div;

  const Tensor5 raw = volume_tensor(input);
  Tensor5 x(1, input.channel_count(), padded[2], padded[1], padded[0]);
  for (std::size_t c = 0; c < input.channel_count(); ++c) {
    for (std::size_t k = 0; k < d[2]; ++k) {
      for (std::size_t j = 0; j < d[1]; ++j) {
        for (std::size_t i = 0; i < d[0]; ++i) x.at(0, c, k, j, i) = raw.at(0, c, k, j, i);
      }
    }
  }
  const Tensor5 logits = model.infer(params, x);

  std::vector<std::vector<double>> out(params.config.n_classes,
                                       std::vector<double>(d[0] * d[1] * d[2]));
  for (std::size_t c = 0; c < out.size(); ++c) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < d[2]; ++k) {
      for (std::size_t j = 0; j < d[1]; ++j) {
        for (std::size_t i = 0; i < d[0]; ++i) out[c][o++] = logits.at(0, c, k, j, i);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> predict_probabilities(const NetParams& params,
                                                       const MultiChannelVolume& input) {
  auto p = volume_logits(params, input);
  const std::size_t C = p.size();
  const std::size_t S = p.front().size();
  for (std::size_t s = 0; s < S; ++s) {
    double mx = p[0][s];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, p[c][s]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      p[c][s] = std::exp(p[c][s] - mx);
      z += p[c][s];
    }
    for (std::size_t c = 0; c < C; ++c) p[c][s] /= z;
  }
  return p;
}

LabelVolume argmax_labels(const std::vector<std::vector<double>>& scores, const Geometry& g) {
  if (scores.empty() || scores.size() > kClassToCode.size()) {
    throw Error("argmax: class count must be 1..4");
  }
  LabelVolume out(g);
  if (scores.front().size() != out.size()) throw Error("argmax: score size mismatch");
  for (std::size_t s = 0; s < out.size(); ++s) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
      if (scores[c][s] > scores[best][s]) best = c;
    }
    out[s] = kClassToCode[best];
  }
  return out;
}

LabelVolume predict(const NetParams& params, const MultiChannelVolume& input) {
  return argmax_labels(volume_logits(params, input), input.geometry());
}

LabelVolume ensemble_predict(const std::vector<NetParams>& members,
                             const MultiChannelVolume& input) {
  if (members.empty()) throw Error("ensemble: no members");
  for (const auto& m : members) {
    if (!(m.config == members.front().config)) throw Error("ensemble: descriptor mismatch");
  }
  std::vector<std::vector<double>> mean;
  for (const auto& m : members) {
    const auto p = predict_probabilities(m, input);
    if (mean.empty()) {
      mean = p;
      continue;
    }
    for (std::size_t c = 0; c < p.size(); ++c) {
      for (std::size_t s = 0; s < p[c].size(); ++s) mean[c][s] += p[c][s];
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (auto& c : mean) {
    for (double& v : c) v *= inv;
  }
  return argmax_labels(mean, input.geometry());
}

}  // namespace lesionprior
