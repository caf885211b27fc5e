#include "lesionprior/unet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "lesionprior/volume.hpp"

namespace lesionprior {

void UNetConfig::validate() const {
  if (in_channels < 1 || n_classes < 1 || base_width < 1 || levels < 1) {
    throw Error("unet config: channel counts and levels must be positive");
  }
  if (levels > 8) throw Error("unet config: at most 8 levels");
  if (groups < 1 || base_width % groups != 0) {
    throw Error("unet config: group count must divide the base width");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("unet config: dropout must be in [0, 1)");
  if (!(gn_eps > 0.0)) throw Error("unet config: gn_eps must be positive");
}

std::size_t NetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

namespace {

struct Decl {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in = 0;  // 0 for non-kernel tensors
  double fill = 0.0;
};

void declare_unit(std::vector<Decl>& out, const std::string& prefix, std::size_t in,
                  std::size_t width) {
  out.push_back({prefix + ".conv.weight", {width, in, 3, 3, 3}, in * 27, 0.0});
  out.push_back({prefix + ".conv.bias", {width}, 0, 0.0});
  out.push_back({prefix + ".gn.scale", {width}, 0, 1.0});
  out.push_back({prefix + ".gn.shift", {width}, 0, 0.0});
}

std::vector<Decl> declare(const UNetConfig& c) {
  std::vector<Decl> d;
  for (std::size_t l = 0; l < c.levels; ++l) {
    const std::size_t in = l == 0 ? c.in_channels : c.width(l - 1);
    declare_unit(d, "enc" + std::to_string(l) + ".0", in, c.width(l));
    declare_unit(d, "enc" + std::to_string(l) + ".1", c.width(l), c.width(l));
  }
  for (std::size_t l = c.levels - 1; l-- > 0;) {
    declare_unit(d, "dec" + std::to_string(l) + ".0", c.width(l + 1) + c.width(l), c.width(l));
    declare_unit(d, "dec" + std::to_string(l) + ".1", c.width(l), c.width(l));
  }
  d.push_back({"head.weight", {c.n_classes, c.width(0), 1, 1, 1}, c.width(0), 0.0});
  d.push_back({"head.bias", {c.n_classes}, 0, 0.0});
  return d;
}

std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t v : s) n *= v;
  return n;
}

}  // namespace

NetParams init_params(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  NetParams p;
  p.config = config;
  std::mt19937_64 rng(seed);
  for (const Decl& d : declare(config)) {
    ParamTensor t{d.name, d.shape, std::vector<double>(product(d.shape), d.fill)};
    if (d.fan_in > 0) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(d.fan_in)));
      for (double& v : t.values) v = normal(rng);
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

UNet::UNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  std::size_t next = 0;
  auto unit = [&](std::size_t in, std::size_t out) {
    Unit u{next, next + 1, next + 2, next + 3, in, out};
    next += 4;
    return u;
  };
  for (std::size_t l = 0; l < config_.levels; ++l) {
    const std::size_t in = l == 0 ? config_.in_channels : config_.width(l - 1);
    encoder_.push_back(unit(in, config_.width(l)));
    encoder_.push_back(unit(config_.width(l), config_.width(l)));
  }
  for (std::size_t l = config_.levels - 1; l-- > 0;) {
    decoder_.push_back(unit(config_.width(l + 1) + config_.width(l), config_.width(l)));
    decoder_.push_back(unit(config_.width(l), config_.width(l)));
  }
  head_weight_ = next;
  head_bias_ = next + 1;
}

Tensor5 UNet::unit_forward(const NetParams& p, const Unit& u, const Tensor5& x,
                           UnitCache* c) const {
  Tensor5 h = conv3d_forward(x, p.tensors[u.weight].values, p.tensors[u.bias].values, u.out, 3, 1);
  h = groupnorm_forward(h, config_.groups, p.tensors[u.scale].values, p.tensors[u.shift].values,
                        config_.gn_eps, c ? &c->gn : nullptr);
  h = relu_forward(h);
  if (c) {
    c->input = x;
    c->activation = h;
  }
  return h;
}

Tensor5 UNet::unit_backward(const NetParams& p, const Unit& u, const UnitCache& c,
                            const Tensor5& dy, Gradients& g) const {
  const Tensor5 dgn = relu_backward(c.activation, dy);
  GroupNormGrads gn = groupnorm_backward(c.gn, p.tensors[u.scale].values, dgn);
  g[u.scale] = std::move(gn.dscale);
  g[u.shift] = std::move(gn.dshift);
  ConvGrads cg = conv3d_backward(c.input, p.tensors[u.weight].values, gn.dx, 3, 1);
  g[u.weight] = std::move(cg.dkernel);
  g[u.bias] = std::move(cg.dbias);
  return std::move(cg.dx);
}

Tensor5 UNet::forward(const NetParams& params, const Tensor5& x, bool train,
                      std::mt19937_64& rng, Cache* cache) const {
  if (!(params.config == config_)) throw Error("unet: parameters built for another architecture");
  if (x.channels() != config_.in_channels) {
    throw Error("unet: input has " + std::to_string(x.channels()) + " channels, network expects " +
                std::to_string(config_.in_channels));
  }
  for (int a = 2; a < 5; ++a) {
    if (x.shape[a] % config_.divisor() != 0) {
      throw Error("unet: spatial dims must be divisible by " + std::to_string(config_.divisor()));
    }
  }
  const std::size_t L = config_.levels;
  if (cache) {
    *cache = Cache{};
    cache->encoder.resize(2 * L);
    cache->dropout_masks.resize(L);
    cache->pool_shapes.resize(L - 1);
    cache->pool_argmax.resize(L - 1);
    cache->up_shapes.resize(L - 1);
    cache->up_channels.resize(L - 1);
    cache->decoder.resize(2 * (L - 1));
  }

  std::vector<Tensor5> skips(L);
  Tensor5 h = x;
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) {
      if (cache) cache->pool_shapes[l - 1] = skips[l - 1].shape;
      h = maxpool2_forward(skips[l - 1], cache ? &cache->pool_argmax[l - 1] : nullptr);
    }
    h = unit_forward(params, encoder_[2 * l], h, cache ? &cache->encoder[2 * l] : nullptr);
    h = unit_forward(params, encoder_[2 * l + 1], h, cache ? &cache->encoder[2 * l + 1] : nullptr);
    h = dropout_forward(h, config_.dropout, rng, train, cache ? &cache->dropout_masks[l] : nullptr);
    skips[l] = h;
  }
  h = std::move(skips[L - 1]);
  for (std::size_t i = 0; i + 1 < L; ++i) {
    const std::size_t l = L - 2 - i;
    if (cache) {
      cache->up_shapes[i] = h.shape;
      cache->up_channels[i] = h.channels();
    }
    const Tensor5 joined = concat_channels(upsample2_forward(h), skips[l]);
    h = unit_forward(params, decoder_[2 * i], joined, cache ? &cache->decoder[2 * i] : nullptr);
    h = unit_forward(params, decoder_[2 * i + 1], h, cache ? &cache->decoder[2 * i + 1] : nullptr);
  }
  if (cache) cache->head_input = h;
  return conv3d_forward(h, params.tensors[head_weight_].values, params.tensors[head_bias_].values,
                        config_.n_classes, 1, 0);
}

Tensor5 UNet::infer(const NetParams& params, const Tensor5& x) const {
  std::mt19937_64 unused(0);
  return forward(params, x, false, unused, nullptr);
}

Gradients UNet::backward(const NetParams& params, const Cache& cache,
                         const Tensor5& dlogits) const {
  const std::size_t L = config_.levels;
  Gradients g(params.tensors.size());

  ConvGrads head = conv3d_backward(cache.head_input, params.tensors[head_weight_].values, dlogits,
                                   1, 0);
  g[head_weight_] = std::move(head.dkernel);
  g[head_bias_] = std::move(head.dbias);
  Tensor5 dh = std::move(head.dx);

  std::vector<Tensor5> dskip(L);
  for (std::size_t i = L - 1; i-- > 0;) {
    const std::size_t l = L - 2 - i;
    dh = unit_backward(params, decoder_[2 * i + 1], cache.decoder[2 * i + 1], dh, g);
    dh = unit_backward(params, decoder_[2 * i], cache.decoder[2 * i], dh, g);
    Tensor5 dup;
    split_channels(dh, cache.up_channels[i], &dup, &dskip[l]);
    dh = upsample2_backward(dup, cache.up_shapes[i]);
  }

  for (std::size_t l = L; l-- > 0;) {
    Tensor5 dout;
    if (l == L - 1) {
      dout = std::move(dh);
    } else {
      dout = std::move(dskip[l]);
      for (std::size_t n = 0; n < dout.numel(); ++n) dout.data[n] += dh.data[n];
    }
    dout = dropout_backward(cache.dropout_masks[l], dout);
    dout = unit_backward(params, encoder_[2 * l + 1], cache.encoder[2 * l + 1], dout, g);
    dout = unit_backward(params, encoder_[2 * l], cache.encoder[2 * l], dout, g);
    if (l > 0) dh = maxpool2_backward(cache.pool_shapes[l - 1], cache.pool_argmax[l - 1], dout);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'L', 'P', 'U', 'N', 'E', 'T', '1', '\n'};

nlohmann::json config_json(const UNetConfig& c) {
  return {{"in_channels", c.in_channels}, {"n_classes", c.n_classes},
          {"base_width", c.base_width},   {"levels", c.levels},
          {"groups", c.groups},           {"dropout", c.dropout},
          {"gn_eps", c.gn_eps}};
}

UNetConfig config_from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.base_width = j.at("base_width").get<std::size_t>();
  c.levels = j.at("levels").get<std::size_t>();
  c.groups = j.at("groups").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.gn_eps = j.at("gn_eps").get<double>();
  c.validate();
  return c;
}

}  // namespace

void round_to_float(NetParams& params) {
  for (auto& t : params.tensors) {
    for (double& v : t.values) v = static_cast<double>(static_cast<float>(v));
  }
}

void save_checkpoint(const NetParams& params, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  nlohmann::json header;
  header["config"] = config_json(params.config);
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : params.tensors) header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params.tensors) {
    std::vector<float> f(t.values.begin(), t.values.end());
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

NetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError("not a lesionprior checkpoint: " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 26)) throw IoError("corrupt checkpoint header: " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
  }
  NetParams p;
  p.config = config_from_json(header.at("config"));
  const auto expected = declare(p.config);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != expected.size()) throw IoError("checkpoint tensor count mismatch: " + path);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    ParamTensor t;
    t.name = tensors[i].at("name").get<std::string>();
    t.shape = tensors[i].at("shape").get<std::vector<std::size_t>>();
    if (t.name != expected[i].name || t.shape != expected[i].shape) {
      throw IoError("checkpoint tensor '" + t.name + "' does not match the architecture: " + path);
    }
    std::vector<float> f(product(t.shape));
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint data: " + path);
    t.values.assign(f.begin(), f.end());
    p.tensors.push_back(std::move(t));
  }
  return p;
}

}  // namespace lesionprior
