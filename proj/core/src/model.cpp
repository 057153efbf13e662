#include "segforge/model.hpp"

#include <json.hpp>

#include "segforge/error.hpp"

SEGFORGE_NAMESPACE_BEGIN

std::string to_string(Architecture arch) {
  return arch == Architecture::kUNet ? "unet" : "resunetpp";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "resunetpp") return Architecture::kResUNetPlusPlus;
  if (name == "unet") return Architecture::kUNet;
  throw ConfigError("unknown architecture '" + name + "' (expected resunetpp or unet)");
}

void ModelConfig::validate() const {
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (filters[i] == 0) throw ConfigError("filters[" + std::to_string(i) + "] must be positive");
    if (i > 0 && filters[i] < filters[i - 1]) throw ConfigError("filters must be non-decreasing");
  }
  if (input_size < 8 || input_size % 8 != 0) {
    throw ConfigError("input_size must be >= 8 and divisible by 8, got " + std::to_string(input_size));
  }
  if (arch == Architecture::kResUNetPlusPlus) {
    if (se_reduction == 0) throw ConfigError("se_reduction must be positive");
    for (std::size_t i = 0; i < 4; ++i) {
      if (filters[i] % se_reduction != 0) {
        throw ConfigError("filters[" + std::to_string(i) + "] = " + std::to_string(filters[i]) +
                          " is not divisible by se_reduction " + std::to_string(se_reduction));
      }
    }
    effective_aspp_rates(aspp_rates, input_size / 8, aspp_clamp, false);
    effective_aspp_rates(aspp_rates, input_size, aspp_clamp, false);
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["arch"] = to_string(arch);
  j["aspp_clamp"] = aspp_clamp;
  j["aspp_rates"] = aspp_rates;
  j["filters"] = filters;
  j["in_channels"] = in_channels;
  j["input_size"] = input_size;
  j["se_reduction"] = se_reduction;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const auto& v = it.value();
      if (key == "arch") {
        c.arch = parse_architecture(v.get<std::string>());
      } else if (key == "aspp_clamp") {
        c.aspp_clamp = v.get<bool>();
      } else if (key == "aspp_rates") {
        c.aspp_rates = v.get<std::vector<int>>();
      } else if (key == "filters") {
        const auto f = v.get<std::vector<std::size_t>>();
        if (f.size() != 5) throw ConfigError("filters must list exactly 5 widths");
        std::copy(f.begin(), f.end(), c.filters.begin());
      } else if (key == "in_channels") {
        c.in_channels = v.get<std::size_t>();
      } else if (key == "input_size") {
        c.input_size = v.get<std::size_t>();
      } else if (key == "se_reduction") {
        c.se_reduction = v.get<std::size_t>();
      } else {
        throw ConfigError("unknown model config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config has a value of the wrong type: ") + e.what());
  }
  return c;
}

namespace {

class ResUNetPlusPlus final : public Network {
 public:
  ResUNetPlusPlus(const ModelConfig& c, const LayerBuilder& b, const std::vector<int>& bridge_rates,
                  const std::vector<int>& head_rates) {
    const auto& f = c.filters;
    const std::size_t r = c.se_reduction;
    stem_ = StemBlock::create(b.scope("stem"), c.in_channels, f[0], r);
    enc1_ = EncoderBlock::create(b.scope("enc1"), f[0], f[1], r);
    enc2_ = EncoderBlock::create(b.scope("enc2"), f[1], f[2], r);
    enc3_ = EncoderBlock::create(b.scope("enc3"), f[2], f[3], r);
    bridge_ = Aspp::create(b.scope("bridge"), f[3], f[4], bridge_rates);
    dec1_ = DecoderBlock::create(b.scope("dec1"), f[2], f[4], f[3]);
    dec2_ = DecoderBlock::create(b.scope("dec2"), f[1], f[3], f[2]);
    dec3_ = DecoderBlock::create(b.scope("dec3"), f[0], f[2], f[1]);
    head_aspp_ = Aspp::create(b.scope("head_aspp"), f[1], f[0], head_rates);
    output_ = Conv::create(b, "output", f[0], 1, 1, true);
  }

  FeatureMaps forward(const Tensor& x, Mode mode) override {
    FeatureMaps m;
    m.stem = stem_.forward(x, mode);
    m.enc1 = enc1_.forward(m.stem, mode);
    m.enc2 = enc2_.forward(m.enc1, mode);
    m.enc3 = enc3_.forward(m.enc2, mode);
    m.bridge = bridge_.forward(m.enc3, mode);
    m.dec1 = dec1_.forward(m.enc2, m.bridge, mode);
    m.dec2 = dec2_.forward(m.enc1, m.dec1, mode);
    m.dec3 = dec3_.forward(m.stem, m.dec2, mode);
    m.head = head_aspp_.forward(m.dec3, mode);
    m.logits = output_(m.head);
    m.output = sigmoid(m.logits);
    return m;
  }

 private:
  StemBlock stem_;
  EncoderBlock enc1_, enc2_, enc3_;
  Aspp bridge_;
  DecoderBlock dec1_, dec2_, dec3_;
  Aspp head_aspp_;
  Conv output_;
};

class UNetBaseline final : public Network {
 public:
  UNetBaseline(const ModelConfig& c, const LayerBuilder& b) {
    const auto& f = c.filters;
    down0_ = DoubleConv::create(b.scope("down0"), c.in_channels, f[0]);
    down1_ = DoubleConv::create(b.scope("down1"), f[0], f[1]);
    down2_ = DoubleConv::create(b.scope("down2"), f[1], f[2]);
    bridge_ = DoubleConv::create(b.scope("bridge"), f[2], f[3]);
    up1_ = DoubleConv::create(b.scope("up1"), f[3] + f[2], f[2]);
    up2_ = DoubleConv::create(b.scope("up2"), f[2] + f[1], f[1]);
    up3_ = DoubleConv::create(b.scope("up3"), f[1] + f[0], f[0]);
    output_ = Conv::create(b, "output", f[0], 1, 1, true);
  }

  FeatureMaps forward(const Tensor& x, Mode mode) override {
    FeatureMaps m;
    m.stem = down0_.forward(x, mode);
    m.enc1 = down1_.forward(maxpool2d(m.stem, 2, 2), mode);
    m.enc2 = down2_.forward(maxpool2d(m.enc1, 2, 2), mode);
    m.bridge = bridge_.forward(maxpool2d(m.enc2, 2, 2), mode);
    m.dec1 = up1_.forward(concat_channels(upsample_nearest(m.bridge, 2), m.enc2), mode);
    m.dec2 = up2_.forward(concat_channels(upsample_nearest(m.dec1, 2), m.enc1), mode);
    m.dec3 = up3_.forward(concat_channels(upsample_nearest(m.dec2, 2), m.stem), mode);
    m.head = m.dec3;
    m.logits = output_(m.head);
    m.output = sigmoid(m.logits);
    return m;
  }

 private:
  DoubleConv down0_, down1_, down2_, bridge_, up1_, up2_, up3_;
  Conv output_;
};

}  // namespace

Model::~Model() = default;

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config_ = config;
  model.store_ = std::make_unique<ParameterStore>();
  Rng rng(seed);
  const LayerBuilder builder(*model.store_, rng);
  if (config.arch == Architecture::kResUNetPlusPlus) {
    model.bridge_rates_ = effective_aspp_rates(config.aspp_rates, config.input_size / 8, config.aspp_clamp);
    model.head_rates_ = effective_aspp_rates(config.aspp_rates, config.input_size, config.aspp_clamp);
    model.network_ = std::make_unique<ResUNetPlusPlus>(config, builder, model.bridge_rates_, model.head_rates_);
  } else {
    model.network_ = std::make_unique<UNetBaseline>(config, builder);
  }
  return model;
}

FeatureMaps Model::forward_features(const Tensor& x, Mode mode) {
  const std::size_t s = config_.input_size;
  if (x.rank() != 4 || x.dim(1) != config_.in_channels || x.dim(2) != s || x.dim(3) != s) {
    throw ContractError("model expects input [N," + std::to_string(config_.in_channels) + "," + std::to_string(s) +
                        "," + std::to_string(s) + "], got " + x.shape().str());
  }
  return network_->forward(x, mode);
}

Tensor Model::forward(const Tensor& x, Mode mode) { return forward_features(x, mode).output; }

std::size_t expected_parameter_count(const ModelConfig& c) {
  c.validate();
  const auto& f = c.filters;
  if (c.arch == Architecture::kUNet) {
    return double_conv_params(c.in_channels, f[0]) + double_conv_params(f[0], f[1]) +
           double_conv_params(f[1], f[2]) + double_conv_params(f[2], f[3]) +
           double_conv_params(f[3] + f[2], f[2]) + double_conv_params(f[2] + f[1], f[1]) +
           double_conv_params(f[1] + f[0], f[0]) + conv_params(f[0], 1, 1, true);
  }
  const std::size_t r = c.se_reduction;
  const std::size_t bridge_rates = effective_aspp_rates(c.aspp_rates, c.input_size / 8, c.aspp_clamp, false).size();
  const std::size_t head_rates = effective_aspp_rates(c.aspp_rates, c.input_size, c.aspp_clamp, false).size();
  return stem_params(c.in_channels, f[0], r) + encoder_params(f[0], f[1], r) + encoder_params(f[1], f[2], r) +
         encoder_params(f[2], f[3], r) + aspp_params(f[3], f[4], bridge_rates) + decoder_params(f[2], f[4], f[3]) +
         decoder_params(f[1], f[3], f[2]) + decoder_params(f[0], f[2], f[1]) + aspp_params(f[1], f[0], head_rates) +
         conv_params(f[0], 1, 1, true);
}

ModelConfig toy_model_config(std::size_t input_size, Architecture arch) {
  ModelConfig c;
  c.filters = {4, 8, 16, 32, 64};
  c.se_reduction = 4;
  c.input_size = input_size;
  c.arch = arch;
  return c;
}

SEGFORGE_NAMESPACE_END
