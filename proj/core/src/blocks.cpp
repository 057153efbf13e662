#include "segforge/blocks.hpp"

#include <algorithm>
#include <string>

#include "segforge/error.hpp"
#include "segforge/log.hpp"

SEGFORGE_NAMESPACE_BEGIN

namespace {

void require_spatial_ratio(const Tensor& skip, const Tensor& x, const char* block) {
  if (skip.rank() != 4 || x.rank() != 4 || skip.dim(0) != x.dim(0) || skip.dim(2) != 2 * x.dim(2) ||
      skip.dim(3) != 2 * x.dim(3)) {
    throw ContractError(std::string(block) + ": skip " + skip.shape().str() +
                        " must be exactly twice the spatial size of " + x.shape().str());
  }
}

}  // namespace

SqueezeExcite SqueezeExcite::create(const LayerBuilder& b, std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels < reduction) {
    throw ConfigError("squeeze-excite at " + b.qualified("se") + ": " + std::to_string(channels) +
                      " channels cannot be reduced by " + std::to_string(reduction));
  }
  if (channels % reduction != 0) {
    throw ConfigError("squeeze-excite at " + b.qualified("se") + ": " + std::to_string(channels) +
                      " channels not divisible by reduction " + std::to_string(reduction));
  }
  const LayerBuilder se = b.scope("se");
  SqueezeExcite block;
  block.reduce = Conv::create(se, "reduce", channels, channels / reduction, 1, true);
  block.expand = Conv::create(se, "expand", channels / reduction, channels, 1, true);
  return block;
}

Tensor SqueezeExcite::gate(const Tensor& x) const {
  return sigmoid(expand(relu(reduce(global_avg_pool(x)))));
}

Tensor SqueezeExcite::forward(const Tensor& x) const { return mul_channel(x, gate(x)); }

ResidualUnit ResidualUnit::create(const LayerBuilder& b, std::size_t in, std::size_t out, int stride) {
  ResidualUnit u;
  u.bn1 = BatchNorm::create(b, "bn1", in);
  u.conv1 = Conv::create3x3(b, "conv1", in, out, false, stride);
  u.bn2 = BatchNorm::create(b, "bn2", out);
  u.conv2 = Conv::create3x3(b, "conv2", out, out, true);
  u.shortcut = Conv::create(b, "shortcut", in, out, 1, false, Conv2dOptions{stride, 1, 0});
  u.shortcut_bn = BatchNorm::create(b, "shortcut_bn", out);
  return u;
}

Tensor ResidualUnit::forward(const Tensor& x, Mode mode) {
  Tensor main = conv1(relu(bn1(x, mode)));
  main = conv2(relu(bn2(main, mode)));
  Tensor skip = shortcut_bn(shortcut(x), mode);
  return add(main, skip);
}

StemBlock StemBlock::create(const LayerBuilder& b, std::size_t in, std::size_t out, std::size_t se_reduction) {
  StemBlock s;
  s.conv1 = Conv::create3x3(b, "conv1", in, out, false);
  s.bn1 = BatchNorm::create(b, "bn1", out);
  s.conv2 = Conv::create3x3(b, "conv2", out, out, true);
  s.shortcut = Conv::create(b, "shortcut", in, out, 1, false);
  s.shortcut_bn = BatchNorm::create(b, "shortcut_bn", out);
  s.se = SqueezeExcite::create(b, out, se_reduction);
  return s;
}

Tensor StemBlock::forward(const Tensor& x, Mode mode) {
  Tensor main = conv2(relu(bn1(conv1(x), mode)));
  Tensor skip = shortcut_bn(shortcut(x), mode);
  return se.forward(add(main, skip));
}

EncoderBlock EncoderBlock::create(const LayerBuilder& b, std::size_t in, std::size_t out, std::size_t se_reduction) {
  EncoderBlock e;
  e.unit = ResidualUnit::create(b, in, out, 2);
  e.se = SqueezeExcite::create(b, out, se_reduction);
  return e;
}

Tensor EncoderBlock::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ContractError("encoder block needs even spatial extents, got " + x.shape().str());
  }
  return se.forward(unit.forward(x, mode));
}

std::vector<int> effective_aspp_rates(const std::vector<int>& rates, std::size_t extent, bool clamp, bool warn) {
  if (rates.empty()) throw ConfigError("ASPP needs at least one dilation rate");
  for (int r : rates) {
    if (r < 1) throw ConfigError("ASPP rate " + std::to_string(r) + " must be >= 1");
  }
  std::vector<int> kept, dropped;
  for (int r : rates) {
    const std::size_t span = 2 * static_cast<std::size_t>(r) + 1;
    if (span <= extent) {
      kept.push_back(r);
    } else if (clamp) {
      dropped.push_back(r);
    } else {
      throw ConfigError("ASPP rate " + std::to_string(r) + " too large for feature map extent " +
                        std::to_string(extent) + " (effective kernel " + std::to_string(span) + ")");
    }
  }
  if (kept.empty()) {
    // Nothing fits: fall back to the narrowest rate, which is then not dropped.
    const int smallest = *std::min_element(rates.begin(), rates.end());
    kept.push_back(smallest);
    dropped.erase(std::find(dropped.begin(), dropped.end(), smallest));
  }
  if (warn) {
    for (int r : dropped) {
      log_warning("ASPP rate " + std::to_string(r) + " dropped: effective kernel " + std::to_string(2 * r + 1) +
                  " exceeds feature map extent " + std::to_string(extent));
    }
  }
  return kept;
}

Aspp Aspp::create(const LayerBuilder& b, std::size_t in, std::size_t out, const std::vector<int>& rates) {
  if (rates.empty()) throw ConfigError("ASPP at " + b.qualified("") + " needs at least one rate");
  Aspp a;
  a.rates = rates;
  for (int r : rates) {
    if (r < 1) throw ConfigError("ASPP rate " + std::to_string(r) + " must be >= 1");
    const std::string name = "rate" + std::to_string(r);
    a.branches.push_back(Conv::create3x3(b, name + ".conv", in, out, false, 1, r));
    a.norms.push_back(BatchNorm::create(b, name + ".bn", out));
  }
  a.fuse = Conv::create(b, "fuse", out, out, 1, true);
  return a;
}

Tensor Aspp::forward(const Tensor& x, Mode mode) {
  Tensor acc;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    Tensor branch = norms[i](branches[i](x), mode);
    acc = acc.defined() ? add(acc, branch) : branch;
  }
  return fuse(acc);
}

AttentionBlock AttentionBlock::create(const LayerBuilder& b, std::size_t skip_channels, std::size_t channels) {
  AttentionBlock a;
  a.skip_bn = BatchNorm::create(b, "skip_bn", skip_channels);
  a.skip_conv = Conv::create3x3(b, "skip_conv", skip_channels, channels, false);
  a.feature_bn = BatchNorm::create(b, "feature_bn", channels);
  a.feature_conv = Conv::create3x3(b, "feature_conv", channels, channels, false);
  a.attention_bn = BatchNorm::create(b, "attention_bn", channels);
  a.attention_conv = Conv::create3x3(b, "attention_conv", channels, channels, true);
  return a;
}

Tensor AttentionBlock::forward(const Tensor& skip, const Tensor& x, Mode mode) {
  require_spatial_ratio(skip, x, "attention block");
  Tensor from_skip = maxpool2d(skip_conv(relu(skip_bn(skip, mode))), 2, 2);
  Tensor from_x = feature_conv(relu(feature_bn(x, mode)));
  Tensor map = attention_conv(relu(attention_bn(add(from_skip, from_x), mode)));
  return mul(map, x);
}

DecoderBlock DecoderBlock::create(const LayerBuilder& b, std::size_t skip_channels, std::size_t channels,
                                  std::size_t out) {
  DecoderBlock d;
  d.attention = AttentionBlock::create(b.scope("attention"), skip_channels, channels);
  d.unit = ResidualUnit::create(b.scope("unit"), channels + skip_channels, out, 1);
  return d;
}

Tensor DecoderBlock::forward(const Tensor& skip, const Tensor& x, Mode mode) {
  require_spatial_ratio(skip, x, "decoder block");
  Tensor attended = attention.forward(skip, x, mode);
  Tensor merged = concat_channels(upsample_nearest(attended, 2), skip);
  return unit.forward(merged, mode);
}

DoubleConv DoubleConv::create(const LayerBuilder& b, std::size_t in, std::size_t out) {
  DoubleConv d;
  d.conv1 = Conv::create3x3(b, "conv1", in, out, false);
  d.bn1 = BatchNorm::create(b, "bn1", out);
  d.conv2 = Conv::create3x3(b, "conv2", out, out, false);
  d.bn2 = BatchNorm::create(b, "bn2", out);
  return d;
}

Tensor DoubleConv::forward(const Tensor& x, Mode mode) {
  return relu(bn2(conv2(relu(bn1(conv1(x), mode))), mode));
}

SEGFORGE_NAMESPACE_END
