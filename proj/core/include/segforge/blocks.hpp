#pragma once

// Composite building blocks of the ResUNet++ network.
//
// Convolutions that feed directly into a batch norm carry no bias (the norm's
// mean subtraction would cancel it). Parameter counts per block, with
// conv(i,o,k,b) = i*o*k*k + (b ? o : 0) and bn(c) = 2c:
//
//   squeeze_excite(C, r)    conv(C,C/r,1,b) + conv(C/r,C,1,b)
//   stem(Cin, f)            conv(Cin,f,3) + bn(f) + conv(f,f,3,b) + conv(Cin,f,1) + bn(f) + se(f)
//   residual(C, f)          bn(C) + conv(C,f,3) + bn(f) + conv(f,f,3,b) + conv(C,f,1) + bn(f)
//   encoder(C, f)           residual(C, f) + se(f)
//   aspp(C, o, R rates)     R * (conv(C,o,3) + bn(o)) + conv(o,o,1,b)
//   attention(Ce, Cd)       bn(Ce) + conv(Ce,Cd,3) + bn(Cd) + conv(Cd,Cd,3) + bn(Cd) + conv(Cd,Cd,3,b)
//   decoder(Ce, Cd, f)      attention(Ce, Cd) + residual(Cd + Ce, f)

#include <cstddef>
#include <string>
#include <vector>

#include "segforge/layers.hpp"

SEGFORGE_NAMESPACE_BEGIN

/// Channel gate: sigmoid(W2 relu(W1 avgpool(x))) applied per channel.
struct SqueezeExcite {
  Conv reduce;  // C -> C/r, 1x1
  Conv expand;  // C/r -> C, 1x1

  static SqueezeExcite create(const LayerBuilder& b, std::size_t channels, std::size_t reduction);

  /// The [N, C, 1, 1] gate values in (0, 1).
  Tensor gate(const Tensor& x) const;
  Tensor forward(const Tensor& x) const;
};

/// Full pre-activation residual unit:
/// x -> BN -> ReLU -> conv3x3(stride) -> BN -> ReLU -> conv3x3, plus a
/// conv1x1(stride) -> BN projection shortcut.
struct ResidualUnit {
  BatchNorm bn1;
  Conv conv1;
  BatchNorm bn2;
  Conv conv2;
  Conv shortcut;
  BatchNorm shortcut_bn;

  static ResidualUnit create(const LayerBuilder& b, std::size_t in, std::size_t out, int stride);

  Tensor forward(const Tensor& x, Mode mode);
};

/// conv3x3 -> BN -> ReLU -> conv3x3 with a conv1x1 -> BN shortcut, then
/// squeeze-and-excitation. Keeps the spatial size.
struct StemBlock {
  Conv conv1;
  BatchNorm bn1;
  Conv conv2;
  Conv shortcut;
  BatchNorm shortcut_bn;
  SqueezeExcite se;

  static StemBlock create(const LayerBuilder& b, std::size_t in, std::size_t out, std::size_t se_reduction);

  Tensor forward(const Tensor& x, Mode mode);
};

/// Residual unit with stride 2 followed by squeeze-and-excitation. Halves H and W.
struct EncoderBlock {
  ResidualUnit unit;
  SqueezeExcite se;

  static EncoderBlock create(const LayerBuilder& b, std::size_t in, std::size_t out, std::size_t se_reduction);

  Tensor forward(const Tensor& x, Mode mode);
};

/// Parallel dilated 3x3 conv + BN branches, summed, then a 1x1 fusion conv.
struct Aspp {
  std::vector<int> rates;
  std::vector<Conv> branches;
  std::vector<BatchNorm> norms;
  Conv fuse;

  static Aspp create(const LayerBuilder& b, std::size_t in, std::size_t out, const std::vector<int>& rates);

  Tensor forward(const Tensor& x, Mode mode);
};

/// Attention over a decoder feature d using the encoder skip e (2x spatial):
/// e' = maxpool2(conv3x3(ReLU(BN(e)))), d' = conv3x3(ReLU(BN(d))),
/// a = conv3x3(ReLU(BN(e' + d'))), output = a * d elementwise.
struct AttentionBlock {
  BatchNorm skip_bn;
  Conv skip_conv;  // Ce -> Cd
  BatchNorm feature_bn;
  Conv feature_conv;  // Cd -> Cd
  BatchNorm attention_bn;
  Conv attention_conv;  // Cd -> Cd

  static AttentionBlock create(const LayerBuilder& b, std::size_t skip_channels, std::size_t channels);

  Tensor forward(const Tensor& skip, const Tensor& x, Mode mode);
};

/// attention -> nearest upsample x2 -> concat with skip -> residual unit.
struct DecoderBlock {
  AttentionBlock attention;
  ResidualUnit unit;

  static DecoderBlock create(const LayerBuilder& b, std::size_t skip_channels, std::size_t channels,
                             std::size_t out);

  Tensor forward(const Tensor& skip, const Tensor& x, Mode mode);
};

/// conv3x3 -> BN -> ReLU, twice. Building block of the plain U-Net baseline.
struct DoubleConv {
  Conv conv1;
  BatchNorm bn1;
  Conv conv2;
  BatchNorm bn2;

  static DoubleConv create(const LayerBuilder& b, std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x, Mode mode);
};

/// Rates kept for an ASPP whose input has the given spatial extent. With
/// clamp, rates whose effective kernel 2d+1 exceeds the extent are dropped (a
/// warning is logged) and the smallest rate is always kept; without clamp such a
/// rate is a ConfigError naming it.
std::vector<int> effective_aspp_rates(const std::vector<int>& rates, std::size_t extent, bool clamp,
                                      bool warn = true);

constexpr std::size_t se_params(std::size_t c, std::size_t r) {
  return conv_params(c, c / r, 1, true) + conv_params(c / r, c, 1, true);
}
constexpr std::size_t residual_params(std::size_t in, std::size_t out) {
  return bn_params(in) + conv_params(in, out, 3, false) + bn_params(out) + conv_params(out, out, 3, true) +
         conv_params(in, out, 1, false) + bn_params(out);
}
constexpr std::size_t stem_params(std::size_t in, std::size_t out, std::size_t r) {
  return conv_params(in, out, 3, false) + bn_params(out) + conv_params(out, out, 3, true) +
         conv_params(in, out, 1, false) + bn_params(out) + se_params(out, r);
}
constexpr std::size_t encoder_params(std::size_t in, std::size_t out, std::size_t r) {
  return residual_params(in, out) + se_params(out, r);
}
constexpr std::size_t aspp_params(std::size_t in, std::size_t out, std::size_t rate_count) {
  return rate_count * (conv_params(in, out, 3, false) + bn_params(out)) + conv_params(out, out, 1, true);
}
constexpr std::size_t attention_params(std::size_t skip, std::size_t c) {
  return bn_params(skip) + conv_params(skip, c, 3, false) + bn_params(c) + conv_params(c, c, 3, false) +
         bn_params(c) + conv_params(c, c, 3, true);
}
constexpr std::size_t decoder_params(std::size_t skip, std::size_t c, std::size_t out) {
  return attention_params(skip, c) + residual_params(c + skip, out);
}
constexpr std::size_t double_conv_params(std::size_t in, std::size_t out) {
  return conv_params(in, out, 3, false) + bn_params(out) + conv_params(out, out, 3, false) + bn_params(out);
}

SEGFORGE_NAMESPACE_END
