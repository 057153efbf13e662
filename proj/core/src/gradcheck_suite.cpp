#include "segforge/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <set>
#include <sstream>

#include "segforge/blocks.hpp"
#include "segforge/error.hpp"
#include "segforge/losses.hpp"
#include "segforge/model.hpp"
#include "segforge/ops.hpp"

SEGFORGE_NAMESPACE_BEGIN

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

// Values with magnitude in [0.1, 1]: relu is smooth at every one of them.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t(shape);
  for (Real& v : t.data()) v = static_cast<Real>((rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 1.0));
  return t;
}

// A shuffled ramp: distinct values 0.1 apart, so no max window has a near tie.
Tensor distinct_values(Shape shape, Rng& rng) {
  Tensor t(shape);
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<Real>(0.1 * static_cast<double>(i));
  for (std::size_t i = d.size() - 1; i > 0; --i) std::swap(d[i], d[rng.below(i + 1)]);
  return t;
}

Tensor binary_mask(Shape shape, Rng& rng) {
  Tensor t(shape);
  for (Real& v : t.data()) v = rng.coin() ? Real{1} : Real{0};
  return t;
}

// sum(f * r) for a fixed random r, so every output element carries weight.
struct Projection {
  Tensor r;
  Tensor operator()(const Tensor& y) {
    if (!r.defined()) {
      Rng rng(0x9e0f);
      r = random_tensor(y.shape(), rng);
    }
    return sum(mul(y, r));
  }
};

GradCheckReport check(const std::function<Tensor()>& f, std::vector<NamedTensor> inputs,
                      const GradCheckOptions& options) {
  auto project = std::make_shared<Projection>();
  return check_gradients([f, project] { return (*project)(f()); }, inputs, options);
}

std::vector<NamedTensor> parameters_of(const ParameterStore& store) {
  std::vector<NamedTensor> out;
  for (const auto& p : store.parameters()) out.push_back({p.name, p.value});
  return out;
}

// Deep compositions of relu and batch norm put activation kinks close to
// almost any point; see GradCheckOptions for the two safeguards.
GradCheckOptions composite(GradCheckOptions o) {
  o.adaptive_step = true;
  o.retry_steps = true;
  return o;
}

GradCheckCase op(std::string name, std::function<GradCheckReport(const GradCheckOptions&)> run) {
  return {std::move(name), "op", std::move(run)};
}

// Builds a block in its own store; check covers the input and all parameters.
template <typename Block, typename Make, typename Forward>
GradCheckCase block(std::string name, Shape input, Make make, Forward forward) {
  return {name, "block", [=](const GradCheckOptions& o) {
            ParameterStore store;
            Rng rng(derive_seed(7, hash_string(name)));
            LayerBuilder b(store, rng, name);
            auto blk = std::make_shared<Block>(make(b));
            Tensor x = random_tensor(input, rng);
            auto inputs = parameters_of(store);
            inputs.insert(inputs.begin(), {"x", x});
            return check([blk, x, forward] { return forward(*blk, x); }, inputs, composite(o));
          }};
}

GradCheckCase network(std::string name, Architecture arch) {
  return {name, "model", [=](const GradCheckOptions& o) {
            auto model = std::make_shared<Model>(Model::build(toy_model_config(16, arch), 11));
            Rng rng(derive_seed(13, hash_string(name)));
            Tensor x = random_tensor(Shape{2, 3, 16, 16}, rng, 0.0, 1.0);
            Tensor target = binary_mask(Shape{2, 1, 16, 16}, rng);
            auto inputs = parameters_of(model->store());
            inputs.insert(inputs.begin(), {"x", x});
            GradCheckOptions opts = o;
            opts.max_coordinates = kModelCoordinatesPerTensor;
            opts.directional = true;
            opts.adaptive_step = true;
            opts.retry_steps = true;
            return check_gradients([model, x, target] { return dice_loss(model->forward(x, Mode::kTrain), target); },
                                   inputs, opts);
          }};
}

}  // namespace

std::vector<GradCheckCase> gradcheck_cases() {
  std::vector<GradCheckCase> cases;

  cases.push_back(op("conv2d", [](const GradCheckOptions& o) {
    Rng rng(1);
    Tensor x = random_tensor(Shape{2, 3, 6, 6}, rng), w = random_tensor(Shape{4, 3, 3, 3}, rng),
           b = random_tensor(Shape{4}, rng);
    return check([=] { return conv2d(x, w, b, {1, 1, 1}); }, {{"x", x}, {"weight", w}, {"bias", b}}, o);
  }));
  cases.push_back(op("conv2d_strided", [](const GradCheckOptions& o) {
    Rng rng(2);
    Tensor x = random_tensor(Shape{2, 2, 7, 7}, rng), w = random_tensor(Shape{3, 2, 3, 3}, rng);
    return check([=] { return conv2d(x, w, Tensor(), {2, 1, 1}); }, {{"x", x}, {"weight", w}}, o);
  }));
  cases.push_back(op("conv2d_dilated", [](const GradCheckOptions& o) {
    Rng rng(3);
    Tensor x = random_tensor(Shape{1, 2, 8, 8}, rng), w = random_tensor(Shape{2, 2, 3, 3}, rng),
           b = random_tensor(Shape{2}, rng);
    return check([=] { return conv2d(x, w, b, {1, 2, 2}); }, {{"x", x}, {"weight", w}, {"bias", b}}, o);
  }));
  cases.push_back(op("conv2d_1x1", [](const GradCheckOptions& o) {
    Rng rng(4);
    Tensor x = random_tensor(Shape{2, 3, 4, 4}, rng), w = random_tensor(Shape{2, 3, 1, 1}, rng),
           b = random_tensor(Shape{2}, rng);
    return check([=] { return conv2d(x, w, b); }, {{"x", x}, {"weight", w}, {"bias", b}}, o);
  }));
  cases.push_back(op("batchnorm_train", [](const GradCheckOptions& o) {
    Rng rng(5);
    Tensor x = random_tensor(Shape{3, 2, 4, 4}, rng), g = random_tensor(Shape{2}, rng, 0.5, 1.5),
           b = random_tensor(Shape{2}, rng);
    auto state = std::make_shared<BatchNormState>(BatchNormState::identity(2));
    return check([=] { return batchnorm2d(x, g, b, *state, Mode::kTrain); }, {{"x", x}, {"gamma", g}, {"beta", b}},
                 o);
  }));
  cases.push_back(op("batchnorm_infer", [](const GradCheckOptions& o) {
    Rng rng(6);
    Tensor x = random_tensor(Shape{2, 2, 3, 3}, rng), g = random_tensor(Shape{2}, rng, 0.5, 1.5),
           b = random_tensor(Shape{2}, rng);
    auto state = std::make_shared<BatchNormState>(BatchNormState::identity(2));
    state->running_mean.data()[0] = Real(0.3);
    state->running_var.data()[1] = Real(2.0);
    return check([=] { return batchnorm2d(x, g, b, *state, Mode::kInfer); }, {{"x", x}, {"gamma", g}, {"beta", b}},
                 o);
  }));
  cases.push_back(op("relu", [](const GradCheckOptions& o) {
    Rng rng(7);
    Tensor x = away_from_zero(Shape{2, 3, 4, 4}, rng);
    return check([=] { return relu(x); }, {{"x", x}}, o);
  }));
  cases.push_back(op("sigmoid", [](const GradCheckOptions& o) {
    Rng rng(8);
    Tensor x = random_tensor(Shape{2, 3, 4, 4}, rng, -4.0, 4.0);
    return check([=] { return sigmoid(x); }, {{"x", x}}, o);
  }));
  cases.push_back(op("add", [](const GradCheckOptions& o) {
    Rng rng(9);
    Tensor a = random_tensor(Shape{2, 2, 3, 3}, rng), b = random_tensor(Shape{2, 2, 3, 3}, rng);
    return check([=] { return add(a, b); }, {{"a", a}, {"b", b}}, o);
  }));
  cases.push_back(op("mul", [](const GradCheckOptions& o) {
    Rng rng(10);
    Tensor a = random_tensor(Shape{2, 2, 3, 3}, rng), b = random_tensor(Shape{2, 2, 3, 3}, rng);
    return check([=] { return mul(a, b); }, {{"a", a}, {"b", b}}, o);
  }));
  cases.push_back(op("mul_channel", [](const GradCheckOptions& o) {
    Rng rng(11);
    Tensor x = random_tensor(Shape{2, 3, 4, 4}, rng), s = random_tensor(Shape{2, 3, 1, 1}, rng);
    return check([=] { return mul_channel(x, s); }, {{"x", x}, {"s", s}}, o);
  }));
  cases.push_back(op("scale", [](const GradCheckOptions& o) {
    Rng rng(12);
    Tensor x = random_tensor(Shape{2, 2, 3, 3}, rng);
    return check([=] { return scale(x, Real(-1.75)); }, {{"x", x}}, o);
  }));
  cases.push_back(op("concat_channels", [](const GradCheckOptions& o) {
    Rng rng(13);
    Tensor a = random_tensor(Shape{2, 2, 3, 3}, rng), b = random_tensor(Shape{2, 3, 3, 3}, rng);
    return check([=] { return concat_channels(a, b); }, {{"a", a}, {"b", b}}, o);
  }));
  cases.push_back(op("slice_channels", [](const GradCheckOptions& o) {
    Rng rng(14);
    Tensor x = random_tensor(Shape{2, 5, 3, 3}, rng);
    return check([=] { return slice_channels(x, 1, 4); }, {{"x", x}}, o);
  }));
  cases.push_back(op("global_avg_pool", [](const GradCheckOptions& o) {
    Rng rng(15);
    Tensor x = random_tensor(Shape{2, 3, 4, 5}, rng);
    return check([=] { return global_avg_pool(x); }, {{"x", x}}, o);
  }));
  cases.push_back(op("upsample_nearest", [](const GradCheckOptions& o) {
    Rng rng(16);
    Tensor x = random_tensor(Shape{2, 2, 3, 3}, rng);
    return check([=] { return upsample_nearest(x, 2); }, {{"x", x}}, o);
  }));
  cases.push_back(op("maxpool2d", [](const GradCheckOptions& o) {
    Rng rng(17);
    Tensor x = distinct_values(Shape{2, 2, 6, 6}, rng);
    return check([=] { return maxpool2d(x, 2, 2); }, {{"x", x}}, o);
  }));
  cases.push_back(op("sum", [](const GradCheckOptions& o) {
    Rng rng(18);
    Tensor x = random_tensor(Shape{2, 2, 3, 3}, rng);
    return check_gradients([=] { return sum(x); }, {{"x", x}}, o);
  }));
  for (LossKind kind : {LossKind::kDice, LossKind::kBce, LossKind::kBceDice, LossKind::kMse}) {
    std::string name = to_string(kind) + "_loss";
    std::replace(name.begin(), name.end(), '+', '_');
    cases.push_back(op(name, [kind](const GradCheckOptions& o) {
      Rng rng(19 + static_cast<int>(kind));
      Tensor p = random_tensor(Shape{2, 1, 4, 4}, rng, 0.05, 0.95);
      Tensor g = binary_mask(Shape{2, 1, 4, 4}, rng);
      return check_gradients([=] { return compute_loss(kind, p, g); }, {{"pred", p}}, o);
    }));
  }

  cases.push_back(block<SqueezeExcite>(
      "squeeze_excite", Shape{2, 8, 4, 4}, [](const LayerBuilder& b) { return SqueezeExcite::create(b, 8, 4); },
      [](const SqueezeExcite& s, const Tensor& x) { return s.forward(x); }));
  cases.push_back(block<ResidualUnit>(
      "residual_unit", Shape{2, 4, 6, 6}, [](const LayerBuilder& b) { return ResidualUnit::create(b, 4, 6, 1); },
      [](ResidualUnit& u, const Tensor& x) { return u.forward(x, Mode::kTrain); }));
  cases.push_back(block<StemBlock>(
      "stem", Shape{2, 3, 6, 6}, [](const LayerBuilder& b) { return StemBlock::create(b, 3, 4, 2); },
      [](StemBlock& s, const Tensor& x) { return s.forward(x, Mode::kTrain); }));
  cases.push_back(block<EncoderBlock>(
      "encoder", Shape{2, 4, 8, 8}, [](const LayerBuilder& b) { return EncoderBlock::create(b, 4, 8, 4); },
      [](EncoderBlock& e, const Tensor& x) { return e.forward(x, Mode::kTrain); }));
  cases.push_back(block<Aspp>(
      "aspp", Shape{2, 4, 8, 8}, [](const LayerBuilder& b) { return Aspp::create(b, 4, 4, {1, 2, 3}); },
      [](Aspp& a, const Tensor& x) { return a.forward(x, Mode::kTrain); }));
  cases.push_back(block<DoubleConv>(
      "double_conv", Shape{2, 3, 6, 6}, [](const LayerBuilder& b) { return DoubleConv::create(b, 3, 4); },
      [](DoubleConv& d, const Tensor& x) { return d.forward(x, Mode::kTrain); }));

  // Two-input blocks: the skip (2x resolution) is an extra checked input.
  for (const bool decoder : {false, true}) {
    const std::string name = decoder ? "decoder" : "attention";
    cases.push_back({name, "block", [decoder, name](const GradCheckOptions& o) {
                       ParameterStore store;
                       Rng rng(derive_seed(7, hash_string(name)));
                       LayerBuilder b(store, rng, name);
                       Tensor skip = random_tensor(Shape{2, 4, 8, 8}, rng);
                       Tensor x = random_tensor(Shape{2, 6, 4, 4}, rng);
                       std::function<Tensor()> f;
                       if (decoder) {
                         auto blk = std::make_shared<DecoderBlock>(DecoderBlock::create(b, 4, 6, 4));
                         f = [blk, skip, x] { return blk->forward(skip, x, Mode::kTrain); };
                       } else {
                         auto blk = std::make_shared<AttentionBlock>(AttentionBlock::create(b, 4, 6));
                         f = [blk, skip, x] { return blk->forward(skip, x, Mode::kTrain); };
                       }
                       auto inputs = parameters_of(store);
                       inputs.insert(inputs.begin(), {{"skip", skip}, {"x", x}});
                       return check(f, inputs, composite(o));
                     }});
  }

  cases.push_back(network("model_resunetpp", Architecture::kResUNetPlusPlus));
  cases.push_back(network("model_unet", Architecture::kUNet));
  return cases;
}

std::vector<GradCheckResult> run_gradcheck_suite(const std::string& filter, const GradCheckOptions& options) {
  const auto cases = gradcheck_cases();
  std::set<std::string> wanted;
  if (filter != "all") {
    std::stringstream ss(filter);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const bool known = std::any_of(cases.begin(), cases.end(), [&](const auto& c) { return c.name == item; });
      if (!known) throw ConfigError("unknown gradient check '" + item + "'");
      wanted.insert(item);
    }
    if (wanted.empty()) throw ConfigError("empty gradient check selection");
  }
  std::vector<GradCheckResult> out;
  for (const auto& c : cases) {
    if (!wanted.empty() && wanted.count(c.name) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckResult r{c.name, c.kind, c.run(options), 0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

SEGFORGE_NAMESPACE_END
