#include "segforge/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "segforge/checkpoint.hpp"
#include "segforge/error.hpp"
#include "segforge/log.hpp"

SEGFORGE_NAMESPACE_BEGIN

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  const double lr_min = sgdr.enabled ? sgdr.lr_min : 0.0;
  if (!(lr_max > lr_min && lr_min >= 0)) throw ConfigError("need lr_max > lr_min >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (sgdr.enabled) sgdr.validate();
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0)) {
    throw ConfigError("adam betas must be in [0, 1) and eps positive");
  }
  if (!(threshold >= 0 && threshold <= 1)) throw ConfigError("threshold must be in [0, 1]");
}

namespace {

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

std::string format_epoch_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + g6(r.lr) + "," + g6(r.train_loss) + "," + g6(r.val.dice) + "," +
         g6(r.val.miou) + "," + g6(r.val.recall) + "," + g6(r.val.precision) + "," + g6(r.seconds);
}

double train_step(Model& model, Adam& optimizer, const Tensor& images, const Tensor& masks, LossKind loss_kind,
                  double lr) {
  model.store().zero_grad();
  tape().clear();
  // The train-mode forward folds batch statistics into the running buffers; a
  // failed step must not leave them poisoned.
  std::vector<std::vector<Real>> saved;
  for (const Buffer& b : model.store().buffers()) saved.push_back(b.value.to_vector());
  auto restore = [&] {
    tape().clear();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      Tensor t = model.store().buffers()[i].value;
      std::copy(saved[i].begin(), saved[i].end(), t.data().begin());
    }
  };
  double value = 0;
  Tensor loss;
  try {
    loss = compute_loss(loss_kind, model.forward(images, Mode::kTrain), masks);
    value = loss.item();
  } catch (const NumericalError&) {
    restore();
    throw;
  }
  if (!std::isfinite(value)) {
    restore();
    throw NumericalError("loss became non-finite (" + g6(value) + ")");
  }
  backward(loss);
  optimizer.step(model.store().parameters(), lr);
  return value;
}

std::vector<Tensor> predict(Model& model, const Dataset& dataset) {
  NoGradGuard no_grad;
  const std::size_t s = model.config().input_size;
  std::vector<Tensor> out;
  out.reserve(dataset.size());
  for (const Sample& sample : dataset) {
    const Sample ready = resize_sample(sample, s);
    out.push_back(model.forward(ready.image.reshape(Shape{1, 3, s, s}), Mode::kInfer));
  }
  return out;
}

std::vector<PairMetrics> evaluate_samples(Model& model, const Dataset& dataset, double threshold) {
  if (dataset.empty()) throw DataError("evaluation dataset is empty");
  const std::size_t s = model.config().input_size;
  const std::vector<Tensor> probs = predict(model, dataset);
  std::vector<PairMetrics> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor mask = resize_sample(dataset[i], s).mask.reshape(Shape{1, 1, s, s});
    out.push_back(evaluate_pair(probs[i], mask, threshold));
  }
  return out;
}

MetricReport evaluate(Model& model, const Dataset& dataset, double threshold) {
  const auto per_sample = evaluate_samples(model, dataset, threshold);
  return aggregate(per_sample, threshold);
}

History train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
              const AugmentationSpec* aug, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (val_set.empty()) throw DataError("validation set is empty");
  if (aug != nullptr) aug->validate();

  const bool persist = !cfg.out_dir.empty();
  const fs::path csv_path = cfg.out_dir / "metrics.csv";
  if (persist) {
    fs::create_directories(cfg.out_dir);
    write_file(csv_path, std::string(kMetricsHeader) + "\n");
  }

  const std::size_t s = model.config().input_size;
  const SgdrSchedule schedule(cfg.sgdr, cfg.lr_max);
  Adam optimizer(cfg.adam);
  History history;
  std::string last_good = checkpoint_bytes(model, {{"epoch", 0.0}});

  try {
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto plan = batch_plan(train_set.size(), cfg.batch_size, cfg.seed, epoch);
      EpochRecord rec;
      rec.epoch = epoch + 1;
      double loss_sum = 0;
      for (std::size_t b = 0; b < plan.size(); ++b) {
        const double when = static_cast<double>(epoch) + static_cast<double>(b) / static_cast<double>(plan.size());
        const double lr = schedule.lr_at(when);
        if (b == 0) rec.lr = lr;
        const Batch batch = make_batch(train_set, plan[b], s, aug, cfg.seed, epoch);
        loss_sum += train_step(model, optimizer, batch.images, batch.masks, cfg.loss, lr);
      }
      rec.train_loss = loss_sum / static_cast<double>(plan.size());
      rec.val = evaluate(model, val_set, cfg.threshold);
      if (cfg.log_wall_clock) {
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
      history.records.push_back(rec);

      std::map<std::string, double> meta{{"epoch", static_cast<double>(rec.epoch)}, {"val_dice", rec.val.dice}};
      last_good = checkpoint_bytes(model, meta);
      if (rec.val.dice > history.best_dice) {
        history.best_dice = rec.val.dice;
        history.best_epoch = rec.epoch;
        if (persist) write_file(cfg.out_dir / "best.ckpt", last_good);
      }
      if (persist) {
        std::ofstream csv(csv_path, std::ios::app);
        csv << format_epoch_row(rec) << "\n";
        if (!csv) throw DataError("cannot append to " + csv_path.string());
      }
      log_info("epoch " + std::to_string(rec.epoch) + " loss " + g6(rec.train_loss) + " val dice " + g6(rec.val.dice));
      if (on_epoch) on_epoch(rec);
    }
  } catch (const NumericalError&) {
    if (persist) write_file(cfg.out_dir / "last.ckpt", last_good);
    throw;
  }
  if (persist) write_file(cfg.out_dir / "last.ckpt", last_good);
  return history;
}

SEGFORGE_NAMESPACE_END
