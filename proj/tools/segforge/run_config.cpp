#include "run_config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "segforge/error.hpp"

namespace segforge::cli {

using nlohmann::json;

namespace {

// Walks the keys of an object, rejecting any the handler does not claim.
template <typename Handler>
void for_keys(const json& j, const std::string& where, Handler&& handle) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!handle(it.key(), it.value())) {
      throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
    }
  }
}

json augment_json(const AugmentationSpec& a) {
  std::vector<std::string> names;
  for (Augmentation e : a.enabled) names.push_back(to_string(e));
  return json{{"enabled", names},
              {"crop_margin", a.crop_margin},
              {"rotate_min", a.rotate_min},
              {"rotate_max", a.rotate_max},
              {"scale_min", a.scale_min},
              {"scale_max", a.scale_max},
              {"cutout_fraction", a.cutout_fraction},
              {"brightness_min", a.brightness_min},
              {"brightness_max", a.brightness_max},
              {"probability", a.probability}};
}

void merge_augment(AugmentationSpec& a, const json& j) {
  for_keys(j, "augment", [&](const std::string& k, const json& v) {
    if (k == "enabled") {
      a.enabled.clear();
      for (const auto& name : v.get<std::vector<std::string>>()) a.enabled.insert(parse_augmentation(name));
    } else if (k == "crop_margin") {
      a.crop_margin = v.get<std::size_t>();
    } else if (k == "rotate_min") {
      a.rotate_min = v.get<double>();
    } else if (k == "rotate_max") {
      a.rotate_max = v.get<double>();
    } else if (k == "scale_min") {
      a.scale_min = v.get<double>();
    } else if (k == "scale_max") {
      a.scale_max = v.get<double>();
    } else if (k == "cutout_fraction") {
      a.cutout_fraction = v.get<double>();
    } else if (k == "brightness_min") {
      a.brightness_min = v.get<double>();
    } else if (k == "brightness_max") {
      a.brightness_max = v.get<double>();
    } else if (k == "probability") {
      a.probability = v.get<double>();
    } else {
      return false;
    }
    return true;
  });
}

json train_json(const TrainConfig& t) {
  return json{{"lr_max", t.lr_max},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"loss", to_string(t.loss)},
              {"threshold", t.threshold},
              {"wall_clock", t.log_wall_clock},
              {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}},
              {"sgdr",
               {{"enabled", t.sgdr.enabled}, {"t0", t.sgdr.t0}, {"t_mult", t.sgdr.t_mult}, {"lr_min", t.sgdr.lr_min}}}};
}

void merge_train(TrainConfig& t, const json& j) {
  for_keys(j, "train", [&](const std::string& k, const json& v) {
    if (k == "lr_max") {
      t.lr_max = v.get<double>();
    } else if (k == "batch_size") {
      t.batch_size = v.get<std::size_t>();
    } else if (k == "epochs") {
      t.epochs = v.get<std::size_t>();
    } else if (k == "loss") {
      t.loss = parse_loss(v.get<std::string>());
    } else if (k == "threshold") {
      t.threshold = v.get<double>();
    } else if (k == "wall_clock") {
      t.log_wall_clock = v.get<bool>();
    } else if (k == "adam") {
      for_keys(v, "train.adam", [&](const std::string& ak, const json& av) {
        if (ak == "beta1") {
          t.adam.beta1 = av.get<double>();
        } else if (ak == "beta2") {
          t.adam.beta2 = av.get<double>();
        } else if (ak == "eps") {
          t.adam.eps = av.get<double>();
        } else {
          return false;
        }
        return true;
      });
    } else if (k == "sgdr") {
      for_keys(v, "train.sgdr", [&](const std::string& sk, const json& sv) {
        if (sk == "enabled") {
          t.sgdr.enabled = sv.get<bool>();
        } else if (sk == "t0") {
          t.sgdr.t0 = sv.get<double>();
        } else if (sk == "t_mult") {
          t.sgdr.t_mult = sv.get<double>();
        } else if (sk == "lr_min") {
          t.sgdr.lr_min = sv.get<double>();
        } else {
          return false;
        }
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
}

}  // namespace

void RunConfig::propagate_seed() {
  train.seed = seed;
  split.seed = seed;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  augment.validate();
  split.validate();
  if (data_dir.empty() && synth_count == 0) throw ConfigError("no data source: give a data directory or a synthetic count");
  if (!data_dir.empty() && synth_count != 0) throw ConfigError("data directory and synthetic data are exclusive");
  if (out_dir.empty()) throw ConfigError("output directory must not be empty");
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = json::parse(model.to_json());
  j["train"] = train_json(train);
  j["augment"] = augment_json(augment);
  j["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  j["seed"] = seed;
  j["data"] = {{"dir", data_dir}, {"synth_count", synth_count}, {"synth_size", synth_size}};
  j["out_dir"] = out_dir;
  return j.dump(2) + "\n";
}

void RunConfig::merge_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    for_keys(j, "", [&](const std::string& k, const json& v) {
      if (k == "model") {
        // Layer over the current model settings rather than the defaults.
        json base = json::parse(model.to_json());
        if (!v.is_object()) throw ConfigError("model must be a JSON object");
        for (auto it = v.begin(); it != v.end(); ++it) base[it.key()] = it.value();
        model = ModelConfig::from_json(base.dump());
      } else if (k == "train") {
        merge_train(train, v);
      } else if (k == "augment") {
        merge_augment(augment, v);
      } else if (k == "split") {
        for_keys(v, "split", [&](const std::string& sk, const json& sv) {
          if (sk == "train") {
            split.train = sv.get<double>();
          } else if (sk == "val") {
            split.val = sv.get<double>();
          } else if (sk == "test") {
            split.test = sv.get<double>();
          } else {
            return false;
          }
          return true;
        });
      } else if (k == "seed") {
        seed = v.get<std::uint64_t>();
      } else if (k == "data") {
        for_keys(v, "data", [&](const std::string& dk, const json& dv) {
          if (dk == "dir") {
            data_dir = dv.get<std::string>();
          } else if (dk == "synth_count") {
            synth_count = dv.get<std::size_t>();
          } else if (dk == "synth_size") {
            synth_size = dv.get<std::size_t>();
          } else {
            return false;
          }
          return true;
        });
      } else if (k == "out_dir") {
        out_dir = v.get<std::string>();
      } else {
        return false;
      }
      return true;
    });
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  propagate_seed();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  c.merge_json(ss.str());
  return c;
}

}  // namespace segforge::cli
