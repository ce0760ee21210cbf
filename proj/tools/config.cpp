#include <set>

#include "cli.hpp"
#include "msvae/latentio.hpp"

namespace msvae::cli {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects whatever was not read.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    dst = convert<T>(*it, where_ + "." + key);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

  const std::string& where() const { return where_; }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0) throw ConfigError(path + ": must be >= 0");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    } else {
      // std::vector of a scalar type.
      if (!v.is_array()) throw ConfigError(path + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void read_enum(ObjectReader& r, const char* key, Enum& dst, Parse parse) {
  std::string name;
  r.read(key, name);
  if (name.empty()) return;
  try {
    dst = parse(name);
  } catch (const ConfigError& e) {
    throw ConfigError(r.where() + "." + key + ": " + e.what());
  }
}

}  // namespace

std::string_view finetune_mode_name(FineTuneMode m) {
  switch (m) {
    case FineTuneMode::kWholeModel:
      return "whole";
    case FineTuneMode::kInnerLayer:
      return "inner";
    case FineTuneMode::kOuterLayer:
      return "outer";
  }
  return "whole";
}

namespace {

std::vector<TrainConfig> parse_stage_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of stage configs");
  std::vector<TrainConfig> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(parse_train_config(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  stages.resize(3);
  for (std::size_t k = 0; k < stages.size(); ++k) stages[k].seed = k;
}

std::vector<TrainConfig> FineTuneSettings::resolve(
    const std::vector<TrainConfig>& train_stages) const {
  std::vector<TrainConfig> out = stages.empty() ? train_stages : stages;
  if (epochs) {
    for (TrainConfig& c : out) c.epochs = *epochs;
  }
  return out;
}

ManifoldSpec parse_manifold(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  ManifoldSpec s;
  read_enum(r, "kind", s.kind, parse_manifold_kind);
  r.read("intrinsic_dim", s.intrinsic_dim);
  r.read("ambient_pad", s.ambient_pad);
  r.read("cap_axis", s.cap_axis);
  r.read("cap_min", s.cap_min);
  r.read("seed", s.seed);
  r.finish();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

TrainConfig parse_train_config(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  TrainConfig c;
  r.read("epochs", c.epochs);
  r.read("batch_size", c.batch_size);
  r.read("lr", c.lr);
  r.read("beta", c.beta);
  r.read("init_gamma", c.init_gamma);
  r.read("seed", c.seed);
  read_enum(r, "activation", c.activation, parse_activation);
  r.read("hidden", c.hidden);
  r.read("latent_dim", c.latent_dim);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

RunConfig parse_run_config(const json& j) {
  ObjectReader r(j, "config");
  RunConfig cfg;
  if (const json* m = r.child("manifold")) cfg.manifold = parse_manifold(*m, "config.manifold");
  if (const json* s = r.child("stages")) {
    cfg.stages = parse_stage_list(*s, "config.stages");
    if (cfg.stages.empty()) throw ConfigError("config.stages: need at least one stage");
  }
  read_enum(r, "encode_mode", cfg.encode_mode, parse_encode_mode);

  if (const json* e = r.child("eval")) {
    ObjectReader er(*e, "config.eval");
    EvalSettings& ev = cfg.eval;
    er.read("bins", ev.bins);
    er.read("hist_lo", ev.hist_lo);
    er.read("hist_hi", ev.hist_hi);
    er.read("n", ev.n);
    er.read("seeds", ev.seeds);
    read_enum(er, "mode", ev.mode, parse_sample_mode);
    er.read("novelty_threshold", ev.novelty_threshold);
    er.finish();
    if (ev.bins < 1 || !(ev.hist_hi > ev.hist_lo)) {
      throw ConfigError("config.eval: need bins >= 1 and hist_hi > hist_lo");
    }
    if (ev.n < 1) throw ConfigError("config.eval.n: must be >= 1");
    if (ev.seeds.empty()) throw ConfigError("config.eval.seeds: need at least one seed");
  }

  if (const json* f = r.child("finetune")) {
    ObjectReader fr(*f, "config.finetune");
    FineTuneSettings& ft = cfg.finetune;
    read_enum(fr, "mode", ft.mode, parse_finetune_mode);
    if (const json* cap = fr.child("cap")) {
      json with_kind = *cap;
      if (!with_kind.is_object()) throw ConfigError("config.finetune.cap: expected an object");
      if (!with_kind.contains("kind")) with_kind["kind"] = "spherical_cap";
      ft.cap = parse_manifold(with_kind, "config.finetune.cap");
    }
    fr.read("n", ft.n);
    if (const json* s = fr.child("stages")) ft.stages = parse_stage_list(*s, "config.finetune.stages");
    std::uint64_t epochs = 0;
    if (fr.child("epochs") != nullptr) {
      fr.read("epochs", epochs);
      ft.epochs = epochs;
    }
    fr.read("noise_scale", ft.noise_scale);
    read_enum(fr, "encode_mode", ft.encode_mode, parse_encode_mode);
    fr.read("region_threshold", ft.region_threshold);
    fr.finish();
    if (ft.n < 1) throw ConfigError("config.finetune.n: must be >= 1");
    if (!(ft.noise_scale >= 0.0)) throw ConfigError("config.finetune.noise_scale: must be >= 0");
  }

  if (const json* d = r.child("diagnose")) {
    ObjectReader dr(*d, "config.diagnose");
    DiagnoseOptions& o = cfg.diagnose;
    dr.read("trials", o.trials);
    dr.read("tolerance", o.tolerance);
    dr.read("seed", o.seed);
    read_enum(dr, "encode_mode", o.encode_mode, parse_encode_mode);
    std::string agg;
    dr.read("aggregation", agg);
    if (agg == "median") {
      o.aggregation = CensusAggregation::kMedian;
    } else if (!agg.empty() && agg != "mean") {
      throw ConfigError("config.diagnose.aggregation: expected mean or median");
    }
    dr.finish();
    if (o.trials < 1) throw ConfigError("config.diagnose.trials: must be >= 1");
    if (!(o.tolerance > 0.0 && o.tolerance < 0.5)) {
      throw ConfigError("config.diagnose.tolerance: must lie in (0, 0.5)");
    }
  }
  r.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const ManifoldSpec& s) {
  return json{{"kind", to_string(s.kind)},   {"intrinsic_dim", s.intrinsic_dim},
              {"ambient_pad", s.ambient_pad}, {"cap_axis", s.cap_axis},
              {"cap_min", s.cap_min},         {"seed", s.seed}};
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},         {"batch_size", c.batch_size},
              {"lr", c.lr},                 {"beta", c.beta},
              {"init_gamma", c.init_gamma}, {"seed", c.seed},
              {"activation", to_string(c.activation)},
              {"hidden", c.hidden},         {"latent_dim", c.latent_dim}};
}

json to_json(const RunConfig& cfg) {
  json stages = json::array();
  for (const TrainConfig& c : cfg.stages) stages.push_back(to_json(c));
  json ft_stages = json::array();
  for (const TrainConfig& c : cfg.finetune.stages) ft_stages.push_back(to_json(c));
  json ft{{"mode", finetune_mode_name(cfg.finetune.mode)},
          {"cap", to_json(cfg.finetune.cap)},
          {"n", cfg.finetune.n},
          {"stages", ft_stages},
          {"noise_scale", cfg.finetune.noise_scale},
          {"encode_mode", to_string(cfg.finetune.encode_mode)},
          {"region_threshold", cfg.finetune.region_threshold}};
  if (cfg.finetune.epochs) ft["epochs"] = *cfg.finetune.epochs;
  return json{
      {"manifold", to_json(cfg.manifold)},
      {"stages", stages},
      {"encode_mode", to_string(cfg.encode_mode)},
      {"eval",
       {{"bins", cfg.eval.bins},
        {"hist_lo", cfg.eval.hist_lo},
        {"hist_hi", cfg.eval.hist_hi},
        {"n", cfg.eval.n},
        {"seeds", cfg.eval.seeds},
        {"mode", to_string(cfg.eval.mode)},
        {"novelty_threshold", cfg.eval.novelty_threshold}}},
      {"finetune", ft},
      {"diagnose",
       {{"trials", cfg.diagnose.trials},
        {"tolerance", cfg.diagnose.tolerance},
        {"seed", cfg.diagnose.seed},
        {"encode_mode", to_string(cfg.diagnose.encode_mode)},
        {"aggregation",
         cfg.diagnose.aggregation == CensusAggregation::kMedian ? "median" : "mean"}}}};
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace msvae::cli
