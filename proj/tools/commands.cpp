#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "msvae/latentio.hpp"
#include "msvae/text.hpp"

namespace msvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Directories hash as the sorted (name, contents) sequence of their regular
// files; our own manifest is skipped so re-runs hash the same.
json input_record(const std::string& role, const fs::path& path) {
  json rec{{"role", role}, {"path", path.generic_string()}};
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::string joined;
    for (const fs::path& f : files) {
      joined += f.filename().generic_string();
      joined.push_back('\0');
      joined += read_file(f);
    }
    rec["fnv1a64"] = hex64(fnv1a64(joined));
    rec["files"] = files.size();
  } else {
    const std::string bytes = read_file(path);
    rec["fnv1a64"] = hex64(fnv1a64(bytes));
    rec["bytes"] = bytes.size();
  }
  return rec;
}

void write_manifest(const fs::path& path, const std::string& command,
                    const json& parameters, const json& inputs,
                    const std::vector<std::string>& outputs,
                    const json& config = nullptr) {
  json m{{"tool", "msvae"},
         {"version", kToolVersion},
         {"command", command},
         {"parameters", parameters},
         {"inputs", inputs},
         {"outputs", outputs},
         {"formats",
          {{"latent_dump", kLatentVersion},
           {"checkpoint", kCheckpointVersion},
           {"stack", kStackVersion}}}};
  if (!config.is_null()) m["config"] = config;
  write_file_atomic(path, m.dump(2) + "\n");
}

fs::path sibling_manifest(const fs::path& out) {
  return fs::path(out.string() + ".manifest.json");
}

std::string training_log_csv(const TrainingLog& log) {
  std::string s = "epoch,gamma,total,recon_nll,kl\n";
  for (std::size_t e = 0; e < log.epochs.size(); ++e) {
    const ElboBreakdown& b = log.epochs[e];
    s += std::to_string(e) + "," + format_double(log.gamma[e]) + "," +
         format_double(b.total) + "," + format_double(b.recon_nll) + "," +
         format_double(b.kl) + "\n";
  }
  return s;
}

std::string gamma_csv_name(std::size_t k) {
  return "gamma_stage_" + std::to_string(k) + ".csv";
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      if (item.empty() || item.front() == '-') throw std::invalid_argument(item);
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("--seeds: '" + item + "' is not a seed");
    }
  }
  if (out.empty()) throw ConfigError("--seeds: empty list");
  return out;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size() - 1));
  }
  return s;
}

// Appends "mean" and "std" rows over the numeric columns of `rows`.
void append_summary(std::string& csv, const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) return;
  std::string mean_row = "mean", std_row = "std";
  for (std::size_t c = 0; c < rows[0].size(); ++c) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(r[c]);
    const Summary s = summarize(col);
    mean_row += "," + format_double(s.mean);
    std_row += "," + format_double(s.std);
  }
  csv += mean_row + "\n" + std_row + "\n";
}

std::string join_row(const std::string& label, const std::vector<double>& values) {
  std::string s = label;
  for (double v : values) s += "," + format_double(v);
  return s + "\n";
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string spec;
  Index n = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  ManifoldSpec spec;
  json spec_json = nullptr;
  if (!a.spec.empty()) {
    json j;
    try {
      j = json::parse(read_file(a.spec));
    } catch (const json::parse_error& e) {
      throw ConfigError(a.spec + ": " + e.what());
    }
    spec = j.is_object() && j.contains("manifold") ? parse_run_config(j).manifold
                                                     : parse_manifold(j);
  }
  if (a.seed) spec.seed = *a.seed;
  if (a.n < 0) throw ConfigError("--n must be >= 0");
  const Matrix data = generate(a.n, spec);
  csv_export(a.out, data);
  json inputs = json::array();
  if (!a.spec.empty()) inputs.push_back(input_record("spec", a.spec));
  write_manifest(sibling_manifest(a.out), "gen-data", json{{"n", a.n}},
                 inputs, {fs::path(a.out).filename().string()},
                 json{{"manifold", to_json(spec)}});
  out << "wrote " << data.rows() << "x" << data.cols() << " " << to_string(spec.kind)
      << " points to " << a.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool resume = false;
};

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = config_or_default(a.config);
  const Matrix data = csv_import(a.data);
  const std::string data_hash = hex64(fnv1a64(read_file(a.data)));
  json stage_json = json::array();
  for (const TrainConfig& c : cfg.stages) stage_json.push_back(to_json(c));

  StageStack stack;
  if (is_stack_dir(a.out)) {
    if (!a.resume) {
      throw ConfigError(a.out + " already holds a stack; pass --resume to extend it");
    }
    json meta;
    stack = load_stack(a.out, &meta);
    if (stack.size() > cfg.stages.size()) {
      throw ConfigError("--resume: stack has " + std::to_string(stack.size()) +
                        " stages but the config lists " +
                        std::to_string(cfg.stages.size()));
    }
    const json recorded = meta.value("stages", json::array());
    for (std::size_t k = 0; k < stack.size(); ++k) {
      if (k >= recorded.size() || recorded[k] != stage_json[k]) {
        throw ConfigError("--resume: stage " + std::to_string(k) +
                          " config differs from the one the stack was trained with");
      }
    }
    if (meta.value("encode_mode", "") != to_string(cfg.encode_mode) ||
        meta.value("data_fnv1a64", "") != data_hash) {
      throw ConfigError("--resume: data or encode mode differs from the original run");
    }
  }
  const std::size_t existing = stack.size();
  std::vector<TrainingLog> logs;
  extend_stack(stack, data, cfg.stages, cfg.encode_mode, &logs);

  const json meta{{"stages", stage_json},
                  {"encode_mode", to_string(cfg.encode_mode)},
                  {"data_fnv1a64", data_hash}};
  save_stack(a.out, stack, meta);
  std::vector<std::string> outputs{"stack.json"};
  for (std::size_t k = 0; k < stack.size(); ++k) {
    outputs.push_back("stage_" + std::to_string(k) + ".json");
    outputs.push_back("stage_" + std::to_string(k) + ".bin");
  }
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const std::size_t k = existing + i;
    write_file_atomic(fs::path(a.out) / gamma_csv_name(k), training_log_csv(logs[i]));
    outputs.push_back(gamma_csv_name(k));
    const double last = logs[i].epochs.empty() ? 0.0 : logs[i].epochs.back().total;
    out << "stage " << k << ": epochs " << logs[i].epochs.size() << ", gamma "
        << format_double(stack[k].gamma()) << ", loss " << format_double(last) << "\n";
  }
  if (logs.empty()) out << "stack already has " << stack.size() << " stages\n";
  write_manifest(fs::path(a.out) / "manifest.json", "train",
                 json{{"resume", a.resume}, {"trained_stages", logs.size()}},
                 json::array({input_record("data", a.data)}), outputs, to_json(cfg));
  return kExitOk;
}

// ------------------------------------------------------------------ sample

struct SampleArgs {
  std::string stack;
  std::optional<std::size_t> stage;
  Index n = 1000;
  std::uint64_t seed = 0;
  std::string seeds;
  std::string mode = "sampled";
  std::string out;
};

fs::path seed_path(const fs::path& out, std::uint64_t seed) {
  fs::path p = out;
  p.replace_filename(out.stem().string() + "_seed" + std::to_string(seed) +
                     out.extension().string());
  return p;
}

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const SampleMode mode = parse_sample_mode(a.mode);
  if (a.n < 0) throw ConfigError("--n must be >= 0");
  const StageStack stack = load_stack(a.stack);
  const std::size_t top = a.stage.value_or(stack.size() - 1);
  const bool multi = !a.seeds.empty();
  const std::vector<std::uint64_t> seeds =
      multi ? parse_seed_list(a.seeds) : std::vector<std::uint64_t>{a.seed};
  std::vector<std::string> outputs;
  for (std::uint64_t s : seeds) {
    const fs::path path = multi ? seed_path(a.out, s) : fs::path(a.out);
    csv_export(path, cascade_sample(stack, a.n, s, mode, top));
    outputs.push_back(path.filename().string());
    out << "wrote " << a.n << " samples (stage " << top << ", " << to_string(mode)
        << ", seed " << s << ") to " << path.string() << "\n";
  }
  write_manifest(sibling_manifest(a.out), "sample",
                 json{{"stage", top}, {"n", a.n}, {"seeds", seeds}, {"mode", to_string(mode)}},
                 json::array({input_record("stack", a.stack)}), outputs);
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> samples;
  std::string reference;
  std::string out;
  std::string config;
  std::optional<std::size_t> bins;
  std::optional<double> lo, hi, threshold;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  EvalSettings ev = config_or_default(a.config).eval;
  if (a.bins) ev.bins = *a.bins;
  if (a.lo) ev.hist_lo = *a.lo;
  if (a.hi) ev.hist_hi = *a.hi;
  if (a.threshold) ev.novelty_threshold = *a.threshold;
  const std::vector<double> edges = linear_edges(ev.hist_lo, ev.hist_hi, ev.bins);

  std::vector<std::string> labels;
  std::vector<Matrix> sets;
  json inputs = json::array();
  for (const std::string& p : a.samples) {
    labels.push_back(fs::path(p).stem().string());
    sets.push_back(csv_import(p));
    inputs.push_back(input_record("samples", p));
  }
  std::optional<Matrix> reference;
  if (!a.reference.empty()) {
    reference = csv_import(a.reference);
    inputs.push_back(input_record("reference", a.reference));
  }
  fs::create_directories(a.out);

  std::string stats = "sample,n,mean_norm,frac_below,frac_within,w1_to_unit\n";
  std::vector<std::vector<double>> stat_rows;
  std::vector<Histogram> hists;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const RecoveryStats s = recovery_stats(sets[i]);
    const std::vector<double> row{static_cast<double>(sets[i].rows()), s.mean_norm,
                                  s.frac_below, s.frac_within, s.w1_to_unit};
    stats += join_row(labels[i], row);
    stat_rows.push_back(row);
    hists.push_back(norm_histogram(sets[i], edges));
  }
  append_summary(stats, stat_rows);
  write_file_atomic(fs::path(a.out) / "recovery_stats.csv", stats);

  std::string hist = "bin_lo,bin_hi";
  for (const std::string& l : labels) hist += "," + l;
  hist += "\n-inf," + format_double(edges.front());
  for (const Histogram& h : hists) hist += "," + std::to_string(h.underflow);
  hist += "\n";
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    hist += format_double(edges[b]) + "," + format_double(edges[b + 1]);
    for (const Histogram& h : hists) hist += "," + std::to_string(h.counts[b]);
    hist += "\n";
  }
  hist += format_double(edges.back()) + ",inf";
  for (const Histogram& h : hists) hist += "," + std::to_string(h.overflow);
  hist += "\n";
  write_file_atomic(fs::path(a.out) / "norm_histogram.csv", hist);
  write_file_atomic(fs::path(a.out) / "norm_histogram.svg", render_histogram_svg(labels, hists));
  std::vector<std::string> outputs{"recovery_stats.csv", "norm_histogram.csv",
                                   "norm_histogram.svg"};

  if (reference) {
    std::string dn = "sample,n,diversity,novelty\n";
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const std::vector<double> row{
          static_cast<double>(sets[i].rows()), diversity(sets[i]),
          novelty(sets[i], *reference, inverse_distance_similarity, ev.novelty_threshold)};
      dn += join_row(labels[i], row);
      rows.push_back(row);
    }
    append_summary(dn, rows);
    write_file_atomic(fs::path(a.out) / "diversity_novelty.csv", dn);
    outputs.push_back("diversity_novelty.csv");
  }
  write_manifest(fs::path(a.out) / "manifest.json", "eval",
                 json{{"bins", ev.bins}, {"hist_lo", ev.hist_lo}, {"hist_hi", ev.hist_hi},
                      {"novelty_threshold", ev.novelty_threshold}},
                 inputs, outputs);
  out << stats;
  return kExitOk;
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseArgs {
  std::string stack;
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::size_t> trials;
  std::optional<double> tolerance;
  std::optional<std::uint64_t> seed;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  DiagnoseOptions opts = config_or_default(a.config).diagnose;
  if (a.trials) opts.trials = *a.trials;
  if (a.tolerance) opts.tolerance = *a.tolerance;
  if (a.seed) opts.seed = *a.seed;
  if (opts.trials < 1) throw ConfigError("--trials must be >= 1");
  const StageStack stack = load_stack(a.stack);
  const Matrix data = csv_import(a.data);

  // Trajectories come from the training logs when every stage has one.
  std::vector<std::vector<double>> logs;
  for (std::size_t k = 0; k < stack.size(); ++k) {
    const fs::path p = fs::path(a.stack) / gamma_csv_name(k);
    if (!fs::exists(p)) {
      logs.clear();
      break;
    }
    const Matrix m = csv_import(p, true);
    if (m.cols() < 2) throw FormatError(FormatErrorKind::kBadField, p.string() + ": no gamma column");
    logs.emplace_back(m.col(1).begin(), m.col(1).end());
    if (logs.back().empty()) {
      logs.clear();
      break;
    }
  }
  const std::vector<ConditionReport> reports = diagnose_stack(stack, data, opts, logs);
  const std::string text = format_condition_reports(reports);
  write_file_atomic(a.out, text);
  write_manifest(sibling_manifest(a.out), "diagnose",
                 json{{"trials", opts.trials}, {"tolerance", opts.tolerance},
                      {"seed", opts.seed}, {"encode_mode", to_string(opts.encode_mode)}},
                 json::array({input_record("stack", a.stack), input_record("data", a.data)}),
                 {fs::path(a.out).filename().string()});
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------- finetune

struct FineTuneArgs {
  std::string stack;
  std::string data;
  std::string mode;
  std::string config;
  std::string out;
};

int cmd_finetune(const FineTuneArgs& a, std::ostream& out) {
  const RunConfig cfg = config_or_default(a.config);
  FineTuneSettings ft = cfg.finetune;
  if (!a.mode.empty()) ft.mode = parse_finetune_mode(a.mode);
  const StageStack pretrained = load_stack(a.stack);
  json inputs = json::array({input_record("stack", a.stack)});
  Matrix curated;
  if (!a.data.empty()) {
    curated = csv_import(a.data);
    inputs.push_back(input_record("data", a.data));
  } else {
    curated = generate(ft.n, ft.cap);
  }
  std::vector<TrainConfig> cfgs = ft.resolve(cfg.stages);
  if (cfgs.size() < pretrained.size()) {
    throw ConfigError("finetune: " + std::to_string(cfgs.size()) +
                      " stage configs for a " + std::to_string(pretrained.size()) +
                      "-stage stack");
  }
  cfgs.resize(pretrained.size());
  std::vector<TrainingLog> logs;
  const StageStack tuned = finetune_stack(pretrained, curated, ft.mode, cfgs,
                                          FineTuneOptions{ft.encode_mode, ft.noise_scale}, &logs);

  json stage_json = json::array();
  for (const TrainConfig& c : cfgs) stage_json.push_back(to_json(c));
  save_stack(a.out, tuned,
             json{{"finetune_mode", finetune_mode_name(ft.mode)}, {"stages", stage_json}});
  std::vector<std::string> outputs{"stack.json"};
  std::string frozen = "stage,mode,trainable_scalars,frozen_preserved\n";
  for (std::size_t k = 0; k < tuned.size(); ++k) {
    write_file_atomic(fs::path(a.out) / gamma_csv_name(k), training_log_csv(logs[k]));
    outputs.push_back(gamma_csv_name(k));
    const bool kept = frozen_parameters_preserved(pretrained[k], tuned[k]);
    const FineTuneMode stage_mode = k == 0 ? FineTuneMode::kWholeModel : ft.mode;
    frozen += std::to_string(k) + "," + std::string(finetune_mode_name(stage_mode)) + "," +
              std::to_string(tuned[k].trainable_scalar_count()) + "," +
              (kept ? "true" : "false") + "\n";
    if (!kept) {
      throw IntegrityError("finetune: frozen parameters of stage " + std::to_string(k) +
                           " changed");
    }
  }
  write_file_atomic(fs::path(a.out) / "frozen_check.csv", frozen);
  outputs.push_back("frozen_check.csv");

  std::string region = "stack,seed,region_fraction\n";
  for (std::uint64_t s : cfg.eval.seeds) {
    for (const auto& [name, st] : {std::pair<const char*, const StageStack*>{"pretrained", &pretrained},
                                   {"finetuned", &tuned}}) {
      const double f = region_fraction(cascade_sample(*st, cfg.eval.n, s, cfg.eval.mode),
                                       ft.cap.cap_axis, ft.region_threshold);
      region += std::string(name) + "," + std::to_string(s) + "," + format_double(f) + "\n";
    }
  }
  write_file_atomic(fs::path(a.out) / "region_fraction.csv", region);
  outputs.push_back("region_fraction.csv");
  write_manifest(fs::path(a.out) / "manifest.json", "finetune",
                 json{{"curated_rows", curated.rows()}}, inputs, outputs, to_json(cfg));
  out << frozen << region;
  return kExitOk;
}

}  // namespace

double region_fraction(const Matrix& samples, Index axis, double threshold) {
  if (samples.rows() == 0) throw DomainError("region_fraction: empty sample");
  if (axis < 0 || axis >= samples.cols()) {
    throw DimensionError("region_fraction: axis " + std::to_string(axis) +
                         " outside " + shape_string(samples));
  }
  Index hits = 0;
  for (Index i = 0; i < samples.rows(); ++i) {
    const double norm = samples.row(i).norm();
    if (norm > 0.0 && samples(i, axis) / norm > threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.rows());
}

std::string render_histogram_svg(const std::vector<std::string>& labels,
                                 const std::vector<Histogram>& hists) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                            "#9467bd", "#ff7f0e", "#17becf"};
  const double width = 640, height = 320, left = 50, right = 10, top = 20, bottom = 40;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  std::uint64_t peak = 1;
  for (const Histogram& h : hists) {
    for (std::uint64_t c : h.counts) peak = std::max(peak, c);
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t s = 0; s < hists.size(); ++s) {
    const Histogram& h = hists[s];
    const double lo = h.bin_edges.front(), hi = h.bin_edges.back();
    const char* color = kColors[s % std::size(kColors)];
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      if (h.counts[b] == 0) continue;
      const double x0 = left + plot_w * (h.bin_edges[b] - lo) / (hi - lo);
      const double x1 = left + plot_w * (h.bin_edges[b + 1] - lo) / (hi - lo);
      const double bh = plot_h * static_cast<double>(h.counts[b]) / static_cast<double>(peak);
      os << "<rect x=\"" << format_double(x0) << "\" y=\"" << format_double(top + plot_h - bh)
         << "\" width=\"" << format_double(x1 - x0) << "\" height=\"" << format_double(bh)
         << "\" fill=\"" << color << "\" fill-opacity=\"0.45\"/>\n";
    }
    os << "<text x=\"" << format_double(left + 8) << "\" y=\"" << format_double(top + 14 * (s + 1))
       << "\" fill=\"" << color << "\">" << (s < labels.size() ? labels[s] : "") << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
     << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  if (!hists.empty()) {
    const Histogram& h = hists.front();
    os << "<text x=\"" << left << "\" y=\"" << height - 22 << "\" text-anchor=\"middle\">"
       << format_double(h.bin_edges.front()) << "</text>\n";
    os << "<text x=\"" << left + plot_w << "\" y=\"" << height - 22
       << "\" text-anchor=\"middle\">" << format_double(h.bin_edges.back()) << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 6
     << "\" text-anchor=\"middle\">norm</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << peak
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-stage VAE toolkit: data generation, training, sampling, evaluation"};
  app.name("msvae");
  app.require_subcommand(1);

  GenDataArgs gen;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic manifold dataset as CSV");
  gen_cmd->add_option("--spec", gen.spec, "Manifold spec JSON (or a run config)");
  gen_cmd->add_option("--n", gen.n, "Number of points")->required();
  auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "Overrides the spec seed");
  gen_cmd->add_option("--out", gen.out, "Output CSV")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a stage stack");
  train_cmd->add_option("--config", train_args.config, "Run config JSON");
  train_cmd->add_option("--data", train_args.data, "Training data CSV")->required();
  train_cmd->add_option("--out", train_args.out, "Stack directory")->required();
  train_cmd->add_flag("--resume", train_args.resume, "Train only the stages missing from --out");

  SampleArgs sample;
  std::size_t sample_stage = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Cascade-sample from a stack");
  sample_cmd->add_option("--stack", sample.stack, "Stack directory")->required();
  auto* stage_opt = sample_cmd->add_option("--stage", sample_stage, "Top stage (default: last)");
  sample_cmd->add_option("--n", sample.n, "Number of samples")->capture_default_str();
  sample_cmd->add_option("--seed", sample.seed, "Sampling seed")->capture_default_str();
  sample_cmd->add_option("--seeds", sample.seeds, "Comma-separated seeds, one file each");
  sample_cmd->add_option("--mode", sample.mode, "sampled | mean_chain")->capture_default_str();
  sample_cmd->add_option("--out", sample.out, "Output CSV")->required();

  EvalArgs eval;
  std::size_t eval_bins = 0;
  double eval_lo = 0, eval_hi = 0, eval_thr = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Recovery statistics, histograms, diversity/novelty");
  eval_cmd->add_option("--samples", eval.samples, "Sample CSV files")->required()->expected(1, -1);
  eval_cmd->add_option("--reference", eval.reference, "Reference CSV for novelty");
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_option("--config", eval.config, "Run config JSON (eval section)");
  auto* bins_opt = eval_cmd->add_option("--bins", eval_bins, "Histogram bins");
  auto* lo_opt = eval_cmd->add_option("--lo", eval_lo, "Histogram lower edge");
  auto* hi_opt = eval_cmd->add_option("--hi", eval_hi, "Histogram upper edge");
  auto* thr_opt = eval_cmd->add_option("--threshold", eval_thr, "Novelty similarity threshold");

  DiagnoseArgs diag;
  std::size_t diag_trials = 0;
  double diag_tol = 0;
  std::uint64_t diag_seed = 0;
  auto* diag_cmd = app.add_subcommand("diagnose", "Convergence-condition report per stage");
  diag_cmd->add_option("--stack", diag.stack, "Stack directory")->required();
  diag_cmd->add_option("--data", diag.data, "Data CSV")->required();
  diag_cmd->add_option("--out", diag.out, "Report file")->required();
  diag_cmd->add_option("--config", diag.config, "Run config JSON (diagnose section)");
  auto* trials_opt = diag_cmd->add_option("--trials", diag_trials, "Probe trials");
  auto* tol_opt = diag_cmd->add_option("--tolerance", diag_tol, "Census tolerance");
  auto* dseed_opt = diag_cmd->add_option("--seed", diag_seed, "Probe seed");

  FineTuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune a stack on curated data");
  ft_cmd->add_option("--stack", ft.stack, "Pretrained stack directory")->required();
  ft_cmd->add_option("--data", ft.data, "Curated data CSV (default: generate the config cap)");
  ft_cmd->add_option("--mode", ft.mode, "whole | inner | outer");
  ft_cmd->add_option("--config", ft.config, "Run config JSON");
  ft_cmd->add_option("--out", ft.out, "Output stack directory")->required();

  std::vector<const char*> argv{"msvae"};
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::string name = "msvae";
  try {
    if (*gen_cmd) {
      name = "gen-data";
      if (*gen_seed_opt) gen.seed = gen_seed;
      return cmd_gen_data(gen, out);
    }
    if (*train_cmd) {
      name = "train";
      return cmd_train(train_args, out);
    }
    if (*sample_cmd) {
      name = "sample";
      if (*stage_opt) sample.stage = sample_stage;
      return cmd_sample(sample, out);
    }
    if (*eval_cmd) {
      name = "eval";
      if (*bins_opt) eval.bins = eval_bins;
      if (*lo_opt) eval.lo = eval_lo;
      if (*hi_opt) eval.hi = eval_hi;
      if (*thr_opt) eval.threshold = eval_thr;
      return cmd_eval(eval, out);
    }
    if (*diag_cmd) {
      name = "diagnose";
      if (*trials_opt) diag.trials = diag_trials;
      if (*tol_opt) diag.tolerance = diag_tol;
      if (*dseed_opt) diag.seed = diag_seed;
      return cmd_diagnose(diag, out);
    }
    if (*ft_cmd) {
      name = "finetune";
      return cmd_finetune(ft, out);
    }
  } catch (const ConfigError& e) {
    err << name << ": configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << name << ": numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << name << ": data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << name << ": data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << name << ": data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << name << ": internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace msvae::cli
