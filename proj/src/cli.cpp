#include "jnd/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "jnd/attacks.hpp"
#include "jnd/checkpoint.hpp"
#include "jnd/csv.hpp"
#include "jnd/error.hpp"
#include "jnd/metrics.hpp"
#include "jnd/stats.hpp"
#include "jnd/sweep.hpp"
#include "jnd/train.hpp"

#ifndef JND_VERSION
#define JND_VERSION "0.0.0"
#endif

namespace jnd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string image_id(std::size_t source_index) {
  std::ostringstream ss;
  ss << std::setw(6) << std::setfill('0') << source_index;
  return ss.str();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(text);
  while (std::getline(ss, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

double parse_real(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + ": '" + text + "' is not a number");
  }
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()), wall_(std::time(nullptr)) {}

  json to_json() const {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::tm tm{};
    gmtime_r(&wall_, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return {{"started_utc", buf}, {"elapsed_seconds", elapsed}};
  }

 private:
  std::chrono::steady_clock::time_point start_;
  std::time_t wall_;
};

json make_manifest(const std::string& command, const std::vector<std::string>& args, json config,
                   std::uint64_t seed, json model, json dataset, const Stopwatch& clock) {
  return {{"command", command},
          {"arguments", args},
          {"config", std::move(config)},
          {"seed", seed},
          {"model", std::move(model)},
          {"dataset", std::move(dataset)},
          {"toolkit_version", toolkit_version()},
          {"wall_clock", clock.to_json()}};
}

struct ModelFile {
  Model model;
  json identity;
};

ModelFile load_model_file(const std::string& path) {
  if (path.empty()) throw UsageError("--model is required");
  if (!fs::exists(path)) throw InputError("--model: no such file '" + path + "'");
  const std::string bytes = read_text(path);
  return {decode_checkpoint(bytes), json{{"path", path}, {"hash", content_hash(bytes)}}};
}

struct DataFlags {
  std::string data;
  std::string synthetic;
  std::size_t skip = 0;
  std::size_t count = 0;
  bool has_count = false;

  void add(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "data", data, "synthetic:CxN[:SEED] or comma-separated CIFAR-10 batch files");
    if (prefix.empty()) app->add_option("--synthetic", synthetic, "shorthand for --data synthetic:CxN");
    app->add_option("--" + prefix + "skip", skip, "records to skip at the start of the source");
    app->add_option("--" + prefix + "count", count, "records to use after skipping")->each([this](const std::string&) {
      has_count = true;
    });
  }

  std::optional<DataSource> source(const std::string& flag) const {
    if (!data.empty() && !synthetic.empty()) throw UsageError("give either --" + flag + " or --synthetic, not both");
    if (data.empty() && synthetic.empty()) return std::nullopt;
    DataSource s;
    s.spec = data.empty() ? "synthetic:" + synthetic : data;
    s.skip = skip;
    if (has_count) s.count = count;
    return s;
  }
};

AttackMode parse_mode(const std::string& mode, const std::optional<std::size_t>& target) {
  if (mode == "nontargeted" || mode == "non_targeted" || mode == "non-targeted") {
    if (target) throw UsageError("--target only applies to --mode targeted");
    return AttackMode::non_targeted();
  }
  if (mode == "targeted") {
    if (!target) throw UsageError("--mode targeted needs --target LABEL");
    return AttackMode::targeted_at(*target);
  }
  throw UsageError("--mode must be targeted or nontargeted, got '" + mode + "'");
}

// ---------------------------------------------------------------- train

int cmd_train(const std::vector<std::string>& args, const DataFlags& flags, const DataFlags& eval_flags,
              const TrainSchedule& sched_in, std::optional<std::uint64_t> seed_flag, const std::string& out_path,
              std::ostream& out) {
  Stopwatch clock;
  const auto source = flags.source("data");
  if (!source) throw UsageError("--data (or --synthetic) is required: name the training dataset");
  if (out_path.empty()) throw UsageError("--out is required: checkpoint path");
  const std::uint64_t seed = resolve_seed(seed_flag);
  LoadedData train_data = load_source(*source, seed);
  std::optional<LoadedData> eval_data;
  if (const auto es = eval_flags.source("eval-data")) eval_data = load_source(*es, seed);

  if (train_data.data.empty()) throw InputError("--data: the training set is empty");
  const Image& first = train_data.data.images.front();
  const std::size_t classes = std::max<std::size_t>(train_data.data.class_names.size(), 2);
  const ModelSpec spec = desk_model_spec(first.dim(0), first.dim(1), first.dim(2), classes);
  const Model initial(spec, init_parameters(spec, seed));
  TrainSchedule sched = sched_in;
  sched.seed = seed;
  const TrainResult result = train(initial, train_data.data, sched, eval_data ? &eval_data->data : nullptr);
  const Model trained(spec, result.parameters);

  const std::string bytes = encode_checkpoint(trained);
  write_text(out_path, bytes);
  json log = json::array();
  for (const EpochLog& e : result.log) {
    out << "epoch " << e.epoch << " loss " << format_real(e.mean_loss) << " train_accuracy "
        << format_real(e.train_accuracy);
    if (e.eval_accuracy) out << " eval_accuracy " << format_real(*e.eval_accuracy);
    out << "\n";
    log.push_back({{"epoch", e.epoch},
                   {"mean_loss", e.mean_loss},
                   {"train_accuracy", e.train_accuracy},
                   {"eval_accuracy", e.eval_accuracy ? json(*e.eval_accuracy) : json(nullptr)}});
  }
  const json config = {{"epochs", sched.epochs},
                       {"batch_size", sched.batch_size},
                       {"learning_rate", sched.learning_rate},
                       {"model_spec", spec_to_json(spec)}};
  json dataset = {{"train", train_data.identity}};
  if (eval_data) dataset["eval"] = eval_data->identity;
  json manifest = make_manifest("train", args, config, seed, {{"path", out_path}, {"hash", content_hash(bytes)}},
                                dataset, clock);
  manifest["log"] = log;
  manifest["outputs"] = {fs::path(out_path).filename().string()};
  write_text(out_path + ".manifest.json", dump(manifest));
  out << "checkpoint " << out_path << " hash " << content_hash(bytes) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- attack

struct AttackFlags {
  std::string model;
  std::string method;
  std::string mode = "nontargeted";
  std::size_t target = 0;
  bool has_target = false;
  std::string lambda;
  std::optional<double> alpha, epsilon, confidence, overshoot, unit;
  std::string stop_rule;
  std::size_t max_iters = 0;
  bool has_max_iters = false;
  bool keep_going = false;
  std::string out_dir;
  std::size_t jobs = 1;
  bool trace = false;
};

AttackConfig build_config(AttackMethod method, const AttackFlags& f) {
  AttackConfig c = preset_config(method);
  if (!f.lambda.empty()) {
    const auto parts = split(f.lambda, ',');
    if (parts.size() != 4) throw UsageError("--lambda takes four comma-separated weights, got '" + f.lambda + "'");
    c.lambda1 = parse_real(parts[0], "--lambda");
    c.lambda2 = parse_real(parts[1], "--lambda");
    c.lambda3 = parse_real(parts[2], "--lambda");
    c.lambda4 = parse_real(parts[3], "--lambda");
  }
  if (f.alpha) c.alpha = *f.alpha;
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.overshoot) c.overshoot = *f.overshoot;
  if (f.unit) c.intensity_unit = *f.unit;
  if (f.has_max_iters) c.max_iterations = f.max_iters;
  if (!f.stop_rule.empty()) c.stop_rule = parse_stop_rule(f.stop_rule);
  if (f.confidence) {
    c.confidence_threshold = *f.confidence;
    if (f.stop_rule.empty()) c.stop_rule = StopRule::confidence_reached;
  }
  c.mode = parse_mode(f.mode, f.has_target ? std::optional<std::size_t>(f.target) : std::nullopt);
  c.stop_on_success = !f.keep_going;
  return c;
}

json cost_json(const CostBreakdown& c) {
  return {{"total", c.total}, {"loss_term", c.loss_term}, {"l2_term", c.l2_term},
          {"br_term", c.br_term}, {"tv_term", c.tv_term}};
}

// Per-method summary columns; means run over successful attacks only.
const std::vector<std::string> kMetricColumns = {"psnr", "ssim",         "uqi",          "scc", "vifp", "l1",
                                                 "l2",   "linf",         "l1_per_pixel", "l2_per_pixel"};

struct RunSummary {
  std::string method;
  std::size_t attacked = 0;
  std::size_t skipped = 0;
  std::size_t successes = 0;
  std::map<std::string, double> sums;  // metric columns, plus first_fool_iteration, iterations, kl
};

void accumulate(RunSummary& s, const json& record) {
  ++s.attacked;
  if (!record.at("success").get<bool>()) return;
  ++s.successes;
  for (const auto& col : kMetricColumns) s.sums[col] += record.at("metrics").at(col).get<double>();
  s.sums["first_fool_iteration"] += record.at("first_fool_iteration").get<double>();
  s.sums["iterations"] += record.at("iterations").get<double>();
  s.sums["kl"] += record.at("kl_divergence").get<double>();
}

std::vector<std::string> summary_header(const std::string& key_column) {
  std::vector<std::string> h = {std::string(kCsvSchemaTag), key_column, "method", "attacked", "skipped",
                                "successes", "success_rate", "mean_first_fool_iteration", "mean_iterations"};
  for (const auto& col : kMetricColumns) h.push_back("mean_" + col);
  h.push_back("mean_kl");
  return h;
}

void summary_row(CsvTable& t, const std::string& key, const RunSummary& s) {
  t.add(kCsvSchemaValue).add(key).add(s.method).add(s.attacked).add(s.skipped).add(s.successes);
  t.add(s.attacked ? static_cast<double>(s.successes) / static_cast<double>(s.attacked) : 0.0);
  auto mean = [&](const std::string& col) {
    if (s.successes == 0) return std::string();
    return format_real(s.sums.at(col) / static_cast<double>(s.successes));
  };
  t.add(mean("first_fool_iteration")).add(mean("iterations"));
  for (const auto& col : kMetricColumns) t.add(mean(col));
  t.add(mean("kl"));
  t.end_row();
}

int cmd_attack(const std::vector<std::string>& args, const DataFlags& flags, const AttackFlags& f,
               std::optional<std::uint64_t> seed_flag, std::ostream& out) {
  Stopwatch clock;
  if (f.method.empty()) throw UsageError("--method is required (jnd|fgsm|fgv|deepfool)");
  if (f.out_dir.empty()) throw UsageError("--out is required: output directory");
  const AttackMethod method = parse_method(f.method);
  const AttackConfig config = build_config(method, f);
  const ModelFile mf = load_model_file(f.model);
  const auto source = flags.source("data");
  if (!source) throw UsageError("--data (or --synthetic) is required: name the images to attack");
  const std::uint64_t seed = resolve_seed(seed_flag);
  const LoadedData loaded = load_source(*source, seed);
  if (loaded.data.empty()) throw InputError("--data: no images selected");
  const Dataset& data = loaded.data;

  const std::vector<BatchItem> items = run_batch(method, mf.model, data.images, data.labels, config, f.jobs);

  const fs::path dir = f.out_dir;
  RunSummary summary;
  summary.method = std::string(method_name(method));
  json skipped_ids = json::array();
  json attacked_ids = json::array();
  const MetricsConfig metrics;
  for (const BatchItem& item : items) {
    const std::size_t source_index = loaded.first_index + item.index;
    const std::string id = image_id(source_index);
    if (item.skipped) {
      skipped_ids.push_back(id);
      ++summary.skipped;
      continue;
    }
    const AttackResult& r = *item.result;
    const QualityReport q = quality_report(r.original_image, r.adversarial_image, metrics);
    const std::size_t k_index = r.first_fool_iteration.value_or(r.iterations);
    json record = {{"schema", 1},
                   {"manifest", "../manifest.json"},
                   {"image_id", id},
                   {"source_index", source_index},
                   {"method", summary.method},
                   {"true_label", data.labels[item.index]},
                   {"success", r.success},
                   {"first_fool_iteration", r.first_fool_iteration ? json(*r.first_fool_iteration) : json(nullptr)},
                   {"iterations", r.iterations},
                   {"adversarial_label", r.final_prediction.label},
                   {"adversarial_confidence", r.final_prediction.confidence},
                   {"confidences", r.confidence_trajectory},
                   {"labels", r.label_trajectory},
                   {"goal_confidences", r.goal_confidence_trajectory},
                   {"metrics", q.to_json()},
                   {"kl_divergence", histogram_kl(r.original_image, r.adversarial_image)},
                   {"cost_at_k", r.cost_trajectory.empty() ? json(nullptr) : cost_json(r.cost_trajectory[k_index])}};
    accumulate(summary, record);
    attacked_ids.push_back(id);
    write_text(dir / "records" / (id + ".json"), dump(record));
    write_text(dir / "adversarial" / (id + ".ppm"), encode_ppm(r.adversarial_image));
    if (f.trace) {
      CsvTable t({std::string(kCsvSchemaTag), "iteration", "confidence", "label", "goal_confidence"});
      for (std::size_t k = 0; k < r.confidence_trajectory.size(); ++k) {
        t.add(kCsvSchemaValue).add(k).add(r.confidence_trajectory[k]).add(r.label_trajectory[k]);
        t.add(r.goal_confidence_trajectory[k]);
        t.end_row();
      }
      write_text(dir / "traces" / (id + ".csv"), t.str());
    }
  }

  CsvTable table(summary_header("run"));
  summary_row(table, dir.filename().string(), summary);
  write_text(dir / "summary.csv", table.str());

  json cfg = attack_config_json(config);
  cfg["method"] = summary.method;
  cfg["metrics"] = metrics.to_json();
  cfg["regularizer_normalization"] = "H*W*C";
  json manifest = make_manifest("attack", args, cfg, seed, mf.identity, loaded.identity, clock);
  manifest["attacked"] = {{"count", attacked_ids.size()}, {"image_ids", attacked_ids}};
  manifest["skipped_misclassified"] = {{"count", skipped_ids.size()}, {"image_ids", skipped_ids}};
  manifest["outputs"] = {"summary.csv", "records/", "adversarial/"};
  if (f.trace) manifest["outputs"].push_back("traces/");
  write_text(dir / "manifest.json", dump(manifest));
  out << summary.method << ": " << summary.successes << "/" << summary.attacked << " fooled, " << summary.skipped
      << " skipped (misclassified)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- compare / stats

struct RunDir {
  fs::path dir;
  std::string method;
  json manifest;
  std::map<std::string, json> records;  // by image id
};

RunDir read_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("'" + dir.string() + "' is not a directory");
  if (!fs::exists(dir / "manifest.json")) throw InputError("'" + dir.string() + "' has no manifest.json");
  RunDir run{dir, "", read_json(dir / "manifest.json"), {}};
  run.method = run.manifest.at("config").at("method").get<std::string>();
  if (fs::is_directory(dir / "records")) {
    for (const auto& entry : fs::directory_iterator(dir / "records")) {
      if (entry.path().extension() != ".json") continue;
      json rec = read_json(entry.path());
      run.records.emplace(rec.at("image_id").get<std::string>(), std::move(rec));
    }
  }
  if (run.records.empty()) throw InputError("'" + dir.string() + "' holds no attack records");
  return run;
}

std::vector<RunDir> read_runs(const std::vector<std::string>& dirs) {
  std::vector<RunDir> runs;
  for (const auto& d : dirs) runs.push_back(read_run(d));
  for (std::size_t i = 1; i < runs.size(); ++i) {
    std::vector<std::string> only_first, only_other;
    for (const auto& [id, _] : runs[0].records) {
      if (!runs[i].records.count(id)) only_first.push_back(id);
    }
    for (const auto& [id, _] : runs[i].records) {
      if (!runs[0].records.count(id)) only_other.push_back(id);
    }
    if (!only_first.empty() || !only_other.empty()) {
      std::string msg = "image id sets differ between '" + runs[0].dir.string() + "' and '" + runs[i].dir.string() + "':";
      auto list = [](const std::vector<std::string>& ids) {
        std::string s;
        for (std::size_t k = 0; k < ids.size() && k < 20; ++k) s += (k ? "," : "") + ids[k];
        if (ids.size() > 20) s += ",...";
        return s;
      };
      if (!only_first.empty()) msg += " only in first [" + list(only_first) + "]";
      if (!only_other.empty()) msg += " only in second [" + list(only_other) + "]";
      throw InputError(msg);
    }
  }
  return runs;
}

// Unique labels: the method name, suffixed "#2", "#3", ... on repeats.
std::vector<std::string> run_labels(const std::vector<RunDir>& runs) {
  std::map<std::string, int> seen;
  std::vector<std::string> labels;
  for (const auto& r : runs) {
    const int n = ++seen[r.method];
    labels.push_back(n == 1 ? r.method : r.method + "#" + std::to_string(n));
  }
  return labels;
}

json build_stats(const std::vector<RunDir>& runs, const std::vector<std::string>& labels,
                 std::optional<double> bandwidth, std::size_t resolution, std::vector<std::string>* excluded) {
  std::vector<MethodSamples> samples;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    MethodSamples ms{labels[i], {}, {}};
    for (const auto& [id, rec] : runs[i].records) {
      if (!rec.at("success").get<bool>()) continue;
      ms.kl_samples.push_back(rec.at("kl_divergence").get<double>());
      ms.l2_samples.push_back(rec.at("metrics").at("l2").get<double>());
    }
    if (ms.l2_samples.empty()) {
      if (!excluded) throw InputError("method '" + labels[i] + "' has no successful attacks");
      excluded->push_back(labels[i]);
      continue;
    }
    samples.push_back(std::move(ms));
  }
  if (samples.empty()) throw InputError("no method has successful attacks to summarise");
  json j = summarize_samples(std::move(samples), bandwidth, resolution).to_json();
  if (excluded) j["excluded_without_successes"] = *excluded;
  return j;
}

int cmd_compare(const std::vector<std::string>& args, const std::vector<std::string>& dirs, const std::string& out_dir,
                std::optional<double> bandwidth, std::size_t resolution, std::ostream& out) {
  Stopwatch clock;
  if (dirs.size() < 2) throw UsageError("compare needs at least two attack output directories");
  if (out_dir.empty()) throw UsageError("--out is required: output directory");
  const std::vector<RunDir> runs = read_runs(dirs);
  const std::vector<std::string> labels = run_labels(runs);

  CsvTable table(summary_header("run"));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    RunSummary s;
    s.method = runs[i].method;
    s.skipped = runs[i].manifest.at("skipped_misclassified").at("count").get<std::size_t>();
    for (const auto& [id, rec] : runs[i].records) accumulate(s, rec);
    summary_row(table, labels[i], s);
  }

  std::vector<std::string> excluded;
  const json stats = build_stats(runs, labels, bandwidth, resolution, &excluded);
  CsvTable kde_table({std::string(kCsvSchemaTag), "run", "quantity", "grid", "density"});
  for (const json& m : stats.at("methods")) {
    for (const char* quantity : {"l2", "kl"}) {
      const json& d = m.at(std::string(quantity) + "_density");
      if (d.is_null()) continue;
      const auto& grid = d.at("grid");
      const auto& dens = d.at("density");
      for (std::size_t k = 0; k < grid.size(); ++k) {
        kde_table.add(kCsvSchemaValue).add(m.at("method").get<std::string>()).add(quantity);
        kde_table.add(grid[k].get<double>()).add(dens[k].get<double>());
        kde_table.end_row();
      }
    }
  }

  const fs::path dir = out_dir;
  write_text(dir / "comparison.csv", table.str());
  write_text(dir / "kde.csv", kde_table.str());
  json stats_out = stats;
  stats_out["manifest"] = "manifest.json";
  write_text(dir / "stats.json", dump(stats_out));
  json inputs = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    inputs.push_back({{"run", labels[i]}, {"dir", runs[i].dir.string()}, {"model", runs[i].manifest.at("model")}});
  }
  const json cfg = {{"bandwidth", bandwidth ? json(*bandwidth) : json("silverman")}, {"resolution", resolution},
                    {"kl_smoothing", kKlSmoothing}, {"inputs", inputs}};
  json manifest = make_manifest("compare", args, cfg, runs[0].manifest.at("seed").get<std::uint64_t>(),
                                      runs[0].manifest.at("model"), runs[0].manifest.at("dataset"), clock);
  manifest["outputs"] = {"comparison.csv", "kde.csv", "stats.json"};
  write_text(dir / "manifest.json", dump(manifest));
  out << "compared " << runs.size() << " runs over " << runs[0].records.size() << " images; smallest mean L2: "
      << stats.at("sharpest_l2_method").get<std::string>() << "\n";
  return kExitOk;
}

int cmd_stats(const std::vector<std::string>& dirs, const std::string& original, const std::string& adversarial,
              const std::string& out_path, std::optional<double> bandwidth, std::size_t resolution, std::ostream& out) {
  json result;
  if (!original.empty() || !adversarial.empty()) {
    if (original.empty() || adversarial.empty()) throw UsageError("--original and --adversarial go together");
    if (!dirs.empty()) throw UsageError("give either run directories or an image pair, not both");
    const Image a = load_ppm(original), b = load_ppm(adversarial);
    result = quality_report(a, b).to_json();
    result["kl_divergence"] = histogram_kl(a, b);
  } else {
    if (dirs.empty()) throw UsageError("stats needs attack output directories or --original/--adversarial");
    const std::vector<RunDir> runs = read_runs(dirs);
    result = build_stats(runs, run_labels(runs), bandwidth, resolution, nullptr);
  }
  if (out_path.empty()) {
    out << dump(result);
  } else {
    write_text(out_path, dump(result));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- sweep

std::vector<double> grid_list(const json& grid, const char* key, double preset) {
  if (!grid.contains(key)) return {preset};
  const json& v = grid.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError(std::string("grid: '") + key + "' must be a number or a list");
  return v.get<std::vector<double>>();
}

SweepSpec sweep_spec_from_json(const json& grid) {
  static const std::set<std::string> known = {"method", "lambda1", "lambda2", "lambda3", "lambda4",
                                              "alpha", "epsilon", "stop_rule", "confidence", "max_iterations",
                                              "mode", "target", "intensity_unit", "overshoot"};
  for (const auto& [key, _] : grid.items()) {
    if (!known.count(key)) throw ConfigError("grid: unknown key '" + key + "'");
  }
  SweepSpec spec;
  try {
    spec.method = parse_method(grid.value("method", std::string("jnd")));
    spec.base = preset_config(spec.method);
    spec.lambda1 = grid_list(grid, "lambda1", spec.base.lambda1);
    spec.lambda2 = grid_list(grid, "lambda2", spec.base.lambda2);
    spec.lambda3 = grid_list(grid, "lambda3", spec.base.lambda3);
    spec.lambda4 = grid_list(grid, "lambda4", spec.base.lambda4);
    spec.alpha = grid_list(grid, "alpha", spec.base.alpha);
    spec.epsilon = grid_list(grid, "epsilon", spec.base.epsilon);
    if (grid.contains("stop_rule")) spec.base.stop_rule = parse_stop_rule(grid.at("stop_rule").get<std::string>());
    if (grid.contains("confidence")) {
      spec.base.confidence_threshold = grid.at("confidence").get<double>();
      if (!grid.contains("stop_rule")) spec.base.stop_rule = StopRule::confidence_reached;
    }
    if (grid.contains("max_iterations")) spec.base.max_iterations = grid.at("max_iterations").get<std::size_t>();
    if (grid.contains("intensity_unit")) spec.base.intensity_unit = grid.at("intensity_unit").get<double>();
    if (grid.contains("overshoot")) spec.base.overshoot = grid.at("overshoot").get<double>();
    std::optional<std::size_t> target;
    if (grid.contains("target")) target = grid.at("target").get<std::size_t>();
    spec.base.mode = parse_mode(grid.value("mode", std::string("nontargeted")), target);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  return spec;
}

int cmd_sweep(const std::vector<std::string>& args, const DataFlags& flags, const std::string& grid_path,
              const std::string& model_path, std::size_t validation_count, double floor, std::size_t jobs,
              const std::string& out_dir, std::optional<std::uint64_t> seed_flag, std::ostream& out) {
  Stopwatch clock;
  if (grid_path.empty()) throw UsageError("--grid is required: JSON grid specification");
  if (out_dir.empty()) throw UsageError("--out is required: output directory");
  if (!fs::exists(grid_path)) throw InputError("--grid: no such file '" + grid_path + "'");
  SweepSpec spec = sweep_spec_from_json(read_json(grid_path));
  spec.validation_count = validation_count;
  spec.success_floor = floor;
  spec.jobs = jobs;
  spec.validate();
  const ModelFile mf = load_model_file(model_path);
  const auto source = flags.source("data");
  if (!source) throw UsageError("--data (or --synthetic) is required: name the validation images");
  const std::uint64_t seed = resolve_seed(seed_flag);
  const LoadedData loaded = load_source(*source, seed);

  Dataset validation;
  validation.class_names = loaded.data.class_names;
  json used_ids = json::array(), skipped_ids = json::array();
  for (std::size_t i = 0; i < loaded.data.size() && validation.size() < validation_count; ++i) {
    const std::string id = image_id(loaded.first_index + i);
    if (mf.model.predict(loaded.data.images[i]).label != loaded.data.labels[i]) {
      skipped_ids.push_back(id);
      continue;
    }
    validation.images.push_back(loaded.data.images[i]);
    validation.labels.push_back(loaded.data.labels[i]);
    used_ids.push_back(id);
  }
  if (validation.empty()) throw InputError("sweep: no correctly classified validation images");
  out << "sweep over " << spec.grid_size() << " cells x " << validation.size() << " images\n";
  const SweepResult result = run_sweep(mf.model, validation, spec);

  const fs::path dir = out_dir;
  write_text(dir / "sweep.csv", sweep_csv(result));
  json j = sweep_json(result);
  j["validation_image_ids"] = used_ids;
  j["manifest"] = "manifest.json";
  write_text(dir / "sweep.json", dump(j));
  json cfg = attack_config_json(spec.base);
  cfg["method"] = std::string(method_name(spec.method));
  cfg["grid_size"] = spec.grid_size();
  cfg["success_floor"] = spec.success_floor;
  cfg["validation_count"] = validation_count;
  json manifest = make_manifest("sweep", args, cfg, seed, mf.identity, loaded.identity, clock);
  manifest["skipped_misclassified"] = {{"count", skipped_ids.size()}, {"image_ids", skipped_ids}};
  manifest["outputs"] = {"sweep.csv", "sweep.json"};
  write_text(dir / "manifest.json", dump(manifest));
  const SweepCell& best = result.best_cell();
  out << "best cell " << best.index << " objective " << format_real(*best.objective) << "\n";
  return kExitOk;
}

}  // namespace

std::string toolkit_version() { return JND_VERSION; }

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("JND_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("JND_SEED='") + env + "' is not an unsigned integer");
    }
  }
  return 1;
}

LoadedData load_source(const DataSource& source, std::uint64_t default_seed) {
  LoadedData out;
  Dataset full;
  constexpr std::string_view prefix = "synthetic:";
  if (source.spec.rfind(prefix, 0) == 0) {
    const auto parts = split(source.spec.substr(prefix.size()), ':');
    if (parts.empty() || parts.size() > 2) throw ConfigError("synthetic source must be synthetic:CxN[:SEED]");
    SyntheticSpec spec = parse_synthetic_size(parts[0]);
    spec.seed = default_seed;
    if (parts.size() == 2) {
      try {
        spec.seed = std::stoull(parts[1]);
      } catch (const std::exception&) {
        throw ConfigError("synthetic seed '" + parts[1] + "' is not an unsigned integer");
      }
    }
    full = generate_synthetic(spec);
    out.identity = synthetic_manifest(spec);
  } else {
    json files = json::array();
    std::vector<fs::path> paths;
    for (const auto& p : split(source.spec, ',')) {
      if (p.empty()) continue;
      if (!fs::exists(p)) throw InputError("--data: no such file '" + p + "'");
      const auto bytes = read_file_bytes(p);
      files.push_back({{"path", p}, {"hash", content_hash(std::string(bytes.begin(), bytes.end()))}});
      paths.emplace_back(p);
    }
    if (paths.empty()) throw InputError("--data names no files");
    full = load_cifar10_batches(paths);
    out.identity = {{"kind", "cifar10"}, {"files", files}};
  }
  const std::size_t count = source.count.value_or(full.size());
  out.data = full.slice(source.skip, count);
  out.first_index = std::min(source.skip, full.size());
  out.identity["skip"] = source.skip;
  out.identity["count"] = out.data.size();
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"JND adversarial-image toolkit", "jnd"};
  app.require_subcommand(1);
  app.set_version_flag("--version", toolkit_version());

  std::optional<std::uint64_t> seed_flag;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { seed_flag = v; }, "seed (falls back to JND_SEED, then 1)");
  };

  // train
  CLI::App* train_cmd = app.add_subcommand("train", "train the desk classifier");
  DataFlags train_data, eval_data;
  train_data.add(train_cmd);
  eval_data.add(train_cmd, "eval-");
  TrainSchedule sched;
  std::string train_out;
  train_cmd->add_option("--epochs", sched.epochs, "training epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", sched.batch_size, "mini-batch size")->capture_default_str();
  train_cmd->add_option("--lr", sched.learning_rate, "SGD learning rate")->capture_default_str();
  train_cmd->add_option("--out", train_out, "checkpoint path");
  add_seed(train_cmd);

  // attack
  CLI::App* attack_cmd = app.add_subcommand("attack", "attack every image of a dataset");
  DataFlags attack_data;
  attack_data.add(attack_cmd);
  AttackFlags af;
  attack_cmd->add_option("--model", af.model, "checkpoint");
  attack_cmd->add_option("--method", af.method, "jnd|fgsm|fgv|deepfool");
  attack_cmd->add_option("--mode", af.mode, "nontargeted|targeted")->capture_default_str();
  attack_cmd->add_option("--target", af.target, "target label for --mode targeted")->each([&](const std::string&) {
    af.has_target = true;
  });
  attack_cmd->add_option("--lambda", af.lambda, "lambda1,lambda2,lambda3,lambda4");
  attack_cmd->add_option_function<double>("--alpha", [&](const double& v) { af.alpha = v; }, "JND learning rate");
  attack_cmd->add_option_function<double>("--epsilon", [&](const double& v) { af.epsilon = v; }, "FGSM/FGV step");
  attack_cmd->add_option("--stop-rule", af.stop_rule, "first_label_flip|confidence_reached");
  attack_cmd->add_option_function<double>("--confidence", [&](const double& v) { af.confidence = v; },
                                          "confidence threshold for confidence_reached");
  attack_cmd->add_option("--max-iters", af.max_iters, "iteration cap")->each([&](const std::string&) {
    af.has_max_iters = true;
  });
  attack_cmd->add_option_function<double>("--overshoot", [&](const double& v) { af.overshoot = v; },
                                          "DeepFool overshoot");
  attack_cmd->add_option_function<double>("--intensity-unit", [&](const double& v) { af.unit = v; },
                                          "pixel value of one unit of attack arithmetic");
  attack_cmd->add_flag("--continue", af.keep_going, "keep iterating after the goal is first met");
  attack_cmd->add_option("--out", af.out_dir, "output directory");
  attack_cmd->add_option("--jobs", af.jobs, "worker threads")->capture_default_str();
  attack_cmd->add_flag("--trace", af.trace, "write one confidence CSV per image");
  add_seed(attack_cmd);

  // compare
  CLI::App* compare_cmd = app.add_subcommand("compare", "aggregate attack outputs side by side");
  std::vector<std::string> compare_dirs;
  std::string compare_out;
  std::optional<double> bandwidth;
  std::size_t resolution = 512;
  compare_cmd->add_option("dirs", compare_dirs, "attack output directories");
  compare_cmd->add_option("--out", compare_out, "output directory");
  compare_cmd->add_option_function<double>("--bandwidth", [&](const double& v) { bandwidth = v; },
                                           "KDE bandwidth (default: Silverman)");
  compare_cmd->add_option("--resolution", resolution, "KDE grid points")->capture_default_str();

  // sweep
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid search over attack hyperparameters");
  DataFlags sweep_data;
  sweep_data.add(sweep_cmd);
  std::string grid_path, sweep_model, sweep_out;
  std::size_t validation_count = kDefaultValidationCount, sweep_jobs = 1;
  double floor = kDefaultSuccessFloor;
  sweep_cmd->add_option("--grid", grid_path, "JSON grid specification");
  sweep_cmd->add_option("--model", sweep_model, "checkpoint");
  sweep_cmd->add_option("--validation-count", validation_count, "validation images")->capture_default_str();
  sweep_cmd->add_option("--floor", floor, "minimum success rate of a viable cell")->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep_jobs, "worker threads")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "output directory");
  add_seed(sweep_cmd);

  // stats
  CLI::App* stats_cmd = app.add_subcommand("stats", "KL / L2 population statistics or a single-pair report");
  std::vector<std::string> stats_dirs;
  std::string original, adversarial, stats_out;
  stats_cmd->add_option("dirs", stats_dirs, "attack output directories");
  stats_cmd->add_option("--original", original, "original image (PPM)");
  stats_cmd->add_option("--adversarial", adversarial, "adversarial image (PPM)");
  stats_cmd->add_option("--out", stats_out, "output JSON (default: stdout)");
  stats_cmd->add_option_function<double>("--bandwidth", [&](const double& v) { bandwidth = v; },
                                         "KDE bandwidth (default: Silverman)");
  stats_cmd->add_option("--resolution", resolution, "KDE grid points")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << toolkit_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "jnd: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(args, train_data, eval_data, sched, seed_flag, train_out, out);
    if (attack_cmd->parsed()) return cmd_attack(args, attack_data, af, seed_flag, out);
    if (compare_cmd->parsed()) return cmd_compare(args, compare_dirs, compare_out, bandwidth, resolution, out);
    if (sweep_cmd->parsed()) {
      return cmd_sweep(args, sweep_data, grid_path, sweep_model, validation_count, floor, sweep_jobs, sweep_out,
                       seed_flag, out);
    }
    if (stats_cmd->parsed()) return cmd_stats(stats_dirs, original, adversarial, stats_out, bandwidth, resolution, out);
  } catch (const Error& e) {
    err << "jnd: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "jnd: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  err << "jnd: no subcommand\n";
  return kExitUsage;
}

}  // namespace jnd::cli
