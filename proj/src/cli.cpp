#include "m2rec/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "m2rec/checkpoint.hpp"
#include "m2rec/dataset.hpp"
#include "m2rec/embeddings.hpp"
#include "m2rec/error.hpp"
#include "m2rec/evaluation.hpp"
#include "m2rec/fft.hpp"
#include "m2rec/log.hpp"
#include "m2rec/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace m2rec {
namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error(std::string(what) + " not found: " + p.string());
}

bool has_semantic_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[6] = {};
  in.read(magic, 6);
  return in && std::equal(magic, magic + 6, kSemanticMagic);
}

std::shared_ptr<const Matrix> load_semantic(const std::string& path, std::size_t vocab) {
  if (path.empty()) return nullptr;
  require_file(path, "embedding file");
  const SemanticTable t = import_semantic(path, vocab);
  if (t.missing_rows > 0)
    log::warn(t.missing_rows, " items have no semantic row; their rows stay zero");
  return std::make_shared<const Matrix>(t.raw);
}

std::shared_ptr<const InteractionDataset> load_dataset(const std::string& dir) {
  require_file(fs::path(dir) / "sequences.tsv", "dataset");
  auto d = std::make_shared<const InteractionDataset>(load_canonical(dir));
  const auto s = d->stats();
  log::info("dataset ", dir, ": ", s.users, " users, ", s.items, " items, ", s.interactions,
            " interactions");
  return d;
}

// Table columns in a stable order: every metric at every cutoff.
void print_metrics_table(std::ostream& out, const std::vector<std::pair<std::string, json>>& rows,
                         const std::vector<std::size_t>& ks) {
  std::vector<std::string> cols;
  for (const char* m : {"hr", "ndcg", "mrr"})
    for (std::size_t k : ks) cols.push_back(std::string(m) + "@" + std::to_string(k));
  std::size_t width = 8;
  for (const auto& [name, j] : rows) width = std::max(width, name.size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "";
  for (const auto& c : cols) out << std::right << std::setw(10) << c;
  out << std::setw(8) << "users" << '\n';
  for (const auto& [name, j] : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << name;
    for (const auto& c : cols)
      out << std::right << std::setw(10) << std::fixed << std::setprecision(4)
          << j.value(c, 0.0);
    out << std::setw(8) << j.value("users", 0) << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void print_report(std::ostream& out, const MetricReport& r) {
  std::vector<std::pair<std::string, json>> rows;
  const json j = r.to_json();
  rows.emplace_back("all", j);
  for (const auto& [name, v] : r.cumulative) rows.emplace_back(name, j["buckets"]["cumulative"][name]);
  for (const auto& [name, v] : r.disjoint) rows.emplace_back(name, j["buckets"]["disjoint"][name]);
  print_metrics_table(out, rows, r.ks);
}

// Options shared by train and ablate; each given flag lands in `overlay`
// under its config key.
struct ConfigFlags {
  std::string config_path;
  json overlay = json::object();
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_path, "JSON training config; flags override its values")
      ->check(CLI::ExistingFile);
  const auto num = [&](const char* flag, const char* key, const char* help, auto type_tag) {
    using T = decltype(type_tag);
    app->add_option_function<T>(flag, [&f, key](const T& v) { f.overlay[key] = v; }, help);
  };
  num("--epochs", "epochs", "maximum training epochs", std::size_t{});
  num("--lr", "lr", "Adam learning rate", double{});
  num("--seed", "seed", "random seed", std::uint64_t{});
  num("--batch", "batch_train", "training batch size (windows)", std::size_t{});
  num("--batch-eval", "batch_eval", "evaluation batch size", std::size_t{});
  num("--max-len", "max_len", "window length T", std::size_t{});
  num("--d", "d", "model width", std::size_t{});
  num("--d-state", "d_state", "SSM state size N", std::size_t{});
  num("--expand", "expand", "inner expansion factor", std::size_t{});
  num("--layers", "layers", "number of AFFM layers", std::size_t{});
  num("--conv-width", "conv_width", "causal convolution width", std::size_t{});
  num("--dt-rank", "dt_rank", "step-size projection rank (0: ceil(d/16))", std::size_t{});
  num("--theta", "theta", "spectral filter mixing weight in (0, 1]", double{});
  num("--dropout", "dropout", "ID-embedding dropout", double{});
  num("--clip-norm", "clip_norm", "global gradient norm clip (0: off)", double{});
  num("--patience", "patience", "early stopping patience in epochs (0: off)", std::size_t{});
  num("--target-value", "target_value", "stop once target metric reaches this", double{});
  num("--threads", "threads", "worker threads", std::size_t{});
  num("--shard-rows", "shard_rows", "window rows per forward pass", std::size_t{});
  num("--loss", "loss_mode", "softmax_ce | bce_all_items", std::string{});
  num("--discretization", "discretization", "zoh | paper_variant", std::string{});
  num("--filter-mode", "filter_mode", "elementwise | dense", std::string{});
  num("--fusion", "fusion", "gate | concat | temporal_only", std::string{});
  num("--early-stop-metric", "early_stop_metric", "validation metric for model selection",
      std::string{});
  num("--target-metric", "target_metric", "validation metric with a stop target", std::string{});
  app->add_option_function<std::vector<std::size_t>>(
      "--k", [&f](const std::vector<std::size_t>& v) { f.overlay["ks"] = v; }, "metric cutoffs");
  app->add_flag_function(
      "--no-filter", [&f](std::int64_t) { f.overlay["spectral_filter"] = false; },
      "bypass the spectral filter");
  app->add_flag_function(
      "--tie-output", [&f](std::int64_t) { f.overlay["tie_output"] = true; },
      "score with the item embedding table");
  app->add_flag_function(
      "--all-positions", [&f](std::int64_t) { f.overlay["all_positions"] = true; },
      "training loss at every position");
}

TrainConfig resolve_config(const ConfigFlags& f) {
  TrainConfig c;
  if (!f.config_path.empty()) c = TrainConfig::from_json(read_json(f.config_path));
  c = TrainConfig::from_json(f.overlay, c);
  return apply_variant(c, c.variant);
}

struct TrainOutcome {
  json valid;
  MetricReport test;
  std::size_t best_epoch;
  std::size_t epochs;
  std::string stop_reason;
};

TrainOutcome train_one(const TrainConfig& config, std::shared_ptr<const Split> split,
                       std::shared_ptr<const Matrix> semantic, const fs::path& out_dir,
                       const std::string& resume_path) {
  fs::create_directories(out_dir);
  log::info("resolved config: ", config.to_json().dump());
  log::info("seed ", config.seed);
  write_json(out_dir / "config.json", config.to_json());

  std::optional<Trainer> trainer;
  if (!resume_path.empty()) {
    require_file(resume_path, "checkpoint");
    trainer.emplace(Trainer::resume(read_checkpoint(resume_path), split, semantic));
    log::info("resumed at epoch ", trainer->epoch());
  } else {
    trainer.emplace(config, split, semantic);
  }
  trainer->run(config.epochs);
  write_checkpoint(out_dir / "last.ckpt", trainer->checkpoint(false));
  write_checkpoint(out_dir / "best.ckpt", trainer->checkpoint(true));
  write_json(out_dir / "history.json", trainer->history_json());

  EvalOptions eo;
  eo.ks = config.ks;
  eo.threads = config.threads;
  eo.shard_rows = config.shard_rows;
  const Model best = trainer->best_model();
  TrainOutcome o{trainer->best_metrics(), rank_and_score(best, *split, split->test(), eo),
                 trainer->best_epoch(), trainer->epoch(), trainer->stop_reason()};
  write_json(out_dir / "metrics.json", {{"best_epoch", o.best_epoch},
                                        {"epochs", o.epochs},
                                        {"stop_reason", o.stop_reason},
                                        {"valid", o.valid},
                                        {"test", o.test.to_json()}});
  return o;
}

int cmd_prepare(const std::string& input, const std::string& out_dir, const IngestOptions& o,
                std::ostream& out) {
  require_file(input, "input");
  const auto d = ingest_tsv(input, o);
  save_canonical(d, out_dir);
  const auto s = d.stats();
  write_json(fs::path(out_dir) / "stats.json",
             {{"users", s.users}, {"items", s.items}, {"interactions", s.interactions},
              {"min_user_len", o.min_user_len}, {"min_item_count", o.min_item_count}});
  out << "users " << s.users << "\nitems " << s.items << "\ninteractions " << s.interactions << '\n';
  return 0;
}

int cmd_synth(const SyntheticOptions& o, const std::string& out_dir, std::ostream& out) {
  const auto d = generate_synthetic(o);
  save_canonical(d, out_dir);
  write_json(fs::path(out_dir) / "synth.json",
             {{"users", o.num_users}, {"items", o.num_items}, {"length", o.length},
              {"periods", o.periods}, {"noise", o.noise_prob}, {"seed", o.seed},
              {"random_phase", o.random_phase}});
  log::info("synthetic dataset seed ", o.seed);
  const auto s = d.stats();
  out << "users " << s.users << "\nitems " << s.items << "\ninteractions " << s.interactions << '\n';
  return 0;
}

// Row count from the header of a binary embedding file.
std::size_t semantic_file_rows(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char h[14] = {};
  in.read(reinterpret_cast<char*>(h), sizeof h);
  if (!in) throw FormatError(path.string() + ": truncated header");
  return static_cast<std::size_t>(h[10]) | static_cast<std::size_t>(h[11]) << 8 |
         static_cast<std::size_t>(h[12]) << 16 | static_cast<std::size_t>(h[13]) << 24;
}

int cmd_embed_import(const std::string& input, const std::string& data_dir,
                     std::size_t expected_dim, const std::string& output, std::ostream& out) {
  require_file(input, "input");
  const std::size_t vocab = data_dir.empty() ? 0 : load_dataset(data_dir)->num_items();
  Matrix rows;
  if (has_semantic_magic(input)) {
    const std::size_t n = semantic_file_rows(input);
    const SemanticTable t = import_semantic(input, data_dir.empty() ? n : vocab, expected_dim);
    rows = t.raw.middleRows(1, static_cast<Eigen::Index>(n));
  } else {
    rows = read_semantic_text(input);
    if (expected_dim > 0 && static_cast<std::size_t>(rows.cols()) != expected_dim)
      throw FormatError("embed-import: rows have dimension " + std::to_string(rows.cols()) +
                        ", expected " + std::to_string(expected_dim));
  }
  std::size_t missing = 0;
  if (!data_dir.empty()) {
    if (static_cast<std::size_t>(rows.rows()) > vocab)
      throw FormatError("embed-import: " + std::to_string(rows.rows()) +
                        " rows for a vocabulary of " + std::to_string(vocab));
    missing = vocab - static_cast<std::size_t>(rows.rows());
  }
  write_semantic(output, rows);
  out << "rows " << rows.rows() << "\ndim " << rows.cols() << "\nmissing " << missing << '\n';
  return 0;
}

int cmd_train(const ConfigFlags& flags, const std::string& data_dir, const std::string& emb,
              const std::string& out_dir, const std::string& resume, std::ostream& out) {
  TrainConfig config = resolve_config(flags);
  if (!resume.empty()) {
    // the stored config wins; only the epoch budget may change
    require_file(resume, "checkpoint");
    TrainConfig stored = checkpoint_config(read_checkpoint(resume));
    if (flags.overlay.contains("epochs")) stored.epochs = config.epochs;
    config = stored;
  }
  const auto data = load_dataset(data_dir);
  const auto split = std::make_shared<const Split>(data, config.max_len);
  const auto o = train_one(config, split, load_semantic(emb, data->num_items()), out_dir, resume);
  out << "stopped after epoch " << o.epochs << " (" << o.stop_reason << "), best epoch "
      << o.best_epoch << "\n\ntest metrics of the best model:\n";
  print_report(out, o.test);
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir, const std::string& emb,
                 std::vector<std::size_t> ks, const std::string& which,
                 const std::vector<double>& noise, std::uint64_t noise_seed, std::size_t threads,
                 const std::string& out_path, bool json_only, std::ostream& out) {
  require_file(ckpt_path, "checkpoint");
  const CheckpointFile file = read_checkpoint(ckpt_path);
  const TrainConfig config = checkpoint_config(file);
  const auto data = load_dataset(data_dir);
  if (file.meta.at("num_items").get<std::size_t>() != data->num_items())
    throw ContractError("evaluate: checkpoint catalogue size differs from the dataset");
  const Model model = load_model(file, load_semantic(emb, data->num_items()));
  const Split split(data, config.max_len);
  const auto& windows = which == "valid" ? split.valid() : split.test();

  EvalOptions eo;
  eo.ks = ks.empty() ? config.ks : ks;
  eo.threads = threads;
  eo.shard_rows = config.shard_rows;
  const MetricReport report = rank_and_score(model, split, windows, eo);
  json j = report.to_json();
  j["split"] = which;
  j["checkpoint_epoch"] = file.meta.value("epoch", 0);
  if (!noise.empty()) {
    json sweep = json::array();
    for (const auto& p : robustness_sweep(model, split, windows, noise, noise_seed, eo)) {
      json e = p.report.to_json();
      e.erase("buckets");
      e["level"] = p.level;
      sweep.push_back(e);
    }
    j["robustness"] = sweep;
    j["noise_seed"] = noise_seed;
  }
  if (!out_path.empty()) write_json(out_path, j);
  if (json_only) {
    out << j.dump(2) << '\n';
    return 0;
  }
  print_report(out, report);
  if (!noise.empty()) {
    out << "\nembedding noise:\n";
    std::vector<std::pair<std::string, json>> rows;
    for (const auto& e : j["robustness"]) {
      std::ostringstream name;
      name << e["level"].get<double>() * 100.0 << "%";
      rows.emplace_back(name.str(), e);
    }
    print_metrics_table(out, rows, eo.ks);
  }
  return 0;
}

struct SignalSource {
  std::string input;
  std::size_t column = 0;
  bool header = false;
  std::string separator = "\t";
  std::size_t user = 0;
};

std::vector<double> read_signal_column(const SignalSource& s) {
  require_file(s.input, "input");
  std::ifstream in(s.input);
  std::vector<double> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && s.header) continue;
    if (line.empty()) continue;
    std::size_t start = 0;
    for (std::size_t c = 0; c < s.column; ++c) {
      start = line.find(s.separator, start);
      if (start == std::string::npos) throw ParseError("missing column " + std::to_string(s.column), lineno);
      start += s.separator.size();
    }
    const std::string field = line.substr(start, line.find(s.separator, start) - start);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw ParseError("not a number: '" + field + "'", lineno);
    }
  }
  return v;
}

int cmd_spectrum(const std::vector<double>& signal, const std::string& out_path, std::size_t top,
                 std::ostream& out) {
  if (signal.size() < 2) throw LengthError("spectrum: need at least two samples");
  const auto p = power_spectrum(signal);
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw Error("cannot write " + out_path);
  }
  std::ostream& dst = out_path.empty() ? out : file;
  dst << "frequency\tpower\n" << std::setprecision(12);
  for (const auto& pt : p) dst << pt.frequency << '\t' << pt.power << '\n';
  if (top > 0) {
    std::vector<SpectrumPoint> peaks(p.begin() + 1, p.end());
    std::stable_sort(peaks.begin(), peaks.end(),
                     [](const auto& a, const auto& b) { return a.power > b.power; });
    peaks.resize(std::min(top, peaks.size()));
    for (const auto& pt : peaks)
      log::info("peak at frequency ", pt.frequency, " (period ", 1.0 / pt.frequency, "), power ",
                pt.power);
  }
  return 0;
}

int cmd_bench(const std::vector<std::size_t>& lengths, std::size_t reps, std::size_t d,
              std::size_t batch, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  log::info("bench seed ", seed, ", d ", d, ", batch ", batch, ", reps ", reps);
  const auto rows = timing_bench(lengths, reps, d, batch, seed);
  json j = json::array();
  out << std::setw(8) << "T" << std::setw(14) << "filter_s" << std::setw(14) << "scan_s"
      << std::setw(14) << "filter_x" << std::setw(14) << "scan_x" << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    json e = {{"length", r.length}, {"filter_seconds", r.filter_seconds},
              {"scan_seconds", r.scan_seconds}};
    out << std::setw(8) << r.length << std::setw(14) << std::setprecision(5) << r.filter_seconds
        << std::setw(14) << r.scan_seconds;
    if (i > 0) {
      const double fr = r.filter_seconds / rows[i - 1].filter_seconds;
      const double sr = r.scan_seconds / rows[i - 1].scan_seconds;
      e["filter_ratio"] = fr;
      e["scan_ratio"] = sr;
      out << std::setw(14) << fr << std::setw(14) << sr;
    }
    out << '\n';
    j.push_back(e);
  }
  if (!out_path.empty())
    write_json(out_path, {{"d", d}, {"batch", batch}, {"reps", reps}, {"seed", seed}, {"rows", j}});
  return 0;
}

int cmd_ablate(const ConfigFlags& flags, const std::string& data_dir, const std::string& emb,
               const std::string& out_dir, std::vector<std::string> variants, std::ostream& out) {
  const TrainConfig base = resolve_config(flags);
  if (variants.empty()) variants = kAblationVariants;
  const auto data = load_dataset(data_dir);
  const auto split = std::make_shared<const Split>(data, base.max_len);
  const auto semantic = load_semantic(emb, data->num_items());
  if (!semantic) log::warn("ablate without semantic embeddings: the gate branch sees zeros");

  json summary = json::object();
  std::vector<std::pair<std::string, json>> rows;
  for (const auto& v : variants) {
    const TrainConfig c = apply_variant(base, v);
    std::string dir = v;
    std::replace(dir.begin(), dir.end(), '/', '_');
    std::replace(dir.begin(), dir.end(), ' ', '_');
    log::info("variant ", v);
    const auto o = train_one(c, split, semantic, fs::path(out_dir) / dir, "");
    json t = o.test.to_json();
    t.erase("buckets");
    t["best_epoch"] = o.best_epoch;
    summary[v] = t;
    rows.emplace_back(v, t);
  }
  write_json(fs::path(out_dir) / "ablation.json", summary);
  out << "test metrics per variant:\n";
  print_metrics_table(out, rows, base.ks);
  return 0;
}

log::Level parse_level(const std::string& s) {
  if (s == "debug") return log::Level::kDebug;
  if (s == "info") return log::Level::kInfo;
  if (s == "warn") return log::Level::kWarn;
  if (s == "error") return log::Level::kError;
  return log::Level::kOff;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Sequential recommendation with adaptive spectral filtering and selective scans",
               "m2rec");
  app.require_subcommand(1);
  app.fallthrough();  // --log-level may follow the subcommand
  app.set_help_all_flag("--help-all", "help for every subcommand");
  std::string level = "info";
  app.add_option("--log-level", level, "debug | info | warn | error | off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  // prepare
  std::string input, out_dir;
  IngestOptions ingest;
  auto* prepare = app.add_subcommand("prepare", "ingest a user/item/timestamp TSV into a dataset directory");
  prepare->add_option("--input", input, "interaction TSV")->required();
  prepare->add_option("--out", out_dir, "output dataset directory")->required();
  prepare->add_option("--min-user-len", ingest.min_user_len, "drop users with fewer events")
      ->capture_default_str();
  prepare->add_option("--min-item-count", ingest.min_item_count, "drop rarer items")
      ->capture_default_str();
  prepare->add_option("--separator", ingest.separator, "field separator (default tab)");
  prepare->add_option("--user-col", ingest.user_column, "0-based user column")->capture_default_str();
  prepare->add_option("--item-col", ingest.item_column, "0-based item column")->capture_default_str();
  prepare->add_option("--time-col", ingest.timestamp_column, "0-based timestamp column")
      ->capture_default_str();

  // synth
  SyntheticOptions so;
  bool fixed_phase = false;
  auto* synth = app.add_subcommand("synth", "generate a periodic synthetic dataset");
  const auto add_synth_flags = [&](CLI::App* a) {
    a->add_option("--users", so.num_users, "number of users")->capture_default_str();
    a->add_option("--items", so.num_items, "catalogue size")->capture_default_str();
    a->add_option("--length", so.length, "events per user")->capture_default_str();
    a->add_option("--periods", so.periods, "generating periods")->capture_default_str();
    a->add_option("--noise", so.noise_prob, "probability of a random replacement item")
        ->capture_default_str();
    a->add_option("--seed", so.seed, "generator seed")->capture_default_str();
    a->add_flag("--fixed-phase", fixed_phase, "start every user at time 0");
  };
  add_synth_flags(synth);
  synth->add_option("--out", out_dir, "output dataset directory")->required();

  // embed-import
  std::string data_dir, output;
  std::size_t dim = 0;
  auto* embed = app.add_subcommand("embed-import", "validate and convert semantic item embeddings");
  embed->add_option("--input", input, "text rows (space separated) or an existing binary file")
      ->required();
  embed->add_option("--data", data_dir, "dataset directory whose vocabulary the rows follow");
  embed->add_option("--dim", dim, "expected dimension (0: any)");
  embed->add_option("--out", output, "binary embedding file to write")->required();

  // train
  ConfigFlags train_flags;
  std::string emb, resume;
  auto* train = app.add_subcommand("train", "train a model and write checkpoints and metrics");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--embeddings", emb, "binary semantic embedding file");
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_option_function<std::string>(
      "--variant", [&](const std::string& v) { train_flags.overlay["variant"] = v; },
      "ablation variant: full, \"w/o GM\", \"rp Con\", \"w/o Ada\", \"w/o AFFT\"");
  add_config_flags(train, train_flags);

  // evaluate
  std::string ckpt, which = "test";
  std::vector<std::size_t> eval_ks;
  std::vector<double> noise;
  std::uint64_t noise_seed = 1;
  std::size_t threads = 1;
  bool json_only = false;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint with full-catalogue ranking");
  evaluate->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  evaluate->add_option("--data", data_dir, "dataset directory")->required();
  evaluate->add_option("--embeddings", emb, "semantic embeddings (default: the checkpoint's)");
  evaluate->add_option("--k", eval_ks, "metric cutoffs (default: the training cutoffs)");
  evaluate->add_option("--split", which, "test | valid")->check(CLI::IsMember({"test", "valid"}));
  evaluate->add_option("--noise", noise, "embedding noise levels for a robustness sweep");
  evaluate->add_option("--noise-seed", noise_seed, "noise seed")->capture_default_str();
  evaluate->add_option("--threads", threads, "worker threads")->capture_default_str();
  evaluate->add_option("--out", output, "write the JSON report here");
  evaluate->add_flag("--json", json_only, "print the JSON report instead of tables");

  // spectrum
  SignalSource sig;
  bool synthetic_signal = false;
  std::size_t top = 0;
  auto* spectrum = app.add_subcommand("spectrum", "power spectrum of a signal");
  spectrum->add_option("--input", sig.input, "TSV file holding the signal");
  spectrum->add_option("--column", sig.column, "0-based signal column")->capture_default_str();
  spectrum->add_flag("--header", sig.header, "skip the first line");
  spectrum->add_option("--separator", sig.separator, "field separator (default tab)");
  spectrum->add_flag("--synthetic", synthetic_signal,
                     "use one user's item sequence from a generated dataset");
  spectrum->add_option("--user", sig.user, "user index for --synthetic")->capture_default_str();
  add_synth_flags(spectrum);
  spectrum->add_option("--out", output, "write the TSV here instead of stdout");
  spectrum->add_option("--top", top, "log the strongest non-DC bins");

  // bench
  std::vector<std::size_t> lengths = {256, 512};
  std::size_t reps = 9, bench_d = 64, bench_batch = 32;
  std::uint64_t bench_seed = 1;
  auto* bench = app.add_subcommand("bench", "time the spectral filter and the selective scan");
  bench->add_option("--lengths", lengths, "sequence lengths")->capture_default_str();
  bench->add_option("--reps", reps, "repetitions (median reported)")->capture_default_str();
  bench->add_option("--d", bench_d, "model width")->capture_default_str();
  bench->add_option("--batch", bench_batch, "sequences per timing")->capture_default_str();
  bench->add_option("--seed", bench_seed, "input seed")->capture_default_str();
  bench->add_option("--out", output, "write the JSON table here");

  // ablate
  ConfigFlags ablate_flags;
  std::vector<std::string> variants;
  auto* ablate = app.add_subcommand("ablate", "train every ablation variant and compare");
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--embeddings", emb, "binary semantic embedding file");
  ablate->add_option("--out", out_dir, "output directory (one run per variant)")->required();
  ablate->add_option("--variants", variants, "subset of variants (default: all)");
  add_config_flags(ablate, ablate_flags);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // help requests
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 2;
    }
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return 2;
  }
  log::set_threshold(parse_level(level));

  try {
    if (*prepare) return cmd_prepare(input, out_dir, ingest, out);
    if (*synth) {
      so.random_phase = !fixed_phase;
      return cmd_synth(so, out_dir, out);
    }
    if (*embed) return cmd_embed_import(input, data_dir, dim, output, out);
    if (*train) return cmd_train(train_flags, data_dir, emb, out_dir, resume, out);
    if (*evaluate)
      return cmd_evaluate(ckpt, data_dir, emb, eval_ks, which, noise, noise_seed, threads, output,
                          json_only, out);
    if (*spectrum) {
      std::vector<double> signal;
      if (synthetic_signal == !sig.input.empty())
        throw UsageError("spectrum: give exactly one of --input or --synthetic");
      if (synthetic_signal) {
        so.random_phase = !fixed_phase;
        const auto d = generate_synthetic(so);
        if (sig.user >= d.users.size()) throw UsageError("spectrum: --user out of range");
        const auto& items = d.users[sig.user].items;
        signal.assign(items.begin(), items.end());
      } else {
        signal = read_signal_column(sig);
      }
      return cmd_spectrum(signal, output, top, out);
    }
    if (*bench) return cmd_bench(lengths, reps, bench_d, bench_batch, bench_seed, output, out);
    if (*ablate) return cmd_ablate(ablate_flags, data_dir, emb, out_dir, variants, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace m2rec
