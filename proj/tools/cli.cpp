// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "run_config.hpp"
#include "shufflenas/analysis.hpp"
#include "shufflenas/enas_stub.hpp"
#include "shufflenas/genotype.hpp"
#include "shufflenas/trainer.hpp"

namespace shufflenas::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDataDirEnv = "SHUFFLENAS_CIFAR10_DIR";
constexpr int kCifarClasses = 10;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string num(double v, const char* format = "%.4f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

/// Value of --config if present; it supplies the defaults flags override.
std::optional<std::string> config_path(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

class Runner {
 public:
  Runner(RunConfig config, bool out_dir_given, std::ostream& out)
      : cfg_(std::move(config)), out_dir_given_(out_dir_given), out_(out) {}

  int dispatch() {
    const std::string& c = cfg_.command;
    if (c == "search") return search();
    if (c == "train") return train();
    if (c == "eval") return eval();
    if (c == "analyze") return analyze();
    if (c == "bench") return bench();
    if (c == "genotype") return genotype();
    throw ConfigError("unknown command '" + c + "'");
  }

 private:
  fs::path out_dir() const { return cfg_.out_dir; }

  /// Run directories always get the config; auxiliary commands only when
  /// an output directory was requested.
  void write_config(bool always) {
    if (!always && !out_dir_given_) return;
    fs::create_directories(out_dir());
    write_text(out_dir() / (always ? "config.txt" : cfg_.command + "_config.txt"), cfg_.to_text());
  }

  DataBundle load_data() const {
    if (cfg_.synthetic)
      return make_synthetic_bundle(parse_synthetic_kind(cfg_.synthetic_kind), cfg_.synthetic_train,
                                   cfg_.synthetic_val, cfg_.synthetic_test,
                                   derive_seed(cfg_.seed, "synthetic"));
    if (cfg_.data_dir.empty())
      throw ConfigError(std::string("no dataset: pass --data-dir DIR (default from ") + kDataDirEnv +
                        ") or --synthetic");
    if (!fs::is_directory(cfg_.data_dir))
      throw ConfigError("--data-dir '" + cfg_.data_dir + "' is not a directory");
    Cifar10 cifar = load_cifar10(cfg_.data_dir);
    return make_bundle(std::move(cifar.train), std::move(cifar.val), std::move(cifar.test));
  }

  Genotype required_genotype() const {
    if (cfg_.genotype.empty()) throw ConfigError("--genotype FILE is required for '" + cfg_.command + "'");
    const Genotype g = decode(read_text(cfg_.genotype));
    if (g.blocks() != cfg_.blocks)
      throw ConfigError("genotype has " + std::to_string(g.blocks()) + " blocks but --B is " +
                        std::to_string(cfg_.blocks));
    return g;
  }

  Genotype genotype_or_random() const {
    if (!cfg_.genotype.empty()) return required_genotype();
    Rng rng(derive_seed(cfg_.seed, "cli/genotype"));
    return random_genotype(rng, cfg_.blocks);
  }

  void check_epochs() const {
    const double total = cfg_.trainer_config().schedule.total_epochs();
    if (cfg_.epochs > total)
      throw ConfigError("--epochs " + std::to_string(cfg_.epochs) + " exceeds the schedule length " +
                        num(total, "%.0f"));
  }

  int search() {
    check_epochs();
    const DataBundle data = load_data();
    write_config(true);
    SearchState state(cfg_.model_config(data.train.num_classes), cfg_.trainer_config());
    const fs::path checkpoint = out_dir() / "checkpoint.bin";
    if (cfg_.resume && fs::exists(checkpoint)) {
      state.restore(load_checkpoint(checkpoint));
      out_ << "resumed at epoch " << state.epoch << "\n";
    }
    while (state.epoch < cfg_.epochs) {
      const SearchRecord& r = search_epoch(state, data);
      out_ << "epoch " << r.epoch << " reward " << num(r.mean_reward) << " max " << num(r.max_reward)
           << " baseline " << num(r.baseline) << " entropy " << num(r.entropy) << " loss "
           << num(r.train_loss) << " lr " << num(r.lr, "%.5f") << "\n";
      write_text(out_dir() / "history.csv", search_history_csv(state.history));
      save_checkpoint(checkpoint, state.to_checkpoint());
    }
    const Genotype best = derive_best(state, data, cfg_.derive_samples, cfg_.derive_batches);
    save_genotype(out_dir() / "genotype.txt", best);
    out_ << encode(best);
    return 0;
  }

  int train() {
    check_epochs();
    const Genotype g = required_genotype();
    const DataBundle data = load_data();
    write_config(true);
    Network model = build_final_model(g, cfg_.model_config(data.train.num_classes));
    out_ << "params " << count_params(model) << "\n";
    std::vector<FinalRecord> history;
    const auto result = train_final(model, data, cfg_.trainer_config(), cfg_.epochs, [&](const FinalRecord& r) {
      history.push_back(r);
      out_ << "epoch " << r.epoch << " loss " << num(r.train_loss) << " train_error " << num(r.train_error)
           << " val_error " << num(r.val_error) << " test_error " << num(r.test_error) << " lr "
           << num(r.lr, "%.5f") << "\n";
      write_text(out_dir() / "history.csv", final_history_csv(history));
    });
    Checkpoint ck;
    ck.add_registry(model.parameters(), "net/");
    ck.meta["genotype"] = encode(g);
    ck.meta["model"] = model.describe();
    save_checkpoint(out_dir() / "checkpoint.bin", ck);
    save_genotype(out_dir() / "genotype.txt", g);
    out_ << "final_test_error " << num(result.final_test_error) << "\n";
    return 0;
  }

  int eval() {
    write_config(false);
    const fs::path path = cfg_.checkpoint.empty() ? out_dir() / "checkpoint.bin" : fs::path(cfg_.checkpoint);
    if (!fs::exists(path)) throw ConfigError("checkpoint '" + path.string() + "' not found (pass --checkpoint)");
    const Checkpoint ck = load_checkpoint(path);
    const Genotype g = decode(ck.meta_at("genotype"));
    if (g.blocks() != cfg_.blocks)
      throw ConfigError("checkpoint genotype has " + std::to_string(g.blocks()) + " blocks but --B is " +
                        std::to_string(cfg_.blocks));
    const DataBundle data = load_data();
    Network model = build_final_model(g, cfg_.model_config(data.train.num_classes));
    if (ck.meta_at("model") != model.describe())
      throw ConfigError("checkpoint was written for a different model configuration; pass its config.txt "
                        "with --config");
    ck.restore_registry(model.parameters(), "net/");
    const std::int64_t bs = cfg_.batch_size;
    out_ << "val_error " << num(evaluate_error(model, g, data.val, data.normalizer, bs)) << "\n";
    out_ << "test_error " << num(evaluate_error(model, g, data.test, data.normalizer, bs)) << "\n";
    return 0;
  }

  int analyze() {
    const Genotype g = required_genotype();
    write_config(false);
    const ModelConfig mc = cfg_.model_config(kCifarClasses);
    Network model = build_final_model(g, mc);
    std::ostringstream report;
    report << cost_csv_header() << "\n" << cost_csv_row("shufflenas", mc, estimate_costs(model, g), {1}) << "\n";
    if (cfg_.compare_enas) {
      EnasComparisonNet enas(g, mc);
      report << cost_csv_row("enas_stub", mc, estimate_costs(enas), {1}) << "\n";
    }
    out_ << "params " << count_params(model) << "\n" << report.str();
    if (cfg_.dot) out_ << emit_graph(g, mc.merge);
    if (out_dir_given_) {
      write_text(out_dir() / "analysis.csv", report.str());
      if (cfg_.dot) write_text(out_dir() / "genotype.dot", emit_graph(g, mc.merge));
    }
    return 0;
  }

  int bench() {
    const Genotype g = genotype_or_random();
    write_config(false);
    const ModelConfig mc = cfg_.model_config(kCifarClasses);
    const auto batches = cfg_.batch_list();
    std::ostringstream csv;
    csv << cost_csv_header() << "\n";
    out_ << csv.str();
    auto emit = [&](const std::string& name, const CostReport& costs, const std::vector<LatencyStats>& stats) {
      for (const auto& s : stats) {
        const std::string row = cost_csv_row(name, mc, costs, s) + "\n";
        csv << row;
        out_ << row;
      }
    };
    Network model = build_final_model(g, mc);
    emit("shufflenas", estimate_costs(model, g),
         latency_benchmark([&](const Tensor& x) { return model.forward(x); }, mc.input_channels, mc.image_size,
                           mc.dtype, batches, cfg_.iters, cfg_.warmup));
    if (cfg_.compare_enas) {
      EnasComparisonNet enas(g, mc);
      emit("enas_stub", estimate_costs(enas),
           latency_benchmark([&](const Tensor& x) { return enas.forward(x); }, mc.input_channels, mc.image_size,
                             mc.dtype, batches, cfg_.iters, cfg_.warmup));
    }
    if (out_dir_given_) write_text(out_dir() / "bench.csv", csv.str());
    return 0;
  }

  int genotype() {
    const Genotype g = genotype_or_random();
    write_config(false);
    out_ << encode(g);
    if (cfg_.dot) out_ << emit_graph(g, cfg_.model_config(kCifarClasses).merge);
    if (out_dir_given_) save_genotype(out_dir() / "genotype.txt", g);
    return 0;
  }

  RunConfig cfg_;
  bool out_dir_given_;
  std::ostream& out_;
};

void add_options(CLI::App& app, RunConfig& c) {
  app.add_option("--config", "Run configuration file (key = value); flags override it");
  app.add_option("--B", c.blocks, "Blocks per cell")->capture_default_str();
  app.add_option("--N", c.repeats, "Normal layers per stage")->capture_default_str();
  app.add_option("--filters", c.filters, "Channels after the stem")->capture_default_str();
  app.add_option("--merge", c.merge, "Cell output merge: sum | concat_1x1")->capture_default_str();
  app.add_flag("--cell-bn,!--no-cell-bn", c.cell_bn, "Batch norm after the cell merge");
  app.add_option("--bypass", c.bypass, "Reduction shortcut: factorized | sep3x3 | reduction_cell")
      ->capture_default_str();
  app.add_option_function<double>("--drop-path-keep", [&c](const double& v) { c.drop_path_keep = v; },
                                  "Drop-path keep probability (default 0.9, or 0.5 with --cell-bn)");
  app.add_option("--min-pool", c.min_pool, "Pooling for the MINPOOL3 slot: min | avg")->capture_default_str();
  app.add_flag("--f64,!--f32", c.f64, "64-bit deterministic mode");
  app.add_option("--epochs", c.epochs, "Epochs to run")->capture_default_str();
  app.add_option("--batch-size", c.batch_size, "Training batch size")->capture_default_str();
  app.add_option("--lr-max", c.lr_max)->capture_default_str();
  app.add_option("--lr-min", c.lr_min)->capture_default_str();
  app.add_option("--t0", c.t0, "First cosine cycle length in epochs")->capture_default_str();
  app.add_option("--t-mult", c.t_mult, "Cycle length multiplier")->capture_default_str();
  app.add_option("--cycles", c.cycles)->capture_default_str();
  app.add_option("--momentum", c.momentum)->capture_default_str();
  app.add_option("--weight-decay", c.weight_decay)->capture_default_str();
  app.add_option("--clip-norm", c.clip_norm)->capture_default_str();
  app.add_flag("!--no-augment", c.augment, "Disable crop and flip augmentation");
  app.add_flag("--cutout,!--no-cutout", c.cutout, "Zero a random 16x16 square per training image");
  app.add_option("--controller-samples", c.controller_samples)->capture_default_str();
  app.add_option("--weight-phase", c.weight_phase, "Genotype trained per search epoch: fresh | best")
      ->capture_default_str();
  app.add_option("--controller-lr", c.controller_lr)->capture_default_str();
  app.add_option("--entropy-weight", c.entropy_weight)->capture_default_str();
  app.add_option("--derive-samples", c.derive_samples)->capture_default_str();
  app.add_option("--derive-batches", c.derive_batches)->capture_default_str();
  app.add_option("--max-train-batches", c.max_train_batches, "Cap on batches per epoch (0 = all)")
      ->capture_default_str();
  app.add_flag("--resume", c.resume, "Continue a search from <out-dir>/checkpoint.bin");
  app.add_option("--data-dir", c.data_dir, std::string("CIFAR-10 binary directory (default $") + kDataDirEnv + ")");
  app.add_flag("--synthetic,!--no-synthetic", c.synthetic, "Use a generated dataset instead of CIFAR-10");
  app.add_option("--synthetic-kind", c.synthetic_kind, "striped_patterns | two_gaussians_images")
      ->capture_default_str();
  app.add_option("--synthetic-train", c.synthetic_train)->capture_default_str();
  app.add_option("--synthetic-val", c.synthetic_val)->capture_default_str();
  app.add_option("--synthetic-test", c.synthetic_test)->capture_default_str();
  app.add_option("--seed", c.seed)->capture_default_str();
  app.add_option("--out-dir", c.out_dir, "Run directory")->capture_default_str();
  app.add_option("--genotype", c.genotype, "Genotype text file");
  app.add_option("--checkpoint", c.checkpoint, "Checkpoint to evaluate (default <out-dir>/checkpoint.bin)");
  app.add_flag("--dot", c.dot, "Print the genotype as a DOT graph");
  app.add_option("--batch", c.batches, "Comma-separated batch sizes to benchmark")->capture_default_str();
  app.add_option("--iters", c.iters, "Timed forward passes per batch size")->capture_default_str();
  app.add_option("--warmup", c.warmup, "Untimed passes before timing")->capture_default_str();
  app.add_flag("!--no-enas", c.compare_enas, "Skip the ENAS-style comparison graph");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    RunConfig cfg;
    if (const auto path = config_path(argc, argv)) cfg = RunConfig::parse(read_text(*path));
    if (cfg.out_dir.empty()) cfg.out_dir = "run";
    if (cfg.data_dir.empty())
      if (const char* env = std::getenv(kDataDirEnv)) cfg.data_dir = env;

    CLI::App app{"Weight-sharing architecture search over split/shuffle cells", "shufflenas"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    add_options(app, cfg);
    for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
             {"search", "Alternate controller and shared-weight training, then derive a genotype"},
             {"train", "Train a genotype from scratch"},
             {"eval", "Evaluate a trained checkpoint"},
             {"analyze", "Parameter, FLOP, memory-access and graph costs of a genotype"},
             {"bench", "Forward-pass latency per batch size"},
             {"genotype", "Validate and print a genotype (random when --genotype is absent)"}})
      app.add_subcommand(name, help);
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 2;
    }
    cfg.command = app.get_subcommands().front()->get_name();
    const bool out_dir_given = app.count("--out-dir") > 0 || config_path(argc, argv).has_value();
    cfg.resolve();
    cfg.validate();
    return Runner(cfg, out_dir_given, out).dispatch();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const GenotypeParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace shufflenas::cli
