// Command-line front end: generate data, verify numerics, analyze
// complexity, train and evaluate.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "xstft/complexity.hpp"
#include "xstft/data.hpp"
#include "xstft/parallel.hpp"
#include "xstft/runtime.hpp"
#include "xstft/training.hpp"
#include "xstft/verify.hpp"

namespace {

using namespace xstft;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFailed = 2;
constexpr int kExitRuntime = 3;

struct SpecArgs {
  std::string variant = "t";
  std::string network = "micro";
  int64_t classes = -1;
  int64_t frames = 16;
  std::string size;
  double width_multiplier = 0.125;
  bool ablate_temporal = false;
};

std::pair<int64_t, int64_t> parse_size(const std::string& s, int64_t fallback_h, int64_t fallback_w) {
  if (s.empty()) return {fallback_h, fallback_w};
  const auto x = s.find('x');
  if (x == std::string::npos) throw Error("bad --size value: " + s + " (expected HxW)");
  return {std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1))};
}

NetworkSpec spec_from_args(const SpecArgs& args, const KeyValues& net_overrides) {
  const Variant v = variant_from_string(args.variant);
  NetworkSpec spec;
  if (args.network == "full") {
    const auto [h, w] = parse_size(args.size, 112, 112);
    spec = full_scale_spec(v, args.classes < 0 ? 174 : args.classes, args.frames, h, w);
  } else if (args.network == "micro") {
    const auto [h, w] = parse_size(args.size, 32, 32);
    spec = micro_spec(v, args.classes < 0 ? 4 : args.classes, args.frames, h, w, args.width_multiplier,
                      args.ablate_temporal);
  } else {
    throw Error("unknown network preset: " + args.network + " (expected micro or full)");
  }
  spec.ablate_temporal = args.ablate_temporal && v == Variant::kT;
  apply_spec_overrides(spec, net_overrides);
  return spec;
}

// Splits a config into training keys and `net.`-prefixed spec keys.
std::pair<KeyValues, KeyValues> split_config(const KeyValues& kv) {
  KeyValues train_kv, net_kv;
  for (const auto& [k, val] : kv) {
    if (k.starts_with("net."))
      net_kv.emplace_back(k.substr(4), val);
    else
      train_kv.emplace_back(k, val);
  }
  return {train_kv, net_kv};
}

int cmd_gen_data(uint64_t seed, int64_t num, int64_t frames, const std::string& size, const std::string& out) {
  const auto [h, w] = parse_size(size, 32, 32);
  Dataset ds = gen_direction_dataset(seed, num, frames, h, w);
  write_dataset(out, ds);
  std::cout << "wrote " << ds.header.samples << " samples (" << ds.header.classes << " classes, "
            << ds.header.frames << "x" << ds.header.height << "x" << ds.header.width << ") to " << out
            << "\n";
  return kExitOk;
}

int cmd_verify(uint64_t seed, int shapes, const std::string& dump_w) {
  if (!dump_w.empty()) {
    auto basis = build_basis(enumerate_frequencies(3, 3), {3, 3, 3});
    std::ofstream os(dump_w);
    if (!os) throw IoError("cannot open " + dump_w);
    write_w_csv(basis, os);
    std::cout << "wrote W (26x27) to " << dump_w << "\n";
  }
  VerifyOptions options;
  options.seed = seed;
  options.oracle_shapes = shapes;
  VerifyReport report = run_verify_suite(options);
  print_verify_report(report, std::cout);
  return report.all_pass() ? kExitOk : kExitVerifyFailed;
}

int cmd_analyze(const SpecArgs& args, const KeyValues& net_overrides, const std::string& csv_path,
                bool print_spec) {
  NetworkSpec spec = spec_from_args(args, net_overrides);
  if (print_spec) {
    std::cout << spec_to_config_text(spec);
    return kExitOk;
  }
  Network<float> net = build_network<float>(spec);
  ComplexityReport report = analyze_network(net);
  print_report(report, std::cout);
  const long long counted = count_trainable_scalars(net, true);
  if (counted != report.params_with_bn())
    throw Error("parameter census mismatch between counter and report");
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) throw IoError("cannot open " + csv_path);
    write_report_csv(report, os);
    std::cout << "\nwrote csv to " << csv_path << "\n";
  }
  return kExitOk;
}

template <class S>
int run_train(const NetworkSpec& spec, const TrainConfig& cfg, const std::string& data_path,
              const std::string& val_path, const std::string& out_dir, const std::string& resume) {
  Dataset train = read_dataset(data_path);
  Dataset val = read_dataset(val_path);
  Network<S> net = build_network<S>(spec);
  init_orthogonal(net, cfg.seed);
  TrainResult result = train_network(net, train, val, cfg, out_dir, resume);
  std::cout << "best val top1 " << result.best_val_top1 << " at epoch " << result.best_epoch << "\n"
            << "metrics: " << result.metrics_path << "\n"
            << "checkpoints: " << result.best_checkpoint << ", " << result.last_checkpoint << "\n";
  return kExitOk;
}

template <class S>
int run_eval(const NetworkSpec& spec, const TrainConfig& cfg, const std::string& data_path,
             const std::string& ckpt) {
  Dataset ds = read_dataset(data_path);
  Network<S> net = build_network<S>(spec);
  restore_params(net, read_checkpoint_file(ckpt));
  EvalResult res = evaluate(net, ds, cfg);
  std::cout << "samples " << res.count << "  loss " << res.loss << "  top1 " << res.top1 << "  top5 "
            << res.top5 << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  xstft::tune_allocator();
  CLI::App app{"Depthwise windowed-transform convolution engine"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic direction-task dataset");
  uint64_t gen_seed = 1;
  int64_t gen_num = 2000, gen_frames = 16;
  std::string gen_size = "32x32", gen_out = "data.xvid";
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--num-samples", gen_num, "Sample count");
  gen->add_option("--frames", gen_frames, "Frames per sample");
  gen->add_option("--size", gen_size, "Frame size HxW");
  gen->add_option("--out", gen_out, "Output path")->required();

  // verify
  auto* ver = app.add_subcommand("verify", "Run the oracle and invariant suites");
  uint64_t ver_seed = 2024;
  int ver_shapes = 50;
  std::string ver_dump_w;
  ver->add_option("--seed", ver_seed, "RNG seed");
  ver->add_option("--shapes", ver_shapes, "Random shapes for the oracle comparison");
  ver->add_option("--dump-w", ver_dump_w, "Also dump the 3D transform matrix as CSV");

  // shared spec options helper
  const auto add_spec_options = [](CLI::App* cmd, SpecArgs& args) {
    cmd->add_option("--variant", args.variant, "Block variant: st, s or t");
    cmd->add_option("--network", args.network, "Preset: micro or full");
    cmd->add_option("--classes", args.classes, "Class count (default: preset)");
    cmd->add_option("--frames", args.frames, "Clip length T");
    cmd->add_option("--size", args.size, "Input size HxW (default: preset)");
    cmd->add_option("--width-multiplier", args.width_multiplier, "Micro width multiplier");
    cmd->add_flag("--ablate-temporal", args.ablate_temporal,
                  "Replace the temporal transform stage with a per-frame identity (t variant)");
  };

  // analyze
  auto* ana = app.add_subcommand("analyze", "Parameter and FLOP accounting");
  SpecArgs ana_args;
  ana_args.network = "full";
  add_spec_options(ana, ana_args);
  std::string ana_csv, ana_config;
  bool ana_print_spec = false;
  ana->add_option("--csv", ana_csv, "Write machine-readable rows to this path");
  ana->add_option("--config", ana_config, "key = value config file (net.* keys)");
  ana->add_flag("--print-spec", ana_print_spec, "Print the resolved network spec and exit");

  // train
  auto* tr = app.add_subcommand("train", "Train a network on a dataset file");
  SpecArgs tr_args;
  add_spec_options(tr, tr_args);
  std::string tr_config, tr_data, tr_val, tr_out = "run", tr_resume;
  TrainConfig tr_cfg;
  bool tr_seed_set = false;
  uint64_t tr_seed = 1;
  tr->add_option("--config", tr_config, "key = value config file; flags override");
  tr->add_option("--data", tr_data, "Training dataset path")->required();
  tr->add_option("--val", tr_val, "Validation dataset path")->required();
  tr->add_option("--out", tr_out, "Output directory");
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_option("--seed", tr_seed, "Seed (overrides config)")->each([&](const std::string&) {
    tr_seed_set = true;
  });
  int tr_threads = 0;
  int64_t tr_epochs = 0;
  tr->add_option("--threads", tr_threads, "Worker threads (1 = fully deterministic serial mode)");
  tr->add_option("--epochs", tr_epochs, "Epochs (overrides config)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
  SpecArgs ev_args;
  add_spec_options(ev, ev_args);
  std::string ev_config, ev_data, ev_ckpt;
  ev->add_option("--config", ev_config, "key = value config file");
  ev->add_option("--data", ev_data, "Dataset path")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_seed, gen_num, gen_frames, gen_size, gen_out);
    if (ver->parsed()) return cmd_verify(ver_seed, ver_shapes, ver_dump_w);
    if (ana->parsed()) {
      KeyValues net_kv;
      if (!ana_config.empty()) net_kv = split_config(parse_config_file(ana_config)).second;
      return cmd_analyze(ana_args, net_kv, ana_csv, ana_print_spec);
    }
    if (tr->parsed() || ev->parsed()) {
      const bool training = tr->parsed();
      const std::string& config_path = training ? tr_config : ev_config;
      SpecArgs& args = training ? tr_args : ev_args;
      TrainConfig cfg;
      KeyValues net_kv;
      if (!config_path.empty()) {
        auto [train_kv, net_part] = split_config(parse_config_file(config_path));
        apply_train_config(cfg, train_kv);
        net_kv = net_part;
      }
      if (training) {
        if (tr_seed_set) cfg.seed = tr_seed;
        if (tr_threads > 0) cfg.threads = tr_threads;
        if (tr_epochs > 0) cfg.epochs = tr_epochs;
      }
      // --frames overrides the config; otherwise the config drives the spec.
      CLI::App* cmd = training ? tr : ev;
      if (cmd->count("--frames"))
        cfg.frames = args.frames;
      else
        args.frames = cfg.frames;
      set_worker_threads(cfg.threads);
      NetworkSpec spec = spec_from_args(args, net_kv);
      if (training) {
        if (cfg.precision == "f64")
          return run_train<double>(spec, cfg, tr_data, tr_val, tr_out, tr_resume);
        return run_train<float>(spec, cfg, tr_data, tr_val, tr_out, tr_resume);
      }
      if (cfg.precision == "f64") return run_eval<double>(spec, cfg, ev_data, ev_ckpt);
      return run_eval<float>(spec, cfg, ev_data, ev_ckpt);
    }
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    const std::string what = e.what();
    std::cerr << "error: " << what << "\n";
    return what.find("unknown") != std::string::npos ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
