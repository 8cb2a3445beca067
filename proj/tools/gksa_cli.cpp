#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "gksa/errors.hpp"
#include "gksa/harness/config.hpp"
#include "gksa/harness/evaluate.hpp"
#include "gksa/harness/synthetic.hpp"
#include "gksa/harness/train.hpp"

namespace {

using namespace gksa;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.path, "experiment config file (INI)");
  cmd->add_option("-s,--set", args.overrides, "override, section.key=value (repeatable)");
}

ExperimentConfig resolve_config(const ConfigArgs& args) {
  ExperimentConfig cfg = args.path.empty() ? ExperimentConfig{} : load_config(args.path);
  apply_overrides(cfg, args.overrides);
  cfg.resolve();
  return cfg;
}

// Checkpoint config, then any explicit overrides (normally eval.* keys).
ExperimentConfig config_for_checkpoint(const Checkpoint& ckpt, const ConfigArgs& args) {
  ExperimentConfig cfg = experiment_from_checkpoint(ckpt);
  if (!args.path.empty()) {
    const ExperimentConfig file = load_config(args.path);
    for (const auto& [k, v] : file.to_map())
      if (k.rfind("eval.", 0) == 0) cfg.set(k, v);
  }
  apply_overrides(cfg, args.overrides);
  cfg.resolve();
  if (cfg.model.to_map() != ckpt.config.to_map()) {
    throw ConfigError("overrides may not change the model or task of a trained checkpoint");
  }
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  return os;
}

template <class F>
void write_to(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
  } else {
    std::ofstream os = open_out(path);
    write(os);
    if (!os) throw std::runtime_error("failed writing '" + path + "'");
  }
}

std::vector<AttentionVariant> parse_variants(const std::string& text) {
  std::vector<AttentionVariant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_variant(item));
  }
  if (out.empty()) throw ConfigError("no variants given");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (std::size_t s : parse_size_list(text)) out.push_back(s);
  return out;
}

// ---- subcommands ---------------------------------------------------------------------

struct GenDataArgs {
  ConfigArgs config;
  std::string out;
  std::string split = "train";
  std::size_t k = 1;
};

int run_gen_data(const GenDataArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.config);
  Dataset ds;
  if (a.split == "train") {
    ds = gen_dataset(cfg.train_task());
  } else if (a.split == "eval") {
    const Dataset base = gen_dataset(cfg.eval_task());
    ds = a.k == 1 ? base : concat_eval(base, a.k, cfg.eval.long_utterances, cfg.eval.concat_seed + a.k);
  } else {
    throw ConfigError("--split must be train or eval");
  }
  save_dataset(a.out, ds);
  std::cerr << "wrote " << ds.utterances.size() << " utterances (" << ds.total_frames()
            << " frames) to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  ConfigArgs config;
  std::string data;
  std::string out;
  std::string curve;
  std::size_t log_every = 100;
};

int run_train(const TrainArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.config);
  const Dataset data = a.data.empty() ? gen_dataset(cfg.train_task()) : load_dataset(a.data);
  std::cerr << "training " << variant_name(cfg.model.variant) << " for " << cfg.train.steps
            << " steps on " << data.utterances.size() << " utterances (config " << cfg.hash()
            << ")\n";
  double window = 0.0;
  TrainResult r = train(cfg.model, data, cfg.train, [&](std::size_t step, double loss) {
    window += loss;
    if (a.log_every > 0 && (step + 1) % a.log_every == 0) {
      std::cerr << "step " << step + 1 << " mean loss " << window / static_cast<double>(a.log_every)
                << '\n';
      window = 0.0;
    }
  });
  save_checkpoint(a.out, r.model, training_metadata(cfg, r));
  if (!a.curve.empty()) write_to(a.curve, [&](std::ostream& os) { write_curve_csv(os, r.curve, cfg.hash()); });
  std::cerr << "wrote " << a.out << " in " << std::fixed << std::setprecision(1) << r.seconds
            << " s\n";
  return 0;
}

struct EvalArgs {
  ConfigArgs config;
  std::string checkpoint;
  std::string out;
  bool log_splits = false;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ExperimentConfig cfg = config_for_checkpoint(ckpt, a.config);
  EncoderModel model = model_from_checkpoint(ckpt);
  EvalOptions opts;
  opts.memory_budget = cfg.eval.memory_budget;
  if (a.log_splits) opts.log = &std::cerr;
  const ExperimentReport rep = evaluate(model, build_eval_sets(cfg), opts, cfg.hash());
  write_to(a.out, [&](std::ostream& os) { rep.write_csv(os); });
  return 0;
}

struct SweepArgs {
  ConfigArgs config;
  std::string dir;
  std::string variants = "Standard,RelativePE,GaussianFrameIndex";
  std::string seeds = "1";
  std::string out;
  bool train_missing = false;
};

int run_sweep(const SweepArgs& a) {
  const ExperimentConfig base = resolve_config(a.config);
  const auto variants = parse_variants(a.variants);
  const auto seeds = parse_seeds(a.seeds);
  if (a.train_missing) {
    const Dataset data = gen_dataset(base.train_task());
    for (AttentionVariant v : variants) {
      for (std::uint64_t seed : seeds) {
        const std::string path = sweep_checkpoint_path(a.dir, v, seed);
        if (std::ifstream(path).good()) continue;
        ExperimentConfig cfg = base;
        cfg.model.variant = v;
        cfg.train.seed = seed;
        cfg.resolve();
        std::cerr << "training " << path << '\n';
        TrainResult r = train(cfg.model, data, cfg.train);
        save_checkpoint(path, r.model, training_metadata(cfg, r));
      }
    }
  }
  EvalOptions opts;
  opts.memory_budget = base.eval.memory_budget;
  const auto rows = run_length_sweep(a.dir, variants, seeds, build_eval_sets(base), opts);
  write_to(a.out, [&](std::ostream& os) { write_sweep_csv(os, rows, base.hash()); });
  return 0;
}

struct HeatmapArgs {
  ConfigArgs config;
  std::string checkpoint;
  std::size_t k = 1;
  std::size_t utterance = 0;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::string csv;
  std::string pgm;
  std::size_t window = 3;
};

int run_heatmap(const HeatmapArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ExperimentConfig cfg = config_for_checkpoint(ckpt, a.config);
  EncoderModel model = model_from_checkpoint(ckpt);
  const Dataset base = gen_dataset(cfg.eval_task());
  const Dataset ds = a.k == 1 ? base : concat_eval(base, a.k, a.utterance + 1, cfg.eval.concat_seed + a.k);
  if (a.utterance >= ds.utterances.size()) {
    throw ConfigError("--utterance " + std::to_string(a.utterance) + " out of range (" +
                      std::to_string(ds.utterances.size()) + " utterances)");
  }
  const AttnMatrix attn = dump_heatmap(model, ds.utterances[a.utterance].features, a.layer, a.head);
  if (!a.csv.empty()) write_to(a.csv, [&](std::ostream& os) { attn.write_csv(os); });
  if (!a.pgm.empty()) {
    std::ofstream os = open_out(a.pgm);
    write_pgm(os, attn);
  }
  std::cout << "frames=" << attn.length() << " diagonal_mass(+-" << a.window
            << ")=" << diagonal_mass(attn, a.window) << " min_row=" << min_row_diagonal_mass(attn, a.window)
            << '\n';
  return 0;
}

struct MemcheckArgs {
  ConfigArgs config;
  std::string variants = "Standard,SoftMask,RelativePE,SharedQK,Gaussian,GaussianFrameIndex";
  std::string lengths = "64,128,256,512";
  bool full_scale = false;
  std::string out;
};

int run_memcheck(const MemcheckArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.config);
  const auto variants = parse_variants(a.variants);
  const auto lengths = parse_size_list(a.lengths);
  write_to(a.out, [&](std::ostream& os) {
    os << "# config_hash=" << cfg.hash() << (a.full_scale ? " scale=reference" : " scale=desk") << '\n'
       << "variant,length,analytic,measured,maps,ratio_to_standard\n";
    for (AttentionVariant v : variants) {
      EncoderConfig m = a.full_scale ? EncoderConfig::reference_full_scale(v) : cfg.model;
      m.variant = v;
      for (std::size_t len : lengths) {
        const MemoryFootprint fp = memory_footprint_estimate(v, len, m);
        const double ref = static_cast<double>(
            analytic_attention_elements(AttentionVariant::Standard, len, m.d_model, m.d_k));
        os << variant_name(v) << ',' << len << ',' << fp.analytic << ',' << fp.measured << ','
           << fp.maps << ',' << std::setprecision(6) << static_cast<double>(fp.analytic) / ref << '\n';
      }
    }
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian kernelized self-attention experiments"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset file");
  add_config_options(gen_cmd, gen.config);
  gen_cmd->add_option("-o,--out", gen.out, "output dataset path")->required();
  gen_cmd->add_option("--split", gen.split, "train or eval");
  gen_cmd->add_option("-k,--concat", gen.k, "utterances per concatenation (eval split)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
  add_config_options(train_cmd, tr.config);
  train_cmd->add_option("-d,--data", tr.data, "dataset file (default: generate from the config)");
  train_cmd->add_option("-o,--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--curve", tr.curve, "training-curve CSV path");
  train_cmd->add_option("--log-every", tr.log_every, "progress interval in steps (0 = quiet)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on every length bucket");
  add_config_options(eval_cmd, ev.config);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("-o,--out", ev.out, "report CSV (default stdout)");
  eval_cmd->add_flag("--log-splits", ev.log_splits, "log memory-budget split points to stderr");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "error rate vs length for several variants");
  add_config_options(sweep_cmd, sw.config);
  sweep_cmd->add_option("--dir", sw.dir, "directory of <Variant>_seed<N>.ckpt files")->required();
  sweep_cmd->add_option("--variants", sw.variants, "comma-separated variant names");
  sweep_cmd->add_option("--seeds", sw.seeds, "comma-separated training seeds");
  sweep_cmd->add_flag("--train-missing", sw.train_missing, "train checkpoints that do not exist yet");
  sweep_cmd->add_option("-o,--out", sw.out, "sweep CSV (default stdout)");

  HeatmapArgs hm;
  auto* heat_cmd = app.add_subcommand("heatmap", "dump one attention map as CSV and PGM");
  add_config_options(heat_cmd, hm.config);
  heat_cmd->add_option("--checkpoint", hm.checkpoint, "checkpoint path")->required();
  heat_cmd->add_option("-k,--concat", hm.k, "utterances per concatenation");
  heat_cmd->add_option("--utterance", hm.utterance, "utterance index");
  heat_cmd->add_option("--layer", hm.layer, "layer index");
  heat_cmd->add_option("--head", hm.head, "head index");
  heat_cmd->add_option("--csv", hm.csv, "CSV output path");
  heat_cmd->add_option("--pgm", hm.pgm, "graymap output path");
  heat_cmd->add_option("--window", hm.window, "diagonal window for the printed mass");

  MemcheckArgs mc;
  auto* mem_cmd = app.add_subcommand("memcheck", "attention-path element counts per variant and length");
  add_config_options(mem_cmd, mc.config);
  mem_cmd->add_option("--variants", mc.variants, "comma-separated variant names");
  mem_cmd->add_option("--lengths", mc.lengths, "comma-separated subsampled lengths");
  mem_cmd->add_flag("--full-scale", mc.full_scale, "use the full-size reference model dimensions");
  mem_cmd->add_option("-o,--out", mc.out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*sweep_cmd) return run_sweep(sw);
    if (*heat_cmd) return run_heatmap(hm);
    if (*mem_cmd) return run_memcheck(mc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputTooShortError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
