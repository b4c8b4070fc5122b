// agbmri: simulate data, train, evaluate and export reconstructions.
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agb/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace agb;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "JSON config file (flags override it)");
    for (const auto& key : config_keys()) app->add_option("--" + key, values[key], "config key " + key);
  }

  [[nodiscard]] ExperimentConfig resolve(const ExperimentConfig& base) const {
    ExperimentConfig cfg = file.empty() ? base : load_config(file);
    std::map<std::string, std::string> set;
    for (const auto& [k, v] : values)
      if (!v.empty()) set.emplace(k, v);
    return apply_overrides(cfg, set);
  }
};

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

void check_dims(const ExperimentConfig& cfg, const Dataset& d, const std::string& what) {
  const auto& h = d.header;
  if (h.height != cfg.data.height || h.width != cfg.data.width || h.n_coils != cfg.data.n_coils)
    throw DataError(what + " is " + std::to_string(h.height) + "x" + std::to_string(h.width) + " with " +
                    std::to_string(h.n_coils) + " coils; the config expects " + std::to_string(cfg.data.height) + "x" +
                    std::to_string(cfg.data.width) + " with " + std::to_string(cfg.data.n_coils));
}

int cmd_gen_data(const ConfigFlags& flags, const std::string& out) {
  const auto cfg = flags.resolve(ExperimentConfig{});
  const auto d = generate_dataset(cfg.data);
  write_dataset(d, out);
  double accel = 0.0;
  for (const auto& s : d.samples) accel += s.mask.achieved_acceleration();
  std::cout << "samples: " << d.samples.size() << "\n"
            << "acceleration: " << format_double(accel / static_cast<double>(d.samples.size())) << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string val;
  std::string out;
  std::string resume;
  std::size_t checkpoint_every = 0;
};

int cmd_train(const ConfigFlags& flags, const TrainArgs& args) {
  ExperimentConfig cfg;
  TrainState<float> state;
  if (!args.resume.empty()) {
    auto ck = read_checkpoint(args.resume);
    if (ck.kind != CheckpointKind::train) throw DataError(args.resume + " is not a training checkpoint");
    cfg = flags.resolve(ck.config);
    state = std::move(ck.state);
  } else {
    cfg = flags.resolve(ExperimentConfig{});
    state = init_train_state<float>(cfg.train);
  }
  const auto train_set = read_dataset(args.data);
  const auto val_set = read_dataset(args.val);
  check_dims(cfg, train_set, args.data);
  check_dims(cfg, val_set, args.val);

  fs::create_directories(args.out);
  const fs::path dir(args.out);
  save_config(cfg, (dir / "config.json").string());

  auto write_series = [&] {
    write_file((dir / "metrics.csv").string(), metrics_csv(state.series));
    std::string beta = "epoch,beta\n";
    for (const auto& r : state.series.records) beta += std::to_string(r.epoch) + "," + format_double(r.beta) + "\n";
    write_file((dir / "beta.csv").string(), beta);
  };

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    std::cout << "epoch " << r.epoch << " nmse " << format_double(r.nmse) << " fid " << format_double(r.fid)
              << " beta " << format_double(r.beta) << std::endl;
    if (args.checkpoint_every && r.epoch % args.checkpoint_every == 0) {
      write_checkpoint({CheckpointKind::train, cfg, state, 0},
                       (dir / ("checkpoint_epoch" + std::to_string(r.epoch) + ".agbc")).string());
    }
    return true;
  };
  try {
    train(state, cfg.train, train_set.samples, val_set.samples, hooks);
  } catch (const NumericError& e) {
    const json diag = {{"error", e.what()},
                       {"epoch", state.epoch},
                       {"step", state.step},
                       {"beta", state.agb.beta},
                       {"g_ma", state.agb.g_ma},
                       {"p_ma", state.agb.p_ma}};
    write_file((dir / "diagnostic.json").string(), json_text(diag));
    write_series();
    throw;
  }
  write_series();
  write_checkpoint({CheckpointKind::train, cfg, state, 0}, (dir / "checkpoint_final.agbc").string());
  const auto best = best_checkpoint(cfg, state);
  write_checkpoint(best, (dir / "checkpoint_best.agbc").string());
  std::cout << "selected epoch: " << best.selected_epoch << "\n";
  return kOk;
}

json metric_row(double nmse_value, double fid_value) {
  return {{"nmse", nmse_value}, {"fid", fid_value}};
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out, bool reference) {
  const auto ck = read_checkpoint(checkpoint);
  const auto d = read_dataset(data);
  check_dims(ck.config, d, data);
  const auto& samples = d.samples;
  const auto& emb = ck.config.train.embedder;

  std::vector<ComplexImage> zf;
  for (const auto& s : samples) zf.push_back(s.m_z);
  const auto zf_eval = evaluate_images(zf, samples, emb);
  json report = {{"checkpoint", fs::path(checkpoint).filename().string()},
                 {"selected_epoch", ck.selected_epoch},
                 {"samples", samples.size()},
                 {"zero_filled", metric_row(zf_eval.nmse, zf_eval.fid)}};
  if (reference) {
    std::vector<ComplexImage> truth;
    for (const auto& s : samples) truth.push_back(s.m_f);
    const auto ref = evaluate_images(truth, samples, emb);
    report["reference"] = metric_row(ref.nmse, ref.fid);
  }
  const auto recon = run_generator(ck.state.params.generator, ck.config.train.generator, samples,
                                   ck.config.train.eval_batch);
  const auto model = evaluate_images(recon, samples, emb);
  report["model"] = metric_row(model.nmse, model.fid);
  const auto text = json_text(report);
  std::cout << text;
  if (!out.empty()) write_file(out, text);
  return kOk;
}

int cmd_export_panel(const std::vector<std::string>& checkpoints, const std::string& data, std::size_t index,
                     const std::string& out) {
  if (checkpoints.empty()) throw ConfigError("export-panel needs at least one checkpoint");
  const auto d = read_dataset(data);
  if (index >= d.samples.size())
    throw DataError("sample index " + std::to_string(index) + " out of range (" + std::to_string(d.samples.size()) +
                    " samples)");
  const auto& sample = d.samples[index];
  std::vector<ComplexImage> panels{sample.m_f, sample.m_z};
  json meta = json::array();
  meta.push_back({{"label", "ground_truth"}, {"nmse", nmse(sample.m_f, sample.m_f)}});
  meta.push_back({{"label", "zero_filled"}, {"nmse", nmse(sample.m_z, sample.m_f)}});
  for (const auto& path : checkpoints) {
    const auto ck = read_checkpoint(path);
    check_dims(ck.config, d, data);
    const auto recon = run_generator(ck.state.params.generator, ck.config.train.generator,
                                     std::span<const TrainingSample>(&sample, 1), 1);
    panels.push_back(recon.front());
    meta.push_back({{"label", fs::path(path).filename().string()}, {"nmse", nmse(recon.front(), sample.m_f)}});
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < sample.m_f.size(); ++i) scale = std::max(scale, std::abs(sample.m_f[i]));
  write_file(out, panel_pgm(panels, scale));
  const json sidecar = {{"sample", index}, {"scale", scale}, {"panels", meta}};
  write_file(out + ".json", json_text(sidecar));
  std::cout << "wrote " << panels.size() << " panels to " << out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse MRI reconstruction with adversarially trained unrolled networks"};
  app.require_subcommand(1);

  ConfigFlags gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Simulate a multi-coil undersampled dataset");
  gen_flags.attach(gen);
  gen->add_option("--out", gen_out, "dataset file to write")->required();

  ConfigFlags train_flags;
  TrainArgs targs;
  auto* tr = app.add_subcommand("train", "Train a reconstruction network");
  train_flags.attach(tr);
  tr->add_option("--data", targs.data, "training dataset")->required();
  tr->add_option("--val", targs.val, "validation dataset")->required();
  tr->add_option("--out", targs.out, "output directory")->required();
  tr->add_option("--resume", targs.resume, "continue from a training checkpoint");
  tr->add_option("--checkpoint-every", targs.checkpoint_every, "also checkpoint every N epochs");

  std::string ev_ckpt, ev_data, ev_out;
  bool ev_reference = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset file")->required();
  ev->add_option("--out", ev_out, "also write the report here");
  ev->add_flag("--debug-reference", ev_reference, "add the ground truth scored against itself");

  std::vector<std::string> ex_ckpts;
  std::string ex_data, ex_out;
  std::size_t ex_index = 0;
  auto* ex = app.add_subcommand("export-panel", "Write a side-by-side magnitude panel");
  ex->add_option("--checkpoint", ex_ckpts, "checkpoint file (repeatable)")->required();
  ex->add_option("--data", ex_data, "dataset file")->required();
  ex->add_option("--index", ex_index, "sample index")->required();
  ex->add_option("--out", ex_out, "PGM file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gen_flags, gen_out);
    if (*tr) return cmd_train(train_flags, targs);
    if (*ev) return cmd_eval(ev_ckpt, ev_data, ev_out, ev_reference);
    if (*ex) return cmd_export_panel(ex_ckpts, ex_data, ex_index, ex_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
