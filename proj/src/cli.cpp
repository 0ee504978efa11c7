#include "lastomo/cli.hpp"

#include "lastomo/container.hpp"
#include "lastomo/errors.hpp"
#include "lastomo/evaluation.hpp"
#include "lastomo/image_io.hpp"
#include "lastomo/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>

namespace lastomo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool deterministic = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed (overrides the config)");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_flag("--deterministic", c.deterministic, "force the determinism flag on");
}

PipelineConfig load(const Common& c) {
  PipelineConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.deterministic) cfg.train.deterministic = true;
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw IoError("cannot create output directory '" + c.out + "'");
  return p;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

Dataset obtain_dataset(const Pipeline& pipe, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << "generating dataset (seed " << pipe.config().seed << ")\n";
    return pipe.generate_dataset();
  }
  const Container c = load_container(path, ContainerKind::Dataset);
  for (const char* key : {"mesh", "beams"}) {
    const json expect = std::string(key) == "mesh" ? to_json(pipe.config().mesh) : to_json(pipe.config().beams);
    if (!c.metadata.contains(key) || c.metadata.at(key) != expect) {
      throw ConfigError("dataset '" + path + "' was generated with a different " + key + " config");
    }
  }
  return dataset_from_container(c);
}

Checkpoint obtain_checkpoint(const Pipeline& pipe, const fs::path& path) {
  Checkpoint ck = checkpoint_from_container(load_container(path, ContainerKind::Checkpoint));
  if (ck.geometry_fingerprint != pipe.fingerprint()) {
    throw ConfigError("checkpoint '" + path.string() + "' was trained on a different geometry");
  }
  return ck;
}

std::vector<Arch> parse_arch_list(const std::string& s, const PipelineConfig& cfg) {
  std::vector<Arch> out;
  if (s == "all") {
    for (const auto& a : cfg.archs) out.push_back(parse_arch(a));
    return out;
  }
  out.push_back(parse_arch(s));
  return out;
}

// ---- subcommands -----------------------------------------------------------

void cmd_geometry(const Common& c, std::ostream& out) {
  const Pipeline pipe(load(c));
  const fs::path dir = out_dir(c);
  const auto& mesh = pipe.mesh();
  const auto& s = pipe.sensitivity();
  json summary = {{"n_roi", mesh.n_roi()},
                  {"n_background", mesh.n_background()},
                  {"n_cells", mesh.n_cells()},
                  {"n_exterior_pixels", mesh.n_exterior_pixels()},
                  {"fine_dim", mesh.fine_dim()},
                  {"roi_offset", mesh.roi_offset()},
                  {"n_beams", s.n_beams()},
                  {"units", "cm"},
                  {"geometry_fingerprint", pipe.fingerprint()},
                  {"pinv_rank", pipe.pinv().rank},
                  {"row_sums_cm", std::vector<double>(s.clipped_length_cm.data(),
                                                      s.clipped_length_cm.data() + s.n_beams())},
                  {"singular_values", std::vector<double>(pipe.pinv().singular_values.data(),
                                                          pipe.pinv().singular_values.data() +
                                                              pipe.pinv().singular_values.size())}};
  write_file_atomic(dir / "geometry.json", summary.dump(2) + "\n");
  write_file_atomic(dir / "sensitivity.csv", sensitivity_to_csv(s));
  save_container(matrix_to_container(s, &pipe.pinv()), dir / "sensitivity.lastomo");
  Eigen::VectorXd cover(mesh.n_cells());
  cover.head(mesh.n_roi()).setConstant(2.0);
  cover.tail(mesh.n_background()).setConstant(1.0);
  export_pgm(vector_to_image(cover, mesh), dir / "mesh.pgm");
  out << "mesh: " << mesh.n_roi() << " RoI cells, " << mesh.n_background() << " background cells, "
      << mesh.n_exterior_pixels() << " exterior pixels; L " << s.n_beams() << "x" << s.n_cells()
      << "\n";
}

std::string blobs_csv(const Dataset& ds) {
  std::string s = "index,split,seed,blob,x_c,y_c,sigma_x,sigma_y,scale,temp_amp,conc_amp\n";
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const Sample& smp = ds.samples[k];
    for (std::size_t l = 0; l < smp.blobs.size(); ++l) {
      const auto& b = smp.blobs[l];
      s += std::to_string(smp.index) + "," + (ds.split[k] == Split::Train ? "train" : "test") + "," +
           std::to_string(smp.seed) + "," + std::to_string(l);
      for (double v : {b.x_c, b.y_c, b.sigma_x, b.sigma_y, b.scale, b.temp_amp, b.conc_amp}) {
        s += "," + format_double(v);
      }
      s += "\n";
    }
  }
  return s;
}

void cmd_dataset_gen(const Common& c, std::ostream& out) {
  const Pipeline pipe(load(c));
  const fs::path dir = out_dir(c);
  const Dataset ds = pipe.generate_dataset();
  save_container(dataset_to_container(ds, pipe.config()), dir / "dataset.lastomo");
  write_file_atomic(dir / "blobs.csv", blobs_csv(ds));
  out << "dataset: " << ds.samples.size() << " samples (" << ds.subset(Split::Train).size()
      << " train, " << ds.subset(Split::Test).size() << " test) -> " << (dir / "dataset.lastomo").string()
      << "\n";
}

struct TrainOpts {
  std::string arch;
  std::string dataset;
  std::optional<int> epochs;
};

void cmd_train(const Common& c, const TrainOpts& o, std::ostream& out) {
  PipelineConfig cfg = load(c);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  const auto archs = parse_arch_list(o.arch, cfg);
  const Pipeline pipe(cfg);
  const fs::path dir = out_dir(c);
  const Dataset ds = obtain_dataset(pipe, o.dataset, out);
  const auto train_set = ds.subset(Split::Train);
  const bool det = pipe.config().train.deterministic;
  for (Arch arch : archs) {
    const std::string name(to_string(arch));
    out << "training " << name << " on " << train_set.size() << " samples, "
        << pipe.config().train.epochs << " epochs\n";
    const TrainResult res = pipe.train_model(arch, train_set, [&](const EpochStat& s) {
      out << name << " epoch " << s.epoch << " loss " << format_double(s.mean_loss) << "\n";
    });
    std::string csv = "epoch,mean_loss,wall_time_s\n";
    for (const auto& s : res.history) {
      csv += std::to_string(s.epoch) + "," + format_double(s.mean_loss) + "," +
             format_double(det ? 0.0 : s.wall_time_s) + "\n";
    }
    write_file_atomic(dir / (name + "_loss.csv"), csv);
    save_container(checkpoint_to_container(res.model, pipe.arch_options(), pipe.train_config(arch),
                                           pipe.fingerprint()),
                   dir / (name + ".ckpt"));
    if (!res.history.empty()) {
      out << name << " done in " << format_double(res.history.back().wall_time_s) << " s -> "
          << (dir / (name + ".ckpt")).string() << "\n";
    }
  }
}

struct EvalOpts {
  std::string model;
  std::string dataset;
  std::string snr = "35";
  std::string split = "test";
};

std::vector<const Sample*> pick_split(const Dataset& ds, const std::string& which) {
  if (which == "test") return ds.subset(Split::Test);
  if (which == "train") return ds.subset(Split::Train);
  throw UsageError("--split must be train or test");
}

void cmd_eval(const Common& c, const EvalOpts& o, std::ostream& out) {
  const Pipeline pipe(load(c));
  const fs::path dir = out_dir(c);
  const Checkpoint ck = obtain_checkpoint(pipe, o.model);
  const Dataset ds = obtain_dataset(pipe, o.dataset, out);
  const auto samples = pick_split(ds, o.split);
  if (samples.empty()) throw ConfigError("the " + o.split + " split is empty");
  const std::string name(to_string(ck.model.spec.arch));
  for (double snr : parse_snr_list(o.snr)) {
    Batch a1, a2;
    noisy_measurements(samples, snr, pipe.config().seed, a1, a2);
    const auto metrics = evaluate_model(ck.model, samples, a1, a2, pipe.eval_context());
    std::string csv = "index,d_peak,e_peak,e_T\n";
    for (std::size_t k = 0; k < metrics.size(); ++k) {
      csv += std::to_string(samples[k]->index) + "," + format_double(metrics[k].d_peak) + "," +
             format_double(metrics[k].e_peak) + "," + format_double(metrics[k].e_t) + "\n";
    }
    write_file_atomic(dir / ("eval_" + name + "_snr" + format_double(snr) + ".csv"), csv);
    const Aggregate a = aggregate(metrics);
    out << name << " snr " << format_double(snr) << " D_peak " << format_double(a.d_peak)
        << " E_peak " << format_double(a.e_peak) << " E_T " << format_double(a.e_t) << " H " << a.h
        << "\n";
  }
}

struct SweepOpts {
  std::string models;
  std::string dataset;
  std::string snr;
};

void cmd_sweep(const Common& c, const SweepOpts& o, std::ostream& out) {
  const Pipeline pipe(load(c));
  const fs::path dir = out_dir(c);
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::directory_iterator(o.models)) {
    if (e.is_regular_file() && e.path().extension() == ".ckpt") ckpts.push_back(e.path());
  }
  if (ckpts.empty()) throw IoError("no .ckpt files in '" + o.models + "'");
  std::vector<Checkpoint> loaded;
  for (const auto& p : ckpts) loaded.push_back(obtain_checkpoint(pipe, p));
  // Order by the config's architecture list, then by file name.
  std::vector<std::size_t> order(loaded.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  auto rank = [&](std::size_t k) {
    const std::string a(to_string(loaded[k].model.spec.arch));
    const auto& list = pipe.config().archs;
    return static_cast<std::size_t>(std::find(list.begin(), list.end(), a) - list.begin());
  };
  std::sort(order.begin(), order.end(), [&](auto x, auto y) {
    return std::pair(rank(x), ckpts[x].filename().string()) < std::pair(rank(y), ckpts[y].filename().string());
  });
  std::vector<NamedModel> models;
  for (auto k : order) {
    std::string name = ckpts[k].stem().string();
    models.push_back({name, &loaded[k].model});
  }

  std::string ds_path = o.dataset;
  if (ds_path.empty() && fs::exists(fs::path(o.models) / "dataset.lastomo")) {
    ds_path = (fs::path(o.models) / "dataset.lastomo").string();
  }
  const Dataset ds = obtain_dataset(pipe, ds_path, out);
  const auto test = ds.subset(Split::Test);
  if (test.empty()) throw ConfigError("the test split is empty");
  const std::vector<double> snrs = o.snr.empty() ? pipe.config().sweep_snr_db : parse_snr_list(o.snr);
  const auto rows = snr_sweep(models, test, snrs, pipe.config().seed, pipe.eval_context());
  const bool det = pipe.config().train.deterministic;
  write_file_atomic(dir / "sweep.csv", sweep_to_csv(rows, !det));
  if (det) write_file_atomic(dir / "sweep_timing.csv", sweep_to_csv(rows, true));
  for (const auto& r : rows) {
    out << r.model << " snr " << format_double(r.snr_db) << " D_peak " << format_double(r.metrics.d_peak)
        << " E_peak " << format_double(r.metrics.e_peak) << " E_T " << format_double(r.metrics.e_t)
        << "\n";
  }
}

struct ReconOpts {
  std::string model;
  std::string input;
};

void write_image_pair(const Image& img, const fs::path& dir, const std::string& stem) {
  export_csv(img, dir / (stem + ".csv"));
  export_pgm(img, dir / (stem + ".pgm"));
}

void cmd_reconstruct(const Common& c, const ReconOpts& o, std::ostream& out) {
  const Pipeline pipe(load(c));
  const fs::path dir = out_dir(c);
  const Checkpoint ck = obtain_checkpoint(pipe, o.model);
  const auto frames = parse_measurements_csv(read_file(o.input), pipe.beams().size());
  std::string vectors;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Eigen::VectorXd t = infer(ck.model, frames[k][0], frames[k][1], &pipe.pinv());
    for (Eigen::Index j = 0; j < t.size(); ++j) vectors += (j ? "," : "") + format_double(t(j));
    vectors += "\n";
    write_image_pair(vector_to_image(t, pipe.mesh()), dir, "recon_" + std::to_string(k));
  }
  write_file_atomic(dir / "recon_vectors.csv", vectors);
  out << "reconstructed " << frames.size() << " frame(s) -> " << dir.string() << "\n";
}

struct RenderOpts {
  std::string dataset;
  std::vector<long> index;
  std::string input;
};

void cmd_render(const Common& c, const RenderOpts& o, std::ostream& out) {
  const Pipeline pipe(load(c));
  const fs::path dir = out_dir(c);
  int written = 0;
  if (!o.input.empty()) {
    const auto rows = parse_numeric_csv(read_file(o.input));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(rows[k].data(), rows[k].size());
      write_image_pair(vector_to_image(t, pipe.mesh()), dir, "render_" + std::to_string(k));
      ++written;
    }
  }
  if (!o.dataset.empty()) {
    const Dataset ds = obtain_dataset(pipe, o.dataset, out);
    for (long idx : o.index) {
      if (idx < 0 || idx >= static_cast<long>(ds.samples.size())) {
        throw RangeError("sample index " + std::to_string(idx) + " out of range");
      }
      const Sample& s = ds.samples[idx];
      write_image_pair(vector_to_image(s.t, pipe.mesh()), dir, "true_" + std::to_string(idx));
      ++written;
    }
  }
  if (written == 0) throw UsageError("render needs --input or --dataset with --index");
  out << "rendered " << written << " image(s) -> " << dir.string() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical temperature imaging for TDLAS tomography", "lastomo"};
  app.require_subcommand(1);

  Common c_geo, c_ds, c_train, c_eval, c_sweep, c_recon, c_render;
  TrainOpts train_o;
  EvalOpts eval_o;
  SweepOpts sweep_o;
  ReconOpts recon_o;
  RenderOpts render_o;

  auto* geo = app.add_subcommand("geometry", "build the mesh, beams, L and its pseudo-inverse");
  add_common(geo, c_geo);

  auto* ds = app.add_subcommand("dataset", "dataset operations");
  ds->require_subcommand(1);
  auto* gen = ds->add_subcommand("gen", "generate the synthetic dataset");
  add_common(gen, c_ds);

  auto* tr = app.add_subcommand("train", "train a network");
  add_common(tr, c_train);
  tr->add_option("--arch", train_o.arch, "pi-cnn, d-cnn, h-cnn or all")
      ->required()
      ->check(CLI::IsMember({"pi-cnn", "d-cnn", "h-cnn", "all"}));
  tr->add_option("--dataset", train_o.dataset, "dataset container (generated if omitted)")
      ->check(CLI::ExistingFile);
  tr->add_option("--epochs", train_o.epochs, "override the configured epoch count")
      ->check(CLI::NonNegativeNumber);

  auto* ev = app.add_subcommand("eval", "per-sample metrics of one checkpoint");
  add_common(ev, c_eval);
  ev->add_option("--model", eval_o.model, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", eval_o.dataset, "dataset container")->check(CLI::ExistingFile);
  ev->add_option("--snr", eval_o.snr, "SNR in dB, a list a,b or a range lo:hi:step")->capture_default_str();
  ev->add_option("--split", eval_o.split, "train or test")->check(CLI::IsMember({"train", "test"}));

  auto* sw = app.add_subcommand("sweep", "metrics of every checkpoint versus SNR");
  add_common(sw, c_sweep);
  sw->add_option("--models", sweep_o.models, "directory of .ckpt files")->required()->check(CLI::ExistingDirectory);
  sw->add_option("--snr", sweep_o.snr, "SNR range lo:hi:step or list (default from config)");
  sw->add_option("--dataset", sweep_o.dataset, "dataset container")->check(CLI::ExistingFile);

  auto* rc = app.add_subcommand("reconstruct", "reconstruct images from measurement frames");
  add_common(rc, c_recon);
  rc->add_option("--model", recon_o.model, "checkpoint")->required()->check(CLI::ExistingFile);
  rc->add_option("--input", recon_o.input, "CSV, 64 values per frame")->required()->check(CLI::ExistingFile);

  auto* rd = app.add_subcommand("render", "render hierarchical vectors as images");
  add_common(rd, c_render);
  rd->add_option("--input", render_o.input, "CSV, one hierarchical vector per line")->check(CLI::ExistingFile);
  rd->add_option("--dataset", render_o.dataset, "dataset container")->check(CLI::ExistingFile);
  rd->add_option("--index", render_o.index, "sample indices to render")->delimiter(',');

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*geo) cmd_geometry(c_geo, out);
    else if (*gen) cmd_dataset_gen(c_ds, out);
    else if (*tr) cmd_train(c_train, train_o, out);
    else if (*ev) cmd_eval(c_eval, eval_o, out);
    else if (*sw) cmd_sweep(c_sweep, sweep_o, out);
    else if (*rc) cmd_reconstruct(c_recon, recon_o, out);
    else if (*rd) cmd_render(c_render, render_o, out);
  } catch (const UsageError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace lastomo
