#pragma once

// Command-line front end: train | eval | sweep | select-beta | robustfit-demo
// | make-data. Every command reads a "key = value" config (flags override it),
// writes its outputs to an output directory, and echoes the fully resolved
// configuration there as resolved.cfg. Running the same command with
// --config <out>/resolved.cfg reproduces the outputs byte for byte.
//
// Exit codes: 0 success, 1 unexpected failure, 2 config error, 3 data error,
// 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "rvae/betaselect.hpp"
#include "rvae/checkpoint.hpp"
#include "rvae/config.hpp"
#include "rvae/data.hpp"
#include "rvae/errors.hpp"
#include "rvae/eval.hpp"
#include "rvae/losses.hpp"
#include "rvae/model.hpp"
#include "rvae/optim.hpp"
#include "rvae/robustfit.hpp"

namespace rvae::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {"out", "seed"};
    for (const char* sec : {"data", "test_data"}) {
      k.insert(std::string(sec) + ".manifest");
      for (const auto& m : DatasetManifest::keys()) k.insert(std::string(sec) + "." + m);
    }
    for (const char* key :
         {"model.hidden", "model.latent", "model.obs", "loss.divergence", "loss.beta",
          "loss.sigma", "train.epochs", "train.batch_size", "train.lr", "train.beta1",
          "train.beta2", "train.eps", "train.shuffle", "train.checkpoint_every",
          "train.record_wall_time", "eval.checkpoint", "eval.grid_count", "sweep.betas",
          "sweep.fractions", "sweep.save_checkpoints", "probe.checkpoints", "probe.n_probe",
          "probe.noise_mean", "probe.noise_std", "robustfit.n", "robustfit.weight",
          "robustfit.m1", "robustfit.s1", "robustfit.m2", "robustfit.s2", "robustfit.beta",
          "robustfit.steps", "robustfit.lr", "robustfit.bins", "make_data.prefix"}) {
      k.insert(key);
    }
    return k;
  }();
  return keys;
}

namespace detail {

inline std::string absolute_path(const std::string& p, const std::filesystem::path& base = {}) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return std::filesystem::absolute(path).lexically_normal().string();
}

/// Dataset manifest from "<section>.manifest" (a file) overlaid with inline
/// "<section>.*" keys. File paths come back absolute.
inline DatasetManifest manifest_from(const Config& cfg, const std::string& section,
                                     bool required) {
  Config inline_keys = cfg.section(section);
  if (required && inline_keys.values().empty()) {
    throw ConfigError("missing [" + section + "] section");
  }
  Config merged;
  std::filesystem::path base;
  if (inline_keys.has("manifest")) {
    const std::filesystem::path file = inline_keys.get("manifest");
    if (!std::filesystem::exists(file)) {
      throw DataError("dataset manifest '" + file.string() + "' not found");
    }
    merged = Config::load(file);
    base = file.parent_path();
    inline_keys.erase("manifest");
  }
  merged.merge(inline_keys);
  auto m = DatasetManifest::from_config(merged, base);
  for (std::string* p : {&m.images, &m.labels, &m.outliers, &m.foreign_images,
                         &m.foreign_labels}) {
    *p = absolute_path(*p, base);
  }
  m.base_dir.clear();
  return m;
}

inline void put_manifest(Config& out, const std::string& section, const DatasetManifest& m) {
  const Config c = m.to_config();
  for (const auto& [k, v] : c.values()) out.set(section + "." + k, v);
}

inline Arch arch_from(const Config& cfg, std::size_t input_dim, Config& echo) {
  Arch a;
  a.input_dim = input_dim;
  a.hidden_dim = cfg.get_uint("model.hidden", a.hidden_dim);
  a.latent_dim = cfg.get_uint("model.latent", a.latent_dim);
  a.obs_model = parse_obs_model(cfg.get("model.obs", "bernoulli"));
  echo.set("model.hidden", std::to_string(a.hidden_dim));
  echo.set("model.latent", std::to_string(a.latent_dim));
  echo.set("model.obs", to_string(a.obs_model));
  return a;
}

inline LossSpec loss_from(const Config& cfg, ObsModel obs, Config& echo) {
  LossSpec s;
  s.obs_model = obs;
  s.divergence = parse_divergence(cfg.get("loss.divergence", "standard"));
  s.sigma = cfg.get_double("loss.sigma", 1.0);
  if (s.divergence == Divergence::Beta) s.beta = cfg.get_double("loss.beta");
  s.validate();
  echo.set("loss.divergence", to_string(s.divergence));
  echo.set("loss.sigma", format_double(s.sigma));
  if (s.divergence == Divergence::Beta) echo.set("loss.beta", format_double(s.beta));
  return s;
}

inline TrainConfig train_config_from(const Config& cfg, std::size_t input_dim,
                                     std::uint64_t seed, Config& echo) {
  TrainConfig t;
  t.seed = seed;
  t.arch = arch_from(cfg, input_dim, echo);
  t.epochs = cfg.get_uint("train.epochs", t.epochs);
  t.batch_size = cfg.get_uint("train.batch_size", t.batch_size);
  t.adam.lr = cfg.get_double("train.lr", t.adam.lr);
  t.adam.beta1 = cfg.get_double("train.beta1", t.adam.beta1);
  t.adam.beta2 = cfg.get_double("train.beta2", t.adam.beta2);
  t.adam.eps = cfg.get_double("train.eps", t.adam.eps);
  t.shuffle = cfg.get_bool("train.shuffle", t.shuffle);
  t.checkpoint_every = cfg.get_uint("train.checkpoint_every", t.checkpoint_every);
  t.record_wall_time = cfg.get_bool("train.record_wall_time", t.record_wall_time);
  t.loss = loss_from(cfg, t.arch.obs_model, echo);
  echo.set("train.epochs", std::to_string(t.epochs));
  echo.set("train.batch_size", std::to_string(t.batch_size));
  echo.set("train.lr", format_double(t.adam.lr));
  echo.set("train.beta1", format_double(t.adam.beta1));
  echo.set("train.beta2", format_double(t.adam.beta2));
  echo.set("train.eps", format_double(t.adam.eps));
  echo.set("train.shuffle", t.shuffle ? "true" : "false");
  echo.set("train.checkpoint_every", std::to_string(t.checkpoint_every));
  echo.set("train.record_wall_time", t.record_wall_time ? "true" : "false");
  t.validate();
  return t;
}

inline void write_echo(const std::filesystem::path& out, const std::string& command,
                       const Config& echo) {
  write_text_file(out / "resolved.cfg",
                  "# resolved configuration for `rvae " + command +
                      "`; every default is written out\n" + echo.dump());
}

struct Context {
  std::string command;
  Config cfg;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::ostream* log = &std::cout;
  std::size_t workers = 1;

  Config base_echo() const {
    Config e;
    e.set("out", out.string());
    e.set("seed", std::to_string(seed));
    return e;
  }
};

inline int run_train(const Context& ctx) {
  Config echo = ctx.base_echo();
  const auto manifest = manifest_from(ctx.cfg, "data", true);
  put_manifest(echo, "data", manifest);
  const Dataset ds = build_dataset(manifest);
  const auto tc = train_config_from(ctx.cfg, ds.dim, ctx.seed, echo);
  *ctx.log << "train: " << ds.rows << " records (" << ds.outlier_count() << " outliers), "
           << describe(tc.arch) << ", loss " << to_string(tc.loss.divergence) << '\n';
  auto hook = [&](std::size_t epoch, const VaeParams& p) {
    save_checkpoint(ctx.out / ("model_epoch_" + std::to_string(epoch) + ".ckpt"),
                    Checkpoint{p, tc.loss});
  };
  auto result = train(tc, ds, nullptr, hook);
  for (const auto& e : result.log.epochs) {
    *ctx.log << "  epoch " << e.epoch << " total " << e.total << " recon " << e.recon << " kl "
             << e.kl << '\n';
  }
  save_checkpoint(ctx.out / "model.ckpt", Checkpoint{result.params, tc.loss});
  write_text_file(ctx.out / "train_log.csv", result.log.to_csv());
  write_echo(ctx.out, ctx.command, echo);
  return kOk;
}

inline int run_eval(const Context& ctx) {
  Config echo = ctx.base_echo();
  const auto ckpt_path = absolute_path(ctx.cfg.get("eval.checkpoint"));
  echo.set("eval.checkpoint", ckpt_path);
  const auto grid_count = ctx.cfg.get_uint("eval.grid_count", 8);
  echo.set("eval.grid_count", std::to_string(grid_count));
  const auto manifest = manifest_from(ctx.cfg, "test_data", true);
  put_manifest(echo, "test_data", manifest);

  const auto ck = load_checkpoint(ckpt_path);
  const Dataset ds = build_dataset(manifest);
  if (ds.dim != ck.params.arch.input_dim) {
    throw ArchMismatchError("checkpoint '" + ckpt_path + "' was trained with D=" +
                            std::to_string(ck.params.arch.input_dim) +
                            " but the evaluation data has D=" + std::to_string(ds.dim));
  }
  const auto report = evaluate(ck.params, ds);
  write_text_file(ctx.out / "errors.csv", report.errors_csv(ds));
  std::ostringstream summary;
  summary << "records,outliers,ratio,auc\n"
          << ds.rows << ',' << ds.outlier_count() << ',' << format_double(report.ratio_metric)
          << ',' << format_double(report.auc) << '\n';
  write_text_file(ctx.out / "eval_summary.csv", summary.str());
  if (!report.roc.points.empty()) write_text_file(ctx.out / "roc.csv", report.roc.to_csv());
  write_text_file(ctx.out / "latent.csv", export_latent(ck.params, ds));

  // Originals on the first row, reconstructions below: up to grid_count
  // normal records followed by up to grid_count outliers.
  std::vector<std::size_t> picked;
  for (std::uint8_t want : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::size_t taken = 0;
    for (std::size_t i = 0; i < ds.rows && taken < grid_count; ++i) {
      if (ds.is_outlier[i] == want) {
        picked.push_back(i);
        ++taken;
      }
    }
  }
  if (!picked.empty() && is_perfect_square(ds.dim)) {
    const Tensor originals = ds.gather(picked);
    const Tensor recon = reconstruct_mean(ck.params, originals);
    std::vector<double> both(originals.data().begin(), originals.data().end());
    both.insert(both.end(), recon.data().begin(), recon.data().end());
    emit_image_grid(Tensor({2 * picked.size(), ds.dim}, std::move(both)), picked.size(),
                    ctx.out / "recon_grid.pgm");
  }
  *ctx.log << "eval: " << ds.rows << " records, ratio " << report.ratio_metric << ", auc "
           << report.auc << '\n';
  write_echo(ctx.out, ctx.command, echo);
  return kOk;
}

inline int run_sweep(const Context& ctx) {
  Config echo = ctx.base_echo();
  SweepSpec spec;
  spec.train_data = manifest_from(ctx.cfg, "data", true);
  spec.test_data = manifest_from(ctx.cfg, "test_data", true);
  put_manifest(echo, "data", spec.train_data);
  put_manifest(echo, "test_data", spec.test_data);
  const std::size_t dim = build_dataset(spec.test_data).dim;
  spec.base = train_config_from(ctx.cfg, dim, ctx.seed, echo);
  spec.betas = ctx.cfg.get_doubles("sweep.betas");
  spec.fractions = ctx.cfg.get_doubles("sweep.fractions");
  for (double b : spec.betas) {
    if (!(b > 0.0)) throw ConfigError("sweep betas must be > 0");
  }
  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
  };
  echo.set("sweep.betas", join(spec.betas));
  echo.set("sweep.fractions", join(spec.fractions));
  const bool save = ctx.cfg.get_bool("sweep.save_checkpoints", false);
  echo.set("sweep.save_checkpoints", save ? "true" : "false");
  spec.workers = ctx.workers;
  if (save) {
    const auto loss = spec.base.loss;
    spec.on_cell = [out = ctx.out, loss](double beta, double fraction, const VaeParams& p) {
      save_checkpoint(out / "cells" /
                          ("beta_" + format_double(beta) + "_fraction_" +
                           format_double(fraction) + ".ckpt"),
                      Checkpoint{p, LossSpec::robust(p.arch.obs_model, beta, loss.sigma)});
    };
  }
  *ctx.log << "sweep: " << spec.betas.size() << " betas x " << spec.fractions.size()
           << " fractions on " << spec.workers << " worker(s)\n";
  const auto grid = sweep(spec);
  write_text_file(ctx.out / "sweep.csv", grid.to_csv());
  if (!grid.failures.empty()) {
    std::string text;
    for (const auto& f : grid.failures) text += f + "\n";
    write_text_file(ctx.out / "sweep_failures.txt", text);
    *ctx.log << "sweep: " << grid.failures.size() << " cell(s) failed, see sweep_failures.txt\n";
  }
  write_echo(ctx.out, ctx.command, echo);
  return kOk;
}

inline int run_select_beta(const Context& ctx) {
  Config echo = ctx.base_echo();
  const auto paths = ctx.cfg.get_strings("probe.checkpoints");
  if (paths.empty()) throw ConfigError("probe.checkpoints lists no checkpoints");
  std::vector<std::pair<double, VaeParams>> models;
  std::string listed;
  for (const auto& p : paths) {
    const auto abs = absolute_path(p);
    listed += (listed.empty() ? "" : ",") + abs;
    auto ck = load_checkpoint(abs);
    models.emplace_back(ck.loss.divergence == Divergence::Beta ? ck.loss.beta : 0.0,
                        std::move(ck.params));
  }
  ProbeOptions opt;
  opt.seed = ctx.seed;
  opt.n_probe = ctx.cfg.get_uint("probe.n_probe", opt.n_probe);
  opt.noise_mean = ctx.cfg.get_double("probe.noise_mean", opt.noise_mean);
  opt.noise_std = ctx.cfg.get_double("probe.noise_std", opt.noise_std);
  echo.set("probe.checkpoints", listed);
  echo.set("probe.n_probe", std::to_string(opt.n_probe));
  echo.set("probe.noise_mean", format_double(opt.noise_mean));
  echo.set("probe.noise_std", format_double(opt.noise_std));
  const auto results = probe(models, opt);
  write_probe_outputs(ctx.out, results);
  for (const auto& r : results) {
    *ctx.log << "beta " << r.beta << ": proxy " << r.proxy_score << ", variability "
             << r.variability << '\n';
  }
  write_echo(ctx.out, ctx.command, echo);
  return kOk;
}

inline int run_robustfit(const Context& ctx) {
  Config echo = ctx.base_echo();
  const auto& c = ctx.cfg;
  const auto n = c.get_uint("robustfit.n", 2000);
  const double w = c.get_double("robustfit.weight", 0.9);
  const double m1 = c.get_double("robustfit.m1", 0.0), s1 = c.get_double("robustfit.s1", 1.0);
  const double m2 = c.get_double("robustfit.m2", 8.0), s2 = c.get_double("robustfit.s2", 1.0);
  const double beta = c.get_double("robustfit.beta", 0.5);
  BetaFitOptions opt;
  opt.steps = c.get_uint("robustfit.steps", opt.steps);
  opt.lr = c.get_double("robustfit.lr", opt.lr);
  const auto bins = c.get_uint("robustfit.bins", 60);
  echo.set("robustfit.n", std::to_string(n));
  echo.set("robustfit.weight", format_double(w));
  echo.set("robustfit.m1", format_double(m1));
  echo.set("robustfit.s1", format_double(s1));
  echo.set("robustfit.m2", format_double(m2));
  echo.set("robustfit.s2", format_double(s2));
  echo.set("robustfit.beta", format_double(beta));
  echo.set("robustfit.steps", std::to_string(opt.steps));
  echo.set("robustfit.lr", format_double(opt.lr));
  echo.set("robustfit.bins", std::to_string(bins));

  const auto samples = sample_mixture(n, w, m1, s1, m2, s2, ctx.seed);
  const auto mle = fit_gaussian_mle(samples.values);
  const auto rob = fit_gaussian_beta(samples.values, beta, opt);
  write_text_file(ctx.out / "fit_demo.csv", fit_summary_csv({mle, rob}));
  write_text_file(ctx.out / "fit_density.csv", density_csv(samples.values, {mle, rob}, bins));
  *ctx.log << "mle: mu " << mle.mu << " sigma " << mle.sigma << "\nbeta(" << beta << "): mu "
           << rob.mu << " sigma " << rob.sigma << '\n';
  write_echo(ctx.out, ctx.command, echo);
  return kOk;
}

inline int run_make_data(const Context& ctx) {
  Config echo = ctx.base_echo();
  const auto manifest = manifest_from(ctx.cfg, "data", true);
  put_manifest(echo, "data", manifest);
  const auto prefix = ctx.cfg.get("make_data.prefix", "dataset");
  echo.set("make_data.prefix", prefix);
  const Dataset ds = build_dataset(manifest);
  std::filesystem::create_directories(ctx.out);
  write_idx(ctx.out / (prefix + "-images.idx"), images_to_idx(ds));
  write_idx(ctx.out / (prefix + "-labels.idx"), labels_to_idx(ds));
  write_idx(ctx.out / (prefix + "-outliers.idx"), outliers_to_idx(ds));
  DatasetManifest out;
  out.source = "idx";
  out.images = prefix + "-images.idx";
  out.labels = prefix + "-labels.idx";
  out.outliers = prefix + "-outliers.idx";
  out.binarize = false;
  std::string history = "# " + ds.source + "\n";
  for (const auto& h : ds.history) history += "# " + h + "\n";
  write_text_file(ctx.out / (prefix + ".manifest"), history + out.to_config().dump());
  *ctx.log << "make-data: wrote " << ds.rows << " records (" << ds.outlier_count()
           << " outliers) to " << (ctx.out / (prefix + ".manifest")).string() << '\n';
  write_echo(ctx.out, ctx.command, echo);
  return kOk;
}

}  // namespace detail

/// Runs one command; argv[0] is the program name. Output goes to `out`,
/// diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Robust variational autoencoders with beta-divergence losses"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  };
  Flags flags;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train a VAE or robust VAE from a dataset manifest"},
      {"eval", "reconstruction errors, ratio metric, ROC and latent export"},
      {"sweep", "beta x contamination-fraction grid"},
      {"select-beta", "probe checkpoints with fake noise outliers"},
      {"robustfit-demo", "fit one Gaussian to a two-component mixture"},
      {"make-data", "write a dataset recipe out as IDX files plus a manifest"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", flags.config, "config file");
    sub->add_option("-o,--out", flags.out, "output directory (overrides 'out')");
    sub->add_option("--seed", flags.seed, "global seed (overrides 'seed' and RVAE_SEED)");
    sub->add_option("--set", flags.sets, "override a config key: section.key=value");
    if (name == "sweep") sub->add_option("--workers", flags.workers, "parallel training runs");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  detail::Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.log = &out;
  ctx.workers = std::max<std::size_t>(1, flags.workers);
  try {
    if (!flags.config.empty()) ctx.cfg = Config::load(flags.config);
    for (const auto& s : flags.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      ctx.cfg.set(std::string(rvae::detail::trim(s.substr(0, eq))),
                  std::string(rvae::detail::trim(s.substr(eq + 1))));
    }
    if (!flags.out.empty()) ctx.cfg.set("out", flags.out);
    ctx.cfg.require_known(known_keys());
    if (flags.seed) {
      ctx.seed = *flags.seed;
    } else if (ctx.cfg.has("seed")) {
      ctx.seed = ctx.cfg.get_uint("seed", 0);
    } else if (const char* env = std::getenv("RVAE_SEED")) {
      Config tmp;
      tmp.set("RVAE_SEED", env);
      ctx.seed = tmp.get_uint("RVAE_SEED", 0);
    }
    ctx.out = ctx.cfg.get("out", "rvae_out");
    std::filesystem::create_directories(ctx.out);

    if (ctx.command == "train") return detail::run_train(ctx);
    if (ctx.command == "eval") return detail::run_eval(ctx);
    if (ctx.command == "sweep") return detail::run_sweep(ctx);
    if (ctx.command == "select-beta") return detail::run_select_beta(ctx);
    if (ctx.command == "robustfit-demo") return detail::run_robustfit(ctx);
    if (ctx.command == "make-data") return detail::run_make_data(ctx);
    throw ConfigError("unknown command '" + ctx.command + "'");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NonFiniteError& e) {
    err << "numeric failure in " << e.where() << ": " << e.what() << '\n';
    return kNumericError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUnexpected;
  }
}

/// Convenience overload for in-process use: args exclude the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"rvae"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rvae::cli
