#pragma once

// Experiment harness commands behind the CLI subcommands. Everything works
// through files in the configured output directory so reruns with the same
// config and seed reproduce artifacts byte for byte.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pilotforge/channelnet.hpp"
#include "pilotforge/checkpoint.hpp"
#include "pilotforge/common.hpp"
#include "pilotforge/config.hpp"
#include "pilotforge/dataset.hpp"
#include "pilotforge/estimators.hpp"
#include "pilotforge/report.hpp"
#include "pilotforge/selector.hpp"

namespace pilotforge::harness {

namespace fs = std::filesystem;

enum class PatternSource { cae, uniform };
enum class SnrWindow { full, low, high };

inline PatternSource parse_pattern_source(const std::string& s) {
  if (s == "cae") return PatternSource::cae;
  if (s == "uniform") return PatternSource::uniform;
  throw ValidationError("unknown pattern source '" + s + "' (expected cae|uniform)");
}

inline SnrWindow parse_snr_window(const std::string& s) {
  if (s == "full") return SnrWindow::full;
  if (s == "low") return SnrWindow::low;
  if (s == "high") return SnrWindow::high;
  throw ValidationError("unknown snr window '" + s + "' (expected full|low|high)");
}

inline const char* to_string(PatternSource s) {
  return s == PatternSource::cae ? "cae" : "uniform";
}
inline const char* to_string(SnrWindow w) {
  switch (w) {
    case SnrWindow::full: return "full";
    case SnrWindow::low: return "low";
    case SnrWindow::high: return "high";
  }
  return "?";
}

struct Paths {
  fs::path out;
  explicit Paths(const ExperimentConfig& cfg) : out(cfg.out_dir) {}

  fs::path train_ds() const { return out / "train.pfds"; }
  fs::path val_ds() const { return out / "val.pfds"; }
  fs::path test_ds() const { return out / "test.pfds"; }
  fs::path manifest() const { return out / "manifest.txt"; }
  fs::path pattern(PatternSource s, int np) const {
    return out / ("pattern_" + std::string(to_string(s)) + "_np" + std::to_string(np) +
                  ".txt");
  }
  fs::path selector_ckpt(int np) const {
    return out / ("selector_np" + std::to_string(np) + ".pfck");
  }
  fs::path pipeline_ckpt(PatternSource s, SnrWindow w, int np) const {
    return out / ("pipeline_" + std::string(to_string(s)) + "_" + to_string(w) + "_np" +
                  std::to_string(np) + ".pfck");
  }
  fs::path stats_cache(int np) const {
    return out / ("stats_cae_np" + std::to_string(np) + ".pfst");
  }
  fs::path report_csv(int np) const {
    return out / ("report_np" + std::to_string(np) + ".csv");
  }
  fs::path report_dir() const { return out / "report"; }
};

inline void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p))
    throw ValidationError("missing " + p.string() + " (" + hint + ")");
}

// --- gen-data ---------------------------------------------------------

inline std::uint32_t file_crc(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RunError("cannot read " + p.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return crc32(buf.data(), buf.size());
}

inline void cmd_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const Paths paths(cfg);
  fs::create_directories(paths.out);
  const sim::ChannelProfile profile = cfg.sim_profile();

  struct Split {
    const char* name;
    int count;
    std::uint64_t base;
    fs::path path;
  };
  const Split splits[] = {
      {"train", cfg.train_count, 0, paths.train_ds()},
      {"val", cfg.val_count, std::uint64_t(cfg.train_count), paths.val_ds()},
      {"test", cfg.test_count, std::uint64_t(cfg.train_count) + cfg.val_count,
       paths.test_ds()},
  };

  std::ostringstream manifest;
  manifest << "# pilotforge dataset manifest\n";
  manifest << "config_hash=" << cfg.hash() << "\n";
  manifest << "seed=" << cfg.seed << "\n";
  for (const auto& s : splits) {
    const auto ds = sim::generate_dataset(profile, s.count, cfg.snr_list_db, cfg.seed,
                                          s.base, cfg.nf, cfg.nn);
    sim::save_dataset(s.path, ds);
    manifest << s.path.filename().string() << " records=" << s.count
             << " crc32=" << file_crc(s.path) << "\n";
    std::cout << "gen-data: wrote " << s.path.string() << " (" << s.count << " records)\n";
  }
  std::ofstream mf(paths.manifest(), std::ios::trunc);
  if (!mf) throw RunError("cannot write manifest: " + paths.manifest().string());
  mf << manifest.str();
  std::cout << "gen-data: manifest hash " << crc32(manifest.str()) << "\n";
}

// --- select -----------------------------------------------------------

inline void cmd_select(const ExperimentConfig& cfg, int np) {
  cfg.validate();
  if (std::find(cfg.np_list.begin(), cfg.np_list.end(), np) == cfg.np_list.end())
    throw ValidationError("select: np " + std::to_string(np) + " is not in np.list");
  const Paths paths(cfg);
  require_file(paths.train_ds(), "run gen-data first");
  const auto train = sim::load_dataset(paths.train_ds());

  pilots::SelectorTrainConfig tc;
  tc.lr = cfg.selector_lr;
  tc.batch = cfg.selector_batch;
  tc.seed = mix64(cfg.seed, 0x73656c00ull + std::uint64_t(np));
  auto result = pilots::train_selector<float>(train, np, cfg.anneal_schedule(),
                                              cfg.decoder_spec(), tc);

  int collisions = 0;
  const PilotPattern pattern =
      pilots::extract_pattern(result.selector, cfg.nf, cfg.nn, &collisions);
  save_pattern(paths.pattern(PatternSource::cae, np), pattern);

  std::vector<std::pair<std::string, const nn::Tensor<float>*>> params;
  params.emplace_back("selector.alpha", &result.selector.alpha);
  for (auto* p : result.decoder.params()) params.emplace_back(p->name, &p->value);
  std::map<std::string, std::string> meta{
      {"kind", "selector"},
      {"np", std::to_string(np)},
      {"nf", std::to_string(cfg.nf)},
      {"nn", std::to_string(cfg.nn)},
      {"final_mean_max_prob", format_double(result.final_mean_max_prob)},
      {"pattern_crc", std::to_string(pattern_hash(pattern))},
  };
  save_checkpoint(paths.selector_ckpt(np), params, meta);

  std::cout << "select: np=" << np << " final mean-max probability "
            << format_double(result.final_mean_max_prob) << " (loss "
            << format_double(result.history.epochs.back().loss) << ")\n";
  if (collisions > 0)
    std::cout << "select: resolved " << collisions << " duplicate argmax collisions\n";
  if (!result.converged)
    std::cout << "select: warning: mean max probability < 0.95, pattern may not be "
                 "discrete yet\n";
  std::cout << "select: wrote " << paths.pattern(PatternSource::cae, np).string()
            << " and " << paths.selector_ckpt(np).string() << "\n";
}

// Rebuilds the selector-stage decoder from a selector checkpoint.
inline nn::Sequential<float> load_selector_decoder(const fs::path& ckpt_path, int np,
                                                   const ExperimentConfig& cfg) {
  const nn::Checkpoint ck = nn::load_checkpoint(ckpt_path);
  if (ck.meta_at("kind") != "selector")
    throw RunError("not a selector checkpoint: " + ckpt_path.string());
  if (std::stoi(ck.meta_at("np")) != np)
    throw RunError("selector checkpoint np mismatch: " + ckpt_path.string());
  auto decoder =
      pilots::build_decoder<float>(np, cfg.nf * cfg.nn, cfg.decoder_spec(), nullptr);
  nn::restore_params(ck, decoder.params());
  return decoder;
}

// --- train ------------------------------------------------------------

inline std::vector<int> window_subset(const sim::ChannelDataset& ds, SnrWindow w,
                                      double boundary_db) {
  std::vector<int> subset;
  for (int i = 0; i < int(ds.records.size()); ++i) {
    const float snr = ds.records[i].snr_db;
    const bool keep = w == SnrWindow::full ||
                      (w == SnrWindow::low && snr <= float(boundary_db)) ||
                      (w == SnrWindow::high && snr >= float(boundary_db));
    if (keep) subset.push_back(i);
  }
  return subset;
}

inline void cmd_train(const ExperimentConfig& cfg, int np, PatternSource source,
                      SnrWindow window) {
  cfg.validate();
  const Paths paths(cfg);
  require_file(paths.train_ds(), "run gen-data first");
  const auto train = sim::load_dataset(paths.train_ds());

  PilotPattern pattern;
  nn::Sequential<float> decoder;
  if (source == PatternSource::cae) {
    require_file(paths.pattern(PatternSource::cae, np), "run select first");
    require_file(paths.selector_ckpt(np), "run select first");
    pattern = load_pattern(paths.pattern(PatternSource::cae, np));
    decoder = load_selector_decoder(paths.selector_ckpt(np), np, cfg);
  } else {
    pattern = est::equally_spaced_pattern(cfg.nf, cfg.nn, np);
    save_pattern(paths.pattern(PatternSource::uniform, np), pattern);
    // The uniform baseline has no selector stage; pretrain its decoder on
    // the same reconstruction objective with the pattern fixed.
    pilots::SelectorTrainConfig tc;
    tc.lr = cfg.selector_lr;
    tc.batch = cfg.selector_batch;
    tc.seed = mix64(cfg.seed, 0x756e6900ull + std::uint64_t(np));
    auto pre = pilots::train_decoder_supervised<float>(train, pattern, cfg.selector_epochs,
                                                       cfg.decoder_spec(), tc);
    decoder = std::move(pre.decoder);
    std::cout << "train: pretrained uniform decoder (loss "
              << format_double(pre.history.epochs.back().loss) << ")\n";
  }

  const auto subset = window_subset(train, window, cfg.snr_window_boundary_db);
  std::cout << "train: window=" << to_string(window) << " uses " << subset.size() << "/"
            << train.records.size() << " records\n";

  cnet::PipelineSpec spec = cfg.pipeline_spec();
  const std::uint64_t seed =
      mix64(cfg.seed, mix64(std::uint64_t(np) * 4 + std::uint64_t(source) * 2 +
                                std::uint64_t(window),
                            0x74726e00ull));
  auto result =
      cnet::train_end_to_end(train, subset, pattern, std::move(decoder), spec, seed);

  std::map<std::string, std::string> meta{
      {"source", to_string(source)},
      {"window", to_string(window)},
      {"seed", std::to_string(cfg.seed)},
  };
  cnet::save_pipeline(paths.pipeline_ckpt(source, window, np), result.pipeline, meta);
  std::cout << "train: " << to_string(source) << "/" << to_string(window) << " np=" << np
            << " final loss " << format_double(result.history.epochs.back().loss) << "\n";
  std::cout << "train: wrote " << paths.pipeline_ckpt(source, window, np).string() << "\n";
}

// --- eval -------------------------------------------------------------

struct EvalArtifacts {
  PilotPattern cae_pattern;
  nn::Sequential<float> ls_decoder;
  std::optional<cnet::EstimatorPipeline> cae_full;
  std::optional<cnet::EstimatorPipeline> uniform_low;
  std::optional<cnet::EstimatorPipeline> uniform_high;
  std::optional<cnet::EstimatorPipeline> uniform_full;
  est::ChannelStatistics stats;
};

inline std::vector<ReportRow> evaluate(const ExperimentConfig& cfg, int np,
                                       EvalArtifacts& art,
                                       const sim::ChannelDataset& test) {
  const int n_test = static_cast<int>(test.records.size());
  const int d = cfg.nf * cfg.nn;
  const std::uint64_t base = std::uint64_t(cfg.train_count) + cfg.val_count;

  std::vector<ReportRow> rows;
  struct NetMethod {
    const char* name;
    cnet::EstimatorPipeline* pipe;
  };
  std::vector<NetMethod> nets;
  if (art.cae_full) nets.push_back({"cae-channelnet", &*art.cae_full});
  if (art.uniform_low) nets.push_back({"uniform-low", &*art.uniform_low});
  if (art.uniform_high) nets.push_back({"uniform-high", &*art.uniform_high});
  if (art.uniform_full) nets.push_back({"uniform-full", &*art.uniform_full});

  for (std::size_t si = 0; si < cfg.snr_list_db.size(); ++si) {
    const float snr = cfg.snr_list_db[si];
    // Noise is redrawn per target SNR so every test frame contributes one
    // observation at every sweep point.
    std::vector<ComplexGrid> noisy(n_test);
    parallel_for(n_test, [&](std::int64_t i) {
      const std::uint64_t frame_seed = mix64(test.header.seed, base + std::uint64_t(i));
      noisy[i] = sim::add_awgn(test.records[i].ideal, snr, mix64(frame_seed, 100 + si));
    });

    // Learned cascades run batched over the whole split.
    for (auto& nm : nets) {
      const int k = nm.pipe->pattern.k();
      nn::Tensor<float> u({n_test, 2 * k});
      for (int i = 0; i < n_test; ++i) {
        const auto row = pilots::gather_row<float>(noisy[i], nm.pipe->pattern);
        std::copy(row.begin(), row.end(), u.data.begin() + std::size_t(i) * 2 * k);
      }
      Rng rng(0);
      nn::Tensor<float> y = nm.pipe->model.forward(u, false, rng);
      double raw = 0.0, norm = 0.0;
      for (int i = 0; i < n_test; ++i) {
        std::vector<float> planes(y.data.begin() + std::size_t(i) * 2 * d,
                                  y.data.begin() + std::size_t(i + 1) * 2 * d);
        const auto est_grid = planes_to_grid(planes, cfg.nf, cfg.nn);
        const auto m = cnet::mse(est_grid, test.records[i].ideal);
        raw += m.raw;
        norm += m.normalized;
      }
      rows.push_back(ReportRow{nm.name, np, snr, raw / n_test, norm / n_test, n_test});
    }

    // LS at the learned pilots + decoder interpolation (the raw H_LR path).
    {
      double raw = 0.0, norm = 0.0;
      Rng rng(0);
      for (int i = 0; i < n_test; ++i) {
        const auto u = pilots::argmax_gather(noisy[i], art.cae_pattern);
        const auto est_grid =
            est::decoder_interpolate(u, art.ls_decoder, cfg.nf, cfg.nn, rng);
        const auto m = cnet::mse(est_grid, test.records[i].ideal);
        raw += m.raw;
        norm += m.normalized;
      }
      rows.push_back(ReportRow{"ls-decoder", np, snr, raw / n_test, norm / n_test, n_test});
    }

    // Ideal LMMSE with the true per-frame noise variance.
    {
      std::vector<double> raws(n_test), norms(n_test);
      parallel_for(n_test, [&](std::int64_t i) {
        const auto& ideal = test.records[i].ideal;
        const double noise_var =
            ideal.mean_power() * std::pow(10.0, -double(snr) / 10.0);
        est::PilotObservation obs;
        obs.pattern = art.cae_pattern;
        const auto u = pilots::argmax_gather(noisy[i], art.cae_pattern);
        obs.values.resize(u.size());
        for (std::size_t j = 0; j < u.size(); ++j)
          obs.values[j] = {double(u[j][0]), double(u[j][1])};
        const auto est_grid =
            est::mmse_estimate(obs, art.stats, noise_var, cfg.nf, cfg.nn);
        const auto m = cnet::mse(est_grid, ideal);
        raws[i] = m.raw;
        norms[i] = m.normalized;
      });
      double raw = 0.0, norm = 0.0;
      for (int i = 0; i < n_test; ++i) {
        raw += raws[i];
        norm += norms[i];
      }
      rows.push_back(ReportRow{"ideal-mmse", np, snr, raw / n_test, norm / n_test, n_test});
    }
  }
  return rows;
}

inline std::vector<ReportRow> cmd_eval(const ExperimentConfig& cfg, int np) {
  cfg.validate();
  const Paths paths(cfg);
  require_file(paths.test_ds(), "run gen-data first");
  require_file(paths.train_ds(), "run gen-data first");
  require_file(paths.pattern(PatternSource::cae, np), "run select first");
  require_file(paths.selector_ckpt(np), "run select first");
  require_file(paths.pipeline_ckpt(PatternSource::cae, SnrWindow::full, np),
               "run train --pattern cae first");

  const auto train = sim::load_dataset(paths.train_ds());
  const auto test = sim::load_dataset(paths.test_ds());

  EvalArtifacts art;
  art.cae_pattern = load_pattern(paths.pattern(PatternSource::cae, np));
  art.ls_decoder = load_selector_decoder(paths.selector_ckpt(np), np, cfg);

  const cnet::PipelineSpec spec = cfg.pipeline_spec();
  art.cae_full = cnet::load_pipeline(
      paths.pipeline_ckpt(PatternSource::cae, SnrWindow::full, np), art.cae_pattern, spec);
  const auto try_uniform = [&](SnrWindow w) -> std::optional<cnet::EstimatorPipeline> {
    const auto p = paths.pipeline_ckpt(PatternSource::uniform, w, np);
    if (!fs::exists(p)) return std::nullopt;
    const auto upat = load_pattern(paths.pattern(PatternSource::uniform, np));
    return cnet::load_pipeline(p, upat, spec);
  };
  art.uniform_low = try_uniform(SnrWindow::low);
  art.uniform_high = try_uniform(SnrWindow::high);
  art.uniform_full = try_uniform(SnrWindow::full);
  for (const auto* missing :
       {art.uniform_low ? nullptr : "uniform-low", art.uniform_high ? nullptr : "uniform-high",
        art.uniform_full ? nullptr : "uniform-full"})
    if (missing) std::cout << "eval: skipping " << missing << " (no checkpoint)\n";

  // Statistics cache keyed on the pattern and dataset seed.
  const auto cache = paths.stats_cache(np);
  bool need_fit = true;
  if (fs::exists(cache)) {
    const auto st = est::load_statistics(cache, cfg.nf, cfg.nn);
    if (st.pattern_crc == pattern_hash(art.cae_pattern) &&
        st.dataset_seed == train.header.seed) {
      art.stats = st;
      need_fit = false;
    }
  }
  if (need_fit) {
    art.stats = est::fit_statistics(train, art.cae_pattern);
    est::save_statistics(cache, art.stats, cfg.nf, cfg.nn);
    std::cout << "eval: fitted statistics over " << art.stats.sample_count
              << " frames (cached)\n";
  }

  auto rows = evaluate(cfg, np, art, test);
  save_report_csv(paths.report_csv(np), rows);
  std::cout << "eval: wrote " << paths.report_csv(np).string() << " (" << rows.size()
            << " rows)\n";
  return rows;
}

// --- report -----------------------------------------------------------

inline void cmd_report(const ExperimentConfig& cfg, std::vector<fs::path> csvs = {}) {
  cfg.validate();
  const Paths paths(cfg);
  if (csvs.empty()) {
    for (const auto& entry : fs::directory_iterator(paths.out)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("report_np", 0) == 0 && entry.path().extension() == ".csv")
        csvs.push_back(entry.path());
    }
    std::sort(csvs.begin(), csvs.end());
  }
  if (csvs.empty())
    throw ValidationError("report: no report CSV files found in " + paths.out.string());

  std::vector<ReportRow> rows;
  for (const auto& csv : csvs) {
    auto part = load_report_csv(csv);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  auto written = emit_figure_files(paths.report_dir(), rows, 15.0f);

  std::vector<fs::path> patterns;
  for (const auto& entry : fs::directory_iterator(paths.out)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("pattern_", 0) == 0 && entry.path().extension() == ".txt")
      patterns.push_back(entry.path());
  }
  std::sort(patterns.begin(), patterns.end());
  for (const auto& pf : patterns) {
    const auto p = load_pattern(pf);
    const auto outp =
        paths.report_dir() / ("fig_" + pf.stem().string() + ".txt");
    std::ofstream out(outp, std::ios::trunc);
    if (!out) throw RunError("cannot write " + outp.string());
    out << render_pattern_ascii(p);
    written.push_back(outp);
  }
  std::cout << "report: wrote " << written.size() << " files to "
            << paths.report_dir().string() << "\n";
}

}  // namespace pilotforge::harness
