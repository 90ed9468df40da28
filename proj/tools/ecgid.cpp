// ecgid: command-line front end of the toolkit.

#include "ecgid/augmentation.hpp"
#include "ecgid/beat_io.hpp"
#include "ecgid/config.hpp"
#include "ecgid/evaluation.hpp"
#include "ecgid/experiment.hpp"
#include "ecgid/features.hpp"
#include "ecgid/nn/checkpoint.hpp"
#include "ecgid/recording_io.hpp"
#include "ecgid/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ecgid;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kInput = 3, kRuntime = 4 };

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  int threads = 0;
};

struct Manifest {
  std::string subcommand;
  json arguments = json::object();
  json inputs = json::array();
  json outputs = json::array();
};

void require_path(const std::string& p, const char* what) {
  if (p.empty()) throw InputError(std::string(what) + " is required");
  if (!fs::exists(p)) throw InputError(std::string(what) + " '" + p + "' does not exist");
}

void add_input(Manifest& m, const std::string& p) { m.inputs.push_back({{"path", p}, {"fnv1a64", hash_path(p)}}); }
void add_output(Manifest& m, const fs::path& p) {
  m.outputs.push_back({{"path", p.generic_string()}, {"fnv1a64", hash_path(p)}});
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_manifest(const fs::path& path, const Manifest& m, const RunConfig& cfg, const Diagnostics& diag) {
  json doc;
  doc["tool"] = "ecgid";
  doc["subcommand"] = m.subcommand;
  doc["arguments"] = m.arguments;
  doc["config_hash"] = config_hash(cfg);
  doc["config"] = json::parse(run_config_json(cfg));
  doc["seeds"] = {{"base_seed", cfg.experiment.base_seed},
                  {"runs", cfg.experiment.runs},
                  {"synth_seed", cfg.synth.seed}};
  doc["inputs"] = m.inputs;
  doc["outputs"] = m.outputs;
  doc["warnings"] = diag.warnings.size();
  write_text(path, doc.dump(2) + "\n");
}

void print_warnings(const Diagnostics& diag) {
  constexpr std::size_t kShown = 10;
  for (std::size_t i = 0; i < diag.warnings.size() && i < kShown; ++i)
    std::cerr << "warning: " << diag.warnings[i] << "\n";
  if (diag.warnings.size() > kShown) std::cerr << "warning: ... " << diag.warnings.size() - kShown << " more\n";
}

RunConfig resolve_config(const Common& common, Manifest& m) {
  RunConfig cfg;
  if (!common.config_path.empty()) {
    require_path(common.config_path, "--config");
    cfg = load_run_config(common.config_path);
    add_input(m, common.config_path);
  }
  for (const auto& o : common.overrides) apply_override(cfg, o);
  return cfg;
}

void finish_config(RunConfig& cfg, Manifest& m) {
  cfg.validate();
  if (!cfg.exclusion_list.empty()) {
    require_path(cfg.exclusion_list, "evaluation.exclusion_list");
    cfg.experiment.excluded_subjects = read_exclusion_list(cfg.exclusion_list);
    add_input(m, cfg.exclusion_list);
  }
  cfg.experiment.validate();
}

std::vector<BeatTemplate> load_beats(const std::string& path, const RunConfig& cfg, Manifest& m) {
  require_path(path, "--beats");
  add_input(m, path);
  auto beats = read_beats(path);
  std::erase_if(beats, [&](const BeatTemplate& b) { return cfg.experiment.excluded_subjects.count(b.subject_id) > 0; });
  return beats;
}

std::vector<BeatTemplate> preprocess_dir(const std::string& dir, const RunConfig& cfg, Manifest& m,
                                         Diagnostics& diag) {
  require_path(dir, "--in");
  add_input(m, dir);
  auto recordings = read_recording_dir(dir);
  std::erase_if(recordings,
                [&](const RawRecording& r) { return cfg.experiment.excluded_subjects.count(r.subject_id) > 0; });
  if (recordings.empty()) throw InputError("no recordings found in " + dir);
  const std::set<std::string> aux(cfg.experiment.auxiliary_subjects.begin(), cfg.experiment.auxiliary_subjects.end());
  return preprocess_corpus(recordings, cfg.filter, cfg.detection, aux, cfg.experiment.split, &diag);
}

// Beats either from a beat file or from a recording directory.
std::vector<BeatTemplate> beats_from(const std::string& beats_path, const std::string& corpus_dir,
                                     const RunConfig& cfg, Manifest& m, Diagnostics& diag) {
  if (!beats_path.empty() && !corpus_dir.empty()) throw InputError("give either --beats or --in, not both");
  if (!corpus_dir.empty()) return preprocess_dir(corpus_dir, cfg, m, diag);
  return load_beats(beats_path, cfg, m);
}

std::vector<BeatTemplate> target_training_beats(std::span<const BeatTemplate> beats, const RunConfig& cfg,
                                                Diagnostics& diag) {
  const SubjectRoles roles = assign_roles(beats, cfg.experiment, &diag);
  const std::set<std::string> targets(roles.target.begin(), roles.target.end());
  std::vector<BeatTemplate> out;
  for (const auto& b : beats)
    if (!b.augmented && targets.count(b.subject_id) && cfg.experiment.split.is_train(b)) out.push_back(b);
  return out;
}

std::string run_file(int run, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%02d%s", run, ext);
  return buf;
}

// Directory-safe method name: DE-PADA\DE -> DE-PADA-no-DE.
std::string slug(Ablation a) {
  std::string s(to_string(a));
  if (const auto p = s.find('\\'); p != std::string::npos) s.replace(p, 1, "-no-");
  return s;
}

std::string config_help() {
  std::string text = "Configuration keys (JSON document, or --set section.key=value):\n";
  for (const auto& k : config_keys()) {
    std::string line = "  " + k.name;
    line.resize(std::max<std::size_t>(line.size() + 1, 40), ' ');
    text += line + k.default_value + "  [" + k.provenance + "]\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG biometric identification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(config_help());

  Common common;
  app.add_option("--config", common.config_path, "JSON run configuration");
  app.add_option("--set", common.overrides, "Override one key, section.key=value (repeatable)");
  app.add_option("--threads", common.threads, "Worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic recording corpus with ground truth");
  std::string synth_out;
  std::optional<int> synth_subjects, synth_aux;
  std::optional<std::uint64_t> synth_seed;
  std::optional<double> synth_snr;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--subjects", synth_subjects, "Target subjects");
  synth->add_option("--aux", synth_aux, "Auxiliary subjects");
  synth->add_option("--seed", synth_seed, "Corpus seed");
  synth->add_option("--snr", synth_snr, "Noise level in dB");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Recordings to averaged, gated beat templates");
  std::string pre_in, pre_out;
  pre->add_option("--in", pre_in, "Recording directory")->required();
  pre->add_option("--out", pre_out, "Beat file")->required();

  // fit-ranges
  auto* fit = app.add_subcommand("fit-ranges", "Per-subject T-peak fits and augmentation ranges");
  std::string fit_beats, fit_ranges, fit_fits;
  bool refit_global = false;
  fit->add_option("--beats", fit_beats, "Beat file")->required();
  fit->add_option("--out", fit_ranges, "Range table")->required();
  fit->add_option("--fits", fit_fits, "Also write the fit table here");
  fit->add_flag("--refit-global", refit_global, "Recompute the global lower limit from the pooled training beats");

  // augment
  auto* aug = app.add_subcommand("augment", "Augment the training beats of every subject with a range");
  std::string aug_beats, aug_ranges, aug_out;
  aug->add_option("--beats", aug_beats, "Beat file")->required();
  aug->add_option("--ranges", aug_ranges, "Range table")->required();
  aug->add_option("--out", aug_out, "Augmented beat file")->required();

  // train / evaluate / ablate share the data options
  std::string beats_path, corpus_dir, out_path;
  std::vector<std::string> ablations{"DE-PADA"};
  bool classifier_augmented = false;
  int train_run = 0;

  auto* train = app.add_subcommand("train", "Train one model and save its checkpoint");
  train->add_option("--beats", beats_path, "Beat file");
  train->add_option("--in", corpus_dir, "Recording directory (preprocessed on the fly)");
  train->add_option("--ablation", ablations, "DE-PADA, no-DE, no-PA, no-DA, SCR or ACR")->expected(1);
  train->add_flag("--classifier-augmented", classifier_augmented, "Augment the target beats of the classifier head");
  train->add_option("--run", train_run, "Run index (seed is base_seed + run)")->check(CLI::NonNegativeNumber);
  train->add_option("--out", out_path, "Checkpoint file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Repeated-run identification report");
  bool no_checkpoints = false;
  evaluate->add_option("--beats", beats_path, "Beat file");
  evaluate->add_option("--in", corpus_dir, "Recording directory (preprocessed on the fly)");
  evaluate->add_option("--ablation", ablations, "Methods to evaluate (repeatable)");
  evaluate->add_flag("--classifier-augmented", classifier_augmented, "Augment the target beats of the classifier head");
  evaluate->add_flag("--no-checkpoints", no_checkpoints, "Skip writing per-run checkpoints");
  evaluate->add_option("--out", out_path, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Four configurations under both classifier scenarios");
  ablate->add_option("--beats", beats_path, "Beat file");
  ablate->add_option("--in", corpus_dir, "Recording directory (preprocessed on the fly)");
  ablate->add_option("--out", out_path, "Output directory")->required();

  // export-features
  auto* exportf = app.add_subcommand("export-features", "Backbone feature vectors for external embedding");
  std::string ckpt_path, feat_out;
  std::size_t backbone_index = 0;
  bool normalize_st = false, with_pca = false;
  exportf->add_option("--beats", beats_path, "Beat file")->required();
  exportf->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  exportf->add_option("--backbone", backbone_index, "Backbone index");
  exportf->add_flag("--normalize-st", normalize_st, "Move every T-peak to the subject's mean-training-HR position");
  exportf->add_flag("--pca", with_pca, "Append two principal-component scores");
  exportf->add_option("--out", feat_out, "Feature table")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  Diagnostics diag;
  try {
    if (common.threads > 0) omp_set_num_threads(common.threads);
    CLI::App* sub = app.get_subcommands().front();
    Manifest m;
    m.subcommand = sub->get_name();
    RunConfig cfg = resolve_config(common, m);

    if (sub == synth) {
      if (synth_subjects) apply_override(cfg, "synth.target_subjects=" + std::to_string(*synth_subjects));
      if (synth_aux) apply_override(cfg, "synth.auxiliary_subjects=" + std::to_string(*synth_aux));
      if (synth_seed) apply_override(cfg, "synth.seed=" + std::to_string(*synth_seed));
      if (synth_snr) apply_override(cfg, "synth.snr_db=" + format_double(*synth_snr));
      finish_config(cfg, m);
      const SynthCorpus corpus = generate_corpus(cfg.synth);
      write_corpus(synth_out, corpus);
      add_output(m, synth_out);
      write_manifest(fs::path(synth_out) / "manifest.json", m, cfg, diag);
      std::cout << "wrote " << corpus.recordings.size() << " recordings of " << corpus.subjects.size()
                << " subjects to " << synth_out << "\n";

    } else if (sub == pre) {
      finish_config(cfg, m);
      const auto beats = preprocess_dir(pre_in, cfg, m, diag);
      write_beats(pre_out, beats);
      add_output(m, pre_out);
      write_manifest(pre_out + ".manifest.json", m, cfg, diag);
      std::cout << "wrote " << beats.size() << " beats to " << pre_out << "\n";

    } else if (sub == fit) {
      finish_config(cfg, m);
      const auto beats = load_beats(fit_beats, cfg, m);
      const auto training = target_training_beats(beats, cfg, diag);
      AugmentationConstants consts = cfg.experiment.augmentation;
      if (refit_global) {
        consts.t_global_min = refit_global_min(training, consts);
        m.arguments["refit_global"] = true;
        m.arguments["t_global_min"] = consts.t_global_min;
        consts.validate();
      }
      const SubjectRanges sr = compute_subject_ranges(training, consts, &diag);
      write_ranges(fit_ranges, sr.ranges);
      add_output(m, fit_ranges);
      if (!fit_fits.empty()) {
        write_fits(fit_fits, sr.fits);
        add_output(m, fit_fits);
      }
      write_manifest(fit_ranges + ".manifest.json", m, cfg, diag);
      std::cout << "t_global_min " << consts.t_global_min << ", " << sr.ranges.size() << " ranges written to "
                << fit_ranges << "\n";

    } else if (sub == aug) {
      finish_config(cfg, m);
      const auto beats = load_beats(aug_beats, cfg, m);
      require_path(aug_ranges, "--ranges");
      add_input(m, aug_ranges);
      const auto ranges = read_ranges(aug_ranges);
      std::vector<BeatTemplate> train_part, rest;
      for (const auto& b : beats) (cfg.experiment.split.is_train(b) && !b.augmented ? train_part : rest).push_back(b);
      auto out = augment_beats(train_part, ranges, cfg.experiment.augment_options);
      out.insert(out.end(), rest.begin(), rest.end());
      write_beats(aug_out, out, true);
      add_output(m, aug_out);
      write_manifest(aug_out + ".manifest.json", m, cfg, diag);
      std::cout << "wrote " << out.size() << " beats (" << out.size() - beats.size() << " augmented) to " << aug_out
                << "\n";

    } else if (sub == train) {
      finish_config(cfg, m);
      const auto beats = beats_from(beats_path, corpus_dir, cfg, m, diag);
      const Ablation a = parse_ablation(ablations.front());
      cfg.experiment.base_seed += static_cast<std::uint64_t>(train_run);
      cfg.experiment.runs = 1;
      m.arguments = {{"ablation", to_string(a)}, {"classifier_augmented", classifier_augmented}, {"run", train_run}};
      std::vector<nn::ExpertModel> models;
      const EvalReport report = run_experiment(a, classifier_augmented, beats, cfg.experiment, &models, &diag);
      nn::save_checkpoint(out_path, models.front());
      write_text(out_path + ".layers.txt", nn::layer_manifest(models.front()));
      add_output(m, out_path);
      write_manifest(out_path + ".manifest.json", m, cfg, diag);
      const EvalReport reports[] = {report};
      std::cout << format_report_table(reports);

    } else if (sub == evaluate) {
      finish_config(cfg, m);
      const auto beats = beats_from(beats_path, corpus_dir, cfg, m, diag);
      std::vector<EvalReport> reports;
      json methods = json::array();
      const fs::path dir(out_path);
      fs::create_directories(dir);
      for (const auto& name : ablations) {
        const Ablation a = parse_ablation(name);
        methods.push_back(to_string(a));
        std::vector<nn::ExpertModel> models;
        reports.push_back(run_experiment(a, classifier_augmented, beats, cfg.experiment,
                                         no_checkpoints ? nullptr : &models, &diag));
        for (std::size_t r = 0; r < models.size(); ++r) {
          const fs::path sub_dir = ablations.size() == 1 ? dir : dir / slug(a);
          const fs::path ckpt = sub_dir / run_file(static_cast<int>(r), ".ckpt");
          fs::create_directories(sub_dir);
          nn::save_checkpoint(ckpt, models[r]);
          write_text(sub_dir / run_file(static_cast<int>(r), ".layers.txt"), nn::layer_manifest(models[r]));
          add_output(m, ckpt);
        }
      }
      m.arguments = {{"ablations", methods}, {"classifier_augmented", classifier_augmented}};
      const std::string table = format_report_table(reports);
      write_text(dir / "report.json", report_json(reports));
      write_text(dir / "report.txt", table);
      add_output(m, dir / "report.json");
      write_manifest(dir / "manifest.json", m, cfg, diag);
      std::cout << table;

    } else if (sub == ablate) {
      finish_config(cfg, m);
      const auto beats = beats_from(beats_path, corpus_dir, cfg, m, diag);
      const auto reports = run_ablation_matrix(beats, cfg.experiment, &diag);
      const fs::path dir(out_path);
      const std::string table = format_report_table(reports);
      write_text(dir / "report.json", report_json(reports));
      write_text(dir / "report.txt", table);
      add_output(m, dir / "report.json");
      write_manifest(dir / "manifest.json", m, cfg, diag);
      std::cout << table;

    } else if (sub == exportf) {
      finish_config(cfg, m);
      const auto beats = load_beats(beats_path, cfg, m);
      require_path(ckpt_path, "--checkpoint");
      add_input(m, ckpt_path);
      const nn::ExpertModel model = nn::load_checkpoint(ckpt_path);
      if (backbone_index >= model.backbones.size())
        throw ConfigError("--backbone must be below " + std::to_string(model.backbones.size()));
      std::optional<StNormalization> norm;
      if (normalize_st) norm = make_st_normalization(target_training_beats(beats, cfg, diag));
      const FeatureTable table = export_features(model.backbones[backbone_index], model.slices[backbone_index], beats,
                                                 norm ? &*norm : nullptr, with_pca, &diag);
      write_feature_table(feat_out, table);
      m.arguments = {{"backbone", backbone_index}, {"normalize_st", normalize_st}, {"pca", with_pca}};
      add_output(m, feat_out);
      write_manifest(feat_out + ".manifest.json", m, cfg, diag);
      std::cout << "wrote " << table.features.size() << " feature rows to " << feat_out << "\n";
    }
    print_warnings(diag);
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "error [config]: " << e.what() << "\n";
    return kConfig;
  } catch (const InputError& e) {
    std::cerr << "error [input]: " << e.what() << "\n";
    return kInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error [input]: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error [runtime]: " << e.what() << "\n";
    return kRuntime;
  }
}
