// bsactl: command-line driver for the brain-structure-age pipeline.
// Subcommands mirror the pipeline stages; every run writes a run manifest
// with the resolved config so results can be reproduced exactly.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "bsa/config.hpp"
#include "bsa/evalkit.hpp"
#include "bsa/features.hpp"
#include "bsa/mlp.hpp"
#include "bsa/phantom.hpp"
#include "bsa/pipeline.hpp"
#include "bsa/svm.hpp"
#include "bsa/viz.hpp"
#include "bsa/voxelage.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
};

bsa::PipelineConfig resolve_config(const CommonArgs& args) {
  bsa::PipelineConfig cfg =
      args.config_path.empty() ? bsa::PipelineConfig{} : bsa::parse_config_file(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

std::vector<double> reduced_c_grid() {
  std::vector<double> grid(10);
  for (int i = 0; i < 10; ++i) grid[i] = std::pow(10.0, -1.5 + 2.0 * i / 9.0);
  return grid;
}

bsa::GridSearchConfig grid_config(const bsa::PipelineConfig& cfg) {
  bsa::GridSearchConfig gc;
  gc.kernels.clear();
  std::istringstream ss(cfg.svm_kernels);
  std::string name;
  while (std::getline(ss, name, ',')) gc.kernels.push_back(bsa::kernel_from_name(name));
  gc.c_values = cfg.svm_grid == "full" ? bsa::make_c_grid() : reduced_c_grid();
  gc.folds = cfg.svm_folds;
  return gc;
}

bsa::TrainRecipe unet_recipe(const bsa::PipelineConfig& cfg) {
  bsa::TrainRecipe recipe;
  recipe.batch_size = cfg.unet_batch;
  recipe.patience = cfg.unet_patience;
  recipe.learning_rate = cfg.unet_lr;
  recipe.max_epochs = cfg.unet_max_epochs;
  recipe.augment.shift = cfg.augment_shift;
  recipe.augment.mixup = cfg.augment_mixup;
  recipe.augment.mixup_alpha = cfg.mixup_alpha;
  return recipe;
}

// classes present in the rows, in the canonical report order
std::vector<std::string> present_classes(const std::vector<bsa::StructureFeatures>& rows) {
  std::vector<std::string> classes;
  for (const auto& cls : bsa::pipeline::canonical_classes()) {
    for (const auto& r : rows)
      if (r.class_id == cls) {
        classes.push_back(cls);
        break;
      }
  }
  return classes;
}

std::vector<double> load_predicted_ages(const std::string& path,
                                        const std::vector<bsa::StructureFeatures>& rows) {
  const auto preds = bsa::pipeline::read_predictions_csv(path);
  std::vector<double> by_row;
  by_row.reserve(rows.size());
  for (const auto& r : rows) {
    bool found = false;
    for (const auto& p : preds)
      if (p.id == r.id) {
        by_row.push_back(p.value);
        found = true;
        break;
      }
    if (!found)
      throw bsa::pipeline::MissingArtifact("no prediction for subject " + r.id + " in " + path);
  }
  return by_row;
}

Eigen::MatrixXd ablation_matrix(const std::vector<bsa::StructureFeatures>& rows,
                                bsa::pipeline::FeatureSet fs, const std::string& pred_path) {
  if (fs == bsa::pipeline::FeatureSet::PredAge) {
    if (pred_path.empty())
      throw bsa::ConfigError("feature set pred-age requires --pred with a predictions file");
    const auto preds = load_predicted_ages(pred_path, rows);
    return bsa::pipeline::feature_matrix(rows, fs, &preds);
  }
  return bsa::pipeline::feature_matrix(rows, fs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"brain structure age pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "pipeline config file (ini)");
  app.add_option("--seed", common.seed, "override the config seed")
      ->each([&common](const std::string&) { common.seed_set = true; });

  auto* cmd_dump = app.add_subcommand("config-dump", "print the resolved configuration");

  std::string gen_out;
  auto* cmd_gen = app.add_subcommand("phantom-gen", "generate a synthetic cohort");
  cmd_gen->add_option("--out", gen_out, "output cohort directory")->required();

  std::string tv_data, tv_out, tv_class = "CN";
  auto* cmd_tv = app.add_subcommand("train-voxel", "train the patch-ensemble age regressors");
  cmd_tv->add_option("--data", tv_data, "cohort directory")->required();
  cmd_tv->add_option("--out", tv_out, "model output directory")->required();
  cmd_tv->add_option("--train-class", tv_class, "class used for training (healthy by default)");

  std::string pm_model, pm_in, pm_out;
  auto* cmd_pm = app.add_subcommand("predict-map", "predict a voxel-wise age map for one volume");
  cmd_pm->add_option("--model", pm_model, "ensemble directory")->required();
  cmd_pm->add_option("--in", pm_in, "input .vol3 volume")->required();
  cmd_pm->add_option("--out", pm_out, "output .vol3 age map")->required();

  std::string ft_model, ft_data, ft_out, ft_corr;
  auto* cmd_ft = app.add_subcommand("features", "compute per-structure features for a cohort");
  cmd_ft->add_option("--model", ft_model, "ensemble directory")->required();
  cmd_ft->add_option("--data", ft_data, "cohort directory")->required();
  cmd_ft->add_option("--out", ft_out, "output feature csv")->required();
  cmd_ft->add_option("--correction", ft_corr, "apply a fitted correction model");

  std::string fc_features, fc_out, fc_class = "CN";
  bool fc_intercept = false;
  auto* cmd_fc = app.add_subcommand("fit-correction", "fit per-structure age bias correction");
  cmd_fc->add_option("--in", fc_features, "uncorrected feature csv")->required();
  cmd_fc->add_option("--out", fc_out, "output correction file")->required();
  cmd_fc->add_option("--fit-class", fc_class, "healthy class used for fitting");
  cmd_fc->add_flag("--intercept", fc_intercept, "fit the intercept variant");

  std::string tm_features, tm_out;
  auto* cmd_tm = app.add_subcommand("train-mlp", "train the age-regression fold ensemble");
  cmd_tm->add_option("--in", tm_features, "corrected feature csv")->required();
  cmd_tm->add_option("--out", tm_out, "model output directory")->required();

  std::string pa_model, pa_features, pa_out;
  auto* cmd_pa = app.add_subcommand("predict-age", "predict chronological age from features");
  cmd_pa->add_option("--model", pa_model, "mlp directory")->required();
  cmd_pa->add_option("--in", pa_features, "feature csv")->required();
  cmd_pa->add_option("--out", pa_out, "output predictions csv")->required();

  std::string ts_features, ts_out, ts_set = "bsage+vol", ts_pred;
  auto* cmd_ts = app.add_subcommand("train-svm", "grid-search and train the disease classifier");
  cmd_ts->add_option("--in", ts_features, "feature csv")->required();
  cmd_ts->add_option("--out", ts_out, "model output directory")->required();
  cmd_ts->add_option("--features", ts_set, "bsage|vol|bsage+vol|true-age|pred-age");
  cmd_ts->add_option("--pred", ts_pred, "predictions csv (for pred-age)");

  std::string cl_model, cl_features, cl_out, cl_pred;
  auto* cmd_cl = app.add_subcommand("classify", "classify subjects with a trained svm");
  cmd_cl->add_option("--model", cl_model, "svm directory")->required();
  cmd_cl->add_option("--in", cl_features, "feature csv")->required();
  cmd_cl->add_option("--out", cl_out, "output predictions csv")->required();
  cmd_cl->add_option("--pred", cl_pred, "predictions csv (for pred-age)");

  std::string ev_pred, ev_task = "regression", ev_out;
  auto* cmd_ev = app.add_subcommand("evaluate", "score predictions against the recorded truth");
  cmd_ev->add_option("--pred", ev_pred, "predictions csv")->required();
  cmd_ev->add_option("--task", ev_task, "regression|classification");
  cmd_ev->add_option("--out", ev_out, "output report json");

  std::string ps_features, ps_out;
  auto* cmd_ps = app.add_subcommand("population-summary", "per-class age-gap summary");
  cmd_ps->add_option("--in", ps_features, "feature csv")->required();
  cmd_ps->add_option("--out", ps_out, "output summary csv")->required();

  std::string xs_labels, xs_values, xs_summary, xs_class, xs_out;
  std::string xs_axis = "z";
  int xs_index = 0;
  double xs_range = 15.0;
  auto* cmd_xs = app.add_subcommand("export-slices", "render a structure slice as a P6 pixmap");
  cmd_xs->add_option("--labels", xs_labels, "label volume (.lab3)")->required();
  cmd_xs->add_option("--values", xs_values, "csv with structure,value rows");
  cmd_xs->add_option("--summary", xs_summary, "population summary csv");
  cmd_xs->add_option("--class", xs_class, "class row to use from the summary");
  cmd_xs->add_option("--axis", xs_axis, "slice axis: x|y|z");
  cmd_xs->add_option("--index", xs_index, "slice index");
  cmd_xs->add_option("--range", xs_range, "colormap range in years");
  cmd_xs->add_option("--out", xs_out, "output .ppm image")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const bsa::PipelineConfig cfg = resolve_config(common);

    if (cmd_dump->parsed()) {
      std::cout << bsa::dump_config(cfg);
      return kExitOk;
    }

    if (cmd_gen->parsed()) {
      const bsa::PhantomSpec spec = bsa::pipeline::spec_from_config(cfg);
      const auto table = bsa::DiseaseEffect::default_table();
      const auto mix = bsa::parse_class_mix(cfg.class_mix);
      const auto cohort = bsa::generate_cohort(spec, mix, cfg.age_lo, cfg.age_hi, cfg.cohort_n,
                                               cfg.seed, table);
      bsa::pipeline::write_cohort(cohort, gen_out);
      bsa::pipeline::write_run_manifest(gen_out, cfg, "phantom-gen");
      std::cout << "wrote " << cohort.size() << " subjects to " << gen_out << "\n";
      return kExitOk;
    }

    if (cmd_tv->parsed()) {
      const auto cohort = bsa::pipeline::load_cohort(tv_data);
      std::vector<bsa::TrainSubject> subjects;
      for (const auto& s : cohort) {
        if (s.class_id != tv_class) continue;
        bsa::TrainSubject t;
        t.volume = cfg.downscale ? bsa::downscale_by2(s.volume) : s.volume;
        t.age = s.age;
        subjects.push_back(std::move(t));
      }
      if (subjects.empty())
        throw bsa::pipeline::MissingArtifact("no subjects of class " + tv_class + " in " + tv_data);

      const auto layout = bsa::pipeline::layout_from_config(cfg, cohort.front().volume.dims());
      bsa::UNetConfig ucfg;
      ucfg.patch_dims = cfg.patch_dims;
      ucfg.encoder_widths = cfg.encoder_widths;
      ucfg.bottleneck = cfg.bottleneck;

      bsa::Rng master(cfg.seed);
      bsa::Rng chain_rng = master.child(2);
      bsa::EnsembleModel model =
          bsa::train_chain(subjects, layout, ucfg, unet_recipe(cfg), chain_rng);
      model.master_seed = cfg.seed;
      bsa::save_ensemble(model, tv_out);
      bsa::pipeline::write_run_manifest(tv_out, cfg, "train-voxel",
                                        {{"subjects", std::to_string(subjects.size())}});
      for (size_t u = 0; u < model.reports.size(); ++u)
        std::cout << "unit " << u << ": best_val " << model.reports[u].best_val_loss
                  << "y at epoch " << model.reports[u].best_epoch << " ("
                  << model.reports[u].epochs_run << " run)\n";
      return kExitOk;
    }

    if (cmd_pm->parsed()) {
      const bsa::EnsembleModel model = bsa::load_ensemble(pm_model);
      const bsa::VolumeF volume = bsa::load_volume(pm_in);
      const bsa::VolumeF map = bsa::pipeline::subject_age_map(model, volume, cfg);
      bsa::store_volume(map, pm_out);
      std::cout << "wrote age map " << pm_out << "\n";
      return kExitOk;
    }

    if (cmd_ft->parsed()) {
      const bsa::EnsembleModel model = bsa::load_ensemble(ft_model);
      const auto cohort = bsa::pipeline::load_cohort(ft_data);
      bsa::CorrectionModel correction;
      const bool corrected = !ft_corr.empty();
      if (corrected) correction = bsa::load_correction(ft_corr);
      std::vector<std::string> log;
      const auto rows = bsa::pipeline::build_features(model, cohort, cfg,
                                                      corrected ? &correction : nullptr, &log);
      bsa::write_features_csv(ft_out, rows);
      for (const auto& line : log) std::cerr << line << "\n";
      std::cout << "wrote features for " << rows.size() << " subjects to " << ft_out << "\n";
      return kExitOk;
    }

    if (cmd_fc->parsed()) {
      const auto rows = bsa::read_features_csv(fc_features);
      std::vector<const bsa::StructureFeatures*> healthy;
      for (const auto& r : rows)
        if (r.class_id == fc_class) healthy.push_back(&r);
      if (healthy.size() < 2)
        throw bsa::pipeline::MissingArtifact("need at least 2 subjects of class " + fc_class);
      const Eigen::Index s = static_cast<Eigen::Index>(healthy.front()->bsa.size());
      Eigen::MatrixXd X(static_cast<Eigen::Index>(healthy.size()), s);
      Eigen::VectorXd y(static_cast<Eigen::Index>(healthy.size()));
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        y[i] = healthy[i]->age;
        for (Eigen::Index j = 0; j < s; ++j) X(i, j) = healthy[i]->bsa[j];
      }
      const bsa::CorrectionModel model = bsa::fit_bias_correction(X, y, fc_intercept);
      bsa::save_correction(model, fc_out);
      std::cout << "fitted correction on " << healthy.size() << " " << fc_class
                << " subjects -> " << fc_out << "\n";
      return kExitOk;
    }

    if (cmd_tm->parsed()) {
      const auto rows = bsa::read_features_csv(tm_features);
      const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
      const Eigen::Index s = static_cast<Eigen::Index>(rows.front().bsa.size());
      Eigen::MatrixXd X(n, s);
      Eigen::VectorXd ages(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        ages[i] = rows[i].age;
        for (Eigen::Index j = 0; j < s; ++j) X(i, j) = rows[i].bsa[j];
      }
      bsa::MlpRecipe recipe;
      recipe.batch_size = cfg.mlp_batch;
      recipe.patience = cfg.mlp_patience;
      recipe.learning_rate = cfg.mlp_lr;
      recipe.max_epochs = cfg.mlp_max_epochs;
      bsa::Rng master(cfg.seed);
      bsa::Rng mlp_rng = master.child(3);
      const bsa::MlpEnsemble ensemble = bsa::train_mlp_cv(X, ages, cfg.mlp_folds, recipe, mlp_rng);
      bsa::save_mlp(ensemble, tm_out);
      bsa::pipeline::write_run_manifest(tm_out, cfg, "train-mlp",
                                        {{"subjects", std::to_string(rows.size())}});
      for (size_t f = 0; f < ensemble.folds.size(); ++f)
        std::cout << "fold " << f << ": best_val " << ensemble.folds[f].report.best_val_loss
                  << "y\n";
      return kExitOk;
    }

    if (cmd_pa->parsed()) {
      const bsa::MlpEnsemble ensemble = bsa::load_mlp(pa_model);
      const auto rows = bsa::read_features_csv(pa_features);
      std::vector<bsa::pipeline::PredictionRow> preds;
      for (const auto& r : rows) {
        Eigen::VectorXd x(static_cast<Eigen::Index>(r.bsa.size()));
        for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = r.bsa[j];
        bsa::pipeline::PredictionRow p;
        p.id = r.id;
        p.age = r.age;
        p.class_id = r.class_id;
        p.value = bsa::predict_age(ensemble, x);
        p.predicted_class = r.class_id;
        preds.push_back(std::move(p));
      }
      bsa::pipeline::write_predictions_csv(pa_out, preds, {});
      std::cout << "wrote age predictions for " << preds.size() << " subjects to " << pa_out
                << "\n";
      return kExitOk;
    }

    if (cmd_ts->parsed()) {
      const auto rows = bsa::read_features_csv(ts_features);
      const auto fs_kind = bsa::pipeline::feature_set_from_name(ts_set);
      const Eigen::MatrixXd X = ablation_matrix(rows, fs_kind, ts_pred);
      const auto classes = present_classes(rows);
      if (classes.size() < 2)
        throw bsa::pipeline::MissingArtifact("need at least 2 classes in " + ts_features);
      std::vector<int> labels;
      for (const auto& r : rows) {
        int idx = -1;
        for (size_t c = 0; c < classes.size(); ++c)
          if (classes[c] == r.class_id) idx = static_cast<int>(c);
        if (idx < 0) throw std::runtime_error("unknown class " + r.class_id);
        labels.push_back(idx);
      }

      bsa::Rng master(cfg.seed);
      bsa::Rng svm_rng = master.child(4);
      const auto gc = grid_config(cfg);
      const bsa::GridSearchResult grid =
          bsa::grid_search(X, labels, static_cast<int>(classes.size()), gc, svm_rng);
      for (const auto& w : grid.warnings) std::cerr << w << "\n";

      bsa::KernelSpec kernel;
      kernel.kind = grid.best_kernel;
      kernel.gamma = 1.0 / static_cast<double>(X.cols());
      const bsa::SvmModel model = bsa::ovo_train(X, labels, classes, kernel, grid.best_c);

      fs::create_directories(ts_out);
      bsa::save_svm(model, ts_out + "/svm.model");
      bsa::pipeline::write_cv_report(ts_out + "/cv_report.csv", grid);
      {
        std::ofstream meta(ts_out + "/meta.txt");
        meta << "feature_set " << bsa::pipeline::feature_set_name(fs_kind) << "\n";
        meta << "best_kernel " << bsa::kernel_name(grid.best_kernel) << "\n";
        meta.precision(17);
        meta << "best_c " << grid.best_c << "\n";
        meta << "cv_bacc " << grid.best_bacc << "\n";
      }
      bsa::pipeline::write_run_manifest(ts_out, cfg, "train-svm",
                                        {{"feature_set", bsa::pipeline::feature_set_name(fs_kind)},
                                         {"best_kernel", bsa::kernel_name(grid.best_kernel)}});
      std::cout << "best " << bsa::kernel_name(grid.best_kernel) << " C=" << grid.best_c
                << " cv_bacc=" << grid.best_bacc << " -> " << ts_out << "\n";
      return kExitOk;
    }

    if (cmd_cl->parsed()) {
      const bsa::SvmModel model = bsa::load_svm(cl_model + "/svm.model");
      std::string set_name = "bsage+vol";
      {
        std::ifstream meta(cl_model + "/meta.txt");
        if (!meta) throw bsa::pipeline::MissingArtifact("missing meta.txt in " + cl_model);
        std::string key;
        while (meta >> key)
          if (key == "feature_set") meta >> set_name;
      }
      const auto rows = bsa::read_features_csv(cl_features);
      const Eigen::MatrixXd X =
          ablation_matrix(rows, bsa::pipeline::feature_set_from_name(set_name), cl_pred);

      std::vector<bsa::pipeline::PredictionRow> preds;
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const bsa::OvoDecision d = bsa::ovo_classify(model, X.row(i).transpose());
        bsa::pipeline::PredictionRow p;
        p.id = rows[i].id;
        p.age = rows[i].age;
        p.class_id = rows[i].class_id;
        p.value = d.label;
        p.predicted_class = model.class_names[d.label];
        p.scores.assign(d.scores.data(), d.scores.data() + d.scores.size());
        preds.push_back(std::move(p));
      }
      bsa::pipeline::write_predictions_csv(cl_out, preds, model.class_names);
      std::cout << "classified " << preds.size() << " subjects -> " << cl_out << "\n";
      return kExitOk;
    }

    if (cmd_ev->parsed()) {
      const auto preds = bsa::pipeline::read_predictions_csv(ev_pred);
      if (preds.empty()) throw bsa::pipeline::MissingArtifact("no predictions in " + ev_pred);
      json report;
      if (ev_task == "regression") {
        std::vector<double> yhat, y;
        for (const auto& p : preds) {
          yhat.push_back(p.value);
          y.push_back(p.age);
        }
        const auto rep = bsa::regression_metrics(yhat, y);
        report["task"] = "regression";
        report["n"] = preds.size();
        report["mae"] = rep.mae;
        report["r2"] = rep.r2;
      } else if (ev_task == "classification") {
        std::vector<std::string> classes;
        for (const auto& cls : bsa::pipeline::canonical_classes())
          for (const auto& p : preds)
            if (p.class_id == cls || p.predicted_class == cls) {
              if (std::find(classes.begin(), classes.end(), cls) == classes.end())
                classes.push_back(cls);
              break;
            }
        auto index_of = [&](const std::string& cls) {
          for (size_t c = 0; c < classes.size(); ++c)
            if (classes[c] == cls) return static_cast<int>(c);
          throw std::runtime_error("unknown class " + cls);
        };
        std::vector<int> truth, labels;
        Eigen::MatrixXd scores(static_cast<Eigen::Index>(preds.size()),
                               static_cast<Eigen::Index>(classes.size()));
        scores.setZero();
        for (size_t i = 0; i < preds.size(); ++i) {
          truth.push_back(index_of(preds[i].class_id));
          labels.push_back(index_of(preds[i].predicted_class));
          for (size_t c = 0; c < preds[i].scores.size() && c < classes.size(); ++c)
            scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                preds[i].scores[c];
        }
        const auto rep = bsa::classification_metrics(labels, scores, truth,
                                                     static_cast<int>(classes.size()));
        report["task"] = "classification";
        report["n"] = preds.size();
        report["classes"] = classes;
        report["acc"] = rep.acc;
        report["bacc"] = rep.bacc;
        report["auc"] = rep.auc;
        std::vector<std::vector<int>> confusion;
        for (Eigen::Index r = 0; r < rep.confusion.rows(); ++r) {
          std::vector<int> row;
          for (Eigen::Index c = 0; c < rep.confusion.cols(); ++c)
            row.push_back(rep.confusion(r, c));
          confusion.push_back(std::move(row));
        }
        report["confusion"] = confusion;
        for (const auto& w : rep.warnings) std::cerr << w << "\n";
      } else {
        throw bsa::ConfigError("evaluate: task must be regression or classification");
      }
      const std::string text = report.dump(2);
      if (!ev_out.empty()) {
        std::ofstream os(ev_out);
        os << text << "\n";
      }
      std::cout << text << "\n";
      return kExitOk;
    }

    if (cmd_ps->parsed()) {
      const auto rows = bsa::read_features_csv(ps_features);
      const auto summary = bsa::pipeline::population_summary(rows);
      bsa::pipeline::write_population_summary(summary, ps_out);
      std::cout << "wrote population summary for " << summary.classes.size() << " classes to "
                << ps_out << "\n";
      return kExitOk;
    }

    if (cmd_xs->parsed()) {
      const bsa::LabelVolume labels = bsa::load_labels(xs_labels);
      std::vector<double> values(labels.num_structures, 0.0);
      if (!xs_values.empty()) {
        std::ifstream is(xs_values);
        if (!is) throw bsa::pipeline::MissingArtifact("missing values file: " + xs_values);
        std::string line;
        while (std::getline(is, line)) {
          if (line.empty() || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
          std::istringstream ss(line);
          std::string field;
          std::getline(ss, field, ',');
          const int structure = std::stoi(field);
          std::getline(ss, field, ',');
          if (structure < 1 || structure > labels.num_structures)
            throw std::runtime_error("structure index out of range in " + xs_values);
          values[structure - 1] = std::stod(field);
        }
      } else if (!xs_summary.empty()) {
        if (xs_class.empty()) throw bsa::ConfigError("--summary requires --class");
        std::ifstream is(xs_summary);
        if (!is) throw bsa::pipeline::MissingArtifact("missing summary file: " + xs_summary);
        std::string line;
        std::getline(is, line);  // header
        bool found = false;
        while (std::getline(is, line)) {
          std::istringstream ss(line);
          std::string field;
          std::getline(ss, field, ',');
          if (field != xs_class) continue;
          for (int skip = 0; skip < 3; ++skip) std::getline(ss, field, ',');
          for (int j = 0; j < labels.num_structures; ++j) {
            if (!std::getline(ss, field, ','))
              throw std::runtime_error("summary row too short for the label volume");
            values[j] = std::stod(field);
          }
          found = true;
          break;
        }
        if (!found)
          throw bsa::pipeline::MissingArtifact("class " + xs_class + " not in " + xs_summary);
      } else {
        throw bsa::ConfigError("export-slices needs --values or --summary/--class");
      }

      const int axis = xs_axis == "x" ? 0 : (xs_axis == "y" ? 1 : 2);
      const bsa::RgbImage image =
          bsa::render_structure_slice(labels, values, axis, xs_index, xs_range);
      bsa::write_ppm(image, xs_out);
      std::cout << "wrote slice " << xs_out << "\n";
      return kExitOk;
    }

    return kExitOk;
  } catch (const bsa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bsa::pipeline::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissing;
  } catch (const std::exception& e) {
    const std::string what = e.what();
    if (what.find("cannot open") != std::string::npos ||
        what.find("missing") != std::string::npos) {
      std::cerr << "missing artifact: " << what << "\n";
      return kExitMissing;
    }
    std::cerr << "error: " << what << "\n";
    return 1;
  }
}
