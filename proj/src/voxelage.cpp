#include "bsa/voxelage.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "bsa/model_io.hpp"

namespace bsa {

namespace {

Tensor<float> patch_to_tensor(const VolumeF& patch, double in_mean, double in_sigma) {
  Tensor<float> t({1, patch.nz, patch.ny, patch.nx});
  for (size_t i = 0; i < patch.data.size(); ++i)
    t.data[i] = static_cast<float>((static_cast<double>(patch.data[i]) - in_mean) / in_sigma);
  return t;
}

VolumeF tensor_to_patch(const Tensor<float>& t) {
  VolumeF patch(t.shape[3], t.shape[2], t.shape[1]);
  std::memcpy(patch.data.data(), t.data.data(), t.data.size() * sizeof(float));
  return patch;
}

}  // namespace

Network<float> build_unet(const UNetConfig& cfg, Rng& rng) {
  const int depth = cfg.depth();
  if (depth < 1) throw std::invalid_argument("build_unet: depth must be >= 1");
  if (cfg.bottleneck < 1) throw std::invalid_argument("build_unet: bottleneck width must be >= 1");
  const int div = 1 << depth;
  const char* axis_names[3] = {"x", "y", "z"};
  for (int axis = 0; axis < 3; ++axis)
    if (cfg.patch_dims[axis] % div != 0)
      throw std::invalid_argument(std::string("build_unet: patch dim ") + axis_names[axis] +
                                  " not divisible by 2^depth");

  Network<float> net;
  net.input_shape = {1, cfg.patch_dims[2], cfg.patch_dims[1], cfg.patch_dims[0]};

  std::vector<int> skip_layers(depth);
  int ch = 1;
  for (int level = 0; level < depth; ++level) {
    const int w = cfg.encoder_widths[level];
    net.add_conv3d(ch, w, 3, rng);
    net.add_relu();
    net.add_conv3d(w, w, 3, rng);
    net.add_relu();
    skip_layers[level] = static_cast<int>(net.layers.size()) - 1;
    net.add_maxpool2();
    ch = w;
  }

  net.add_conv3d(ch, cfg.bottleneck, 3, rng);
  net.add_relu();
  net.add_conv3d(cfg.bottleneck, cfg.bottleneck, 3, rng);
  net.add_relu();
  ch = cfg.bottleneck;

  for (int level = depth - 1; level >= 0; --level) {
    const int w = cfg.encoder_widths[level];
    net.add_upsample2();
    net.add_skip_concat(skip_layers[level]);
    net.add_conv3d(w + ch, w, 3, rng);
    net.add_relu();
    net.add_conv3d(w, w, 3, rng);
    net.add_relu();
    ch = w;
  }

  net.add_conv3d(ch, 1, 1, rng);
  return net;
}

std::vector<std::array<int, 3>> chain_order(int k) { return serpentine_order(k); }

namespace {

double validation_loss_years(const Network<float>& net, std::array<int, 3> origin,
                             std::array<int, 3> patch_dims,
                             const std::vector<const TrainSubject*>& val,
                             const Standardization& norm) {
  double acc = 0.0;
  for (const TrainSubject* s : val) {
    const Tensor<float> x = patch_to_tensor(extract_patch(s->volume, origin, patch_dims),
                                           norm.input_mean, norm.input_sigma);
    const Tensor<float> pred = forward(net, x);
    const float z = static_cast<float>((s->age - norm.target_mean) / norm.target_sigma);
    Tensor<float> target(pred.shape, z);
    acc += mae_loss(pred, target);
  }
  return acc / static_cast<double>(val.size()) * norm.target_sigma;
}

}  // namespace

Network<float> train_unit(std::array<int, 3> origin, Network<float> net,
                          const std::vector<const TrainSubject*>& train,
                          const std::vector<const TrainSubject*>& val,
                          const Standardization& norm, const TrainRecipe& recipe, Rng& rng,
                          TrainReport& report) {
  if (train.empty() || val.empty()) throw std::invalid_argument("train_unit: empty train or validation set");
  if (recipe.batch_size < 1 || recipe.patience < 1) throw std::invalid_argument("train_unit: bad recipe");

  const auto patch_dims =
      std::array<int, 3>{net.input_shape[3], net.input_shape[2], net.input_shape[1]};

  OptimizerState<float> opt = recipe.optimizer == OptKind::Adam
                                  ? OptimizerState<float>::adam(recipe.learning_rate)
                                  : OptimizerState<float>::sgd(recipe.learning_rate);
  opt.init_like(net);
  NetGrads<float> grads;
  grads.init_like(net);

  Network<float> best = net;
  double best_val = std::numeric_limits<double>::infinity();
  report = TrainReport{};
  report.init_param_hash = param_hash(net);

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= recipe.max_epochs; ++epoch) {
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, static_cast<int>(i))]);

    for (size_t start = 0; start < order.size(); start += recipe.batch_size) {
      const size_t stop = std::min(order.size(), start + recipe.batch_size);
      std::vector<Tensor<float>> xs, ys;
      xs.reserve(stop - start);
      ys.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) {
        const TrainSubject* s = train[order[i]];
        const VolumeF patch = recipe.augment.shift
                                  ? random_shift_patch(s->volume, origin, patch_dims, rng)
                                  : extract_patch(s->volume, origin, patch_dims);
        xs.push_back(patch_to_tensor(patch, norm.input_mean, norm.input_sigma));
        const float z = static_cast<float>((s->age - norm.target_mean) / norm.target_sigma);
        ys.emplace_back(std::vector<int>{1, patch_dims[2], patch_dims[1], patch_dims[0]}, z);
      }
      if (recipe.augment.mixup) mixup_batch(xs, ys, rng, recipe.augment.mixup_alpha);
      batch_gradients(net, xs, ys, grads);
      opt.step(net, grads);
    }

    const double val_loss = validation_loss_years(net, origin, patch_dims, val, norm);
    report.epochs_run = epoch;
    if (val_loss < best_val) {
      best_val = val_loss;
      best = net;
      report.best_epoch = epoch;
    } else if (epoch - report.best_epoch >= recipe.patience) {
      break;
    }
  }
  report.best_val_loss = best_val;
  report.final_param_hash = param_hash(best);
  return best;
}

EnsembleModel train_chain(const std::vector<TrainSubject>& subjects, const PatchLayout& layout,
                          const UNetConfig& cfg, const TrainRecipe& recipe, Rng& master_rng) {
  if (subjects.size() < 5) throw std::invalid_argument("train_chain: need at least 5 subjects");
  if (cfg.patch_dims != layout.patch_dims)
    throw std::invalid_argument("train_chain: config/layout patch dims mismatch");

  EnsembleModel model;
  model.layout = layout;
  model.config = cfg;

  double mean = 0.0;
  for (const auto& s : subjects) mean += s.age;
  mean /= static_cast<double>(subjects.size());
  double var = 0.0;
  for (const auto& s : subjects) var += (s.age - mean) * (s.age - mean);
  var /= static_cast<double>(subjects.size());
  model.target_mean = mean;
  model.target_sigma = var > 1e-18 ? std::sqrt(var) : 1.0;

  double in_sum = 0.0, in_sq = 0.0;
  size_t in_n = 0;
  for (const auto& s : subjects) {
    for (float v : s.volume.data) {
      in_sum += v;
      in_sq += static_cast<double>(v) * v;
      ++in_n;
    }
  }
  model.input_mean = in_sum / static_cast<double>(in_n);
  const double in_var = in_sq / static_cast<double>(in_n) - model.input_mean * model.input_mean;
  model.input_sigma = in_var > 1e-18 ? std::sqrt(in_var) : 1.0;

  const size_t n_train =
      static_cast<size_t>(std::floor(recipe.train_fraction * static_cast<double>(subjects.size())));
  if (n_train < 1 || n_train >= subjects.size())
    throw std::invalid_argument("train_chain: train fraction leaves an empty split");

  Rng init_rng = master_rng.child(1);
  const auto order = chain_order(layout.k);
  std::vector<size_t> shuffled(subjects.size());

  for (size_t u = 0; u < order.size(); ++u) {
    // re-gather and re-split: the 80/20 split is redrawn before each unit
    for (size_t i = 0; i < shuffled.size(); ++i) shuffled[i] = i;
    for (size_t i = shuffled.size() - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[master_rng.uniform_int(0, static_cast<int>(i))]);
    std::vector<const TrainSubject*> train, val;
    for (size_t i = 0; i < shuffled.size(); ++i)
      (i < n_train ? train : val).push_back(&subjects[shuffled[i]]);

    Network<float> net = (u == 0) ? build_unet(cfg, init_rng) : model.units.back();
    Rng unit_rng = master_rng.child(100 + u);

    TrainReport report;
    report.seed = 100 + u;
    const auto origin = layout.origin_of(order[u]);
    const Standardization norm{model.input_mean, model.input_sigma, model.target_mean,
                               model.target_sigma};
    model.units.push_back(
        train_unit(origin, std::move(net), train, val, norm, recipe, unit_rng, report));
    model.reports.push_back(report);
  }
  return model;
}

VolumeF predict_age_map(const EnsembleModel& model, const VolumeF& working_volume,
                        std::array<int, 3> native_dims) {
  if (working_volume.dims() != model.layout.volume_dims)
    throw std::invalid_argument("predict_age_map: volume does not match layout dims");
  if (model.units.size() != static_cast<size_t>(model.layout.num_patches()))
    throw std::invalid_argument("predict_age_map: unit count does not match layout");

  const auto positions = model.layout.positions();
  std::vector<VolumeF> predictions;
  predictions.reserve(positions.size());
  for (size_t u = 0; u < positions.size(); ++u) {
    const auto origin = model.layout.origin_of(positions[u]);
    const Tensor<float> x =
        patch_to_tensor(extract_patch(working_volume, origin, model.layout.patch_dims),
                        model.input_mean, model.input_sigma);
    Tensor<float> out = forward(model.units[u], x);
    for (auto& v : out.data)
      v = static_cast<float>(model.target_mean + model.target_sigma * static_cast<double>(v));
    predictions.push_back(tensor_to_patch(out));
  }
  const VolumeF working_map = reconstruct_average(predictions, model.layout);
  return upsample_trilinear(working_map, native_dims);
}

void save_ensemble(const EnsembleModel& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir + "/ensemble.txt");
  if (!os) throw std::runtime_error("save_ensemble: cannot open manifest in " + dir);
  os.precision(17);
  os << "ENSEMBLE1\n";
  os << "k " << model.layout.k << '\n';
  os << "volume_dims " << model.layout.volume_dims[0] << ' ' << model.layout.volume_dims[1] << ' '
     << model.layout.volume_dims[2] << '\n';
  os << "patch_dims " << model.layout.patch_dims[0] << ' ' << model.layout.patch_dims[1] << ' '
     << model.layout.patch_dims[2] << '\n';
  os << "encoder_widths";
  for (int w : model.config.encoder_widths) os << ' ' << w;
  os << '\n';
  os << "bottleneck " << model.config.bottleneck << '\n';
  os << "target_mean " << model.target_mean << '\n';
  os << "target_sigma " << model.target_sigma << '\n';
  os << "input_mean " << model.input_mean << '\n';
  os << "input_sigma " << model.input_sigma << '\n';
  os << "master_seed " << model.master_seed << '\n';
  os << "units " << model.units.size() << '\n';
  for (size_t u = 0; u < model.units.size(); ++u) {
    const auto& r = model.reports[u];
    os << "unit " << u << " epochs " << r.epochs_run << " best_epoch " << r.best_epoch
       << " best_val " << r.best_val_loss << " seed " << r.seed << " init_hash "
       << r.init_param_hash << " final_hash " << r.final_param_hash << '\n';
  }
  for (size_t u = 0; u < model.units.size(); ++u) {
    std::ostringstream name;
    name << dir << "/unit_" << u << ".nnet";
    save_network(model.units[u], name.str());
  }
}

EnsembleModel load_ensemble(const std::string& dir) {
  std::ifstream is(dir + "/ensemble.txt");
  if (!is) throw std::runtime_error("load_ensemble: cannot open manifest in " + dir);
  std::string line, tag;
  if (!std::getline(is, line) || line != "ENSEMBLE1")
    throw std::runtime_error("load_ensemble: bad manifest magic");

  EnsembleModel model;
  int k = 0;
  std::array<int, 3> volume_dims{}, patch_dims{};
  size_t n_units = 0;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    ss >> tag;
    if (tag == "k") ss >> k;
    else if (tag == "volume_dims") ss >> volume_dims[0] >> volume_dims[1] >> volume_dims[2];
    else if (tag == "patch_dims") ss >> patch_dims[0] >> patch_dims[1] >> patch_dims[2];
    else if (tag == "encoder_widths") {
      model.config.encoder_widths.clear();
      int w;
      while (ss >> w) model.config.encoder_widths.push_back(w);
    } else if (tag == "bottleneck") ss >> model.config.bottleneck;
    else if (tag == "target_mean") ss >> model.target_mean;
    else if (tag == "target_sigma") ss >> model.target_sigma;
    else if (tag == "input_mean") ss >> model.input_mean;
    else if (tag == "input_sigma") ss >> model.input_sigma;
    else if (tag == "master_seed") ss >> model.master_seed;
    else if (tag == "units") ss >> n_units;
    else if (tag == "unit") {
      size_t u;
      TrainReport r;
      std::string key;
      ss >> u;
      while (ss >> key) {
        if (key == "epochs") ss >> r.epochs_run;
        else if (key == "best_epoch") ss >> r.best_epoch;
        else if (key == "best_val") ss >> r.best_val_loss;
        else if (key == "seed") ss >> r.seed;
        else if (key == "init_hash") ss >> r.init_param_hash;
        else if (key == "final_hash") ss >> r.final_param_hash;
      }
      model.reports.push_back(r);
    } else {
      throw std::runtime_error("load_ensemble: unknown manifest key " + tag);
    }
  }
  model.layout = PatchLayout::make(volume_dims, patch_dims, k);
  model.config.patch_dims = patch_dims;
  for (size_t u = 0; u < n_units; ++u) {
    std::ostringstream name;
    name << dir << "/unit_" << u << ".nnet";
    model.units.push_back(load_network(name.str()));
  }
  if (model.reports.size() != n_units) throw std::runtime_error("load_ensemble: report count mismatch");
  return model;
}

}  // namespace bsa
