#include "bsa/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bsa {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(trim(item)));
  return out;
}

}  // namespace

std::vector<std::pair<std::string, double>> parse_class_mix(const std::string& mix) {
  if (mix == "uniform6")
    return {{"CN", 1.0}, {"A", 1.0}, {"B", 1.0}, {"C", 1.0}, {"D", 1.0}, {"E", 1.0}};
  std::vector<std::pair<std::string, double>> out;
  std::istringstream ss(mix);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("config: bad class mix entry: " + item);
    out.emplace_back(trim(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
  }
  if (out.empty()) throw ConfigError("config: empty class mix");
  return out;
}

PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config: bad section at line " + std::to_string(line_no));
      section = line.substr(1, line.size() - 2);
      if (section != "pipeline" && section != "phantom" && section != "tiling" &&
          section != "unet" && section != "mlp" && section != "svm")
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string path = section + "." + key;

    try {
      if (path == "pipeline.seed") cfg.seed = std::stoull(value);
      else if (path == "phantom.nx") cfg.phantom_nx = std::stoi(value);
      else if (path == "phantom.ny") cfg.phantom_ny = std::stoi(value);
      else if (path == "phantom.nz") cfg.phantom_nz = std::stoi(value);
      else if (path == "phantom.noise_sigma") cfg.noise_sigma = std::stod(value);
      else if (path == "phantom.voxel_volume") cfg.voxel_volume = std::stod(value);
      else if (path == "phantom.size_jitter") cfg.size_jitter = std::stod(value);
      else if (path == "phantom.cohort_n") cfg.cohort_n = std::stoi(value);
      else if (path == "phantom.age_lo") cfg.age_lo = std::stod(value);
      else if (path == "phantom.age_hi") cfg.age_hi = std::stod(value);
      else if (path == "phantom.class_mix") cfg.class_mix = value;
      else if (path == "tiling.k") cfg.k = std::stoi(value);
      else if (path == "tiling.patch_x") cfg.patch_dims[0] = std::stoi(value);
      else if (path == "tiling.patch_y") cfg.patch_dims[1] = std::stoi(value);
      else if (path == "tiling.patch_z") cfg.patch_dims[2] = std::stoi(value);
      else if (path == "tiling.downscale") cfg.downscale = parse_bool(value, path);
      else if (path == "unet.encoder_widths") cfg.encoder_widths = parse_int_list(value);
      else if (path == "unet.bottleneck") cfg.bottleneck = std::stoi(value);
      else if (path == "unet.batch") cfg.unet_batch = std::stoi(value);
      else if (path == "unet.patience") cfg.unet_patience = std::stoi(value);
      else if (path == "unet.lr") cfg.unet_lr = std::stod(value);
      else if (path == "unet.max_epochs") cfg.unet_max_epochs = std::stoi(value);
      else if (path == "unet.augment_shift") cfg.augment_shift = parse_bool(value, path);
      else if (path == "unet.augment_mixup") cfg.augment_mixup = parse_bool(value, path);
      else if (path == "unet.mixup_alpha") cfg.mixup_alpha = std::stod(value);
      else if (path == "mlp.folds") cfg.mlp_folds = std::stoi(value);
      else if (path == "mlp.batch") cfg.mlp_batch = std::stoi(value);
      else if (path == "mlp.patience") cfg.mlp_patience = std::stoi(value);
      else if (path == "mlp.lr") cfg.mlp_lr = std::stod(value);
      else if (path == "mlp.max_epochs") cfg.mlp_max_epochs = std::stoi(value);
      else if (path == "svm.kernels") cfg.svm_kernels = value;
      else if (path == "svm.grid") cfg.svm_grid = value;
      else if (path == "svm.folds") cfg.svm_folds = std::stoi(value);
      else throw ConfigError("config: unknown key " + path);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config: bad value for " + path + ": " + value);
    }
  }
  if (cfg.svm_grid != "reduced" && cfg.svm_grid != "full")
    throw ConfigError("config: svm.grid must be reduced or full");
  parse_class_mix(cfg.class_mix);
  return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string dump_config(const PipelineConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "[pipeline]\n";
  os << "seed = " << cfg.seed << "\n";
  os << "\n[phantom]\n";
  os << "nx = " << cfg.phantom_nx << "\n";
  os << "ny = " << cfg.phantom_ny << "\n";
  os << "nz = " << cfg.phantom_nz << "\n";
  os << "noise_sigma = " << cfg.noise_sigma << "\n";
  os << "voxel_volume = " << cfg.voxel_volume << "\n";
  os << "size_jitter = " << cfg.size_jitter << "\n";
  os << "cohort_n = " << cfg.cohort_n << "\n";
  os << "age_lo = " << cfg.age_lo << "\n";
  os << "age_hi = " << cfg.age_hi << "\n";
  os << "class_mix = " << cfg.class_mix << "\n";
  os << "\n[tiling]\n";
  os << "k = " << cfg.k << "\n";
  os << "patch_x = " << cfg.patch_dims[0] << "\n";
  os << "patch_y = " << cfg.patch_dims[1] << "\n";
  os << "patch_z = " << cfg.patch_dims[2] << "\n";
  os << "downscale = " << (cfg.downscale ? "true" : "false") << "\n";
  os << "\n[unet]\n";
  os << "encoder_widths = ";
  for (size_t i = 0; i < cfg.encoder_widths.size(); ++i)
    os << (i ? "," : "") << cfg.encoder_widths[i];
  os << "\n";
  os << "bottleneck = " << cfg.bottleneck << "\n";
  os << "batch = " << cfg.unet_batch << "\n";
  os << "patience = " << cfg.unet_patience << "\n";
  os << "lr = " << cfg.unet_lr << "\n";
  os << "max_epochs = " << cfg.unet_max_epochs << "\n";
  os << "augment_shift = " << (cfg.augment_shift ? "true" : "false") << "\n";
  os << "augment_mixup = " << (cfg.augment_mixup ? "true" : "false") << "\n";
  os << "mixup_alpha = " << cfg.mixup_alpha << "\n";
  os << "\n[mlp]\n";
  os << "folds = " << cfg.mlp_folds << "\n";
  os << "batch = " << cfg.mlp_batch << "\n";
  os << "patience = " << cfg.mlp_patience << "\n";
  os << "lr = " << cfg.mlp_lr << "\n";
  os << "max_epochs = " << cfg.mlp_max_epochs << "\n";
  os << "\n[svm]\n";
  os << "kernels = " << cfg.svm_kernels << "\n";
  os << "grid = " << cfg.svm_grid << "\n";
  os << "folds = " << cfg.svm_folds << "\n";
  return os.str();
}

uint64_t config_hash(const PipelineConfig& cfg) {
  const std::string text = dump_config(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bsa
