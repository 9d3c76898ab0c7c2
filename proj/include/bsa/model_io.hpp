#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "bsa/nnkit.hpp"

namespace bsa {

// .nnet format: text manifest (layer list and shapes), then a "params N"
// line, then N raw little-endian float32 scalars in layer order (weight
// before bias). Round trips bit-exactly.

inline void save_network(const Network<float>& net, std::ostream& os) {
  os << "NNET1\n";
  os << "input";
  for (int d : net.input_shape) os << ' ' << d;
  os << '\n';
  os << "layers " << net.layers.size() << '\n';
  for (const auto& l : net.layers) {
    os << "layer " << layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::Conv3d:
        os << " in " << l.in_ch << " out " << l.out_ch << " k " << l.ksize;
        break;
      case LayerKind::Dense:
        os << " in " << l.in_features << " out " << l.out_features;
        break;
      case LayerKind::SkipConcat:
        os << " from " << l.skip_from;
        break;
      default:
        break;
    }
    os << '\n';
  }
  os << "params " << net.param_count() << '\n';
  for (const auto& l : net.layers) {
    if (!l.weight.data.empty())
      os.write(reinterpret_cast<const char*>(l.weight.data.data()),
               static_cast<std::streamsize>(l.weight.data.size() * sizeof(float)));
    if (!l.bias.data.empty())
      os.write(reinterpret_cast<const char*>(l.bias.data.data()),
               static_cast<std::streamsize>(l.bias.data.size() * sizeof(float)));
  }
}

inline void save_network(const Network<float>& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_network: cannot open " + path);
  save_network(net, os);
  if (!os) throw std::runtime_error("save_network: write failed for " + path);
}

inline Network<float> load_network(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "NNET1") throw std::runtime_error("load_network: bad magic");

  Network<float> net;
  if (!std::getline(is, line)) throw std::runtime_error("load_network: truncated manifest");
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != "input") throw std::runtime_error("load_network: expected input line");
    int d;
    while (ss >> d) net.input_shape.push_back(d);
  }

  size_t n_layers = 0;
  if (!std::getline(is, line)) throw std::runtime_error("load_network: truncated manifest");
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag >> n_layers;
    if (tag != "layers") throw std::runtime_error("load_network: expected layers line");
  }

  Rng dummy(0);  // weights are overwritten by the payload below
  for (size_t i = 0; i < n_layers; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("load_network: truncated layer list");
    std::istringstream ss(line);
    std::string tag, kind, key;
    ss >> tag >> kind;
    if (tag != "layer") throw std::runtime_error("load_network: expected layer line");
    if (kind == "conv3d") {
      int in = 0, out = 0, k = 0;
      while (ss >> key) {
        if (key == "in") ss >> in;
        else if (key == "out") ss >> out;
        else if (key == "k") ss >> k;
      }
      net.add_conv3d(in, out, k, dummy);
    } else if (kind == "dense") {
      int in = 0, out = 0;
      while (ss >> key) {
        if (key == "in") ss >> in;
        else if (key == "out") ss >> out;
      }
      net.add_dense(in, out, dummy);
    } else if (kind == "relu") {
      net.add_relu();
    } else if (kind == "maxpool2") {
      net.add_maxpool2();
    } else if (kind == "upsample2") {
      net.add_upsample2();
    } else if (kind == "skipconcat") {
      int from = -1;
      while (ss >> key)
        if (key == "from") ss >> from;
      net.add_skip_concat(from);
    } else {
      throw std::runtime_error("load_network: unknown layer kind " + kind);
    }
  }

  size_t n_params = 0;
  if (!std::getline(is, line)) throw std::runtime_error("load_network: truncated manifest");
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag >> n_params;
    if (tag != "params") throw std::runtime_error("load_network: expected params line");
  }
  if (n_params != net.param_count()) throw std::runtime_error("load_network: parameter count mismatch");

  for (auto& l : net.layers) {
    auto read_tensor = [&](Tensor<float>& t) {
      if (t.data.empty()) return;
      is.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
      if (static_cast<size_t>(is.gcount()) != t.data.size() * sizeof(float))
        throw std::runtime_error("load_network: truncated payload");
    };
    read_tensor(l.weight);
    read_tensor(l.bias);
  }
  return net;
}

inline Network<float> load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_network: cannot open " + path);
  return load_network(is);
}

}  // namespace bsa
