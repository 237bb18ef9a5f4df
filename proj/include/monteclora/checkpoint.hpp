#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "monteclora/errors.hpp"
#include "monteclora/layer.hpp"
#include "monteclora/tensor.hpp"

// Checkpoint archive: a self-describing text format with doubles written as
// hexadecimal floating point, so save/load round-trips bit-exactly.

namespace mclora {

struct CheckpointMeta {
  std::size_t components = 4;
  double sample_scale = 5e-3;
  double kl_weight = 1e-5;
  std::size_t dof = 0;
  MixtureMode mode = MixtureMode::standard;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor>> entries;  // flat key -> tensor map

  const Tensor& find(const std::string& key) const {
    for (const auto& [k, t] : entries)
      if (k == key) return t;
    throw IoError("checkpoint: missing key '" + key + "'");
  }
};

namespace detail {

inline std::string double_to_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double hex_to_double(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  out << "mclora-checkpoint 1\n";
  out << "meta components " << ckpt.meta.components << "\n";
  out << "meta sample_scale " << detail::double_to_hex(ckpt.meta.sample_scale) << "\n";
  out << "meta kl_weight " << detail::double_to_hex(ckpt.meta.kl_weight) << "\n";
  out << "meta dof " << ckpt.meta.dof << "\n";
  out << "meta mode " << to_string(ckpt.meta.mode) << "\n";
  for (const auto& [key, t] : ckpt.entries) {
    out << "tensor " << key;
    out << " dims " << t.shape().size();
    for (std::size_t d : t.shape()) out << " " << d;
    out << "\n";
    for (std::size_t i = 0; i < t.numel(); ++i) {
      out << detail::double_to_hex(t.values()[i]) << (i + 1 == t.numel() ? "\n" : " ");
    }
    if (t.numel() == 0) out << "\n";
  }
  if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "mclora-checkpoint" || version != 1) {
    throw IoError("checkpoint: '" + path + "' is not a version-1 archive");
  }
  Checkpoint ckpt;
  std::string tag;
  while (in >> tag) {
    if (tag == "meta") {
      std::string key;
      in >> key;
      if (key == "components") in >> ckpt.meta.components;
      else if (key == "dof") in >> ckpt.meta.dof;
      else if (key == "mode") {
        std::string m;
        in >> m;
        ckpt.meta.mode = mixture_mode_from_string(m);
      } else {
        std::string hex;
        in >> hex;
        double v = detail::hex_to_double(hex);
        if (key == "sample_scale") ckpt.meta.sample_scale = v;
        else if (key == "kl_weight") ckpt.meta.kl_weight = v;
        else throw IoError("checkpoint: unknown meta key '" + key + "'");
      }
    } else if (tag == "tensor") {
      std::string key, dims_tag;
      std::size_t ndims = 0;
      in >> key >> dims_tag >> ndims;
      if (dims_tag != "dims") throw IoError("checkpoint: malformed tensor header for '" + key + "'");
      Shape shape(ndims);
      for (std::size_t& d : shape) in >> d;
      std::vector<double> values(shape_numel(shape));
      for (double& v : values) {
        std::string hex;
        in >> hex;
        v = detail::hex_to_double(hex);
      }
      ckpt.entries.emplace_back(key, Tensor::from_data(std::move(shape), std::move(values)));
    } else {
      throw IoError("checkpoint: unexpected token '" + tag + "'");
    }
  }
  return ckpt;
}

}  // namespace mclora
