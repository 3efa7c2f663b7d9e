#include <fstream>
#include <json.hpp>

#include "nner/model.hpp"

namespace nner {

namespace {

constexpr char kMagic[8] = {'N', 'N', 'E', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

using json = nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"encoder_dim", c.encoder_dim},
              {"hidden", c.hidden},
              {"feat", c.feat},
              {"heads", c.heads},
              {"len_embed_dim", c.len_embed_dim},
              {"max_offset", c.max_offset},
              {"cnn_blocks", c.cnn_blocks},
              {"kernel", c.kernel},
              {"num_types", c.types},
              {"vocab", c.vocab},
              {"mixer_layers", c.mixer_layers},
              {"leaky_slope", c.leaky_slope},
              {"ln_eps", c.ln_eps}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.encoder_dim = j.at("encoder_dim").get<int64_t>();
  c.hidden = j.at("hidden").get<int64_t>();
  c.feat = j.at("feat").get<int64_t>();
  c.heads = j.at("heads").get<int64_t>();
  c.len_embed_dim = j.at("len_embed_dim").get<int64_t>();
  c.max_offset = j.at("max_offset").get<int64_t>();
  c.cnn_blocks = j.at("cnn_blocks").get<int64_t>();
  c.kernel = j.at("kernel").get<int64_t>();
  c.types = j.at("num_types").get<int64_t>();
  c.vocab = j.at("vocab").get<int64_t>();
  c.mixer_layers = j.at("mixer_layers").get<int64_t>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.ln_eps = j.at("ln_eps").get<double>();
  return c;
}

template <class T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(str("truncated checkpoint: ", path));
  return v;
}

template <class Real>
void write_tensor(std::ofstream& out, const std::string& name, const Tensor<Real>& t) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<uint8_t>(out, sizeof(Real) == 4 ? 0 : 1);
  write_pod<uint32_t>(out, static_cast<uint32_t>(t.rank()));
  for (int64_t i = 0; i < t.rank(); ++i) write_pod<uint64_t>(out, static_cast<uint64_t>(t.dim(i)));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(Real)));
}

template <class Real>
std::pair<std::string, Tensor<Real>> read_tensor(std::ifstream& in, const std::string& path) {
  const auto name_len = read_pod<uint32_t>(in, path);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  if (!in) throw IoError(str("truncated checkpoint: ", path));
  const auto dtype = read_pod<uint8_t>(in, path);
  const uint8_t want = sizeof(Real) == 4 ? 0 : 1;
  if (dtype != want) {
    throw VersionError(str("checkpoint tensor ", name, " has dtype ",
                           dtype == 0 ? "f32" : "f64", ", expected ",
                           want == 0 ? "f32" : "f64"));
  }
  const auto rank = read_pod<uint32_t>(in, path);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<int64_t>(read_pod<uint64_t>(in, path));
  Tensor<Real> t = Tensor<Real>::zeros(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(Real)));
  if (!in) throw IoError(str("truncated checkpoint: ", path));
  return {std::move(name), std::move(t)};
}

}  // namespace

template <class Real>
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const Params<Real>& params,
                     const std::map<std::string, Tensor<Real>>& extras) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(str("cannot open for writing: ", path));

  json j{{"config", config_to_json(meta.config)},
         {"vocab", meta.vocab},
         {"types", meta.type_names},
         {"dtype", sizeof(Real) == 4 ? "f32" : "f64"},
         {"progress", {{"epoch", meta.epoch}, {"step", meta.step},
                       {"best_dev_f1", meta.best_dev_f1}}}};
  const std::string meta_bytes = j.dump();

  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint64_t>(out, meta_bytes.size());
  out.write(meta_bytes.data(), static_cast<std::streamsize>(meta_bytes.size()));

  uint64_t count = static_cast<uint64_t>(extras.size());
  params.for_each([&](const std::string&, const Tensor<Real>&) { ++count; });
  write_pod<uint64_t>(out, count);
  params.for_each(
      [&](const std::string& name, const Tensor<Real>& t) { write_tensor(out, name, t); });
  for (const auto& [name, t] : extras) write_tensor(out, name, t);
  if (!out) throw IoError(str("write failed: ", path));
}

template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(str("cannot open: ", path));

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw VersionError(str("not a model checkpoint: ", path));
  }
  const auto version = read_pod<uint32_t>(in, path);
  if (version != kVersion) {
    throw VersionError(str("checkpoint format version ", version, " unsupported (want ",
                           kVersion, "): ", path));
  }
  const auto meta_len = read_pod<uint64_t>(in, path);
  std::string meta_bytes(meta_len, '\0');
  in.read(meta_bytes.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw IoError(str("truncated checkpoint: ", path));

  json j;
  try {
    j = json::parse(meta_bytes);
  } catch (const json::exception& e) {
    throw VersionError(str("corrupt checkpoint header: ", e.what()));
  }

  Checkpoint<Real> ck;
  ck.meta.config = config_from_json(j.at("config"));
  ck.meta.vocab = j.at("vocab").get<std::vector<std::string>>();
  ck.meta.type_names = j.at("types").get<std::vector<std::string>>();
  ck.meta.dtype = j.at("dtype").get<std::string>();
  const std::string want = sizeof(Real) == 4 ? "f32" : "f64";
  if (ck.meta.dtype != want) {
    throw VersionError(str("checkpoint precision ", ck.meta.dtype, " does not match ", want));
  }
  const auto& prog = j.at("progress");
  ck.meta.epoch = prog.at("epoch").get<int64_t>();
  ck.meta.step = prog.at("step").get<int64_t>();
  ck.meta.best_dev_f1 = prog.at("best_dev_f1").get<double>();

  ck.params = make_params<Real>(ck.meta.config);
  std::map<std::string, Tensor<Real>> by_name;
  ck.params.for_each(
      [&](const std::string& name, const Tensor<Real>& t) { by_name.emplace(name, t); });

  const auto count = read_pod<uint64_t>(in, path);
  size_t params_seen = 0;
  for (uint64_t i = 0; i < count; ++i) {
    auto [name, t] = read_tensor<Real>(in, path);
    auto it = by_name.find(name);
    if (it != by_name.end()) {
      if (it->second.shape() != t.shape()) {
        throw VersionError(str("checkpoint tensor ", name, " has shape ", shape_str(t.shape()),
                               " but the config implies ", shape_str(it->second.shape())));
      }
      it->second.values() = t.values();
      ++params_seen;
    } else {
      ck.extras.emplace(std::move(name), std::move(t));
    }
  }
  if (params_seen != by_name.size()) {
    throw VersionError(str("checkpoint is missing ", by_name.size() - params_seen,
                           " parameter tensors: ", path));
  }
  return ck;
}

std::string checkpoint_dtype(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(str("cannot open: ", path));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw VersionError(str("not a model checkpoint: ", path));
  }
  const auto version = read_pod<uint32_t>(in, path);
  if (version != kVersion) {
    throw VersionError(str("checkpoint format version ", version, " unsupported: ", path));
  }
  const auto meta_len = read_pod<uint64_t>(in, path);
  std::string meta_bytes(meta_len, '\0');
  in.read(meta_bytes.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw IoError(str("truncated checkpoint: ", path));
  try {
    return json::parse(meta_bytes).at("dtype").get<std::string>();
  } catch (const json::exception& e) {
    throw VersionError(str("corrupt checkpoint header: ", e.what()));
  }
}

template void save_checkpoint<float>(const std::string&, const CheckpointMeta&,
                                     const Params<float>&,
                                     const std::map<std::string, Tensor<float>>&);
template void save_checkpoint<double>(const std::string&, const CheckpointMeta&,
                                      const Params<double>&,
                                      const std::map<std::string, Tensor<double>>&);
template Checkpoint<float> load_checkpoint<float>(const std::string&);
template Checkpoint<double> load_checkpoint<double>(const std::string&);

}  // namespace nner
