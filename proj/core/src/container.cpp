#include "diffinv/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "diffinv/error.hpp"
#include "diffinv/grid_ops.hpp"

static_assert(std::endian::native == std::endian::little, "container payloads are little-endian");

namespace diffinv {

namespace {

constexpr char kMagic[4] = {'D', 'I', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

long array_size(const ContainerArray& a) {
  long n = 1;
  for (long s : a.shape) n *= s;
  return n;
}

}  // namespace

const ContainerArray& Container::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw IoError("container: missing array '" + name + "'");
}

void write_container(const std::string& path, const Container& c) {
  nlohmann::json header;
  header["kind"] = c.kind;
  header["meta"] = c.meta.is_null() ? nlohmann::json::object() : c.meta;
  header["arrays"] = nlohmann::json::array();
  for (const auto& a : c.arrays) {
    if (array_size(a) != static_cast<long>(a.data.size()))
      throw ShapeError("container: array '" + a.name + "' shape/data mismatch");
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
  }
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("container: cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  const std::uint32_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& a : c.arrays)
    f.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  if (!f) throw IoError("container: write failed for '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("container: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) throw IoError("container: bad magic in '" + path + "'");
  std::uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != kVersion) throw IoError("container: unsupported version in '" + path + "'");
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw IoError("container: truncated header in '" + path + "'");
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded()) throw IoError("container: malformed header in '" + path + "'");

  Container c;
  c.kind = header.value("kind", "");
  c.meta = header.value("meta", nlohmann::json::object());
  for (const auto& a : header.value("arrays", nlohmann::json::array())) {
    ContainerArray arr;
    arr.name = a.at("name").get<std::string>();
    arr.shape = a.at("shape").get<std::vector<long>>();
    arr.data.resize(static_cast<std::size_t>(array_size(arr)));
    f.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
    if (!f) throw IoError("container: truncated payload in '" + path + "'");
    c.arrays.push_back(std::move(arr));
  }
  return c;
}

void save_sample_set(const std::string& path, const SampleSet& set, nlohmann::json extra_meta) {
  Container c;
  c.kind = "samples";
  c.meta = extra_meta.is_null() ? nlohmann::json::object() : extra_meta;
  c.meta["grid"] = {{"nx", set.grid.nx}, {"ny", set.grid.ny}};
  c.meta["seed"] = set.seed;
  c.meta["config_hash"] = set.config_hash;
  ContainerArray arr;
  arr.name = "fields";
  arr.shape = {static_cast<long>(set.fields.size()), set.grid.size()};
  arr.data.reserve(set.fields.size() * static_cast<std::size_t>(set.grid.size()));
  for (const auto& f : set.fields) {
    if (static_cast<int>(f.size()) != set.grid.size()) throw ShapeError("save_sample_set: field size mismatch");
    arr.data.insert(arr.data.end(), f.begin(), f.end());
  }
  c.arrays.push_back(std::move(arr));
  write_container(path, c);
}

SampleSet load_sample_set(const std::string& path) {
  Container c = read_container(path);
  if (c.kind != "samples") throw IoError("load_sample_set: '" + path + "' is not a sample set");
  SampleSet set;
  set.grid = GridShape{c.meta.at("grid").at("nx").get<int>(), c.meta.at("grid").at("ny").get<int>()};
  set.seed = c.meta.value("seed", std::uint64_t{0});
  set.config_hash = c.meta.value("config_hash", "");
  const auto& arr = c.array("fields");
  if (arr.shape.size() != 2 || arr.shape[1] != set.grid.size())
    throw IoError("load_sample_set: bad field shape in '" + path + "'");
  const long n = arr.shape[0];
  set.fields.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    set.fields[static_cast<std::size_t>(i)].assign(arr.data.begin() + i * set.grid.size(),
                                                   arr.data.begin() + (i + 1) * set.grid.size());
  return set;
}

nlohmann::json sde_spec_to_json(const SdeSpec& spec) {
  switch (spec.kind) {
    case SdeKind::VeGeometric:
      return {{"family", "ve-geometric"}, {"sigma_hat", spec.sigma_hat}, {"T", spec.terminal_time}};
    case SdeKind::VpLinear:
      return {{"family", "vp-linear"}, {"beta_slope", spec.beta_slope}, {"T", spec.terminal_time}};
    case SdeKind::VeGeneral:
      break;
  }
  throw ConfigError("sde_spec_to_json: VE-general specs are not serializable");
}

SdeSpec sde_spec_from_json(const nlohmann::json& j) {
  const std::string family = j.at("family").get<std::string>();
  const double T = j.value("T", 1.0);
  if (family == "ve-geometric") return SdeSpec::ve_geometric(j.value("sigma_hat", 25.0), T);
  if (family == "vp-linear") return SdeSpec::vp_linear(j.value("beta_slope", 32.0), T);
  throw ConfigError("sde_spec_from_json: unknown family '" + family + "'");
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& s) {
  switch (s.kind) {
    case LayerSpec::Kind::PixelBias:
      return {{"type", "pixel_bias"}};
    case LayerSpec::Kind::Conv2D:
      return {{"type", "conv2d"}, {"in_ch", s.in_ch}, {"out_ch", s.out_ch}, {"ksize", s.ksize}};
    case LayerSpec::Kind::Dense:
      return {{"type", "dense"}, {"in", s.in_dim}, {"out", s.out_dim}};
    case LayerSpec::Kind::Activation:
      return {{"type", "activation"},
              {"act", s.act == Act::SiLU ? "silu" : (s.act == Act::ReLU ? "relu" : "softplus")}};
    case LayerSpec::Kind::TimeEmbedAdd:
      return {{"type", "time_embed"}, {"channels", s.channels}, {"freqs", s.freqs}};
  }
  throw ConfigError("layer_to_json: unknown layer kind");
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "pixel_bias") return LayerSpec::pixel_bias();
  if (type == "conv2d") return LayerSpec::conv2d(j.at("in_ch"), j.at("out_ch"), j.at("ksize"));
  if (type == "dense") return LayerSpec::dense(j.at("in"), j.at("out"));
  if (type == "activation") {
    const std::string a = j.at("act").get<std::string>();
    return LayerSpec::activation(a == "silu" ? Act::SiLU : (a == "relu" ? Act::ReLU : Act::Softplus));
  }
  if (type == "time_embed") return LayerSpec::time_embed(j.at("channels"), j.at("freqs"));
  throw ConfigError("layer_from_json: unknown layer type '" + type + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net, nlohmann::json meta, const AdamState* adam) {
  Container c;
  c.kind = "checkpoint";
  c.meta = meta.is_null() ? nlohmann::json::object() : meta;
  c.meta["input_shape"] = {net.input_shape().ch, net.input_shape().h, net.input_shape().w};
  c.meta["layers"] = nlohmann::json::array();
  for (const auto& s : net.specs()) c.meta["layers"].push_back(layer_to_json(s));
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    ContainerArray arr;
    arr.name = "w" + std::to_string(l);
    arr.shape = {static_cast<long>(net.weights()[l].size())};
    arr.data = net.weights()[l];
    c.arrays.push_back(std::move(arr));
  }
  if (adam) {
    c.meta["adam"] = {{"step", adam->step}};
    for (std::size_t l = 0; l < adam->m.size(); ++l) {
      c.arrays.push_back({"am" + std::to_string(l), {static_cast<long>(adam->m[l].size())}, adam->m[l]});
      c.arrays.push_back({"av" + std::to_string(l), {static_cast<long>(adam->v[l].size())}, adam->v[l]});
    }
  }
  write_container(path, c);
}

Checkpoint load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (c.kind != "checkpoint") throw IoError("load_checkpoint: '" + path + "' is not a checkpoint");
  const auto shape = c.meta.at("input_shape").get<std::vector<int>>();
  std::vector<LayerSpec> specs;
  for (const auto& l : c.meta.at("layers")) specs.push_back(layer_from_json(l));
  Checkpoint ck{Network(TensorShape{shape.at(0), shape.at(1), shape.at(2)}, std::move(specs)), c.meta, {}};
  for (std::size_t l = 0; l < ck.net.weights().size(); ++l) {
    const auto& arr = c.array("w" + std::to_string(l));
    if (arr.data.size() != ck.net.weights()[l].size()) throw IoError("load_checkpoint: weight size mismatch");
    ck.net.weights()[l] = arr.data;
  }
  if (c.meta.contains("adam")) {
    AdamState adam(ck.net);
    adam.step = c.meta.at("adam").at("step").get<long>();
    for (std::size_t l = 0; l < adam.m.size(); ++l) {
      adam.m[l] = c.array("am" + std::to_string(l)).data;
      adam.v[l] = c.array("av" + std::to_string(l)).data;
    }
    ck.adam = std::move(adam);
  }
  return ck;
}

void save_score_model(const std::string& path, const ScoreModel& model, nlohmann::json extra_meta,
                      const AdamState* adam) {
  if (model.variant() != ScoreModel::Variant::Learned)
    throw ConfigError("save_score_model: only learned models are persisted");
  nlohmann::json meta = extra_meta.is_null() ? nlohmann::json::object() : extra_meta;
  meta["model"] = "score";
  meta["sde"] = sde_spec_to_json(model.trained_spec());
  meta["normalization"] = {{"lo", model.normalization().lo}, {"scale", model.normalization().scale}};
  meta["t_floor"] = model.t_floor();
  save_checkpoint(path, model.net(), meta, adam);
}

ScoreModel load_score_model(const std::string& path, nlohmann::json* meta_out, std::optional<AdamState>* adam_out) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("model", "") != "score") throw IoError("load_score_model: '" + path + "' is not a score model");
  const SdeSpec spec = sde_spec_from_json(ck.meta.at("sde"));
  const Normalization norm{ck.meta.at("normalization").at("lo").get<double>(),
                           ck.meta.at("normalization").at("scale").get<double>()};
  const double t_floor = ck.meta.value("t_floor", 1e-3);
  if (meta_out) *meta_out = ck.meta;
  if (adam_out) *adam_out = std::move(ck.adam);
  return ScoreModel::learned(std::move(ck.net), spec, norm, t_floor);
}

void save_surrogate(const std::string& path, const ForwardModel& model, nlohmann::json extra_meta) {
  if (model.kind() != ForwardModel::Kind::Surrogate)
    throw ConfigError("save_surrogate: only surrogate forward models are persisted");
  const GridOperators& ops = model.ops();
  nlohmann::json meta = extra_meta.is_null() ? nlohmann::json::object() : extra_meta;
  meta["model"] = "surrogate";
  meta["grid"] = {{"nx", ops.grid.nx}, {"ny", ops.grid.ny}, {"h", ops.h}, {"state_channels", ops.state_channels}};
  std::vector<double> traction(static_cast<std::size_t>(ops.state_channels));
  // recover the traction magnitude from an interior bottom-edge load entry
  const int node = (ops.grid.ny - 1) * ops.grid.nx + 1;
  for (int c = 0; c < ops.state_channels; ++c)
    traction[static_cast<std::size_t>(c)] = -ops.f_vec[static_cast<std::size_t>(c) * ops.grid.size() + node] / ops.h;
  meta["traction"] = traction;
  meta["normalization"] = {{"lo", model.input_normalization().lo}, {"scale", model.input_normalization().scale}};
  meta["obs_nodes"] = model.obs_nodes();
  save_checkpoint(path, model.net(), meta);
}

ForwardModel load_surrogate(const std::string& path, nlohmann::json* meta_out) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("model", "") != "surrogate") throw IoError("load_surrogate: '" + path + "' is not a surrogate");
  const auto& g = ck.meta.at("grid");
  const auto traction = ck.meta.at("traction").get<std::vector<double>>();
  GridOperators ops = assemble_operators(g.at("nx").get<int>(), g.at("ny").get<int>(), g.at("h").get<double>(),
                                         g.at("state_channels").get<int>(), traction);
  const Normalization norm{ck.meta.at("normalization").at("lo").get<double>(),
                           ck.meta.at("normalization").at("scale").get<double>()};
  auto obs_nodes = ck.meta.at("obs_nodes").get<std::vector<int>>();
  if (meta_out) *meta_out = ck.meta;
  return ForwardModel::surrogate(std::move(ck.net), std::move(ops), std::move(obs_nodes), norm);
}

void save_dataset(const std::string& path, const PairedSet& set, GridShape grid, int state_channels,
                  nlohmann::json extra_meta) {
  if (set.mu.size() != set.u.size()) throw ShapeError("save_dataset: paired set sizes differ");
  Container c;
  c.kind = "dataset";
  c.meta = extra_meta.is_null() ? nlohmann::json::object() : extra_meta;
  c.meta["grid"] = {{"nx", grid.nx}, {"ny", grid.ny}};
  c.meta["state_channels"] = state_channels;
  ContainerArray mu{"mu", {static_cast<long>(set.mu.size()), grid.size()}, {}};
  ContainerArray u{"u", {static_cast<long>(set.u.size()), static_cast<long>(state_channels) * grid.size()}, {}};
  for (const auto& f : set.mu) mu.data.insert(mu.data.end(), f.begin(), f.end());
  for (const auto& f : set.u) u.data.insert(u.data.end(), f.begin(), f.end());
  c.arrays.push_back(std::move(mu));
  c.arrays.push_back(std::move(u));
  write_container(path, c);
}

PairedSet load_dataset(const std::string& path, GridShape* grid_out, nlohmann::json* meta_out) {
  Container c = read_container(path);
  if (c.kind != "dataset") throw IoError("load_dataset: '" + path + "' is not a dataset");
  const GridShape grid{c.meta.at("grid").at("nx").get<int>(), c.meta.at("grid").at("ny").get<int>()};
  const int state_channels = c.meta.value("state_channels", 1);
  PairedSet set;
  const auto& mu = c.array("mu");
  const auto& u = c.array("u");
  const long n = mu.shape.at(0);
  const long usize = static_cast<long>(state_channels) * grid.size();
  set.mu.resize(static_cast<std::size_t>(n));
  set.u.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    set.mu[static_cast<std::size_t>(i)].assign(mu.data.begin() + i * grid.size(), mu.data.begin() + (i + 1) * grid.size());
    set.u[static_cast<std::size_t>(i)].assign(u.data.begin() + i * usize, u.data.begin() + (i + 1) * usize);
  }
  if (grid_out) *grid_out = grid;
  if (meta_out) *meta_out = c.meta;
  return set;
}

std::string config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace diffinv
