#include "semkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "semkd/errors.hpp"
#include "semkd/semantics.hpp"

namespace semkd {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const json& j) {
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json model_config_json(const ModelConfig& c) {
  return {{"backbone", to_string(c.backbone)},
          {"u", c.u},
          {"num_superclasses", c.num_superclasses},
          {"attention_hidden", c.attention_hidden},
          {"mapping_hidden", c.mapping_hidden},
          {"backbone_hidden", c.backbone_hidden},
          {"conv_channels", c.conv_channels}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.backbone = backbone_kind_from_string(j.at("backbone").get<std::string>());
  c.u = j.at("u").get<std::size_t>();
  c.num_superclasses = j.at("num_superclasses").get<std::size_t>();
  c.attention_hidden = j.at("attention_hidden").get<std::size_t>();
  c.mapping_hidden = j.at("mapping_hidden").get<std::vector<std::size_t>>();
  c.backbone_hidden = j.at("backbone_hidden").get<std::vector<std::size_t>>();
  c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
  return c;
}

std::vector<std::span<double>> all_tensors(ModelState& m) {
  std::vector<std::span<double>> out;
  visit_params(m.backbone, [&](std::span<double> s) { out.push_back(s); });
  visit_params(m.head, [&](Component, std::span<double> s) { out.push_back(s); });
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunState& state) {
  ModelState model = state.model;
  const auto tensors = all_tensors(model);

  json header;
  header["format"] = kCheckpointMagic;
  header["config"] = model_config_json(model.config);
  header["input"] = {model.dims.input.channels, model.dims.input.height, model.dims.input.width};
  header["semantic_dim"] = model.dims.d;
  header["frozen"] = {{"backbone", model.frozen.backbone},
                      {"embeddings", model.frozen.embeddings},
                      {"attention", model.frozen.attention},
                      {"mapping", model.frozen.mapping}};
  header["session_index"] = state.session_index;
  header["rng_seed"] = state.rng_seed;
  json sizes = json::array();
  for (const auto& t : tensors) sizes.push_back(t.size());
  header["tensor_sizes"] = sizes;
  json head = json::array();
  for (std::size_t k = 0; k < state.head.size(); ++k) {
    head.push_back({{"class", state.head.ids()[k].name()}, {"semantic", vec_json(state.head.semantics()[k])}});
  }
  header["head"] = head;
  json memory = json::array();
  for (const auto& e : state.memory.entries()) {
    memory.push_back({{"class", e.label.name()}, {"prototype", vec_json(e.prototype)}});
  }
  header["memory"] = {{"dim", state.memory.dim()}, {"entries", memory}};
  header["superclasses"] = to_json(state.superclasses);

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size_bytes()));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

RunState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ParseError(path.string() + ": not a SEMKD1 checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ULL << 32)) throw ParseError(path.string() + ": corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(path.string() + ": truncated header");

  RunState state;
  try {
    const json header = json::parse(text);
    const auto input = header.at("input").get<std::vector<std::size_t>>();
    if (input.size() != 3) throw ParseError("bad input shape");
    state.model = init_model(model_config_from(header.at("config")), InputShape{input[0], input[1], input[2]},
                             header.at("semantic_dim").get<std::size_t>(), 0);
    const auto& f = header.at("frozen");
    state.model.frozen = FrozenFlags{f.at("backbone").get<bool>(), f.at("embeddings").get<bool>(),
                                     f.at("attention").get<bool>(), f.at("mapping").get<bool>()};
    state.session_index = header.at("session_index").get<std::size_t>();
    state.rng_seed = header.at("rng_seed").get<std::uint64_t>();

    std::vector<std::pair<ClassId, Vec>> head;
    for (const auto& e : header.at("head")) {
      head.emplace_back(ClassId{e.at("class").get<std::string>()}, json_vec(e.at("semantic")));
    }
    state.head.register_classes(head);
    state.memory = PrototypeMemory(header.at("memory").at("dim").get<std::size_t>());
    for (const auto& e : header.at("memory").at("entries")) {
      state.memory.append(ClassId{e.at("class").get<std::string>()}, json_vec(e.at("prototype")));
    }
    state.superclasses = superclass_map_from_json(header.at("superclasses"));

    const auto sizes = header.at("tensor_sizes").get<std::vector<std::size_t>>();
    const auto tensors = all_tensors(state.model);
    if (sizes.size() != tensors.size()) throw ShapeError("tensor count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (sizes[i] != tensors[i].size()) throw ShapeError("tensor size mismatch");
      in.read(reinterpret_cast<char*>(tensors[i].data()), static_cast<std::streamsize>(tensors[i].size_bytes()));
      if (!in) throw ParseError("truncated tensor data");
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": malformed checkpoint header: " + e.what());
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return state;
}

}  // namespace semkd
