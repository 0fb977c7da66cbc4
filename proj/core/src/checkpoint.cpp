// Copyright 2026 The advmask Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "advmask/checkpoint.hpp"

#include <bit>
#include <type_traits>

#include "advmask/errors.hpp"
#include "advmask/io.hpp"

namespace advmask {

namespace {

constexpr const char* kFormat = "advmask-checkpoint";
constexpr unsigned kVersion = 1;

struct Slot {
  std::string graph;  // "front" or "back"
  std::string kind;   // "param" or "buffer"
  Parameter* target = nullptr;
  const Parameter* source = nullptr;
};

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  p += ".bin";
  return p;
}

template <typename G>
void collect(G& g, const std::string& graph, std::vector<Slot>& out) {
  for (auto& p : g.parameters()) {
    Slot s{graph, "param"};
    if constexpr (std::is_const_v<G>) s.source = &p; else s.target = &p;
    out.push_back(s);
  }
  for (auto& b : g.buffers()) {
    Slot s{graph, "buffer"};
    if constexpr (std::is_const_v<G>) s.source = &b; else s.target = &b;
    out.push_back(s);
  }
}

std::string save_slots(const std::vector<Slot>& slots, const ModelSpec& spec,
                       const Provenance& provenance,
                       const std::filesystem::path& path) {
  std::vector<unsigned char> blob;
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const Slot& s : slots) {
    const Parameter& p = *s.source;
    tensors.push_back({{"graph", s.graph},
                       {"kind", s.kind},
                       {"name", p.name},
                       {"shape", p.value.shape()},
                       {"frozen", p.frozen},
                       {"offset", offset}});
    for (float v : p.value.data()) {
      const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 32; b += 8) blob.push_back(static_cast<unsigned char>(u >> b));
    }
    offset += p.value.size();
  }
  nlohmann::json manifest = {{"format", kFormat},
                             {"version", kVersion},
                             {"architecture", to_json(spec)},
                             {"provenance", to_json(provenance)},
                             {"tensors", tensors},
                             {"blob", blob_path(path).filename().string()},
                             {"blob_bytes", blob.size()},
                             {"blob_hash", git_blob_hash(blob)}};
  const std::string text = manifest.dump(2) + "\n";
  write_bytes(blob_path(path), blob);
  write_text(path, text);
  return git_blob_hash(text);
}

struct Parsed {
  nlohmann::json manifest;
  std::vector<unsigned char> blob;
  std::string hash;
};

Parsed parse(const std::filesystem::path& path) {
  Parsed out;
  const std::string text = read_text(path);
  out.hash = git_blob_hash(text);
  try {
    out.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": not a JSON manifest: " + e.what());
  }
  const nlohmann::json& m = out.manifest;
  if (!m.is_object() || m.value("format", "") != kFormat) {
    throw FormatError(path.string() + ": not an advmask checkpoint manifest");
  }
  const unsigned version = m.value("version", 0u);
  if (version != kVersion) {
    throw VersionError(path.string() + ": checkpoint version " +
                           std::to_string(version) + ", expected " +
                           std::to_string(kVersion),
                       version);
  }
  try {
    const std::filesystem::path blob =
        path.parent_path() / m.at("blob").get<std::string>();
    out.blob = read_bytes(blob);
    const std::size_t expected = m.at("blob_bytes").get<std::size_t>();
    if (out.blob.size() < expected) {
      throw TruncationError(blob.string() + ": parameter blob truncated",
                            expected, out.blob.size());
    }
    if (out.blob.size() != expected) {
      throw FormatError(blob.string() + ": parameter blob has " +
                        std::to_string(out.blob.size() - expected) +
                        " trailing bytes");
    }
    if (git_blob_hash(out.blob) != m.at("blob_hash").get<std::string>()) {
      throw FormatError(blob.string() + ": parameter blob hash mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed manifest: " + e.what());
  }
  return out;
}

void restore(const Parsed& parsed, std::vector<Slot>& slots,
             const std::filesystem::path& path) {
  const nlohmann::json& tensors = parsed.manifest.at("tensors");
  if (tensors.size() != slots.size()) {
    throw ShapeError(path.string() + ": checkpoint holds " +
                     std::to_string(tensors.size()) + " tensors, model has " +
                     std::to_string(slots.size()));
  }
  const std::size_t floats = parsed.blob.size() / 4;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const nlohmann::json& t = tensors[k];
    Parameter& p = *slots[k].target;
    const std::string name = t.at("name").get<std::string>();
    const Shape shape = t.at("shape").get<Shape>();
    if (t.at("graph") != slots[k].graph || t.at("kind") != slots[k].kind ||
        name != p.name || shape != p.value.shape()) {
      throw ShapeError(path.string() + ": architecture mismatch at " +
                       slots[k].graph + "/" + p.name + " " +
                       to_string(p.value.shape()) + " vs checkpoint " +
                       t.at("graph").get<std::string>() + "/" + name + " " +
                       to_string(shape));
    }
    const std::size_t offset = t.at("offset").get<std::size_t>();
    if (offset + p.value.size() > floats) {
      throw TruncationError(path.string() + ": tensor " + name +
                                " extends past the blob",
                            (offset + p.value.size()) * 4, parsed.blob.size());
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const unsigned char* b = parsed.blob.data() + 4 * (offset + j);
      const std::uint32_t u = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
                              std::uint32_t(b[2]) << 16 |
                              std::uint32_t(b[3]) << 24;
      p.value[j] = std::bit_cast<float>(u);
    }
    p.frozen = t.at("frozen").get<bool>();
  }
}

template <typename F>
auto guarded(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json j = {{"backbone", to_json(spec.backbone)}};
  j["frontend"] = spec.frontend ? to_json(*spec.frontend) : nlohmann::json(nullptr);
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.backbone = backbone_spec_from_json(j.at("backbone"));
  if (j.contains("frontend") && !j.at("frontend").is_null()) {
    s.frontend = frontend_spec_from_json(j.at("frontend"));
  }
  return s;
}

nlohmann::json to_json(const Provenance& p) {
  return {{"regime", p.regime},
          {"seed", p.seed},
          {"epochs", p.epochs},
          {"steps", p.steps},
          {"extra", p.extra}};
}

Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.regime = j.value("regime", "");
  p.seed = j.value("seed", std::uint64_t{0});
  p.epochs = j.value("epochs", std::size_t{0});
  p.steps = j.value("steps", std::size_t{0});
  p.extra = j.value("extra", nlohmann::json::object());
  return p;
}

std::shared_ptr<const Classifier> LoadedModel::classifier() const {
  if (composite) return composite;
  return network;
}

std::string checkpoint_save(const Network& model, const ModelSpec& spec,
                            const Provenance& provenance,
                            const std::filesystem::path& path) {
  if (spec.frontend) {
    throw PreconditionError("a plain network cannot carry a front-end spec");
  }
  std::vector<Slot> slots;
  collect(model.graph(), "back", slots);
  return save_slots(slots, spec, provenance, path);
}

std::string checkpoint_save(const CompositeModel& model, const ModelSpec& spec,
                            const Provenance& provenance,
                            const std::filesystem::path& path) {
  if (!spec.frontend) {
    throw PreconditionError("a composite checkpoint needs a front-end spec");
  }
  std::vector<Slot> slots;
  collect(model.front(), "front", slots);
  collect(model.back().graph(), "back", slots);
  return save_slots(slots, spec, provenance, path);
}

LoadedModel checkpoint_load(const std::filesystem::path& path) {
  const Parsed parsed = parse(path);
  return guarded(path, [&] {
    LoadedModel out;
    out.hash = parsed.hash;
    out.spec = model_spec_from_json(parsed.manifest.at("architecture"));
    out.provenance = provenance_from_json(parsed.manifest.at("provenance"));
    Network back(backbone_new(out.spec.backbone));
    std::vector<Slot> slots;
    if (out.spec.frontend) {
      out.composite = std::make_shared<CompositeModel>(
          frontend_new(*out.spec.frontend), std::move(back));
      collect(out.composite->front(), "front", slots);
      collect(out.composite->back().graph(), "back", slots);
    } else {
      out.network = std::make_shared<Network>(std::move(back));
      collect(out.network->graph(), "back", slots);
    }
    restore(parsed, slots, path);
    return out;
  });
}

void checkpoint_load_into(Network& model, const std::filesystem::path& path) {
  const Parsed parsed = parse(path);
  guarded(path, [&] {
    std::vector<Slot> slots;
    collect(model.graph(), "back", slots);
    restore(parsed, slots, path);
    return 0;
  });
}

void checkpoint_load_into(CompositeModel& model,
                          const std::filesystem::path& path) {
  const Parsed parsed = parse(path);
  guarded(path, [&] {
    std::vector<Slot> slots;
    collect(model.front(), "front", slots);
    collect(model.back().graph(), "back", slots);
    restore(parsed, slots, path);
    return 0;
  });
}

}  // namespace advmask
