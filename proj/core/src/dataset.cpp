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

#include "advmask/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "advmask/errors.hpp"
#include "advmask/rng.hpp"

namespace advmask {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>(v >> s));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

// Seven-segment layout: a, b, c, d, e, f, g.
constexpr unsigned char kDigitSegments[10] = {
    0b1111110, 0b0110000, 0b1101101, 0b1111001, 0b0110011,
    0b1011011, 0b1011111, 0b1110000, 0b1111111, 0b1111011};

void draw_rect(Tensor& t, std::size_t cls, const SynthSpec& s, std::size_t y0,
               std::size_t y1, std::size_t x0, std::size_t x1) {
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = y0; y < std::min(y1, s.height); ++y) {
      for (std::size_t x = x0; x < std::min(x1, s.width); ++x) {
        t.example(cls)[(c * s.height + y) * s.width + x] = 1.0f;
      }
    }
  }
}

void blob_template(Tensor& t, std::size_t cls, const SynthSpec& s) {
  const auto g = static_cast<std::size_t>(
      std::ceil(std::sqrt(double(s.classes)) - 1e-9));
  const std::size_t ch = std::max<std::size_t>(1, s.height / g);
  const std::size_t cw = std::max<std::size_t>(1, s.width / g);
  const std::size_t row = cls / g;
  const std::size_t col = cls % g;
  draw_rect(t, cls, s, row * ch, (row + 1) * ch, col * cw, (col + 1) * cw);
}

void stripe_template(Tensor& t, std::size_t cls, const SynthSpec& s) {
  const std::size_t orientation = cls % 4;
  const std::size_t half = 1 + cls / 4;  // half period
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        std::size_t coord = 0;
        switch (orientation) {
          case 0: coord = y; break;
          case 1: coord = x; break;
          case 2: coord = x + y; break;
          default: coord = x + s.height - 1 - y; break;
        }
        if ((coord / half) % 2 == 0) {
          t.example(cls)[(c * s.height + y) * s.width + x] = 1.0f;
        }
      }
    }
  }
}

void digit_template(Tensor& t, std::size_t cls, const SynthSpec& s) {
  const std::size_t th = std::max<std::size_t>(1, s.height / 8);
  const std::size_t top = s.height / 8;
  const std::size_t bottom = s.height - 1 - s.height / 8;
  const std::size_t mid = s.height / 2;
  const std::size_t left = s.width / 4;
  const std::size_t right = s.width - 1 - s.width / 4;
  const unsigned char seg = kDigitSegments[cls];
  auto on = [&](int k) { return (seg >> (6 - k)) & 1; };
  if (on(0)) draw_rect(t, cls, s, top, top + th, left, right + 1);
  if (on(1)) draw_rect(t, cls, s, top, mid + 1, right + 1 - th, right + 1);
  if (on(2)) draw_rect(t, cls, s, mid, bottom + 1, right + 1 - th, right + 1);
  if (on(3)) draw_rect(t, cls, s, bottom + 1 - th, bottom + 1, left, right + 1);
  if (on(4)) draw_rect(t, cls, s, mid, bottom + 1, left, left + th);
  if (on(5)) draw_rect(t, cls, s, top, mid + 1, left, left + th);
  if (on(6)) draw_rect(t, cls, s, mid, mid + th, left, right + 1);
}

void check_spec(const SynthSpec& s) {
  if (s.n == 0 || s.classes < 2 || s.channels == 0 || s.height == 0 ||
      s.width == 0) {
    throw ConfigError("synthetic dataset needs n > 0, classes >= 2 and "
                      "positive image dimensions");
  }
  if (!(s.margin >= 0.0f) || s.margin > 1.0f) {
    throw ConfigError("margin must lie in [0, 1]");
  }
  if (s.kind == SynthKind::kDigitsLite && (s.classes > 10 || s.height < 5 ||
                                           s.width < 4)) {
    throw ConfigError("digits-lite supports at most 10 classes on images of "
                      "at least 5x4 pixels");
  }
}

float resolved_amplitude(const SynthSpec& s) {
  const float max_amp = 0.5f * (1.0f + s.margin);
  const float amp = s.amplitude > 0.0f ? s.amplitude : max_amp;
  if (amp < s.margin || amp > max_amp + 1e-6f) {
    throw ConfigError("amplitude " + std::to_string(amp) +
                      " must lie in [margin, (1 + margin) / 2]");
  }
  return amp;
}

}  // namespace

std::string to_string(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

void Dataset::validate() const {
  if (labels.empty()) throw PreconditionError("dataset is empty");
  if (images.rank() != 4 || images.batch() != labels.size()) {
    throw ShapeError("dataset images " + to_string(images.shape()) +
                     " do not match " + std::to_string(labels.size()) +
                     " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= classes) {
      throw PreconditionError("label " + std::to_string(labels[i]) +
                              " at index " + std::to_string(i) +
                              " is outside [0, " + std::to_string(classes) +
                              ")");
    }
  }
  for (std::size_t j = 0; j < images.size(); ++j) {
    if (!(images[j] >= 0.0f && images[j] <= 1.0f)) {
      throw PreconditionError("pixel " + std::to_string(j) +
                              " is outside [0, 1]");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.images = gather(images, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  out.classes = classes;
  out.split = split;
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset out;
  out.images = images.slice(0, n);
  out.labels.assign(labels.begin(), labels.begin() + long(n));
  out.classes = classes;
  out.split = split;
  return out;
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::kBlobs: return "blobs";
    case SynthKind::kStripes: return "stripes";
    case SynthKind::kDigitsLite: return "digits-lite";
  }
  return "?";
}

SynthKind synth_kind_from_string(const std::string& s) {
  for (SynthKind k :
       {SynthKind::kBlobs, SynthKind::kStripes, SynthKind::kDigitsLite}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown dataset kind '" + s + "'");
}

Tensor synth_templates(const SynthSpec& spec) {
  check_spec(spec);
  Tensor t({spec.classes, spec.channels, spec.height, spec.width});
  for (std::size_t c = 0; c < spec.classes; ++c) {
    switch (spec.kind) {
      case SynthKind::kBlobs: blob_template(t, c, spec); break;
      case SynthKind::kStripes: stripe_template(t, c, spec); break;
      case SynthKind::kDigitsLite: digit_template(t, c, spec); break;
    }
  }
  for (std::size_t a = 0; a < spec.classes; ++a) {
    for (std::size_t b = a + 1; b < spec.classes; ++b) {
      if (std::ranges::equal(t.example(a), t.example(b))) {
        throw ConfigError(to_string(spec.kind) + " templates of classes " +
                          std::to_string(a) + " and " + std::to_string(b) +
                          " coincide at this image size");
      }
    }
  }
  return t;
}

Dataset dataset_synth(const SynthSpec& spec) {
  const Tensor templates = synth_templates(spec);
  const float amp = resolved_amplitude(spec);
  const float noise = 0.5f * (amp - spec.margin);
  const float base = 0.5f * (1.0f - amp);

  // The test split draws from its own stream so one seed never yields
  // overlapping train and test sets.
  Rng rng(spec.seed, spec.split == Split::kTrain ? 0xda7a : 0xda7b);
  Dataset ds;
  ds.classes = spec.classes;
  ds.split = spec.split;
  ds.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) ds.labels[i] = int(i % spec.classes);
  rng.shuffle(std::span<int>(ds.labels));

  ds.images = Tensor({spec.n, spec.channels, spec.height, spec.width});
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng px = rng.fork(i);
    auto dst = ds.images.example(i);
    auto tpl = templates.example(std::size_t(ds.labels[i]));
    for (std::size_t j = 0; j < dst.size(); ++j) {
      const float u = noise > 0.0f ? px.uniform(-noise, noise) : 0.0f;
      dst[j] = std::clamp(base + amp * tpl[j] + u, 0.0f, 1.0f);
    }
  }
  return ds;
}

nlohmann::json to_json(const SynthSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"n", s.n},
          {"classes", s.classes},
          {"channels", s.channels},
          {"height", s.height},
          {"width", s.width},
          {"margin", s.margin},
          {"amplitude", resolved_amplitude(s)},
          {"seed", s.seed},
          {"split", to_string(s.split)}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  try {
    for (const auto& [key, value] : j.items()) {
      static const char* const kKeys[] = {"kind",  "n",      "classes", "channels",
                                          "height", "width", "margin",  "amplitude",
                                          "seed",  "split"};
      if (std::ranges::find(kKeys, key) == std::end(kKeys)) {
        throw ConfigError("unknown dataset spec key '" + key + "'");
      }
    }
    SynthSpec s;
    s.kind = synth_kind_from_string(j.value("kind", to_string(s.kind)));
    s.n = j.value("n", s.n);
    s.classes = j.value("classes", s.classes);
    s.channels = j.value("channels", s.channels);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.margin = j.value("margin", s.margin);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.seed = j.value("seed", s.seed);
    const std::string split = j.value("split", std::string("train"));
    if (split != "train" && split != "test") {
      throw ConfigError("split must be 'train' or 'test'");
    }
    s.split = split == "train" ? Split::kTrain : Split::kTest;
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset spec: ") + e.what());
  }
}

std::vector<unsigned char> dataset_encode(const Dataset& ds) {
  if (ds.images.rank() != 4 || ds.images.batch() != ds.labels.size()) {
    throw ShapeError("dataset images " + to_string(ds.images.shape()) +
                     " do not match " + std::to_string(ds.labels.size()) +
                     " labels");
  }
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kHeaderBytes + ds.images.size() * 4 + ds.labels.size());
  put_u32(out, kVersion);
  for (std::size_t d = 0; d < 4; ++d) {
    put_u32(out, static_cast<std::uint32_t>(ds.images.dim(d)));
  }
  for (float v : ds.images.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  for (int label : ds.labels) {
    if (label < 0 || label > 255) {
      throw PreconditionError("label " + std::to_string(label) +
                              " does not fit in a byte");
    }
    out.push_back(static_cast<unsigned char>(label));
  }
  return out;
}

Dataset dataset_decode(std::span<const unsigned char> bytes,
                       std::size_t classes, Split split) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic: not an ADVB dataset");
  }
  if (bytes.size() < kHeaderBytes) {
    throw TruncationError("dataset header truncated", kHeaderBytes,
                          bytes.size());
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kVersion) {
    throw VersionError("unsupported dataset version " +
                           std::to_string(version) + " (expected " +
                           std::to_string(kVersion) + ")",
                       version);
  }
  Shape shape(4);
  for (std::size_t d = 0; d < 4; ++d) {
    shape[d] = get_u32(bytes.data() + 8 + 4 * d);
  }
  const std::size_t count = numel(shape);
  const std::size_t expected = kHeaderBytes + 4 * count + shape[0];
  if (bytes.size() < expected) {
    throw TruncationError("dataset payload truncated: expected " +
                              std::to_string(expected) + " bytes, found " +
                              std::to_string(bytes.size()),
                          expected, bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError("dataset has " + std::to_string(bytes.size() - expected) +
                      " trailing bytes");
  }
  std::vector<float> data(count);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t j = 0; j < count; ++j, p += 4) {
    data[j] = std::bit_cast<float>(get_u32(p));
  }
  Dataset ds;
  ds.images = Tensor(shape, std::move(data));
  ds.labels.assign(p, p + shape[0]);
  int max_label = -1;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  ds.classes = classes > 0 ? classes : std::size_t(max_label + 1);
  ds.split = split;
  ds.validate();
  return ds;
}

void dataset_save(const Dataset& ds, const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = dataset_encode(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Dataset dataset_load(const std::filesystem::path& path, std::size_t classes,
                     Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::vector<unsigned char> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return dataset_decode(bytes, classes, split);
}

}  // namespace advmask
