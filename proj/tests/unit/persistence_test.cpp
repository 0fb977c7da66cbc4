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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "advmask/checkpoint.hpp"
#include "advmask/errors.hpp"
#include "advmask/experiment.hpp"
#include "advmask/io.hpp"
#include "advmask/training.hpp"
#include "fixtures.hpp"

namespace advmask {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "advmask_unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Io, GitBlobHashMatchesGit) {
  // printf 'hello\n' | git hash-object --stdin
  EXPECT_EQ(git_blob_hash(std::string("hello\n")),
            "ce013625030ba8dba906f756967f9e9ca394464a");
  // git hash-object of an empty file
  EXPECT_EQ(git_blob_hash(std::string()), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Io, WriteCreatesParentsAndReadsBack) {
  const fs::path p = scratch("io") / "a" / "b.txt";
  write_text(p, "abc");
  EXPECT_EQ(read_text(p), "abc");
  EXPECT_EQ(file_hash(p), git_blob_hash(std::string("abc")));
  EXPECT_THROW(read_bytes(p.parent_path() / "missing"), Error);
}

TEST(Checkpoint, NetworkRoundTripIsBitwise) {
  const fs::path dir = scratch("ckpt_net");
  const Dataset d = advmask::testing::desk_data(64, 1);
  Network n = advmask::testing::trained_backbone(d, 2, 1);
  ModelSpec spec;
  spec.backbone.seed = 2;
  Provenance prov{"standard", 2, 1, 1, nlohmann::json::object()};
  const std::string h = checkpoint_save(n, spec, prov, dir / "m.json");
  const LoadedModel m = checkpoint_load(dir / "m.json");
  ASSERT_TRUE(m.network);
  EXPECT_FALSE(m.composite);
  EXPECT_EQ(m.hash, h);
  EXPECT_EQ(m.provenance.regime, "standard");
  EXPECT_TRUE(bitwise_equal(m.network->scores(d.images), n.scores(d.images)));
  for (std::size_t i = 0; i < n.graph().buffers().size(); ++i) {
    EXPECT_TRUE(bitwise_equal(m.network->graph().buffers()[i].value,
                              n.graph().buffers()[i].value));
  }
  // Saving again to the same name gives the same hash.
  const fs::path other = scratch("ckpt_net_again");
  EXPECT_EQ(checkpoint_save(n, spec, prov, other / "m.json"), h);
}

TEST(Checkpoint, CompositeRoundTrip) {
  const fs::path dir = scratch("ckpt_comp");
  BackboneSpec bs;
  bs.seed = 3;
  FrontEndSpec fs_;
  fs_.seed = 4;
  CompositeModel c(frontend_new(fs_), Network(backbone_new(bs)));
  ModelSpec spec{bs, fs_};
  checkpoint_save(c, spec, Provenance{"frontend", 4, 1, 1, {}}, dir / "c.json");
  const LoadedModel m = checkpoint_load(dir / "c.json");
  ASSERT_TRUE(m.composite);
  const Tensor x({2, 1, 16, 16}, 0.3f);
  EXPECT_TRUE(bitwise_equal(m.composite->scores(x), c.scores(x)));
  EXPECT_TRUE(m.composite->backbone_frozen() == c.backbone_frozen());
}

TEST(Checkpoint, CorruptionIsDetected) {
  const fs::path dir = scratch("ckpt_bad");
  BackboneSpec bs;
  Network n(backbone_new(bs));
  checkpoint_save(n, ModelSpec{bs, std::nullopt}, Provenance{}, dir / "m.json");
  const fs::path blob = dir / "m.json.bin";
  auto bytes = read_bytes(blob);

  auto flipped = bytes;
  flipped[10] ^= 1;
  write_bytes(blob, flipped);
  EXPECT_THROW(checkpoint_load(dir / "m.json"), FormatError);

  auto short_blob = bytes;
  short_blob.resize(bytes.size() - 4);
  write_bytes(blob, short_blob);
  EXPECT_THROW(checkpoint_load(dir / "m.json"), TruncationError);

  write_bytes(blob, bytes);
  nlohmann::json manifest = nlohmann::json::parse(read_text(dir / "m.json"));
  manifest["version"] = 99;
  write_text(dir / "m.json", manifest.dump());
  EXPECT_THROW(checkpoint_load(dir / "m.json"), VersionError);

  write_text(dir / "m.json", "{not json");
  EXPECT_THROW(checkpoint_load(dir / "m.json"), FormatError);
}

TEST(Checkpoint, LoadIntoRejectsOtherArchitecture) {
  const fs::path dir = scratch("ckpt_arch");
  BackboneSpec bs;
  Network n(backbone_new(bs));
  checkpoint_save(n, ModelSpec{bs, std::nullopt}, Provenance{}, dir / "m.json");
  BackboneSpec other = bs;
  other.width = 4;
  Network m(backbone_new(other));
  EXPECT_THROW(checkpoint_load_into(m, dir / "m.json"), ShapeError);
  Network same(backbone_new(bs));
  EXPECT_NO_THROW(checkpoint_load_into(same, dir / "m.json"));
}

TEST(Experiment, DeriveSeedIsStableAndSeparated) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
  EXPECT_EQ(derive_seed(1, 2, 3), Rng(1, 2).fork(3).next_u64());
}

TEST(Experiment, SampleRowsIsSeededSubset) {
  const Dataset d = advmask::testing::desk_data(50, 1);
  const Dataset a = sample_rows(d, 10, 5), b = sample_rows(d, 10, 5);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE(bitwise_equal(a.images, b.images));
  EXPECT_EQ(sample_rows(d, 100, 5).size(), 50u);
}

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "seed": 3,
    "sample_size": 8,
    "train": {"synth": {"kind": "digits-lite", "n": 64, "margin": 0.05, "amplitude": 0.15}},
    "test": {"synth": {"kind": "digits-lite", "n": 16, "margin": 0.05, "amplitude": 0.15}},
    "models": [
      {"id": "cnn", "backbone": {"kind": "small-cnn"}, "train": {"epochs": 1}},
      {"id": "fe", "backbone_from": "cnn"},
      {"id": "ens", "ensemble": ["cnn", "fe"]}
    ],
    "attacks": [
      {"kind": "pgd", "steps": 3, "restarts": 1},
      {"kind": "transfer", "source": "cnn", "inner": {"kind": "pgd", "steps": 3, "restarts": 1}}
    ],
    "dump_adversarial": true
  })");
}

TEST(Experiment, ConfigValidation) {
  const fs::path base = scratch("cfg");
  EXPECT_NO_THROW(experiment_config_from_json(small_config(), base));
  auto j = small_config();
  j.erase("seed");
  EXPECT_THROW(experiment_config_from_json(j, base), ConfigError);
  j = small_config();
  j["colour"] = "blue";
  EXPECT_THROW(experiment_config_from_json(j, base), ConfigError);
  j = small_config();
  j["attacks"][1]["source"] = "nobody";
  EXPECT_THROW(experiment_config_from_json(j, base), ConfigError);
  j = small_config();
  j["models"][0]["checkpoint"] = "x.json";
  EXPECT_THROW(experiment_config_from_json(j, base), ConfigError);
  j = small_config();
  j["models"][2]["ensemble"] = nlohmann::json::array({"cnn", "later"});
  EXPECT_THROW(experiment_config_from_json(j, base), ConfigError);
}

TEST(Experiment, RunIsDeterministicAndRecountable) {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  auto ca = experiment_config_from_json(small_config(), a);
  auto cb = experiment_config_from_json(small_config(), b);
  const ExperimentReport ra = run_experiment(ca);
  run_experiment(cb);
  EXPECT_EQ(read_bytes(a / "out" / "report.csv"), read_bytes(b / "out" / "report.csv"));
  ASSERT_EQ(ra.rows.size(), 6u);
  EXPECT_TRUE(ra.error.is_null() || ra.error.empty());
  for (const ReportRow& r : ra.rows) {
    ASSERT_FALSE(r.dump.empty());
    EXPECT_EQ(file_hash(a / "out" / r.dump), r.dump_hash);
  }
}

}  // namespace
}  // namespace advmask
