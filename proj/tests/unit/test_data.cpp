#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "support.hpp"
#include "tokenbinder/errors.hpp"
#include "tokenbinder/evaluation.hpp"
#include "tokenbinder/io.hpp"
#include "tokenbinder/training.hpp"

using namespace tbtest;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tokenbinder_test_data";
  fs::create_directories(dir);
  return dir / name;
}

Gallery sample_gallery(std::size_t n, RandomStream rng) {
  Gallery g(GallerySide::text, 4, 3);
  for (std::size_t j = 0; j < n; ++j) {
    g.add({1000 + 7 * j, normal_array({4}, 1.0, rng.split(j)), normal_array({3, 4}, 1.0, rng.split(j).split(1))});
  }
  return g;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.model.indicator_count, 4u);
  EXPECT_EQ(c.model.top_k, 10u);
  EXPECT_EQ(c.model.fusion_blocks, 1u);
  EXPECT_EQ(c.train.tau, 0.01);
  EXPECT_EQ(c.train.weight_decay, 0.2);
}

TEST(Config, ParsesCommentsAndBothSeparators) {
  const RunConfig c = parse_config("# header\nk: 5\n  layers = 3  # trailing\n\nuse_gumbel: false\n");
  EXPECT_EQ(c.model.top_k, 5u);
  EXPECT_EQ(c.model.layers, 3u);
  EXPECT_FALSE(c.model.use_gumbel);
}

TEST(Config, ValidationAndUnknownKeys) {
  EXPECT_THROW(parse_config("k: 0"), ConfigError);
  EXPECT_EQ(parse_config("indicator_count: 6").model.indicator_count, 6u);
  EXPECT_THROW(parse_config("indicator_count: 7"), ConfigError);
  EXPECT_THROW(parse_config("indicator_count: 1"), ConfigError);
  EXPECT_THROW(parse_config("tau: 0"), ConfigError);
  EXPECT_THROW(parse_config("pairs: 11\ngroup_size: 5"), ConfigError);
  EXPECT_THROW(parse_config("group_size: 0"), ConfigError);
  EXPECT_THROW(parse_config("embed_dimm: 4"), ConfigError);
  EXPECT_THROW(parse_config("k: ten"), ConfigError);
}

TEST(Config, ErrorNamesLine) {
  try {
    parse_config("k: 5\nlayers: 2\nbogus: 1\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:3"), std::string::npos) << e.what();
  }
}

TEST(Config, FormatRoundTrips) {
  RunConfig c = tiny_config();
  apply_setting(c, "freeze", "a;b");
  apply_setting(c, "query_direction", "v2t");
  const RunConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
  for (const std::string& key : config_keys()) {
    EXPECT_TRUE(is_config_key(key));
    EXPECT_EQ(get_setting(back, key), get_setting(c, key)) << key;
  }
}

TEST(Config, LoadMissingFile) {
  EXPECT_THROW(load_config(temp_file("does_not_exist.cfg")), ConfigError);
}

TEST(Synthetic, SameSpecSameDataset) {
  const SyntheticSpec s = tiny_config().data;
  EXPECT_EQ(generate_synthetic_pairs(s), generate_synthetic_pairs(s));
}

TEST(Synthetic, RenderingChangesNoiseOnly) {
  SyntheticSpec s = tiny_config().data;
  const PairedDataset a = generate_synthetic_pairs(s);
  s.rendering = 1;
  const PairedDataset b = generate_synthetic_pairs(s);
  EXPECT_EQ(a.groups, b.groups);
  EXPECT_NE(a.videos[0].features, b.videos[0].features);
}

TEST(Synthetic, CohortsPartitionItems) {
  SyntheticSpec s = tiny_config().data;
  s.pairs = 30;
  s.group_size = 5;
  s.fine_pool = 5;
  const PairedDataset d = generate_synthetic_pairs(s);
  ASSERT_EQ(d.size(), 30u);
  std::map<std::uint32_t, int> counts;
  for (auto g : d.groups) ++counts[g];
  EXPECT_EQ(counts.size(), 6u);
  for (auto [label, n] : counts) EXPECT_EQ(n, 5);
  EXPECT_NO_THROW(d.validate());
}

TEST(Synthetic, NoiselessItemsAreDistinct) {
  SyntheticSpec s = tiny_config().data;
  s.noise = 0.0;
  s.pairs = 12;
  s.group_size = 3;
  const PairedDataset d = generate_synthetic_pairs(s);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      EXPECT_NE(d.videos[i].features, d.videos[j].features) << i << " " << j;
      EXPECT_NE(d.texts[i].tokens, d.texts[j].tokens) << i << " " << j;
    }
  }
}

TEST(Synthetic, GroupSizeOneHasSingletonCohorts) {
  SyntheticSpec s = tiny_config().data;
  s.group_size = 1;
  const PairedDataset d = generate_synthetic_pairs(s);
  EXPECT_EQ(std::set<std::uint32_t>(d.groups.begin(), d.groups.end()).size(), d.size());
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec s = tiny_config().data;
  s.pairs = 7;
  s.group_size = 2;
  EXPECT_THROW(generate_synthetic_pairs(s), ConfigError);
}

TEST(Synthetic, TrainingPullsCohortsTogether) {
  // Within-cohort global similarity should exceed cross-cohort similarity
  // once the encoders have seen the data.
  RunConfig c = tiny_config();
  apply_setting(c, "pairs", "40");
  apply_setting(c, "group_size", "4");
  apply_setting(c, "epochs", "4");
  apply_setting(c, "batch_size", "10");
  apply_setting(c, "lr_base", "0.003");
  apply_setting(c, "lr_fusion", "0.003");
  apply_setting(c, "tau", "0.05");
  c.validate();
  const PairedDataset d = generate_synthetic_pairs(c.data);
  Model m = Model::initialize(c.model, c.train.tau, 1);
  train_loop(d, m, c.train);
  const EncodedCorpus enc = encode_corpus(m, d);
  double within = 0.0, across = 0.0;
  std::size_t nw = 0, na = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (std::size_t x = 0; x < c.model.embed_dim; ++x) s += enc.texts[i].global[x] * enc.videos[j].global[x];
      (d.groups[i] == d.groups[j] ? within : across) += s;
      ++(d.groups[i] == d.groups[j] ? nw : na);
    }
  }
  EXPECT_GT(within / double(nw), across / double(na));
}

TEST(GalleryIo, RoundTripIsIdentity) {
  const Gallery g = sample_gallery(5, RandomStream(1));
  EXPECT_EQ(decode_gallery(encode_gallery(g)), g);
  const fs::path p = temp_file("g.tbgl");
  save_gallery(g, p);
  EXPECT_EQ(load_gallery(p), g);
}

TEST(GalleryIo, EmptyRejectedAtSave) {
  EXPECT_THROW(encode_gallery(Gallery(GallerySide::video, 4, 2)), InputError);
}

TEST(GalleryIo, AnyByteCorruptionRejected) {
  const std::vector<std::byte> good = encode_gallery(sample_gallery(3, RandomStream(2)));
  for (std::size_t i = 0; i < good.size(); ++i) {
    for (unsigned char flip : {0x01, 0x80, 0xFF}) {
      std::vector<std::byte> bad = good;
      bad[i] ^= std::byte{flip};
      EXPECT_THROW(decode_gallery(bad), FormatError) << "byte " << i << " flip " << int(flip);
    }
  }
}

TEST(GalleryIo, TruncationRejectedWithOffset) {
  const std::vector<std::byte> good = encode_gallery(sample_gallery(3, RandomStream(3)));
  for (std::size_t cut : {0ul, 3ul, 20ul, good.size() - 1}) {
    std::vector<std::byte> bad(good.begin(), good.begin() + static_cast<long>(cut));
    try {
      decode_gallery(bad);
      ADD_FAILURE() << "accepted truncation at " << cut;
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), good.size());
    }
  }
}

TEST(GalleryIoProperty, RandomGalleriesRoundTrip) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    RandomStream rng = RandomStream(4).split(trial);
    const std::size_t c = 1 + rng.below(6), n = 1 + rng.below(4);
    Gallery g(trial % 2 ? GallerySide::video : GallerySide::text, c, n);
    const std::size_t count = 1 + rng.below(10);
    for (std::size_t j = 0; j < count; ++j) g.add({rng.next_u64(), normal_array({c}, 1e3, rng.split(j)),
                                                   normal_array({n, c}, 1e-3, rng.split(j).split(1))});
    EXPECT_EQ(decode_gallery(encode_gallery(g)), g);
  }
}

TEST(CheckpointIo, RoundTripIsBitExact) {
  const RunConfig c = tiny_config();
  const Model m = Model::initialize(c.model, c.train.tau, 9);
  const fs::path p = temp_file("m.tbck");
  save_checkpoint(m.parameters(), p);
  const ParameterSet back = load_checkpoint(p);
  EXPECT_TRUE(back == m.parameters());
  for (const auto& [name, param] : back) EXPECT_EQ(param.group, m.parameters().at(name).group);
}

TEST(CheckpointIo, CorruptMagicAndVersion) {
  ParameterSet p;
  p.add("x", DenseArray::vector({1.0}));
  std::vector<std::byte> bytes = encode_checkpoint(p);
  std::vector<std::byte> bad = bytes;
  bad[0] ^= std::byte{0xFF};
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] ^= std::byte{0x02};
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bytes.push_back(std::byte{0});
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(DatasetIo, RoundTripIsIdentity) {
  const PairedDataset d = generate_synthetic_pairs(tiny_config().data);
  EXPECT_EQ(decode_dataset(encode_dataset(d)), d);
  const fs::path p = temp_file("d.tbds");
  save_dataset(d, p);
  EXPECT_EQ(load_dataset(p), d);
}

TEST(DatasetIo, TruncationRejected) {
  const std::vector<std::byte> good = encode_dataset(generate_synthetic_pairs(tiny_config().data));
  const std::vector<std::byte> bad(good.begin(), good.end() - 3);
  EXPECT_THROW(decode_dataset(bad), FormatError);
}

TEST(Io, MissingFileIsFormatOrInputError) {
  EXPECT_THROW(load_gallery(temp_file("nope.tbgl")), Error);
}
