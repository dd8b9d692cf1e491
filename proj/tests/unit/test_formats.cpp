#include <cmath>

#include "doctest.h"
#include "evsnn/checkpoint.hpp"
#include "evsnn/errors.hpp"
#include "evsnn/events.hpp"
#include "support/oracles.hpp"

using namespace evsnn;

TEST_CASE("FRC1 round trip is byte identical") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t t = 1 + static_cast<int64_t>(rng.below(8));
    const int64_t h = 1 + static_cast<int64_t>(rng.below(16));
    const int64_t w = 1 + static_cast<int64_t>(rng.below(16));
    FrameClip clip{Tensor({t, 2, h, w})};
    for (int64_t i = 0; i < clip.data.numel(); ++i) clip.data[i] = std::floor(rng.uniform(0.0, 9.0));
    auto bytes = write_clip(clip);
    FrameClip back = parse_clip(bytes);
    CHECK(back.data.shape() == clip.data.shape());
    auto bytes2 = write_clip(back);
    CHECK(bytes == bytes2);
    for (int64_t i = 0; i < clip.data.numel(); ++i) CHECK(back.data[i] == clip.data[i]);
  }
}

TEST_CASE("FRC1 header validation") {
  FrameClip clip{Tensor::zeros({2, 2, 3, 3})};
  auto bytes = write_clip(clip);
  CHECK(bytes.size() == 20 + 2 * 2 * 3 * 3 * 4);
  bytes[0] = 'X';
  CHECK_THROWS_AS(parse_clip(bytes), FormatError);
  bytes[0] = 'F';
  bytes.pop_back();
  CHECK_THROWS_AS(parse_clip(bytes), FormatError);
}

TEST_CASE("CKPT1 round trip is byte identical") {
  Rng rng(67);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = oracle::random_tensor({3, 4}, rng);
    Tensor b = oracle::random_tensor({2, 2, 2}, rng);
    Tensor c = oracle::random_tensor({5}, rng);
    std::vector<std::pair<std::string, Tensor*>> tensors{
        {"alpha.weight", &a}, {"beta.bias", &b}, {"gamma", &c}};
    auto bytes = write_checkpoint(tensors);
    auto parsed = parse_checkpoint(bytes);
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[0].name == "alpha.weight");
    CHECK(parsed[1].value.shape() == b.shape());
    std::vector<std::pair<std::string, Tensor*>> again{{"alpha.weight", &parsed[0].value},
                                                       {"beta.bias", &parsed[1].value},
                                                       {"gamma", &parsed[2].value}};
    CHECK(write_checkpoint(again) == bytes);
    for (int64_t i = 0; i < c.numel(); ++i) CHECK(parsed[2].value[i] == c[i]);
  }
}

TEST_CASE("CKPT1 rejects malformed input") {
  std::vector<uint8_t> junk{'C', 'K', 'P', 'T', '2', 0, 0, 0, 0};
  CHECK_THROWS_AS(parse_checkpoint(junk), FormatError);
  Tensor a = Tensor::zeros({2});
  auto bytes = write_checkpoint({{"a", &a}});
  bytes.pop_back();
  CHECK_THROWS_AS(parse_checkpoint(bytes), FormatError);
  bytes.push_back(0);
  bytes.push_back(0);
  CHECK_THROWS_AS(parse_checkpoint(bytes), FormatError);
}

TEST_CASE("network save/load restores values and rejects mismatches") {
  ArchConfig cfg;
  cfg.arch = Arch::k2d;
  cfg.channels = 4;
  cfg.num_blocks = 2;
  cfg.num_classes = 2;
  cfg.input_h = 8;
  cfg.input_w = 8;
  cfg.init_seed = 21;
  Network net = build_sew_resnet_2d(cfg);

  const std::string path = "/tmp/evsnn_test_model.ckpt";
  save_network(net, path);

  ArchConfig cfg2 = cfg;
  cfg2.init_seed = 22;  // different init, same architecture
  Network net2 = build_sew_resnet_2d(cfg2);
  load_network(net2, path);
  auto t1 = net.named_tensors();
  auto t2 = net2.named_tensors();
  for (size_t i = 0; i < t1.size(); ++i) {
    for (int64_t j = 0; j < t1[i].second->numel(); ++j) {
      CHECK((*t1[i].second)[j] == (*t2[i].second)[j]);
    }
  }

  ArchConfig other = cfg;
  other.channels = 8;
  Network wrong = build_sew_resnet_2d(other);
  CHECK_THROWS_AS(load_network(wrong, path), StateError);
}
