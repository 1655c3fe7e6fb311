#include <doctest.h>

#include <sstream>

#include "ecnr/codec.hpp"
#include "ecnr/metrics.hpp"
#include "support.hpp"

using namespace ecnr;

namespace {

EncodeConfig quick_config(int scales = 2, int epochs = 80) {
  EncodeConfig cfg;
  cfg.pyramid.scales = scales;
  cfg.pyramid.block = {4, 4, 4};
  for (int i = 0; i < scales; ++i) cfg.blocks_per_mlp.push_back(2 << i);
  cfg.schedule.epochs = epochs;
  cfg.schedule.prune_epochs = {epochs * 3 / 10, epochs * 9 / 20, epochs * 6 / 10, epochs * 3 / 4};
  cfg.finetune_epochs = 10;
  return cfg;
}

const Dims4 kDims{16, 16, 16, 2};

const EncodeResult& shared_result() {
  static const EncodeResult r = encode(testing::moving_gaussians(kDims), quick_config());
  return r;
}

}  // namespace

TEST_CASE("default blocks per MLP double from coarse to fine") {
  EncodeConfig cfg;
  cfg.pyramid.scales = 3;
  CHECK(cfg.resolved_blocks_per_mlp() == std::vector<int>{8, 16, 32});
  cfg.blocks_per_mlp = {1, 2};
  CHECK_THROWS_AS(cfg.validate({64, 64, 64, 8}), ConfigError);
  cfg.blocks_per_mlp = {1, 0, 2};
  CHECK_THROWS_AS(cfg.validate({64, 64, 64, 8}), ConfigError);
  cfg.blocks_per_mlp = {1, 2, 4};
  CHECK_NOTHROW(cfg.validate({64, 64, 64, 8}));
}

TEST_CASE("encode reports per-scale stats coarsest first") {
  const auto& r = shared_result();
  REQUIRE(r.stats.size() == 2);
  CHECK(r.stats[0].scale == 2);
  CHECK(r.stats[1].scale == 1);
  CHECK(r.stats[0].blocks == 8);
  CHECK(r.stats[1].blocks == 128);
  CHECK(r.stats[0].mlps == 4);
  CHECK(r.stats[0].sparsity == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(r.container.scales.front().scale == 2);
  CHECK(r.compression_rate == doctest::Approx(kDims.count() * 4.0 / r.bytes.size()));
}

TEST_CASE("serialization round trip is bit-exact") {
  const auto& r = shared_result();
  const Container c = deserialize(r.bytes);
  CHECK(c.complete);
  CHECK(serialize(c) == r.bytes);
  REQUIRE(c.scales.size() == r.container.scales.size());
  for (std::size_t i = 0; i < c.scales.size(); ++i) {
    const auto& a = c.scales[i];
    const auto& b = r.container.scales[i];
    CHECK(a.m == b.m);
    CHECK(a.effective == b.effective);
    CHECK(a.assignment == b.assignment);
    CHECK(a.latents == b.latents);
    CHECK(a.mask == b.mask);
    for (int l = 0; l < 4; ++l)
      for (bool bias : {false, true}) {
        CHECK(a.quantized.at(l, bias).values == b.quantized.at(l, bias).values);
        CHECK(a.quantized.at(l, bias).indices == b.quantized.at(l, bias).indices);
      }
  }
  CHECK(c.header.range.lo == r.container.header.range.lo);
  CHECK(c.header.range.hi == r.container.header.range.hi);
}

TEST_CASE("encode-side PSNR matches the decoder") {
  const auto& r = shared_result();
  const auto v = testing::moving_gaussians(kDims);
  const double measured = psnr(v, decode(std::span<const std::uint8_t>(r.bytes)));
  CHECK(std::abs(measured - r.psnr) <= 1e-5);
  CHECK(r.psnr > 20.0);
}

TEST_CASE("decode output has the input dims and stays inside the value range") {
  const auto& r = shared_result();
  const auto out = decode(std::span<const std::uint8_t>(r.bytes));
  CHECK(out.dims() == kDims);
  CHECK(out.values().minCoeff() >= r.container.header.range.lo);
  CHECK(out.values().maxCoeff() <= r.container.header.range.hi);
}

TEST_CASE("decode_scale(1) equals decode without a CNN") {
  const auto& r = shared_result();
  const auto a = decode(r.container);
  const auto b = decode_scale(r.container, 1);
  CHECK(a.values() == b.values());
  CHECK_THROWS_AS(decode_scale(r.container, 0), ConfigError);
  CHECK_THROWS_AS(decode_scale(r.container, 3), ConfigError);
}

TEST_CASE("streaming reconstruction improves with more scales") {
  const auto& r = shared_result();
  const auto v = testing::moving_gaussians(kDims);
  const double coarse = psnr(v, decode_scale(r.container, 2));
  const double fine = psnr(v, decode_scale(r.container, 1));
  CHECK(decode_scale(r.container, 2).dims() == kDims);
  CHECK(fine >= coarse);
}

TEST_CASE("encode is deterministic for a fixed seed") {
  const auto v = testing::moving_gaussians(kDims);
  auto cfg = quick_config(2, 20);
  const auto a = encode(v, cfg);
  const auto b = encode(v, cfg);
  CHECK(a.bytes == b.bytes);
  cfg.seed = 2;
  CHECK(encode(v, cfg).bytes != a.bytes);
}

TEST_CASE("decoding needs only the file") {
  const auto& r = shared_result();
  testing::TempDir dir;
  const auto path = dir / "v.ecnr";
  write_file(path, r.bytes);
  const auto bytes = read_file(path);
  CHECK(bytes == r.bytes);
  CHECK(decode(std::span<const std::uint8_t>(bytes)).values() == decode(r.container).values());
}

TEST_CASE("malformed containers are rejected") {
  const auto& r = shared_result();
  auto bytes = r.bytes;
  bytes[0] = 'X';
  CHECK_THROWS_WITH_AS(deserialize(bytes), doctest::Contains("magic"), FormatError);
  bytes = r.bytes;
  bytes[4] = 2;
  CHECK_THROWS_WITH_AS(deserialize(bytes), doctest::Contains("version"), FormatError);
  bytes = r.bytes;
  bytes.resize(bytes.size() - 10);
  CHECK_THROWS_AS(deserialize(bytes), FormatError);
  CHECK_THROWS_AS(decode(std::span<const std::uint8_t>(bytes)), FormatError);
  bytes = r.bytes;
  bytes.resize(10);
  CHECK_THROWS_AS(deserialize(bytes, true), FormatError);
  bytes = r.bytes;
  bytes.push_back(0);
  CHECK_THROWS_AS(deserialize(bytes), FormatError);
}

TEST_CASE("a file prefix still decodes the coarse scale") {
  const auto& r = shared_result();
  const auto full = decode_scale(r.container, 2);
  bool found = false;
  for (std::size_t len = r.bytes.size() - 1; len > 100; len -= 7) {
    std::vector<std::uint8_t> prefix(r.bytes.begin(), r.bytes.begin() + static_cast<std::ptrdiff_t>(len));
    const Container c = deserialize(prefix, true);
    CHECK_FALSE(c.complete);
    if (c.scales.size() == 1) {
      CHECK(decode_scale(c, 2).values() == full.values());
      CHECK_THROWS_AS(decode_scale(c, 1), FormatError);
      CHECK_THROWS_AS(decode(c), FormatError);
      found = true;
      break;
    }
  }
  CHECK(found);
}

TEST_CASE("storage breakdown accounts for every byte") {
  const auto& r = shared_result();
  const auto s = storage(r.container);
  CHECK(s.file == r.bytes.size());
  std::ostringstream os;
  describe(r.container, r.bytes.size(), os);
  const auto text = os.str();
  CHECK(text.find("scale=2") < text.find("scale=1 "));
  CHECK(text.find("cr=") != std::string::npos);
}

TEST_CASE("a single-scale encode works") {
  const auto v = testing::moving_gaussians({16, 16, 16, 1});
  const auto r = encode(v, quick_config(1, 20));
  CHECK(r.container.scales.size() == 1);
  CHECK(decode(r.container).dims() == v.dims());
}

TEST_CASE("the CNN is optional end to end") {
  const auto v = testing::moving_gaussians(kDims);
  auto cfg = quick_config(2, 20);
  cfg.enable_cnn = true;
  cfg.cnn.channels = 4;
  cfg.cnn.layers = 3;
  cfg.cnn_epochs = 3;
  const auto r = encode(v, cfg);
  REQUIRE(r.container.cnn.has_value());
  const Container c = deserialize(r.bytes);
  CHECK(c.header.cnn_present);
  CHECK(serialize(c) == r.bytes);
  const double measured = psnr(v, decode(c));
  CHECK(std::abs(measured - r.psnr) <= 1e-5);
  // the coarse preview skips the CNN
  CHECK(decode_scale(c, 2).values() == decode_scale(r.container, 2).values());
}

TEST_CASE("a constant volume compresses to a small, accurate file") {
  const Dims4 d{32, 32, 32, 4};
  Volume4D v(d);
  v.values().setConstant(3.5f);
  EncodeConfig cfg = quick_config(2, 100);
  cfg.pyramid.block = {16, 16, 16};
  cfg.blocks_per_mlp.clear();
  const auto r = encode(v, cfg);
  CHECK(r.psnr >= 60.0);
  CHECK(r.compression_rate > 10.0);
  const auto out = decode(std::span<const std::uint8_t>(r.bytes));
  CHECK((out.values().array() - 3.5f).abs().maxCoeff() <= 1e-6f);
}

TEST_CASE("blocks below the residual threshold are dropped and decode as zero residual") {
  const auto v = testing::moving_gaussians(kDims);
  auto cfg = quick_config(2, 20);
  cfg.pyramid.tau = 1e9;
  const auto r = encode(v, cfg);
  CHECK(r.container.scales[1].m == 0);
  CHECK(r.stats[1].effective == 0);
  const Container c = deserialize(r.bytes);
  const auto up = decode_scale(c, 2);
  CHECK(decode(c).values() == up.values());
}

TEST_CASE("encode logs key=value records") {
  std::ostringstream log;
  auto cfg = quick_config(2, 10);
  cfg.log = &log;
  encode(testing::moving_gaussians(kDims), cfg);
  const auto text = log.str();
  CHECK(text.find("event=scale scale=2") != std::string::npos);
  CHECK(text.find("event=epoch") != std::string::npos);
  CHECK(text.find("event=prune") != std::string::npos);
  CHECK(text.find("event=scale_done scale=1") != std::string::npos);
  CHECK(text.find("event=done bytes=") != std::string::npos);
}
