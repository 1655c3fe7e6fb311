#include "ecnr/codec.hpp"

#include <fstream>
#include <iomanip>

#include "ecnr/assign.hpp"
#include "ecnr/bitio.hpp"
#include "ecnr/huffman.hpp"
#include "ecnr/metrics.hpp"

namespace ecnr {

std::vector<int> EncodeConfig::resolved_blocks_per_mlp() const {
  if (!blocks_per_mlp.empty()) return blocks_per_mlp;
  std::vector<int> out;
  for (int j = 0; j < pyramid.scales; ++j) out.push_back(8 << j);
  return out;
}

void EncodeConfig::validate(const Dims4& dims) const {
  ecnr::validate(pyramid, dims);
  schedule.validate();
  const auto b = resolved_blocks_per_mlp();
  if (static_cast<int>(b.size()) != pyramid.scales)
    throw ConfigError("need one blocks-per-MLP value per scale (" + std::to_string(pyramid.scales) + "), got " +
                      std::to_string(b.size()));
  for (int v : b)
    if (v < 1) throw ConfigError("blocks per MLP must be positive");
  if (bits < 1 || bits > 16) throw ConfigError("quantization bits must lie in [1, 16]");
  if (kmeans_iters < 1) throw ConfigError("k-means iteration count must be positive");
  if (latent_dim < 1 || latent_dim > 65535 || neurons < 1 || neurons > 65535)
    throw ConfigError("latent dimension and neuron count must lie in [1, 65535]");
  for (int a = 0; a < 3; ++a)
    if (pyramid.block[a] > 65535) throw ConfigError("block extent exceeds 65535");
  if (enable_cnn) cnn.validate();
}

MlpGroupConfig ContainerHeader::mlp_config(int m) const {
  MlpGroupConfig cfg;
  cfg.m = m;
  cfg.neurons = neurons;
  cfg.latent_dim = latent_dim;
  cfg.omega0 = omega0;
  return cfg;
}

PyramidConfig ContainerHeader::pyramid() const {
  PyramidConfig p;
  p.scales = scales;
  p.block = block;
  return p;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::vector<std::uint8_t> pack_bools(const std::vector<bool>& bits) {
  BitPacker p;
  for (bool b : bits) p.put(b ? 1u : 0u, 1);
  return p.take();
}

std::vector<bool> unpack_bools(std::span<const std::uint8_t> bytes, std::size_t n) {
  BitUnpacker u(bytes);
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = u.get(1) != 0;
  return out;
}

void write_fixed_header(ByteWriter& w, const ContainerHeader& h) {
  w.bytes(kMagic);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(h.dims.x));
  w.u32(static_cast<std::uint32_t>(h.dims.y));
  w.u32(static_cast<std::uint32_t>(h.dims.z));
  w.u32(static_cast<std::uint32_t>(h.dims.t));
  w.f32(h.range.lo);
  w.f32(h.range.hi);
  w.u8(static_cast<std::uint8_t>(h.scales));
  for (int a = 0; a < 3; ++a) w.u16(static_cast<std::uint16_t>(h.block[a]));
  w.u16(static_cast<std::uint16_t>(h.latent_dim));
  w.u16(static_cast<std::uint16_t>(h.neurons));
  w.f32(h.omega0);
  w.u8(static_cast<std::uint8_t>(h.bits));
  w.u8(h.cnn_present ? 1 : 0);
}

void write_scale_header(ByteWriter& w, const ScaleRecord& r) {
  w.u32(r.m);
  w.u32(static_cast<std::uint32_t>(r.effective.size()));
  w.bytes(pack_bools(r.effective));
  for (auto id : r.assignment) w.u32(id);
}

struct ScalePayloadSizes {
  std::size_t latents = 0, mask = 0, codebooks = 0, indices = 0;
};

ScalePayloadSizes write_scale_payload(ByteWriter& w, const ScaleRecord& r, int bits, int layers) {
  ScalePayloadSizes s;
  std::size_t start = w.size();
  for (Eigen::Index b = 0; b < r.latents.rows(); ++b)
    for (Eigen::Index j = 0; j < r.latents.cols(); ++j) w.f32(r.latents(b, j));
  s.latents = w.size() - start;
  start = w.size();
  w.bytes(pack_bools(r.mask));
  s.mask = w.size() - start;
  for (int l = 0; l < layers; ++l)
    for (int kind = 0; kind < 2; ++kind) {
      const auto& cb = r.quantized.at(l, kind == 1);
      start = w.size();
      w.u32(static_cast<std::uint32_t>(cb.values.size()));
      for (float v : cb.values) w.f32(v);
      s.codebooks += w.size() - start;
      start = w.size();
      BitPacker p;
      for (auto idx : cb.indices) p.put(idx, bits);
      w.bytes(p.take());
      s.indices += w.size() - start;
    }
  return s;
}

void write_cnn(ByteWriter& w, const CnnQuantized<float>& q) {
  w.u8(static_cast<std::uint8_t>(q.cfg.layers));
  w.u16(static_cast<std::uint16_t>(q.cfg.channels));
  w.u8(static_cast<std::uint8_t>(q.cfg.kernel));
  w.u8(static_cast<std::uint8_t>(q.bits));
  w.u32(static_cast<std::uint32_t>(q.codebook.size()));
  for (float v : q.codebook) w.f32(v);
  BitPacker p;
  for (auto idx : q.indices) p.put(idx, q.bits);
  w.bytes(p.take());
}

std::size_t candidate_count(const MlpGroupConfig& cfg) {
  std::size_t n = 0;
  for (int l = 0; l < cfg.layer_count(); ++l) {
    if (cfg.weight_candidate(l)) n += static_cast<std::size_t>(cfg.fan_in(l) * cfg.fan_out(l));
    if (cfg.bias_candidate(l)) n += static_cast<std::size_t>(cfg.fan_out(l));
  }
  return n * static_cast<std::size_t>(cfg.m);
}

// Kept-parameter count per (layer, kind), implied by the candidate mask.
std::vector<std::size_t> kept_counts(const MlpGroupConfig& cfg, const std::vector<bool>& mask) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  for (int l = 0; l < cfg.layer_count(); ++l)
    for (int kind = 0; kind < 2; ++kind) {
      const bool bias = kind == 1;
      const std::size_t per = static_cast<std::size_t>(bias ? cfg.fan_out(l) : cfg.fan_in(l) * cfg.fan_out(l));
      const std::size_t total = per * static_cast<std::size_t>(cfg.m);
      const bool cand = bias ? cfg.bias_candidate(l) : cfg.weight_candidate(l);
      if (!cand) {
        out.push_back(total);
        continue;
      }
      std::size_t kept = 0;
      for (std::size_t i = 0; i < total; ++i) kept += mask[pos + i] ? 1 : 0;
      pos += total;
      out.push_back(kept);
    }
  return out;
}

ScaleRecord read_scale_header(ByteReader& r, int scale, const ContainerHeader& h) {
  ScaleRecord rec;
  rec.scale = scale;
  rec.m = r.u32();
  const std::uint32_t nbits = r.u32();
  const Dims4 sd = scale_dims(h.dims, scale);
  const std::uint64_t expected = static_cast<std::uint64_t>(sd.x / h.block[0]) * (sd.y / h.block[1]) *
                                 (sd.z / h.block[2]) * static_cast<std::uint64_t>(sd.t);
  if (nbits != expected)
    throw FormatError("scale " + std::to_string(scale) + " block bitset has " + std::to_string(nbits) +
                      " bits, expected " + std::to_string(expected));
  rec.effective = unpack_bools(r.bytes(packed_bytes(nbits, 1)), nbits);
  const auto n_eff = static_cast<std::size_t>(std::count(rec.effective.begin(), rec.effective.end(), true));
  if ((n_eff == 0) != (rec.m == 0) || rec.m > n_eff)
    throw FormatError("scale " + std::to_string(scale) + " has inconsistent MLP and block counts");
  rec.assignment.resize(n_eff);
  for (auto& id : rec.assignment) {
    id = r.u32();
    if (id >= rec.m) throw FormatError("assignment refers to a missing MLP");
  }
  return rec;
}

void read_scale_payload(ByteReader& r, ScaleRecord& rec, const ContainerHeader& h) {
  const auto cfg = h.mlp_config(static_cast<int>(rec.m));
  const auto n_eff = static_cast<Eigen::Index>(rec.assignment.size());
  rec.latents.resize(n_eff, h.latent_dim);
  for (Eigen::Index b = 0; b < n_eff; ++b)
    for (Eigen::Index j = 0; j < h.latent_dim; ++j) rec.latents(b, j) = r.f32();
  const std::size_t ncand = rec.m == 0 ? 0 : candidate_count(cfg);
  rec.mask = unpack_bools(r.bytes(packed_bytes(ncand, 1)), ncand);
  const auto kept = rec.m == 0 ? std::vector<std::size_t>(static_cast<std::size_t>(2 * cfg.layer_count()), 0)
                               : kept_counts(cfg, rec.mask);
  rec.quantized.bits = h.bits;
  rec.quantized.weights.assign(static_cast<std::size_t>(cfg.layer_count()), {});
  rec.quantized.biases.assign(static_cast<std::size_t>(cfg.layer_count()), {});
  for (int l = 0; l < cfg.layer_count(); ++l)
    for (int kind = 0; kind < 2; ++kind) {
      auto& cb = rec.quantized.at(l, kind == 1);
      const std::uint32_t count = r.u32();
      if (count > (1u << h.bits)) throw FormatError("codebook larger than 2^bits");
      cb.values.resize(count);
      for (auto& v : cb.values) v = r.f32();
      const std::size_t n = kept[static_cast<std::size_t>(2 * l + kind)];
      if (n > 0 && count == 0) throw FormatError("kept parameters without a codebook");
      BitUnpacker u(r.bytes(packed_bytes(n, h.bits)));
      cb.indices.resize(n);
      for (auto& idx : cb.indices) {
        idx = u.get(h.bits);
        if (idx >= count) throw FormatError("quantization index exceeds codebook size");
      }
    }
}

CnnQuantized<float> read_cnn(ByteReader& r) {
  CnnQuantized<float> q;
  q.cfg.layers = r.u8();
  q.cfg.channels = r.u16();
  q.cfg.kernel = r.u8();
  q.bits = r.u8();
  q.cfg.validate();
  if (q.bits < 1 || q.bits > 16) throw FormatError("invalid CNN quantization width");
  const std::uint32_t count = r.u32();
  if (count > (1u << q.bits)) throw FormatError("CNN codebook larger than 2^bits");
  q.codebook.resize(count);
  for (auto& v : q.codebook) v = r.f32();
  const auto n = static_cast<std::size_t>(zero_cnn<float>(q.cfg).parameter_count());
  BitUnpacker u(r.bytes(packed_bytes(n, q.bits)));
  q.indices.resize(n);
  for (auto& idx : q.indices) {
    idx = u.get(q.bits);
    if (idx >= count) throw FormatError("CNN quantization index exceeds codebook size");
  }
  return q;
}

std::vector<std::uint8_t> build_payload(const Container& c, std::vector<ScalePayloadSizes>* sizes,
                                        std::size_t* cnn_bytes) {
  ByteWriter w;
  const int layers = c.header.mlp_config(1).layer_count();
  for (const auto& s : c.scales) {
    const auto sz = write_scale_payload(w, s, c.header.bits, layers);
    if (sizes) sizes->push_back(sz);
  }
  const std::size_t before = w.size();
  if (c.cnn) write_cnn(w, *c.cnn);
  if (cnn_bytes) *cnn_bytes = w.size() - before;
  return w.take();
}

}  // namespace

std::vector<std::uint8_t> serialize(const Container& c) {
  if (static_cast<int>(c.scales.size()) != c.header.scales) throw Error("container has missing scales");
  if (c.header.cnn_present != c.cnn.has_value()) throw Error("CNN flag does not match CNN payload");
  ByteWriter w;
  write_fixed_header(w, c.header);
  for (const auto& s : c.scales) write_scale_header(w, s);
  const auto payload = build_payload(c, nullptr, nullptr);
  w.bytes(huffman_encode(payload).to_bytes());
  return w.take();
}

Container deserialize(std::span<const std::uint8_t> bytes, bool allow_partial) {
  ByteReader r(bytes, "container");
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw FormatError("not an ECNR container (bad magic)");
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) throw FormatError("unsupported container version " + std::to_string(version));
  Container c;
  auto& h = c.header;
  h.dims.x = r.u32();
  h.dims.y = r.u32();
  h.dims.z = r.u32();
  h.dims.t = r.u32();
  h.range.lo = r.f32();
  h.range.hi = r.f32();
  h.scales = r.u8();
  for (int a = 0; a < 3; ++a) h.block[a] = r.u16();
  h.latent_dim = r.u16();
  h.neurons = r.u16();
  h.omega0 = r.f32();
  h.bits = r.u8();
  h.cnn_present = r.u8() != 0;
  if (!(h.range.lo < h.range.hi)) throw FormatError("invalid value range in header");
  if (h.bits < 1 || h.bits > 16) throw FormatError("invalid quantization width in header");
  if (h.latent_dim < 1 || h.neurons < 1) throw FormatError("invalid network shape in header");
  try {
    validate(h.pyramid(), h.dims);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent header: ") + e.what());
  }

  std::vector<ScaleRecord> records;
  for (int i = h.scales; i >= 1; --i) records.push_back(read_scale_header(r, i, h));

  const HuffmanBlob blob = HuffmanBlob::from_bytes(bytes.subspan(r.position()), allow_partial);
  const auto payload = huffman_decode(blob, allow_partial);
  c.complete = payload.size() == blob.original_length;
  ByteReader p(payload, "payload");
  for (auto& rec : records) {
    try {
      read_scale_payload(p, rec, h);
    } catch (const FormatError&) {
      if (!allow_partial || c.complete) throw;
      return c;
    }
    c.scales.push_back(std::move(rec));
  }
  if (h.cnn_present) {
    try {
      c.cnn = read_cnn(p);
    } catch (const FormatError&) {
      if (!allow_partial || c.complete) throw;
      return c;
    }
  }
  if (c.complete && p.remaining() != 0) throw FormatError("payload has trailing bytes");
  return c;
}

StorageBreakdown storage(const Container& c) {
  StorageBreakdown s;
  ByteWriter fixed;
  write_fixed_header(fixed, c.header);
  s.fixed_header = fixed.size();
  std::vector<ScalePayloadSizes> sizes;
  const auto payload = build_payload(c, &sizes, &s.cnn);
  s.payload_raw = payload.size();
  s.payload_coded = huffman_encode(payload).to_bytes().size();
  s.file = s.fixed_header + s.payload_coded;
  for (std::size_t i = 0; i < c.scales.size(); ++i) {
    ByteWriter hw;
    write_scale_header(hw, c.scales[i]);
    StorageBreakdown::Scale e;
    e.scale = c.scales[i].scale;
    e.header = hw.size();
    e.latents = sizes[i].latents;
    e.mask = sizes[i].mask;
    e.codebooks = sizes[i].codebooks;
    e.indices = sizes[i].indices;
    s.file += e.header;
    s.scales.push_back(e);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Decoding

MlpGroup<float> rebuild_group(const ContainerHeader& h, const ScaleRecord& r) {
  const auto cfg = h.mlp_config(static_cast<int>(r.m));
  auto g = make_group<float>(cfg, r.latents.rows());
  g.latents = r.latents;
  if (r.m == 0) return g;
  if (r.mask.size() != candidate_count(cfg)) throw FormatError("mask length does not match the network shape");
  std::size_t k = 0;
  for (int l = 0; l < cfg.layer_count(); ++l)
    for (int kind = 0; kind < 2; ++kind) {
      const bool bias = kind == 1;
      if (bias ? !cfg.bias_candidate(l) : !cfg.weight_candidate(l)) continue;
      auto& mask = bias ? g.bias_mask[l] : g.weight_mask[l];
      for (Eigen::Index i = 0; i < mask.flat().size(); ++i) mask.flat()[i] = r.mask[k++] ? 1.0f : 0.0f;
    }
  dequantize(g, r.quantized);
  g.apply_masks();
  return g;
}

namespace {

Assignment record_assignment(const ContainerHeader& h, const ScaleRecord& r) {
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < r.effective.size(); ++i)
    if (r.effective[i]) ids.push_back(static_cast<std::int64_t>(i));
  (void)h;
  return make_assignment(r.scale, static_cast<int>(r.m), std::move(ids),
                         std::vector<int>(r.assignment.begin(), r.assignment.end()));
}

const ScaleRecord& find_scale(const Container& c, int scale) {
  for (const auto& s : c.scales)
    if (s.scale == scale) return s;
  throw FormatError("scale " + std::to_string(scale) + " is not present in the container");
}

}  // namespace

Volume4D decode_scale_content(const ContainerHeader& h, const ScaleRecord& r) {
  const Dims4 sd = scale_dims(h.dims, r.scale);
  Volume4D out(sd);
  if (r.m == 0) return out;
  const auto grid = partition(r.scale, h.pyramid(), sd);
  const auto a = record_assignment(h, r);
  const auto g = rebuild_group(h, r);
  const auto coords = block_coordinates<float>(h.block);
  const auto blocks = infer_blocks(g, a, coords);
  for (int b = 0; b < a.block_count(); ++b)
    scatter_block(out, grid.specs[static_cast<std::size_t>(a.block_ids[static_cast<std::size_t>(b)])], h.block,
                  blocks[static_cast<std::size_t>(b)]);
  return out;
}

namespace {

// The input lies in [-1, 1] after normalization, so the output is held there too.
Volume4D clamp_normalized(Volume4D v) {
  v.values() = v.values().cwiseMax(-1.0f).cwiseMin(1.0f);
  return v;
}

Volume4D decode_normalized(const Container& c, int upto) {
  const auto& h = c.header;
  if (upto < 1 || upto > h.scales)
    throw ConfigError("scale " + std::to_string(upto) + " outside [1, " + std::to_string(h.scales) + "]");
  Volume4D recon = laplacian_decode<float>(h.scales, upto, [&](int scale) {
    return decode_scale_content(h, find_scale(c, scale));
  });
  if (upto == 1 && c.cnn) recon = cnn_forward(dequantize_cnn(*c.cnn), recon);
  return clamp_normalized(std::move(recon));
}

}  // namespace

Volume4D decode_scale(const Container& c, int upto) { return denormalize(decode_normalized(c, upto), c.header.range); }

Volume4D decode(const Container& c) {
  if (!c.complete) throw FormatError("container is truncated");
  return decode_scale(c, 1);
}

Volume4D decode(std::span<const std::uint8_t> bytes) { return decode(deserialize(bytes)); }

Volume4D decode_scale(std::span<const std::uint8_t> bytes, int upto) {
  return decode_scale(deserialize(bytes, true), upto);
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

std::vector<bool> mask_bits(const MlpGroup<float>& g) {
  std::vector<bool> out;
  for (const auto& p : candidate_params(g)) out.push_back(is_kept(g, p));
  return out;
}

double normalized_psnr(const Volume4D& truth, const Volume4D& recon) { return psnr(truth, recon, 2.0); }

}  // namespace

EncodeResult encode(const Volume4D& v, const EncodeConfig& cfg) {
  cfg.validate(v.dims());
  const auto bpm = cfg.resolved_blocks_per_mlp();
  const auto [norm, range] = normalize(v);
  std::ostream* log = cfg.log;

  EncodeResult result;
  Container& c = result.container;
  auto& h = c.header;
  h.dims = v.dims();
  h.range = range;
  h.scales = cfg.pyramid.scales;
  h.block = cfg.pyramid.block;
  h.latent_dim = cfg.latent_dim;
  h.neurons = cfg.neurons;
  h.omega0 = static_cast<float>(cfg.omega0);
  h.bits = cfg.bits;
  h.cnn_present = cfg.enable_cnn;

  const auto truth = build_targets(norm, cfg.pyramid);
  const auto coords = block_coordinates<float>(cfg.pyramid.block);

  auto fit = [&](int scale, const Volume4D& target) {
    const bool coarsest = scale == cfg.pyramid.scales;
    BlockGrid grid = partition(scale, cfg.pyramid, target.dims());
    grid = filter_effective(grid, target, cfg.pyramid.tau, coarsest);
    const int b = bpm[static_cast<std::size_t>(cfg.pyramid.scales - scale)];
    const auto a =
        assign_blocks(grid, target, b, mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(scale)), cfg.kmeans_iters);

    ScaleRecord rec;
    rec.scale = scale;
    rec.m = static_cast<std::uint32_t>(a.m);
    rec.effective = grid.effective;
    rec.assignment.assign(a.cluster_of.begin(), a.cluster_of.end());
    ScaleStats st;
    st.scale = scale;
    st.blocks = grid.size();
    st.effective = a.block_count();
    st.mlps = a.m;
    if (log)
      *log << "event=scale scale=" << scale << " blocks=" << grid.size() << " effective=" << a.block_count()
           << " mlps=" << a.m << "\n";

    if (a.m > 0) {
      std::vector<Eigen::VectorXf> blocks;
      blocks.reserve(static_cast<std::size_t>(a.block_count()));
      for (auto id : a.block_ids) blocks.push_back(extract_block(target, grid.specs[static_cast<std::size_t>(id)], grid.block));
      MlpGroupConfig mcfg = h.mlp_config(a.m);
      mcfg.omega0 = cfg.omega0;
      auto g = init_group<float>(mcfg, a.block_count(), mix_seed(cfg.seed, 200 + static_cast<std::uint64_t>(scale)));
      const double lambda_b = cfg.schedule.lambda_b;
      PruneHook<float> hook = [lambda_b](MlpGroup<float>& grp, const std::vector<double>& loss, double sparsity) {
        const auto scores = importance(grp, loss, lambda_b);
        prune_to_sparsity(grp, scores, sparsity);
      };
      train_scale(g, a, blocks, coords, cfg.schedule, hook, log, scale);
      auto q = quantize_global(g, cfg.bits);
      finetune_codebooks(g, q, a, blocks, coords, cfg.finetune_epochs, cfg.finetune_lr, cfg.schedule.adam, log, scale);
      rec.latents = g.latents;
      rec.mask = mask_bits(g);
      rec.quantized = std::move(q);
      st.sparsity = candidate_sparsity(g);
    } else {
      rec.latents.resize(0, cfg.latent_dim);
      rec.quantized.bits = cfg.bits;
      rec.quantized.weights.assign(static_cast<std::size_t>(h.mlp_config(1).layer_count()), {});
      rec.quantized.biases = rec.quantized.weights;
    }
    Volume4D decoded = decode_scale_content(h, rec);
    c.scales.push_back(std::move(rec));
    result.stats.push_back(st);
    return decoded;
  };

  Volume4D recon = truth.back();
  {
    // Same recurrence as laplacian_encode, keeping per-scale reconstructions for the stats.
    recon = fit(cfg.pyramid.scales, truth[static_cast<std::size_t>(cfg.pyramid.scales - 1)]);
    result.stats.back().psnr = normalized_psnr(truth.back(), recon);
    for (int i = cfg.pyramid.scales - 1; i >= 1; --i) {
      const Volume4D up = upsample(recon);
      recon = combine(up, fit(i, residual(truth[static_cast<std::size_t>(i - 1)], up)));
      result.stats.back().psnr = normalized_psnr(truth[static_cast<std::size_t>(i - 1)], recon);
    }
  }
  for (const auto& st : result.stats)
    if (log)
      *log << "event=scale_done scale=" << st.scale << " effective=" << st.effective << " sparsity=" << st.sparsity
           << " psnr=" << st.psnr << "\n";

  if (cfg.enable_cnn) {
    auto params = init_cnn<float>(cfg.cnn, mix_seed(cfg.seed, 300));
    train_cnn(params, recon, norm, cfg.cnn_epochs, cfg.cnn_lr, cfg.schedule.adam, log);
    c.cnn = quantize_cnn(params, cfg.cnn_bits);
    recon = cnn_forward(dequantize_cnn(*c.cnn), recon);
  }

  result.bytes = serialize(c);
  recon = clamp_normalized(std::move(recon));
  result.psnr = psnr(v, denormalize(recon, range));
  result.compression_rate =
      static_cast<double>(v.dims().count()) * sizeof(float) / static_cast<double>(result.bytes.size());
  if (log)
    *log << "event=done bytes=" << result.bytes.size() << " cr=" << result.compression_rate << " psnr=" << result.psnr
         << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// Files and reporting

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void describe(const Container& c, std::size_t file_size, std::ostream& out) {
  const auto& h = c.header;
  out << "format=ECNR version=" << kFormatVersion << "\n";
  out << "dims=" << h.dims.str() << " range=[" << h.range.lo << "," << h.range.hi << "]\n";
  out << "scales=" << h.scales << " block=" << h.block[0] << "x" << h.block[1] << "x" << h.block[2]
      << " latent_dim=" << h.latent_dim << " neurons=" << h.neurons << " omega0=" << h.omega0 << " bits=" << h.bits
      << " cnn=" << (h.cnn_present ? "yes" : "no") << "\n";
  const double raw = static_cast<double>(h.dims.count()) * sizeof(float);
  out << "file_bytes=" << file_size << " raw_bytes=" << static_cast<std::uint64_t>(raw)
      << " cr=" << std::fixed << std::setprecision(2) << raw / static_cast<double>(file_size)
      << (c.complete ? "" : " truncated=yes") << "\n";
  const auto s = storage(c);
  std::size_t latents = 0, mask = 0, codebooks = 0, indices = 0, meta = s.fixed_header;
  for (std::size_t i = 0; i < s.scales.size(); ++i) {
    const auto& e = s.scales[i];
    const auto& rec = c.scales[i];
    const auto n_eff = std::count(rec.effective.begin(), rec.effective.end(), true);
    out << "scale=" << e.scale << " mlps=" << rec.m << " blocks=" << rec.effective.size() << " effective=" << n_eff
        << " bytes=" << e.total() << " header=" << e.header << " latents=" << e.latents << " mask=" << e.mask
        << " codebooks=" << e.codebooks << " indices=" << e.indices << "\n";
    latents += e.latents;
    mask += e.mask;
    codebooks += e.codebooks;
    indices += e.indices;
    meta += e.header;
  }
  const double total = static_cast<double>(meta + latents + mask + codebooks + indices + s.cnn);
  auto pct = [&](std::size_t v) { return 100.0 * static_cast<double>(v) / total; };
  out << "storage header=" << pct(meta) << "% latents=" << pct(latents) << "% mask=" << pct(mask)
      << "% codebooks=" << pct(codebooks) << "% indices=" << pct(indices) << "% cnn=" << pct(s.cnn) << "%\n";
  out << "payload_bytes=" << s.payload_raw << " entropy_coded_bytes=" << s.payload_coded << "\n";
  out.unsetf(std::ios::fixed);
}

}  // namespace ecnr
