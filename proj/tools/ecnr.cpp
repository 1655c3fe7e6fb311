#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "ecnr/codec.hpp"
#include "ecnr/metrics.hpp"

namespace {

std::vector<std::int64_t> parse_list(const std::string& text, std::size_t expected, const char* flag) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ecnr::ConfigError(std::string(flag) + ": '" + item + "' is not an integer");
    }
  }
  if (expected != 0 && out.size() != expected)
    throw ecnr::ConfigError(std::string(flag) + " expects " + std::to_string(expected) + " comma-separated values");
  for (auto v : out)
    if (v <= 0) throw ecnr::ConfigError(std::string(flag) + " values must be positive");
  return out;
}

ecnr::Dims4 parse_dims(const std::string& text) {
  const auto v = parse_list(text, 4, "--dims");
  return {v[0], v[1], v[2], v[3]};
}

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("ECNR_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) ecnr::set_thread_count(threads);
}

std::string format_psnr(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << p;
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressive neural representation codec for time-varying volumes"};
  app.require_subcommand(1);
  app.get_formatter()->column_width(34);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0: ECNR_THREADS or all cores)")->capture_default_str();

  // encode
  auto* enc = app.add_subcommand("encode", "compress a raw float32 volume");
  std::string enc_in, enc_out, enc_dims, enc_block = "16,16,16", enc_bpm, enc_log;
  int enc_scales = 3, enc_beta = 8, enc_epochs = 500;
  double enc_lambda = 0.1, enc_tau = 1e-4;
  bool enc_cnn = false;
  std::uint64_t enc_seed = 1;
  enc->add_option("--input", enc_in, "raw input volume")->required();
  enc->add_option("--dims", enc_dims, "X,Y,Z,T")->required();
  enc->add_option("--block", enc_block, "block extent XB,YB,ZB")->capture_default_str();
  enc->add_option("--scales", enc_scales, "pyramid scales")->capture_default_str();
  enc->add_option("--blocks-per-mlp", enc_bpm, "blocks per MLP, coarsest first (default 8,16,32,...)");
  enc->add_option("--beta", enc_beta, "quantization bits")->capture_default_str();
  enc->add_option("--lambda-b", enc_lambda, "loss weight in pruning importance")->capture_default_str();
  enc->add_option("--tau", enc_tau, "effective-block threshold")->capture_default_str();
  enc->add_option("--epochs", enc_epochs, "training epochs per scale (prune epochs scale along)")->capture_default_str();
  enc->add_flag("--cnn", enc_cnn, "train the boundary-artifact CNN (default off)");
  enc->add_option("--seed", enc_seed, "random seed")->capture_default_str();
  enc->add_option("--log", enc_log, "write key=value training log to this file ('-' for stderr)");
  enc->add_option("--output", enc_out, "output container")->required();

  // decode
  auto* dec = app.add_subcommand("decode", "reconstruct a raw float32 volume");
  std::string dec_in, dec_out;
  int dec_upto = 1;
  dec->add_option("--input", dec_in, "container")->required();
  dec->add_option("--upto-scale", dec_upto, "finest scale to include (1: full resolution)")->capture_default_str();
  dec->add_option("--output", dec_out, "raw output volume")->required();

  // info
  auto* inf = app.add_subcommand("info", "print container header and storage breakdown");
  std::string inf_in;
  inf->add_option("--input", inf_in, "container")->required();

  // metrics
  auto* met = app.add_subcommand("metrics", "compare two raw volumes");
  std::string met_a, met_b, met_dims;
  double iso = 0.0;
  met->add_option("--a", met_a, "reference raw volume")->required();
  met->add_option("--b", met_b, "test raw volume")->required();
  met->add_option("--dims", met_dims, "X,Y,Z,T")->required();
  met->add_option("--isovalue", iso, "isovalue for chamfer distance (omit to skip)");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_threads(threads);
    if (*enc) {
      const auto dims = parse_dims(enc_dims);
      const auto block = parse_list(enc_block, 3, "--block");
      ecnr::EncodeConfig cfg;
      cfg.pyramid.scales = enc_scales;
      cfg.pyramid.block = {block[0], block[1], block[2]};
      cfg.pyramid.tau = enc_tau;
      if (!enc_bpm.empty())
        for (auto v : parse_list(enc_bpm, 0, "--blocks-per-mlp")) cfg.blocks_per_mlp.push_back(static_cast<int>(v));
      cfg.bits = enc_beta;
      cfg.schedule.lambda_b = enc_lambda;
      if (enc_epochs != cfg.schedule.epochs) {
        if (enc_epochs < 1) throw ecnr::ConfigError("--epochs must be positive");
        const double f = static_cast<double>(enc_epochs) / cfg.schedule.epochs;
        for (auto& e : cfg.schedule.prune_epochs) e = static_cast<int>(std::lround(e * f));
        cfg.schedule.epochs = enc_epochs;
      }
      cfg.enable_cnn = enc_cnn;
      cfg.seed = enc_seed;
      std::unique_ptr<std::ofstream> log_file;
      if (enc_log == "-") {
        cfg.log = &std::cerr;
      } else if (!enc_log.empty()) {
        log_file = std::make_unique<std::ofstream>(enc_log);
        if (!*log_file) throw ecnr::Error("cannot open log file " + enc_log);
        cfg.log = log_file.get();
      }
      cfg.validate(dims);
      const auto v = ecnr::load_raw(enc_in, dims);
      const auto r = ecnr::encode(v, cfg);
      ecnr::write_file(enc_out, r.bytes);
      for (const auto& s : r.stats)
        std::cout << "scale=" << s.scale << " blocks=" << s.blocks << " effective=" << s.effective
                  << " mlps=" << s.mlps << " sparsity=" << s.sparsity << " psnr=" << format_psnr(s.psnr) << "\n";
      std::cout << "bytes=" << r.bytes.size() << " cr=" << r.compression_rate << " psnr=" << format_psnr(r.psnr)
                << "\n";
    } else if (*dec) {
      const auto bytes = ecnr::read_file(dec_in);
      const auto c = ecnr::deserialize(bytes, true);
      if (!c.complete && dec_upto == 1)
        std::cerr << "warning: container is truncated; decoding the scales present\n";
      const auto v = ecnr::decode_scale(c, dec_upto);
      ecnr::save_raw(dec_out, v);
      std::cout << "dims=" << v.dims().str() << " scale=" << dec_upto << "\n";
    } else if (*inf) {
      const auto bytes = ecnr::read_file(inf_in);
      ecnr::describe(ecnr::deserialize(bytes, true), bytes.size(), std::cout);
    } else if (*met) {
      const auto dims = parse_dims(met_dims);
      const auto a = ecnr::load_raw(met_a, dims);
      const auto b = ecnr::load_raw(met_b, dims);
      std::cout << "psnr=" << format_psnr(ecnr::psnr(a, b)) << " mse=" << ecnr::mse(a, b) << "\n";
      if (met->count("--isovalue") > 0) std::cout << "chamfer=" << ecnr::chamfer(a, b, iso) << "\n";
    }
  } catch (const ecnr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
