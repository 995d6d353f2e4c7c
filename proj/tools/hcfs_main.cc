// Command-line surface: encode / decode / eval / train-toy / bdrate /
// selftest.  Exit codes: 0 success, 1 usage, 2 I/O, 3 format or decode,
// 4 selftest failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hcfs/bdrate.h"
#include "hcfs/codec.h"
#include "hcfs/selftest.h"
#include "hcfs/train.h"

namespace {

using json = nlohmann::json;
using Scalar = float;

hcfs::ModelConfig config_from_json(const json& j) {
  if (j.is_string()) {
    std::string name = j.get<std::string>();
    if (name == "desk") return hcfs::ModelConfig::desk();
    if (name == "micro") return hcfs::ModelConfig::micro();
    if (name == "full") return hcfs::ModelConfig::full();
    hcfs::fail<hcfs::Error>("unknown model preset '", name,
                            "' (try desk, micro, full)");
  }
  hcfs::ModelConfig cfg = hcfs::ModelConfig::desk();
  auto get = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get("c", cfg.c);
  get("m", cfg.m);
  get("cz", cfg.cz);
  get("hyper", cfg.hyper);
  get("slices", cfg.slices);
  get("state_dim", cfg.state_dim);
  get("u", cfg.u);
  get("heads", cfg.heads);
  get("afmm_win", cfg.afmm_win);
  get("entropy_win", cfg.entropy_win);
  cfg.validate();
  return cfg;
}

int cmd_encode(const std::string& in, const std::string& out,
               const std::string& ckpt, int lambda_index) {
  hcfs::Model<Scalar> model = hcfs::load_model<Scalar>(ckpt);
  if (lambda_index >= 0) {
    hcfs::require<hcfs::Error>(lambda_index < int(hcfs::kLambdas.size()),
                               "lambda index out of range");
    model.lambda_index = lambda_index;
  }
  hcfs::ImageBuffer img = hcfs::load_ppm(in);
  hcfs::CodedStream stream = hcfs::encode_image(model, img);
  std::vector<uint8_t> bytes = hcfs::write_container(stream);
  hcfs::write_bytes_file(out, bytes);
  double bpp = double(bytes.size()) * 8.0 / (double(img.width) * img.height);
  std::printf("%s: %dx%d -> %zu bytes (%.4f bpp)\n", out.c_str(), img.width,
              img.height, bytes.size(), bpp);
  return 0;
}

int cmd_decode(const std::string& in, const std::string& out,
               const std::string& ckpt) {
  hcfs::Model<Scalar> model = hcfs::load_model<Scalar>(ckpt);
  hcfs::CodedStream stream = hcfs::read_container(hcfs::read_bytes_file(in));
  hcfs::ImageBuffer img = hcfs::decode_image(model, stream);
  hcfs::save_ppm(out, img);
  std::printf("%s: %ux%u\n", out.c_str(), stream.width, stream.height);
  return 0;
}

int cmd_eval(const std::string& in, const std::string& ckpt, bool as_json) {
  hcfs::Model<Scalar> model = hcfs::load_model<Scalar>(ckpt);
  hcfs::ImageBuffer img = hcfs::load_ppm(in);
  hcfs::EvalResult r = hcfs::eval_image(model, img);
  if (as_json) {
    json j = {{"bpp", r.bpp},     {"psnr", r.psnr},   {"mse", r.mse},
              {"bytes", r.bytes}, {"width", r.width}, {"height", r.height}};
    std::cout << j.dump() << "\n";
  } else {
    std::printf("%s: %dx%d  %.4f bpp  %.2f dB (mse %.3f, %zu bytes)\n",
                in.c_str(), r.width, r.height, r.bpp, r.psnr, r.mse, r.bytes);
  }
  return 0;
}

int cmd_train_toy(const std::string& config_path, const std::string& out,
                  const std::string& trace_path, uint64_t cli_seed,
                  bool seed_given) {
  std::ifstream f(config_path);
  hcfs::require<hcfs::IoError>(f.good(), "cannot open config: ", config_path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    hcfs::fail<hcfs::FormatError>("config is not valid JSON: ", e.what());
  }
  hcfs::TrainConfig tc;
  tc.model = j.contains("model") ? config_from_json(j.at("model"))
                                 : hcfs::ModelConfig::desk();
  if (j.contains("lambda_index")) tc.lambda_index = j.at("lambda_index").get<int>();
  if (j.contains("steps")) tc.steps = j.at("steps").get<int>();
  if (j.contains("lr")) tc.lr = j.at("lr").get<double>();
  if (j.contains("clip_norm")) tc.clip_norm = j.at("clip_norm").get<double>();
  if (j.contains("images")) tc.images = j.at("images").get<int>();
  if (j.contains("image_size")) tc.image_size = j.at("image_size").get<int>();
  if (j.contains("seed"))
    tc.seed = j.at("seed").get<uint64_t>();
  else if (seed_given)
    tc.seed = cli_seed;
  (void)tc.lambda();  // validate index

  hcfs::Model<Scalar> model(tc.model, tc.seed);
  std::ofstream trace;
  std::ostream* trace_os = nullptr;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    hcfs::require<hcfs::IoError>(trace.good(), "cannot open trace file: ",
                                 trace_path);
    trace_os = &trace;
  }
  std::vector<hcfs::TraceRow> rows = hcfs::train_toy(model, tc, trace_os);
  hcfs::save_model(out, model);
  std::printf("trained %d steps (lambda %.4f): L %.4f -> %.4f, wrote %s\n",
              tc.steps, tc.lambda(), rows.front().loss, rows.back().loss,
              out.c_str());
  return 0;
}

int cmd_bdrate(const std::string& anchor_path, const std::string& test_path) {
  hcfs::RdCurve anchor = hcfs::parse_rd_csv(anchor_path, "anchor");
  hcfs::RdCurve test = hcfs::parse_rd_csv(test_path, "test");
  std::printf("%+.2f%%\n", hcfs::bd_rate_percent(anchor, test));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned image codec: encode, decode, evaluate, toy-train"};
  app.require_subcommand(1);
  uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "global seed");

  std::string in, out, ckpt, config_path, trace_path, anchor_path, test_path;
  int lambda_index = -1;
  bool as_json = false;

  CLI::App* enc = app.add_subcommand("encode", "compress a PPM image");
  enc->add_option("-i,--input", in, "input image (PPM P6)")->required();
  enc->add_option("-o,--output", out, "output .hcfs file")->required();
  enc->add_option("-m,--model", ckpt, "model checkpoint")->required();
  enc->add_option("--lambda-index", lambda_index,
                  "override recorded lambda index");

  CLI::App* dec = app.add_subcommand("decode", "decompress an .hcfs file");
  dec->add_option("-i,--input", in, "input .hcfs file")->required();
  dec->add_option("-o,--output", out, "output image (PPM P6)")->required();
  dec->add_option("-m,--model", ckpt, "model checkpoint")->required();

  CLI::App* ev = app.add_subcommand("eval", "encode+decode and report rate/quality");
  ev->add_option("-i,--input", in, "input image (PPM P6)")->required();
  ev->add_option("-m,--model", ckpt, "model checkpoint")->required();
  ev->add_flag("--json", as_json, "emit a JSON record");

  CLI::App* tr = app.add_subcommand("train-toy", "train on synthetic textures");
  tr->add_option("--config", config_path, "JSON training config")->required();
  tr->add_option("--out", out, "output checkpoint")->required();
  tr->add_option("--trace", trace_path, "write loss trace CSV here");

  CLI::App* bd = app.add_subcommand("bdrate", "average rate difference of two curves");
  bd->add_option("--anchor", anchor_path, "anchor curve CSV (bpp,psnr)")->required();
  bd->add_option("--test", test_path, "test curve CSV (bpp,psnr)")->required();

  CLI::App* st = app.add_subcommand("selftest", "run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  bool seed_given = seed_opt->count() > 0;

  try {
    if (*enc) return cmd_encode(in, out, ckpt, lambda_index);
    if (*dec) return cmd_decode(in, out, ckpt);
    if (*ev) return cmd_eval(in, ckpt, as_json);
    if (*tr) return cmd_train_toy(config_path, out, trace_path, seed, seed_given);
    if (*bd) return cmd_bdrate(anchor_path, test_path);
    if (*st) {
      int failures = hcfs::run_selftest(std::cout);
      if (failures) {
        std::printf("%d check(s) failed\n", failures);
        return 4;
      }
      std::printf("all checks passed\n");
      return 0;
    }
  } catch (const hcfs::FormatError& e) {  // covers DecodeError
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const hcfs::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
