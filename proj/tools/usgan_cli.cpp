// usgan: dataset synthesis, training, enhancement, evaluation and serving.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "usgan/alpha_io.hpp"
#include "usgan/config.hpp"
#include "usgan/log.hpp"
#include "usgan/service.hpp"
#include "usgan/usgan.hpp"

namespace fs = std::filesystem;
using namespace usgan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

AppConfig config_or_default(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double a = 0;
    try {
      a = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("--alphas: '" + item + "' is not a number");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size() || !(a >= 0.0 && a <= 1.0)) throw UsageError("--alphas: '" + item + "' is not a number in [0,1]");
    out.push_back(a);
  }
  if (out.empty()) throw UsageError("--alphas is empty");
  return out;
}

void write_text(const fs::path& p, const std::string& s) { write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())); }

Service* g_service = nullptr;
extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"usgan: switchable CycleGAN for tunable ultrasound-style image enhancement"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path, out_dir, data_dir, checkpoint, in_path, out_path, mask_path, alphas_text = "0,0.25,0.5,0.75,1", csv_path, json_path,
                                                                                                 host;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<int> port, epochs;

  auto* mk = app.add_subcommand("make-dataset", "Synthesize the unpaired phantom dataset");
  mk->add_option("--config,-c", config_path, "Config JSON (dataset section)")->check(CLI::ExistingFile);
  mk->add_option("--out,-o", out_dir, "Output dataset directory")->required();
  mk->add_option("--seed", seed, "Phantom seed (overrides dataset.phantom.seed)");

  auto* tr = app.add_subcommand("train", "Train generator, code generator and discriminators");
  tr->add_option("--config,-c", config_path, "Config JSON (model and train sections)")->check(CLI::ExistingFile);
  tr->add_option("--data,-d", data_dir, "Dataset directory holding manifest.json")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out,-o", out_dir, "Run directory for checkpoints and train.log")->required();
  tr->add_option("--seed", seed, "Training seed (overrides train.seed)");
  tr->add_option("--epochs", epochs, "Epoch count (overrides train.epochs)");

  auto* en = app.add_subcommand("enhance", "Enhance a PNG image or a volume directory");
  en->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  en->add_option("--in,-i", in_path, "Input PNG or volume directory")->required()->check(CLI::ExistingPath);
  en->add_option("--out,-o", out_path, "Output PNG or volume directory")->required();
  auto* alpha_opt = en->add_option("--alpha,-a", alpha, "Global enhancement strength in [0,1]")->check(CLI::Range(0.0, 1.0));
  auto* mask_opt = en->add_option("--mask,-m", mask_path, "Alpha-field PNG (value/255), optional .json region table beside it")
                       ->check(CLI::ExistingFile);
  alpha_opt->excludes(mask_opt);
  en->add_option("--seed", seed, "Accepted for uniformity; enhancement is deterministic");

  auto* ev = app.add_subcommand("eval", "Alpha sweep on the paired evaluation split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data,-d", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--alphas", alphas_text, "Comma-separated alphas")->capture_default_str();
  ev->add_option("--csv", csv_path, "Also write the per-alpha table as CSV here");
  ev->add_option("--json", json_path, "Write the full report (per image) as JSON here");
  ev->add_option("--seed", seed, "Accepted for uniformity; evaluation is deterministic");

  auto* sv = app.add_subcommand("serve", "Serve the HTTP API under /api/v1/");
  sv->add_option("--checkpoint", checkpoint, "Checkpoint directory to load at start")->check(CLI::ExistingDirectory);
  sv->add_option("--config,-c", config_path, "Config JSON (serve section)")->check(CLI::ExistingFile);
  sv->add_option("--port,-p", port, "Listen port (overrides serve.port)");
  sv->add_option("--host", host, "Listen address (overrides serve.host)");
  sv->add_option("--seed", seed, "Accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*mk) {
      AppConfig cfg = config_or_default(config_path);
      if (seed) cfg.dataset.spec.seed = *seed;
      build_dataset(out_dir, cfg.dataset);
      std::cout << (fs::path(out_dir) / "manifest.json").string() << '\n';
    } else if (*tr) {
      AppConfig cfg = config_or_default(config_path);
      if (seed) cfg.train.seed = *seed;
      if (epochs) {
        cfg.train.epochs = *epochs;
        cfg.train.decay_start_epoch = std::min(cfg.train.decay_start_epoch, *epochs - 1);
      }
      cfg.validate();
      const auto manifest = load_dataset_manifest(data_dir);
      fs::create_directories(out_dir);
      fs::remove(fs::path(out_dir) / "train.log");
      write_text(fs::path(out_dir) / "config.json", to_json(cfg).dump(2) + "\n");
      const auto final_dir = run_training(manifest, cfg.model, cfg.train, out_dir);
      std::cout << final_dir.string() << '\n';
    } else if (*en) {
      if (!alpha && mask_path.empty()) throw UsageError("enhance needs --alpha or --mask");
      const auto model = Model::load(checkpoint);
      if (fs::is_directory(in_path)) {
        if (!alpha) throw UsageError("volume enhancement takes --alpha only");
        write_volume_dir(out_path, enhance_volume(read_volume_dir(in_path), *alpha, *model));
      } else {
        EnhanceRequest req;
        req.image.data = read_png(in_path);
        if (alpha) req.alpha = *alpha;
        else req.alpha_field = load_alpha_field(mask_path);
        Image out;
        const double secs = time_seconds([&] { out = enhance_image(req, *model).data; });
        spdlog::info("enhanced {}x{} in {:.3f} s", out.rows(), out.cols(), secs);
        write_png(out_path, out);
      }
    } else if (*ev) {
      const auto model = Model::load(checkpoint);
      const auto report = evaluate(load_eval_pairs(load_dataset_manifest(data_dir)), *model, parse_alphas(alphas_text));
      std::cout << report.to_csv();
      if (!csv_path.empty()) write_text(csv_path, report.to_csv());
      if (!json_path.empty()) write_text(json_path, report.to_json().dump(2) + "\n");
    } else if (*sv) {
      AppConfig cfg = config_or_default(config_path);
      if (port) cfg.serve.port = *port;
      if (!host.empty()) cfg.serve.host = host;
      cfg.serve.validate();
      Service service(cfg.serve.threads, static_cast<std::size_t>(cfg.serve.max_body_mb) << 20);
      if (!checkpoint.empty()) service.load_checkpoint(checkpoint);
      const int bound = service.bind(cfg.serve.host, cfg.serve.port);
      if (bound < 0) throw IoError("cannot bind " + cfg.serve.host);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::info("listening on http://{}:{}{}", cfg.serve.host, bound, kApiPrefix);
      service.serve();
      g_service = nullptr;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
