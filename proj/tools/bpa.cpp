// Command-line front end for the pipeline stages.
//
// Exit codes: 0 success, 2 invalid config or usage, 3 missing dependency,
// 4 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bpa/error.hpp"
#include "bpa/log.hpp"
#include "bpa/pipeline.hpp"
#include "bpa/toy.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitRuntime = 4;

struct StageArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string condition;
};

void check_device() {
  const char* device = std::getenv("BPA_DEVICE");
  if (device != nullptr && std::string(device) != "cpu" && std::string(device) != "") {
    throw bpa::ConfigError("BPA_DEVICE", "unsupported device \"" + std::string(device) + "\" (available: cpu)");
  }
}

std::optional<char> parse_condition(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (text.size() != 1) throw bpa::ConfigError("condition", "expected one of A, B, C, D");
  return text[0];
}

void run_stage(bpa::pipeline::Stage stage, const StageArgs& args) {
  using bpa::pipeline::Run;
  Run run(bpa::pipeline::load_config(args.config, args.overrides));
  const auto condition = parse_condition(args.condition);
  if (bpa::pipeline::per_condition(stage) && !condition) {
    for (char c : run.config().conditions) run.execute(stage, c);
  } else {
    run.execute(stage, condition);
  }
  std::cout << run.dir().string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bulk production augmentation pipeline"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  StageArgs args;
  std::function<void()> action;

  for (auto stage : bpa::pipeline::all_stages()) {
    const std::string name(bpa::pipeline::to_string(stage));
    auto* sub = app.add_subcommand(name, "Run the " + name + " stage");
    sub->add_option("-c,--config", args.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", args.overrides, "Override a config key: dotted.key=value");
    if (bpa::pipeline::per_condition(stage)) {
      sub->add_option("--condition", args.condition, "Training condition (default: every configured condition)");
    }
    sub->callback([&action, &args, stage] { action = [&args, stage] { run_stage(stage, args); }; });
  }

  auto* all = app.add_subcommand("run-all", "Run every stage, skipping completed ones");
  all->add_option("-c,--config", args.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  all->add_option("--set", args.overrides, "Override a config key: dotted.key=value");
  all->callback([&action, &args] {
    action = [&args] {
      bpa::pipeline::Run run(bpa::pipeline::load_config(args.config, args.overrides));
      run.execute_all();
      std::cout << run.dir().string() << '\n';
    };
  });

  std::string toy_dir;
  uint64_t toy_seed = 0;
  int64_t toy_size = 32;
  auto* toy = app.add_subcommand("toy-corpus", "Write the procedural toy corpus");
  toy->add_option("dir", toy_dir, "Output directory")->required();
  toy->add_option("--seed", toy_seed, "Corpus seed")->required();
  toy->add_option("--size", toy_size, "Image side in pixels");
  toy->callback([&] {
    action = [&] {
      for (const auto& d : bpa::toy::write_corpus(toy_dir, bpa::toy::default_corpus(toy_seed, toy_size))) {
        std::cout << d.string() << '\n';
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (log_level == "debug") bpa::log::set_level(bpa::log::Level::kDebug);
  if (log_level == "warn") bpa::log::set_level(bpa::log::Level::kWarn);
  if (log_level == "error") bpa::log::set_level(bpa::log::Level::kError);
  if (log_level == "off") bpa::log::set_level(bpa::log::Level::kOff);

  try {
    check_device();
    action();
    return 0;
  } catch (const bpa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const bpa::MissingDependency& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
