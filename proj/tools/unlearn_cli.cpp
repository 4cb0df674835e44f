// unlearn <command> [--config FILE] [--set key.path=value ...]
// Exit status: 0 success, 2 configuration error, 1 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unlearn/error.hpp"
#include "unlearn/experiment.hpp"
#include "unlearn/log.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Unlearnable text experiments"};
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
  bool verbose = false;

  app.add_option("command", command, "gen-data | train | minmin | inject | analyze | eval | partial")
      ->required()
      ->check(CLI::IsMember({"gen-data", "train", "minmin", "inject", "analyze", "eval", "partial"}));
  app.add_option("-c,--config", config_path, "experiment config (JSON)");
  app.add_option("-s,--set", overrides, "override, e.g. train.max_epochs=5")->take_all();
  app.add_flag("-q,--quiet", quiet, "only warnings and errors");
  app.add_flag("-v,--verbose", verbose, "debug logging");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  unlearn::set_log_level(quiet ? unlearn::LogLevel::warning
                                : verbose ? unlearn::LogLevel::debug : unlearn::LogLevel::info);
  try {
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) file = config_path;
    const auto config = unlearn::load_config(file, overrides);
    const auto result = unlearn::run_command(command, config);
    if (command == "eval" || command == "partial")
      std::cout << result.summary.dump(2) << '\n';
    else
      std::cout << result.directory.string() << '\n';
    return 0;
  } catch (const unlearn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
