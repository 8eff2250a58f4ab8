#include <exception>
#include <iostream>

#include "CLI11.hpp"

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"CycleVLA inference toolkit: consensus selection, trajectory "
               "decomposition, monitored episodes, and evaluation sweeps"};
  app.require_subcommand(1);
  cyclevla::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
