#pragma once

#include "CLI11.hpp"

namespace cyclevla::cli {

/// Attach every subcommand (mbr-select, decompose, run-episode,
/// gen-scenarios, eval-psucc, sweep) to the app.
void register_commands(CLI::App& app);

}  // namespace cyclevla::cli
