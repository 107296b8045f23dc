#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sc2 {

// Entry point of the sc2 tool; returns the process exit code.
// Subcommands: encode, decode, train, eval, report, synth-dataset, t-test.
int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

} // namespace sc2
