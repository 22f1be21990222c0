#pragma once

// `swarmcommand` entry point. Exit codes:
//   0   success
//   1-4 gate rejection: NonXml, MalformedXml, IncompleteStructure, UnsupportedNode
//   5   scenario ran but failed (tree Failure or predicate not met)
//   6   scenario timed out
//   7   command rejected by the safety gate
//   64  usage error, missing input file
//   65  bad input data (corpus, config, scenario file)
//   69  a required external endpoint is unavailable
//   70  internal error
//   73  output file exists (use --force) or cannot be written

#include <iosfwd>

namespace swarmcmd::cli {

enum ExitCode : int
{
    kOk = 0,
    kScenarioFailed = 5,
    kTimeout = 6,
    kRejected = 7,
    kUsage = 64,
    kDataError = 65,
    kUnavailable = 69,
    kInternal = 70,
    kCantCreate = 73,
};

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace swarmcmd::cli
