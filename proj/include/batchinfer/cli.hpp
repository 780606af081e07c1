#pragma once

#include <ostream>

namespace batchinfer {

// The batchinfer command line:
//   run       --job F --out DIR [--scenario F] [--seed N] [--time-scale X]
//   gen-data  --size N --out DIR [--seed N] [--payload-bytes N] [--records-per-file N]
//   verify    --run DIR | --sink DIR --size N
//   report    --run DIR [--baseline DIR] [--window-ms N] [--plot F.svg]
// Returns the process exit code (see ExitCode).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace batchinfer
