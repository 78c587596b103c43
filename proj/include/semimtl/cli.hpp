#pragma once

namespace semimtl {

/// Entry point behind the command-line tool. Subcommands: gen-data, train,
/// eval, experiment, gradcheck, report. Returns 0 on success, 1 on usage
/// errors, 2 on runtime failures.
int cli_main(int argc, const char* const* argv);

}  // namespace semimtl
