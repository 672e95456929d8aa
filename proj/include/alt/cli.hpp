#ifndef ALT_CLI_HPP
#define ALT_CLI_HPP

namespace alt {

// Exit codes: 0 success, 1 validation/parameter error, 2 integrity/IO error,
// 3 numeric failure. Errors print one machine-parsable line on stderr:
//   alt: error: <kind>: <message>
int run_cli(int argc, const char* const* argv);

}  // namespace alt

#endif
