#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace airtest {

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
  std::string stderr_text;
};

// Runs a command line via the shell, capturing exit status and both streams.
inline RunResult run_command(const std::string& command, const std::string& scratch) {
  const std::string out_file = scratch + "/cmd_stdout.txt";
  const std::string err_file = scratch + "/cmd_stderr.txt";
  const std::string full = command + " >" + out_file + " 2>" + err_file;
  const int status = std::system(full.c_str());
  RunResult r;
  if (status == -1) return r;
#ifdef _WIN32
  r.exit_code = status;
#else
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#endif
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  r.stdout_text = slurp(out_file);
  r.stderr_text = slurp(err_file);
  return r;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace airtest
