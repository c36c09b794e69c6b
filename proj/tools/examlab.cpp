#include <iostream>

#include "examlab/control.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  const auto result = examlab::cli_dispatch(args);
  (result.exit_code == 0 ? std::cout : std::cerr) << result.human_text;
  return result.exit_code;
}
