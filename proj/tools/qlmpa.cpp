#include <exception>
#include <iostream>

#include "qlmpa/cli.hpp"

int main(int argc, char** argv) {
  try {
    const qlmpa::RunConfig cfg = qlmpa::parse_config(argc, argv);
    return qlmpa::run_command(cfg, std::cout);
  } catch (const qlmpa::HelpRequested& h) {
    std::cout << h.what();
    return 0;
  } catch (const qlmpa::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
