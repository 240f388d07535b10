#include <string>
#include <vector>

#include "artist/cli/app.hpp"

int main(int argc, char** argv) {
  return artist::cli::run(std::vector<std::string>(argv, argv + argc));
}
