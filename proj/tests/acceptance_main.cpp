#include <iostream>

#include "idyn/acceptance.hpp"

int main() {
  const int failed = idyn::run_acceptance(std::cout);
  return failed == 0 ? 0 : 1;
}
