/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include <ostream>

namespace idyn {

/// Runs every acceptance criterion, printing one pass/fail line each;
/// returns the number of failures.
int run_acceptance(std::ostream& out);

}  // namespace idyn
