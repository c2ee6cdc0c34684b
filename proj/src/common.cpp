// SPDX-License-Identifier: Apache-2.0

#include "serp/common.hpp"

#include <cstdio>

namespace serp {

std::string format_fixed(double v, int decimals)
{
    if (v == 0.0) v = 0.0;  // drop negative zero
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s(buf);
    if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

} // namespace serp
