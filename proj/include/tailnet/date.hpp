#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace tailnet {

using Date = std::chrono::sys_days;

/// Parses an ISO-8601 calendar day (YYYY-MM-DD). Throws InputError on anything else.
Date parse_date(std::string_view text);

std::string format_date(Date date);

int year_of(Date date);

}  // namespace tailnet
