#pragma once

#include <functional>
#include <string_view>

namespace cello {

using WarningSink = std::function<void(std::string_view)>;

/// Routes a non-fatal diagnostic to the installed sink (stderr by default).
void warn(std::string_view message);

/// Replaces the warning sink; pass an empty function to silence warnings.
/// Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace cello
