#pragma once

#include <functional>
#include <string_view>

namespace nhop {

using WarningSink = std::function<void(std::string_view)>;

/// Emits a warning through the installed sink (stderr by default).
void log_warning(std::string_view message);

/// Replaces the warning sink and returns the previous one. Passing an empty
/// function silences warnings.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace nhop
