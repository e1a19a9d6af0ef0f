#ifndef MFSTEER_IO_HPP
#define MFSTEER_IO_HPP

#include <optional>
#include <string>
#include <string_view>

namespace mfsteer {

/// 17 significant digits, locale independent.
std::string format_double(double value);

/// Whole-string parse, locale independent; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);

}  // namespace mfsteer

#endif  // MFSTEER_IO_HPP
