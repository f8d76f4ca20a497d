#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace robocloud::util {

/// Lowercase + trim of surrounding whitespace. The one normalization used
/// for every capability tag in the system.
std::string normalize_tag(std::string_view s);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Formats a double with up to six significant digits and no trailing
/// zeros ("2", "2.5", "3.60555"). Used wherever numbers hit a wire format
/// or a golden file.
std::string fmt_num(double v);

/// Splits "scheme://host[:port]/some/path" into ("scheme://host[:port]",
/// "/some/path"). A URI without a path yields ("", uri) path "/".
std::pair<std::string, std::string> split_uri(const std::string& uri);

/// Minimal syntactic URI check: "<scheme>://<non-empty rest>" with no
/// whitespace or control characters. Empty strings are accepted (unset).
bool is_valid_uri(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

/// Stable 64-bit FNV-1a, used to derive per-robot RNG streams from a
/// scenario seed.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace robocloud::util
