#ifndef XSTFT_CONFIG_HPP_
#define XSTFT_CONFIG_HPP_

#include <string>
#include <utility>
#include <vector>

namespace xstft {

// Line-oriented `key = value` UTF-8 files; '#' starts a comment, blank lines
// are ignored. Later duplicates override earlier ones. Order is preserved.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_config_text(const std::string& text);
KeyValues parse_config_file(const std::string& path);

// Lookup helpers; `found` consumption lets callers reject unknown keys.
const std::string* find_key(const KeyValues& kv, const std::string& key);

}  // namespace xstft

#endif  // XSTFT_CONFIG_HPP_
