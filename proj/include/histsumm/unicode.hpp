#pragma once

#include <string>
#include <string_view>
#include <vector>

// Minimal UTF-8 helpers. Enough for the scripts this project deals with
// (Latin incl. historical German, Greek, Cyrillic, CJK); no full case folding.
namespace histsumm::utf8 {

/// Decode UTF-8; malformed sequences become U+FFFD.
std::u32string decode(std::string_view text);

std::string encode(std::u32string_view cps);
void append(std::string& out, char32_t cp);

/// Simple lowercase mapping for Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t to_lower(char32_t cp);
std::u32string to_lower(std::u32string_view cps);

bool is_space(char32_t cp);
/// C0/C1 control characters that are not whitespace, plus format controls.
bool is_control(char32_t cp);
/// Emoji, pictographs, dingbats, variation selectors and joiners.
bool is_emoji_or_symbol(char32_t cp);

/// Number of non-whitespace code points.
std::size_t count_chars(std::string_view text);

/// Split into single-code-point strings, skipping whitespace.
std::vector<std::string> chars(std::string_view text);

/// Split on runs of whitespace.
std::vector<std::string> words(std::string_view text);

}  // namespace histsumm::utf8
