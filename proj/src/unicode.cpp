#include "histsumm/unicode.hpp"

namespace histsumm::utf8 {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

int sequence_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 0;
}

}  // namespace

std::u32string decode(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        const int len = sequence_length(lead);
        if (len == 0 || i + len > text.size()) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        if (len == 1) {
            out.push_back(lead);
            ++i;
            continue;
        }
        char32_t cp = lead & (0xFF >> (len + 1));
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            const auto cont = static_cast<unsigned char>(text[i + k]);
            if ((cont & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cont & 0x3F);
        }
        if (!ok || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append(out, cp);
    return out;
}

char32_t to_lower(char32_t cp) {
    if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
    if (cp < 0xC0) return cp;
    // Latin-1 supplement
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    // Latin Extended-A: mostly even upper / odd lower pairs
    if (cp >= 0x100 && cp <= 0x137) return cp | 1;
    if (cp >= 0x139 && cp <= 0x148) return (cp & 1) ? cp + 1 : cp;
    if (cp >= 0x14A && cp <= 0x177) return cp | 1;
    if (cp == 0x178) return 0xFF;
    if (cp >= 0x179 && cp <= 0x17E) return (cp & 1) ? cp + 1 : cp;
    // Greek
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 0x20;
    // Cyrillic
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
    // Latin extended additional (ẞ -> ß)
    if (cp == 0x1E9E) return 0xDF;
    return cp;
}

std::u32string to_lower(std::u32string_view cps) {
    std::u32string out(cps);
    for (auto& cp : out) cp = to_lower(cp);
    return out;
}

bool is_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_control(char32_t cp) {
    if (is_space(cp)) return false;
    if (cp < 0x20 || (cp >= 0x7F && cp <= 0x9F)) return true;
    // zero-width space, bidi marks and embeddings, BOM
    if (cp == 0x200B || cp == 0x200E || cp == 0x200F) return true;
    if (cp >= 0x202A && cp <= 0x202E) return true;
    if (cp >= 0x2066 && cp <= 0x2069) return true;
    return cp == 0xFEFF;
}

bool is_emoji_or_symbol(char32_t cp) {
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return true;  // mahjong .. symbols & pictographs ext-A
    if (cp >= 0x2600 && cp <= 0x27BF) return true;    // misc symbols, dingbats
    if (cp >= 0x2B00 && cp <= 0x2BFF) return true;    // misc symbols and arrows
    if (cp >= 0x2300 && cp <= 0x23FF) return true;    // misc technical (watch, hourglass, ...)
    if (cp >= 0xFE00 && cp <= 0xFE0F) return true;    // variation selectors
    if (cp >= 0xE0020 && cp <= 0xE007F) return true;  // tag characters
    return cp == 0x200D || cp == 0x20E3;              // ZWJ, combining keycap
}

std::size_t count_chars(std::string_view text) {
    std::size_t n = 0;
    for (char32_t cp : decode(text))
        if (!is_space(cp)) ++n;
    return n;
}

std::vector<std::string> chars(std::string_view text) {
    std::vector<std::string> out;
    for (char32_t cp : decode(text)) {
        if (is_space(cp)) continue;
        std::string s;
        append(s, cp);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char32_t cp : decode(text)) {
        if (is_space(cp)) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            append(current, cp);
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

}  // namespace histsumm::utf8
