#pragma once

#include <cstdint>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "tmfill/common.hpp"

namespace tmfill {

// ---------------------------------------------------------------------------
// UTF-8
// ---------------------------------------------------------------------------

/// Decodes one UTF-8 sequence starting at `i`, advancing `i`. Invalid bytes
/// decode to U+FFFD and advance by one.
inline std::uint32_t utf8_next(std::string_view s, std::size_t& i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
        ++i;
        return c;
    }
    int len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
        len = 2;
        cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
        len = 3;
        cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
        len = 4;
        cp = c & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        unsigned char cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((cc & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (cc & 0x3F);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

inline void utf8_append(std::string& out, std::uint32_t cp) {
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

inline std::vector<std::uint32_t> utf8_decode(std::string_view s) {
    std::vector<std::uint32_t> cps;
    cps.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) cps.push_back(utf8_next(s, i));
    return cps;
}

// ---------------------------------------------------------------------------
// Simple case folding
// ---------------------------------------------------------------------------

// One-to-one case folding over the ranges that matter for European-language
// corpora: ASCII, Latin-1, Latin Extended-A, Latin Extended Additional,
// Greek, Cyrillic, and fullwidth Latin. Codepoints outside these ranges fold
// to themselves.
inline std::uint32_t fold_codepoint(std::uint32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 0x20 : cp;
    // Latin-1 Supplement
    if (cp == 0xB5) return 0x3BC; // micro sign -> greek mu
    if ((cp >= 0xC0 && cp <= 0xD6) || (cp >= 0xD8 && cp <= 0xDE)) return cp + 0x20;
    // Latin Extended-A
    if (cp >= 0x100 && cp <= 0x177) {
        if (cp == 0x130 || cp == 0x131 || cp == 0x138 || cp == 0x149) return cp;
        if (cp <= 0x137) return (cp % 2 == 0) ? cp + 1 : cp;
        if (cp <= 0x148) return (cp % 2 == 1) ? cp + 1 : cp;
        return (cp % 2 == 0) ? cp + 1 : cp;
    }
    if (cp == 0x178) return 0xFF;  // Y with diaeresis
    if (cp >= 0x179 && cp <= 0x17E) return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp == 0x17F) return 0x73;  // long s
    // Greek
    if (cp == 0x386) return 0x3AC;
    if (cp >= 0x388 && cp <= 0x38A) return cp + 0x25;
    if (cp == 0x38C) return 0x3CC;
    if (cp == 0x38E || cp == 0x38F) return cp + 0x3F;
    if ((cp >= 0x391 && cp <= 0x3A1) || (cp >= 0x3A3 && cp <= 0x3AB)) return cp + 0x20;
    if (cp == 0x3C2) return 0x3C3; // final sigma
    // Cyrillic
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
    // Latin Extended Additional
    if (cp >= 0x1E00 && cp <= 0x1E95) return (cp % 2 == 0) ? cp + 1 : cp;
    if (cp == 0x1E9E) return 0xDF; // capital sharp s
    if (cp >= 0x1EA0 && cp <= 0x1EFF) return (cp % 2 == 0) ? cp + 1 : cp;
    // Fullwidth Latin
    if (cp >= 0xFF21 && cp <= 0xFF3A) return cp + 0x20;
    return cp;
}

inline std::string fold_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) utf8_append(out, fold_codepoint(utf8_next(s, i)));
    return out;
}

// ---------------------------------------------------------------------------
// Character classes for the default tokenizer
// ---------------------------------------------------------------------------

inline bool is_space_cp(std::uint32_t cp) {
    if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v') return true;
    switch (cp) {
        case 0x85:
        case 0xA0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200B;
    }
}

// Word characters are letters and digits. ASCII is classified exactly;
// above ASCII, known punctuation/symbol/space blocks are excluded and
// everything else counts as a letter.
inline bool is_word_cp(std::uint32_t cp) {
    if (cp < 0x80)
        return (cp >= '0' && cp <= '9') || (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z');
    if (is_space_cp(cp)) return false;
    if (cp >= 0xA1 && cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return false;       // multiplication/division signs
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;   // punctuation, symbols, arrows, math
    if (cp >= 0x3001 && cp <= 0x303F) return false;   // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE6F) return false;
    if (cp >= 0xFF01 && cp <= 0xFF0F) return false;   // fullwidth punctuation
    if (cp >= 0xFF1A && cp <= 0xFF20) return false;
    if (cp >= 0xFF3B && cp <= 0xFF40) return false;
    if (cp >= 0xFF5B && cp <= 0xFF65) return false;
    return cp != 0xFFFD;
}

// ---------------------------------------------------------------------------
// Token / Segment
// ---------------------------------------------------------------------------

/// One alignment unit: original surface form plus the case-folded form used
/// for all matching.
struct Token {
    std::string surface;
    std::string folded;

    bool operator==(const Token& o) const = default;
};

struct TokenizerConfig {
    enum class Mode { Default, Regex };
    Mode mode = Mode::Default;
    std::string pattern;      // regex mode: tokens are successive matches
    bool case_fold = true;
    bool keep_punct = true;   // default mode: emit punctuation tokens

    bool operator==(const TokenizerConfig& o) const = default;
};

namespace detail {

inline Token make_token(std::string surface, bool case_fold) {
    Token t;
    t.folded = case_fold ? fold_text(surface) : surface;
    t.surface = std::move(surface);
    return t;
}

inline std::vector<Token> tokenize_default(std::string_view text, const TokenizerConfig& cfg) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        std::size_t start = i;
        std::uint32_t cp = utf8_next(text, i);
        if (is_space_cp(cp)) continue;
        if (is_word_cp(cp)) {
            // Maximal run of word characters; U+0027 glues two word chars.
            std::size_t end = i;
            while (end < n) {
                std::size_t probe = end;
                std::uint32_t next = utf8_next(text, probe);
                if (is_word_cp(next)) {
                    end = probe;
                    continue;
                }
                if (next == '\'') {
                    std::size_t after = probe;
                    if (after < n) {
                        std::uint32_t following = utf8_next(text, after);
                        if (is_word_cp(following)) {
                            end = after; // consume apostrophe + word char
                            continue;
                        }
                    }
                }
                break;
            }
            out.push_back(make_token(std::string(text.substr(start, end - start)), cfg.case_fold));
            i = end;
        } else {
            // Each punctuation mark is its own token.
            if (cfg.keep_punct)
                out.push_back(make_token(std::string(text.substr(start, i - start)), cfg.case_fold));
        }
    }
    return out;
}

inline std::vector<Token> tokenize_regex(std::string_view text, const TokenizerConfig& cfg) {
    if (cfg.pattern.empty()) throw Error("tokenizer: regex mode requires a pattern");
    std::regex re;
    try {
        re = std::regex(cfg.pattern);
    } catch (const std::regex_error& e) {
        throw Error(std::string("tokenizer: bad regex pattern: ") + e.what());
    }
    std::vector<Token> out;
    std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        if (it->length() == 0) continue;
        out.push_back(make_token(it->str(), cfg.case_fold));
    }
    return out;
}

} // namespace detail

// Default mode emits maximal runs of letters/digits (with U+0027 allowed
// word-internally) and each punctuation mark as its own token. Note U+2019
// and other typographic quotes are punctuation, so "l'homme" with a curly
// apostrophe splits into three tokens while the ASCII form stays one.
inline std::vector<Token> tokenize(std::string_view text, const TokenizerConfig& cfg = {}) {
    if (cfg.mode == TokenizerConfig::Mode::Regex) return detail::tokenize_regex(text, cfg);
    return detail::tokenize_default(text, cfg);
}

/// A sentence-like unit: the raw text plus its tokens.
struct Segment {
    std::string raw;
    std::vector<Token> tokens;
    std::string lang;

    bool operator==(const Segment& o) const = default;
};

inline Segment make_segment(std::string raw, std::string lang, const TokenizerConfig& cfg = {}) {
    Segment seg;
    seg.tokens = tokenize(raw, cfg);
    seg.raw = std::move(raw);
    seg.lang = std::move(lang);
    return seg;
}

inline std::vector<std::string> folded_tokens(const Segment& seg) {
    std::vector<std::string> out;
    out.reserve(seg.tokens.size());
    for (const auto& t : seg.tokens) out.push_back(t.folded);
    return out;
}

} // namespace tmfill
