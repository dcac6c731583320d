#pragma once

#include <string>
#include <vector>

#include "tmfill/corpus.hpp"
#include "tmfill/rng.hpp"
#include "tmfill/text.hpp"

namespace testutil {

/// Random token list over a tiny alphabet, for edit-distance style checks.
inline std::vector<std::string> random_tokens(tmfill::Pcg32& rng, std::size_t max_len,
                                              std::size_t alphabet = 4) {
    static const char* kAlphabet[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
    std::vector<std::string> out;
    std::size_t len = rng.bounded(static_cast<std::uint32_t>(max_len + 1));
    for (std::size_t i = 0; i < len; ++i)
        out.push_back(kAlphabet[rng.bounded(static_cast<std::uint32_t>(alphabet))]);
    return out;
}

inline std::string join(const std::vector<std::string>& toks, const char* sep = " ") {
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i) s += sep;
        s += toks[i];
    }
    return s;
}

/// Memory of n units with random short sentences on both sides.
inline tmfill::TranslationMemory random_memory(tmfill::Pcg32& rng, std::size_t n,
                                               std::size_t max_len = 8,
                                               std::size_t alphabet = 6) {
    tmfill::TranslationMemory tm;
    tm.src_lang = "fr";
    tm.tgt_lang = "en";
    for (std::size_t i = 0; i < n; ++i) {
        tmfill::TranslationUnit u;
        u.id = static_cast<std::uint32_t>(i);
        auto src = random_tokens(rng, max_len, alphabet);
        auto tgt = random_tokens(rng, max_len, alphabet);
        if (tgt.empty()) tgt.push_back("x"); // keep the indexed side non-empty
        u.source = tmfill::make_segment(join(src), "fr");
        u.target = tmfill::make_segment(join(tgt), "en");
        tm.units.push_back(std::move(u));
    }
    return tm;
}

inline tmfill::Segment seg(const std::string& text, const std::string& lang = "en") {
    return tmfill::make_segment(text, lang);
}

inline std::vector<std::string> toks(const tmfill::Segment& s) {
    return tmfill::folded_tokens(s);
}

} // namespace testutil
