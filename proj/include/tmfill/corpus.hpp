#pragma once

#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "tmfill/common.hpp"
#include "tmfill/rng.hpp"
#include "tmfill/text.hpp"

namespace tmfill {

enum class Side { Source, Target };

inline const char* side_name(Side s) { return s == Side::Source ? "source" : "target"; }

inline Side side_from_name(std::string_view name) {
    if (name == "source") return Side::Source;
    if (name == "target") return Side::Target;
    throw Error("unknown side '" + std::string(name) + "' (expected source|target)");
}

struct TranslationUnit {
    std::uint32_t id = 0;
    Segment source;
    Segment target;

    const Segment& side(Side s) const { return s == Side::Source ? source : target; }
    const Segment& other_side(Side s) const { return s == Side::Source ? target : source; }
};

struct TranslationMemory {
    std::vector<TranslationUnit> units;
    std::string src_lang;
    std::string tgt_lang;

    std::size_t size() const { return units.size(); }
    bool empty() const { return units.empty(); }

    /// FNV fingerprint over langs and raw texts, stable across runs.
    std::string fingerprint() const {
        Fnv1a h;
        h.update(src_lang);
        h.update("\x1f");
        h.update(tgt_lang);
        for (const auto& u : units) {
            h.update("\x1e");
            h.update(u.source.raw);
            h.update("\x1f");
            h.update(u.target.raw);
        }
        return h.hex();
    }
};

// ---------------------------------------------------------------------------
// Bilingual TSV
// ---------------------------------------------------------------------------

// One `source<TAB>target` pair per line, UTF-8, LF endings. Blank lines are
// skipped; ids number the kept lines 0..n-1.
inline TranslationMemory parse_bitext_tsv(std::istream& in, const std::string& src_lang,
                                          const std::string& tgt_lang,
                                          const TokenizerConfig& tok = {}) {
    TranslationMemory tm;
    tm.src_lang = src_lang;
    tm.tgt_lang = tgt_lang;
    std::string line;
    std::size_t line_no = 0;
    std::uint32_t next_id = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("expected one tab separating source and target", line_no);
        if (line.find('\t', tab + 1) != std::string::npos)
            throw ParseError("more than one tab in line", line_no);
        TranslationUnit u;
        u.id = next_id++;
        u.source = make_segment(line.substr(0, tab), src_lang, tok);
        u.target = make_segment(line.substr(tab + 1), tgt_lang, tok);
        tm.units.push_back(std::move(u));
    }
    return tm;
}

/// Inverse of parse_bitext_tsv for memories whose raw texts are tab/newline free.
inline void write_bitext_tsv(std::ostream& out, const TranslationMemory& tm) {
    for (const auto& u : tm.units) {
        if (u.source.raw.find_first_of("\t\n") != std::string::npos ||
            u.target.raw.find_first_of("\t\n") != std::string::npos)
            throw Error("unit " + std::to_string(u.id) + " contains a tab or newline; cannot serialize as TSV");
        out << u.source.raw << '\t' << u.target.raw << '\n';
    }
}

// ---------------------------------------------------------------------------
// TMX subset
// ---------------------------------------------------------------------------

struct TmxStats {
    std::size_t tus_seen = 0;
    std::size_t tus_skipped = 0;        // tu without both requested languages
    std::size_t inline_tags_stripped = 0;
};

namespace detail {

struct XmlTag {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attrs;
    bool closing = false;
    bool self_closing = false;

    std::string attr(std::string_view key) const {
        for (const auto& [k, v] : attrs)
            if (k == key) return v;
        return {};
    }
};

// Just enough XML to read tu/tuv/seg out of TMX files: tags, attributes,
// comments, CDATA, processing instructions, and the five named entities
// plus numeric references. Line numbers are tracked for error messages.
class TmxScanner {
public:
    explicit TmxScanner(std::istream& in) : in_(in) {
        std::string data((std::istreambuf_iterator<char>(in_)), std::istreambuf_iterator<char>());
        buf_ = std::move(data);
    }

    bool at_end() const { return pos_ >= buf_.size(); }
    std::size_t line() const { return line_; }

    /// Scans to the next tag, appending intervening text to `text_out` if given.
    bool next_tag(XmlTag& tag, std::string* text_out) {
        while (pos_ < buf_.size()) {
            char c = buf_[pos_];
            if (c != '<') {
                if (c == '\n') ++line_;
                if (text_out) {
                    if (c == '&')
                        decode_entity(*text_out);
                    else {
                        text_out->push_back(c);
                        ++pos_;
                    }
                } else {
                    ++pos_;
                }
                continue;
            }
            if (match_ahead("<!--")) {
                skip_until("-->", "comment");
                continue;
            }
            if (match_ahead("<![CDATA[")) {
                read_cdata(text_out);
                continue;
            }
            if (match_ahead("<?")) {
                skip_until("?>", "processing instruction");
                continue;
            }
            if (match_ahead("<!")) {
                skip_until(">", "declaration");
                continue;
            }
            parse_tag(tag);
            return true;
        }
        return false;
    }

private:
    bool match_ahead(std::string_view s) {
        if (buf_.compare(pos_, s.size(), s) != 0) return false;
        advance(s.size());
        return true;
    }

    void advance(std::size_t n) {
        for (std::size_t k = 0; k < n && pos_ < buf_.size(); ++k, ++pos_)
            if (buf_[pos_] == '\n') ++line_;
    }

    void skip_until(std::string_view end, const std::string& what) {
        std::size_t found = buf_.find(end, pos_);
        if (found == std::string::npos) throw ParseError("unterminated " + what, line_);
        advance(found + end.size() - pos_);
    }

    void read_cdata(std::string* text_out) {
        std::size_t found = buf_.find("]]>", pos_);
        if (found == std::string::npos) throw ParseError("unterminated CDATA section", line_);
        if (text_out) text_out->append(buf_, pos_, found - pos_);
        advance(found + 3 - pos_);
    }

    void decode_entity(std::string& out) {
        std::size_t semi = buf_.find(';', pos_);
        if (semi == std::string::npos || semi - pos_ > 12)
            throw ParseError("malformed entity reference", line_);
        std::string name = buf_.substr(pos_ + 1, semi - pos_ - 1);
        pos_ = semi + 1;
        if (name == "amp") out.push_back('&');
        else if (name == "lt") out.push_back('<');
        else if (name == "gt") out.push_back('>');
        else if (name == "quot") out.push_back('"');
        else if (name == "apos") out.push_back('\'');
        else if (!name.empty() && name[0] == '#') {
            std::uint32_t cp = 0;
            try {
                cp = (name.size() > 1 && (name[1] == 'x' || name[1] == 'X'))
                         ? static_cast<std::uint32_t>(std::stoul(name.substr(2), nullptr, 16))
                         : static_cast<std::uint32_t>(std::stoul(name.substr(1), nullptr, 10));
            } catch (...) {
                throw ParseError("malformed numeric character reference '&" + name + ";'", line_);
            }
            utf8_append(out, cp);
        } else {
            throw ParseError("unknown entity '&" + name + ";'", line_);
        }
    }

    void parse_tag(XmlTag& tag) {
        tag = XmlTag{};
        ++pos_; // consume '<'
        if (pos_ < buf_.size() && buf_[pos_] == '/') {
            tag.closing = true;
            ++pos_;
        }
        std::size_t start = pos_;
        while (pos_ < buf_.size() && !is_name_end(buf_[pos_])) ++pos_;
        tag.name = buf_.substr(start, pos_ - start);
        if (tag.name.empty()) throw ParseError("malformed tag", line_);
        for (;;) {
            skip_ws();
            if (pos_ >= buf_.size()) throw ParseError("unterminated tag <" + tag.name, line_);
            if (buf_[pos_] == '>') {
                ++pos_;
                return;
            }
            if (buf_[pos_] == '/') {
                ++pos_;
                if (pos_ >= buf_.size() || buf_[pos_] != '>')
                    throw ParseError("malformed tag <" + tag.name, line_);
                ++pos_;
                tag.self_closing = true;
                return;
            }
            // attribute
            std::size_t astart = pos_;
            while (pos_ < buf_.size() && buf_[pos_] != '=' && !is_name_end(buf_[pos_])) ++pos_;
            std::string key = buf_.substr(astart, pos_ - astart);
            skip_ws();
            if (pos_ >= buf_.size() || buf_[pos_] != '=')
                throw ParseError("attribute '" + key + "' missing value", line_);
            ++pos_;
            skip_ws();
            if (pos_ >= buf_.size() || (buf_[pos_] != '"' && buf_[pos_] != '\''))
                throw ParseError("attribute '" + key + "' value not quoted", line_);
            char quote = buf_[pos_++];
            std::string value;
            while (pos_ < buf_.size() && buf_[pos_] != quote) {
                if (buf_[pos_] == '&')
                    decode_entity(value);
                else {
                    if (buf_[pos_] == '\n') ++line_;
                    value.push_back(buf_[pos_++]);
                }
            }
            if (pos_ >= buf_.size()) throw ParseError("unterminated attribute value", line_);
            ++pos_; // closing quote
            tag.attrs.emplace_back(std::move(key), std::move(value));
        }
    }

    static bool is_name_end(char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '>' || c == '/';
    }

    void skip_ws() {
        while (pos_ < buf_.size() &&
               (buf_[pos_] == ' ' || buf_[pos_] == '\t' || buf_[pos_] == '\n' || buf_[pos_] == '\r')) {
            if (buf_[pos_] == '\n') ++line_;
            ++pos_;
        }
    }

    std::istream& in_;
    std::string buf_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
};

} // namespace detail

// Reads the tu/tuv/seg subset of TMX. A tu contributes one unit when it has
// tuv entries for both requested languages; anything else is skipped and
// counted. The lang attribute may be `xml:lang` or `lang`; matching is
// case-insensitive on the primary subtag ("en" matches "EN-GB").
inline TranslationMemory parse_tmx(std::istream& in, const std::string& src_lang,
                                   const std::string& tgt_lang, const TokenizerConfig& tok = {},
                                   TmxStats* stats_out = nullptr) {
    detail::TmxScanner scanner(in);
    TranslationMemory tm;
    tm.src_lang = src_lang;
    tm.tgt_lang = tgt_lang;
    TmxStats stats;

    auto lang_matches = [](const std::string& attr, const std::string& want) {
        std::string a = fold_text(attr), w = fold_text(want);
        if (a == w) return true;
        return a.size() > w.size() && a.compare(0, w.size(), w) == 0 && a[w.size()] == '-';
    };

    std::vector<std::string> open_tags;
    detail::XmlTag tag;
    bool in_tu = false;
    bool have_src = false, have_tgt = false;
    std::string src_text, tgt_text;
    std::string tuv_lang;
    std::string seg_text;
    bool in_seg = false;

    while (scanner.next_tag(tag, in_seg ? &seg_text : nullptr)) {
        if (tag.closing) {
            if (open_tags.empty() || open_tags.back() != tag.name)
                throw ParseError("mismatched closing tag </" + tag.name + ">", scanner.line());
            open_tags.pop_back();
            if (tag.name == "seg" && in_seg) {
                in_seg = false;
                if (in_tu && !tuv_lang.empty()) {
                    if (lang_matches(tuv_lang, src_lang) && !have_src) {
                        src_text = seg_text;
                        have_src = true;
                    } else if (lang_matches(tuv_lang, tgt_lang) && !have_tgt) {
                        tgt_text = seg_text;
                        have_tgt = true;
                    }
                }
            } else if (tag.name == "tuv") {
                tuv_lang.clear();
            } else if (tag.name == "tu") {
                in_tu = false;
                ++stats.tus_seen;
                if (have_src && have_tgt) {
                    TranslationUnit u;
                    u.id = static_cast<std::uint32_t>(tm.units.size());
                    u.source = make_segment(src_text, src_lang, tok);
                    u.target = make_segment(tgt_text, tgt_lang, tok);
                    tm.units.push_back(std::move(u));
                } else {
                    ++stats.tus_skipped;
                }
            }
            continue;
        }
        if (in_seg && !tag.self_closing) {
            // Inline markup inside seg: drop the tags, keep the text.
            ++stats.inline_tags_stripped;
            open_tags.push_back(tag.name);
            continue;
        }
        if (in_seg && tag.self_closing) {
            ++stats.inline_tags_stripped;
            continue;
        }
        if (!tag.self_closing) open_tags.push_back(tag.name);
        if (tag.name == "tu") {
            in_tu = true;
            have_src = have_tgt = false;
            src_text.clear();
            tgt_text.clear();
        } else if (tag.name == "tuv") {
            tuv_lang = tag.attr("xml:lang");
            if (tuv_lang.empty()) tuv_lang = tag.attr("lang");
        } else if (tag.name == "seg" && !tag.self_closing) {
            in_seg = true;
            seg_text.clear();
        }
    }
    if (!open_tags.empty())
        throw ParseError("unclosed tag <" + open_tags.back() + ">", scanner.line());
    if (stats_out) *stats_out = stats;
    if (tm.units.empty())
        throw Error("empty memory: no translation units with languages '" + src_lang + "' and '" +
                    tgt_lang + "'");
    return tm;
}

// ---------------------------------------------------------------------------
// Deterministic splits
// ---------------------------------------------------------------------------

/// Exact rational in [0,1], parsed from "0.7" or "7/10".
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Fraction parse(std::string_view text) {
        std::string s(text);
        Fraction f;
        std::size_t slash = s.find('/');
        try {
            if (slash != std::string::npos) {
                f.num = std::stoll(s.substr(0, slash));
                f.den = std::stoll(s.substr(slash + 1));
            } else {
                std::size_t dot = s.find('.');
                if (dot == std::string::npos) {
                    f.num = std::stoll(s);
                    f.den = 1;
                } else {
                    std::string whole = s.substr(0, dot), frac = s.substr(dot + 1);
                    if (frac.size() > 18) throw Error("fraction too precise: " + s);
                    std::int64_t den = 1;
                    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
                    f.num = (whole.empty() ? 0 : std::stoll(whole)) * den +
                            (frac.empty() ? 0 : std::stoll(frac));
                    f.den = den;
                }
            }
        } catch (const Error&) {
            throw;
        } catch (...) {
            throw Error("cannot parse fraction '" + s + "'");
        }
        if (f.den <= 0 || f.num < 0) throw Error("fraction out of range: '" + s + "'");
        f.reduce();
        return f;
    }

    void reduce() {
        std::int64_t g = std::gcd(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    Fraction plus(const Fraction& o) const {
        Fraction r{num * o.den + o.num * den, den * o.den};
        r.reduce();
        return r;
    }

    bool is_one() const { return num == den; }
    bool in_unit_interval() const { return num >= 0 && num <= den; }

    /// floor(n * num/den) in exact integer arithmetic.
    std::size_t floor_times(std::size_t n) const {
        return static_cast<std::size_t>(static_cast<std::int64_t>(n) * num / den);
    }
};

struct SplitSpec {
    Fraction train, dev, test;
    std::uint64_t seed = 42;

    void validate() const {
        if (!train.in_unit_interval() || !dev.in_unit_interval() || !test.in_unit_interval())
            throw Error("split fractions must lie in [0,1]");
        if (!train.plus(dev).plus(test).is_one())
            throw Error("split fractions must sum to exactly 1");
    }
};

/// Cut points of the floor rule: [0,cut1) train, [cut1,cut2) dev, [cut2,n) test.
inline std::pair<std::size_t, std::size_t> split_bounds(std::size_t n, const SplitSpec& spec) {
    std::size_t cut1 = spec.train.floor_times(n);
    std::size_t cut2 = spec.train.plus(spec.dev).floor_times(n);
    return {cut1, cut2};
}

struct SplitResult {
    TranslationMemory train, dev, test;
};

// Shuffle ids 0..n-1 with PCG32(seed) Fisher-Yates, then slice contiguously
// at floor(n*train) and floor(n*(train+dev)). Units keep their original ids,
// so the three parts partition the input exactly.
inline SplitResult split_corpus(const TranslationMemory& tm, const SplitSpec& spec,
                                bool require_all_nonempty = false) {
    if (tm.empty()) throw Error("cannot split an empty memory");
    spec.validate();

    std::vector<std::uint32_t> order(tm.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    Pcg32 rng(spec.seed);
    fisher_yates_shuffle(order, rng);

    auto [cut1, cut2] = split_bounds(tm.size(), spec);
    SplitResult r;
    auto fill = [&](TranslationMemory& out, std::size_t lo, std::size_t hi) {
        out.src_lang = tm.src_lang;
        out.tgt_lang = tm.tgt_lang;
        out.units.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) out.units.push_back(tm.units[order[i]]);
    };
    fill(r.train, 0, cut1);
    fill(r.dev, cut1, cut2);
    fill(r.test, cut2, tm.size());
    if (require_all_nonempty && (r.train.empty() || r.dev.empty() || r.test.empty()))
        throw Error("split produced an empty part (n=" + std::to_string(tm.size()) + ")");
    return r;
}

/// Folded token sequences of one side, the shape consumed by vocab/trigram/CBOW builders.
inline std::vector<std::vector<std::string>> folded_side(const TranslationMemory& tm, Side side) {
    std::vector<std::vector<std::string>> out;
    out.reserve(tm.size());
    for (const auto& u : tm.units) out.push_back(folded_tokens(u.side(side)));
    return out;
}

} // namespace tmfill
