#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmfill/common.hpp"
#include "tmfill/corpus.hpp"
#include "tmfill/text.hpp"

namespace tmfill {

// ---------------------------------------------------------------------------
// Word-level Levenshtein
// ---------------------------------------------------------------------------

/// Unit-cost edit distance over folded token sequences.
inline std::uint32_t word_levenshtein(std::span<const std::string> a,
                                      std::span<const std::string> b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return static_cast<std::uint32_t>(m);
    if (m == 0) return static_cast<std::uint32_t>(n);
    std::vector<std::uint32_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<std::uint32_t>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<std::uint32_t>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            std::uint32_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u);
            cur[j] = std::min({prev[j] + 1u, cur[j - 1] + 1u, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// ---------------------------------------------------------------------------
// Edit scripts
// ---------------------------------------------------------------------------

enum class EditKind : std::uint8_t { Match, Substitute, Insert, Delete };

inline const char* edit_kind_name(EditKind k) {
    switch (k) {
        case EditKind::Match: return "match";
        case EditKind::Substitute: return "substitute";
        case EditKind::Insert: return "insert";
        default: return "delete";
    }
}

/// One step aligning query position `qpos` with match position `mpos`.
/// Insert steps consume only the match side, Delete only the query side.
struct EditOp {
    EditKind kind;
    std::optional<std::uint32_t> qpos;
    std::optional<std::uint32_t> mpos;

    bool operator==(const EditOp& o) const = default;
};

struct EditScript {
    std::vector<EditOp> ops;
    std::uint32_t cost = 0;

    bool operator==(const EditScript& o) const = default;
};

// Cost-optimal script; among optimal scripts, the canonical one fixed by the
// backward traceback preference Match > Substitute > Delete > Insert at each
// DP cell.
inline EditScript edit_script(std::span<const std::string> a, std::span<const std::string> b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::uint32_t> dp((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return dp[i * (m + 1) + j]; };
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<std::uint32_t>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        at(i, 0) = static_cast<std::uint32_t>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            std::uint32_t sub = at(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0u : 1u);
            at(i, j) = std::min({at(i - 1, j) + 1u, at(i, j - 1) + 1u, sub});
        }
    }

    EditScript script;
    script.cost = at(n, m);
    std::size_t i = n, j = m;
    std::vector<EditOp> rev;
    rev.reserve(n + m);
    while (i > 0 || j > 0) {
        std::uint32_t here = at(i, j);
        if (i > 0 && j > 0 && a[i - 1] == b[j - 1] && at(i - 1, j - 1) == here) {
            rev.push_back({EditKind::Match, static_cast<std::uint32_t>(i - 1),
                           static_cast<std::uint32_t>(j - 1)});
            --i, --j;
        } else if (i > 0 && j > 0 && a[i - 1] != b[j - 1] && at(i - 1, j - 1) + 1 == here) {
            rev.push_back({EditKind::Substitute, static_cast<std::uint32_t>(i - 1),
                           static_cast<std::uint32_t>(j - 1)});
            --i, --j;
        } else if (i > 0 && at(i - 1, j) + 1 == here) {
            rev.push_back({EditKind::Delete, static_cast<std::uint32_t>(i - 1), std::nullopt});
            --i;
        } else {
            rev.push_back({EditKind::Insert, std::nullopt, static_cast<std::uint32_t>(j - 1)});
            --j;
        }
    }
    script.ops.assign(rev.rbegin(), rev.rend());
    return script;
}

// ---------------------------------------------------------------------------
// Fuzzy-match score
// ---------------------------------------------------------------------------

/// FMS from a known distance: 100 * (1 - d / max(|a|,|b|)).
inline double fms_from_distance(std::uint32_t d, std::size_t len_a, std::size_t len_b) {
    std::size_t mx = std::max(len_a, len_b);
    if (mx == 0) throw Error("fuzzy-match score undefined for two empty sequences");
    return 100.0 * (1.0 - static_cast<double>(d) / static_cast<double>(mx));
}

inline double fms(std::span<const std::string> a, std::span<const std::string> b) {
    return fms_from_distance(word_levenshtein(a, b), a.size(), b.size());
}

/// Exact comparison of (max-d)/max fractions, avoiding double rounding:
/// negative if lhs score < rhs score, 0 if equal, positive if greater.
inline int fms_compare(std::uint32_t d_l, std::size_t max_l, std::uint32_t d_r,
                       std::size_t max_r) {
    // (max_l - d_l)/max_l  vs  (max_r - d_r)/max_r
    std::int64_t lhs = static_cast<std::int64_t>(max_l - d_l) * static_cast<std::int64_t>(max_r);
    std::int64_t rhs = static_cast<std::int64_t>(max_r - d_r) * static_cast<std::int64_t>(max_l);
    return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Fuzzy bands
// ---------------------------------------------------------------------------

enum class FuzzyBand : std::uint8_t { B60, B70, B80, B90 };

inline constexpr const char* kBandLabels[] = {"60-69", "70-79", "80-89", "90-100"};

inline const char* band_label(FuzzyBand b) { return kBandLabels[static_cast<int>(b)]; }

inline std::optional<FuzzyBand> band_from_label(std::string_view label) {
    for (int i = 0; i < 4; ++i)
        if (label == kBandLabels[i]) return static_cast<FuzzyBand>(i);
    return std::nullopt;
}

/// [60,70)->B60, [70,80)->B70, [80,90)->B80, [90,100]->B90; below 60 -> none.
inline std::optional<FuzzyBand> band_of(double fms_percent) {
    if (fms_percent < 60.0) return std::nullopt;
    if (fms_percent < 70.0) return FuzzyBand::B60;
    if (fms_percent < 80.0) return FuzzyBand::B70;
    if (fms_percent < 90.0) return FuzzyBand::B80;
    return FuzzyBand::B90;
}

// ---------------------------------------------------------------------------
// Fuzzy matches and anchored holes
// ---------------------------------------------------------------------------

struct FuzzyMatch {
    std::uint32_t unit_id = 0;
    double fms = 0.0;
    EditScript script;
};

/// Marker standing in for the hidden center word in masked token lists.
inline constexpr std::string_view kHoleMarker = "?";

/// A single-word gap: the query's center word is hidden between two anchors
/// that match the TM segment on both sides.
struct AnchoredHole {
    std::uint32_t query_ref = 0;   // id of the query segment (test unit id)
    std::uint32_t unit_id = 0;     // matched TM unit
    std::uint32_t hole_qpos = 0;   // index of the hidden word in the query
    Token left, right;             // anchors, from the query
    Token reference;               // the query's center word (gold answer)
    Token matched_center;          // the TM match's word at the same spot
    FuzzyBand band = FuzzyBand::B60;
    double fms = 0.0;
    std::vector<std::string> masked_query; // folded tokens with kHoleMarker at hole_qpos
    Segment tu_source;             // matched unit's other side, for MT-style backends
};

// One hole per Substitute whose neighbours in the canonical script are Match
// ops adjacent on both sides. Matches below the 60 band carry no band label
// and yield no holes.
inline std::vector<AnchoredHole> extract_anchored_holes(const Segment& query,
                                                        const FuzzyMatch& match,
                                                        const TranslationMemory& tm,
                                                        Side matched_side = Side::Target,
                                                        std::uint32_t query_ref = 0) {
    std::vector<AnchoredHole> holes;
    auto band = band_of(match.fms);
    if (!band) return holes;
    const TranslationUnit& unit = tm.units.at(match.unit_id);
    const Segment& matched = unit.side(matched_side);
    const auto& ops = match.script.ops;

    for (std::size_t p = 0; p + 1 < ops.size(); ++p) {
        if (p == 0 || ops[p].kind != EditKind::Substitute) continue;
        const EditOp& prev = ops[p - 1];
        const EditOp& next = ops[p + 1];
        if (prev.kind != EditKind::Match || next.kind != EditKind::Match) continue;
        std::uint32_t q = *ops[p].qpos, m = *ops[p].mpos;
        if (*prev.qpos != q - 1 || *prev.mpos != m - 1) continue;
        if (*next.qpos != q + 1 || *next.mpos != m + 1) continue;

        AnchoredHole h;
        h.query_ref = query_ref;
        h.unit_id = match.unit_id;
        h.hole_qpos = q;
        h.left = query.tokens[q - 1];
        h.right = query.tokens[q + 1];
        h.reference = query.tokens[q];
        h.matched_center = matched.tokens[m];
        h.band = *band;
        h.fms = match.fms;
        h.masked_query = folded_tokens(query);
        h.masked_query[q] = std::string(kHoleMarker);
        h.tu_source = unit.other_side(matched_side);
        holes.push_back(std::move(h));
    }
    return holes;
}

} // namespace tmfill
