#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tmfill/align.hpp"
#include "tmfill/binio.hpp"
#include "tmfill/common.hpp"
#include "tmfill/corpus.hpp"

namespace tmfill {

struct IndexConfig {
    std::uint32_t ngram_order = 1;
    double length_slack = 0.0; // extra tolerance added to the length filter

    bool operator==(const IndexConfig& o) const = default;
};

// Inverted index over one side of a memory. Keys are folded token n-grams
// (joined with 0x1f for n > 1); postings are strictly increasing unit ids.
// The index only narrows the candidate set — scoring is always exact.
class TmIndex {
public:
    Side side() const { return side_; }
    const IndexConfig& config() const { return config_; }
    std::size_t n_units() const { return lengths_.size(); }
    const std::vector<std::uint32_t>& lengths() const { return lengths_; }
    const std::map<std::string, std::vector<std::uint32_t>>& postings() const { return postings_; }
    const std::string& memory_fingerprint() const { return memory_fp_; }

    /// FNV fingerprint of (side, config, lengths, postings).
    std::string fingerprint() const {
        Fnv1a h;
        h.update(side_name(side_));
        h.update_u64(config_.ngram_order);
        h.update_u64(static_cast<std::uint64_t>(config_.length_slack * 1e6));
        for (auto len : lengths_) h.update_u64(len);
        for (const auto& [key, ids] : postings_) {
            h.update(key);
            for (auto id : ids) h.update_u64(id);
        }
        return h.hex();
    }

    static TmIndex build(const TranslationMemory& tm, Side side, IndexConfig config = {});

    std::vector<std::uint32_t> candidates(const Segment& query, double min_fms) const;

    void save(std::ostream& os) const;
    static TmIndex load(std::istream& is);

private:
    static std::string gram_key(std::span<const std::string> toks, std::size_t pos,
                                std::size_t n) {
        if (n == 1) return toks[pos];
        std::string key = toks[pos];
        for (std::size_t k = 1; k < n; ++k) {
            key.push_back('\x1f');
            key += toks[pos + k];
        }
        return key;
    }

    Side side_ = Side::Target;
    IndexConfig config_;
    std::vector<std::uint32_t> lengths_;
    std::map<std::string, std::vector<std::uint32_t>> postings_;
    std::string memory_fp_;
};

inline TmIndex TmIndex::build(const TranslationMemory& tm, Side side, IndexConfig config) {
    if (tm.empty()) throw Error("cannot index an empty memory");
    if (config.ngram_order < 1) throw Error("index n-gram order must be >= 1");
    TmIndex idx;
    idx.side_ = side;
    idx.config_ = config;
    idx.memory_fp_ = tm.fingerprint();
    idx.lengths_.resize(tm.size(), 0);

    std::size_t non_empty = 0;
    const std::size_t n = config.ngram_order;
    for (const auto& unit : tm.units) {
        auto toks = folded_tokens(unit.side(side));
        idx.lengths_[unit.id] = static_cast<std::uint32_t>(toks.size());
        if (!toks.empty()) ++non_empty;
        if (toks.size() < n) continue;
        for (std::size_t p = 0; p + n <= toks.size(); ++p) {
            auto& ids = idx.postings_[gram_key(toks, p, n)];
            if (ids.empty() || ids.back() != unit.id) ids.push_back(unit.id);
        }
    }
    if (non_empty == 0)
        throw Error(std::string("cannot index: every ") + side_name(side) + " segment is empty");
    return idx;
}

// Superset of every unit with FMS(query, unit) >= min_fms. Pruning combines
// the length bound |len(q)-len(u)| <= max_len*(1-f/100) with an n-gram count
// bound (each edit destroys at most n query grams), both slackened so a true
// answer is never dropped.
inline std::vector<std::uint32_t> TmIndex::candidates(const Segment& query, double min_fms) const {
    constexpr double kEps = 1e-9;
    auto qtoks = folded_tokens(query);
    const std::size_t lq = qtoks.size();
    const std::size_t n = config_.ngram_order;

    // Shared-gram counts, capped at the query-side multiplicity.
    std::unordered_map<std::uint32_t, std::uint32_t> shared;
    if (lq >= n && min_fms > 0.0) {
        std::unordered_map<std::string, std::uint32_t> gram_count;
        for (std::size_t p = 0; p + n <= lq; ++p) ++gram_count[gram_key(qtoks, p, n)];
        for (const auto& [key, cnt] : gram_count) {
            auto it = postings_.find(key);
            if (it == postings_.end()) continue;
            for (auto id : it->second) shared[id] += cnt;
        }
    }

    std::vector<std::uint32_t> out;
    const double frac = min_fms / 100.0;
    const double q_grams = lq >= n ? static_cast<double>(lq - n + 1) : 0.0;
    for (std::uint32_t u = 0; u < lengths_.size(); ++u) {
        const std::size_t lu = lengths_[u];
        if (lq == 0 && lu == 0) continue; // score undefined for two empty sides
        const double max_len = static_cast<double>(std::max(lq, lu));
        const double d_max = max_len * (1.0 - frac) + config_.length_slack;
        const double len_diff =
            static_cast<double>(lq > lu ? lq - lu : lu - lq);
        if (len_diff > d_max + kEps) continue;
        double need = (n == 1) ? max_len - d_max : q_grams - d_max * static_cast<double>(n);
        if (need > kEps) {
            auto it = shared.find(u);
            double have = it == shared.end() ? 0.0 : static_cast<double>(it->second);
            if (have + kEps < need) continue;
        }
        out.push_back(u);
    }
    return out;
}

struct LookupOptions {
    bool exclude_exact = false; // drop FMS == 100 results (distance 0)
};

// Top-k units with FMS >= min_fms, ordered by FMS descending then unit id
// ascending; each result carries its canonical edit script. Equivalent to an
// exhaustive scan by construction (candidates() never prunes a true answer;
// FMS ties are compared in exact rational arithmetic).
inline std::vector<FuzzyMatch> fuzzy_lookup(const TmIndex& index, const TranslationMemory& tm,
                                            const Segment& query, double min_fms, std::size_t k,
                                            LookupOptions opts = {}) {
    if (k == 0) throw Error("fuzzy_lookup requires k >= 1");
    auto qtoks = folded_tokens(query);

    struct Scored {
        std::uint32_t id;
        std::uint32_t dist;
        std::size_t max_len;
    };
    std::vector<Scored> scored;
    for (auto id : index.candidates(query, min_fms)) {
        auto utoks = folded_tokens(tm.units.at(id).side(index.side()));
        if (qtoks.empty() && utoks.empty()) continue;
        std::uint32_t d = word_levenshtein(qtoks, utoks);
        if (opts.exclude_exact && d == 0) continue;
        std::size_t max_len = std::max(qtoks.size(), utoks.size());
        // Threshold predicate, kept free of division: (max-d)*100 >= f*max.
        if (static_cast<double>(max_len - d) * 100.0 < min_fms * static_cast<double>(max_len))
            continue;
        scored.push_back({id, d, max_len});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        int c = fms_compare(a.dist, a.max_len, b.dist, b.max_len);
        if (c != 0) return c > 0;
        return a.id < b.id;
    });
    if (scored.size() > k) scored.resize(k);

    std::vector<FuzzyMatch> out;
    out.reserve(scored.size());
    for (const auto& s : scored) {
        FuzzyMatch fm;
        fm.unit_id = s.id;
        fm.fms = 100.0 * (1.0 - static_cast<double>(s.dist) / static_cast<double>(s.max_len));
        fm.script = edit_script(qtoks, folded_tokens(tm.units.at(s.id).side(index.side())));
        out.push_back(std::move(fm));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Snapshot format (versioned, little-endian; see docs/formats.md)
// ---------------------------------------------------------------------------

inline constexpr char kIndexMagic[8] = {'T', 'M', 'F', 'I', 'N', 'D', 'E', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline void TmIndex::save(std::ostream& os) const {
    BinWriter w(os);
    w.bytes(kIndexMagic, 8);
    w.u32(kIndexVersion);
    w.u8(side_ == Side::Source ? 0 : 1);
    w.u32(config_.ngram_order);
    w.f64(config_.length_slack);
    w.str(memory_fp_);
    w.u32(static_cast<std::uint32_t>(lengths_.size()));
    for (auto len : lengths_) w.u32(len);
    w.u64(postings_.size());
    for (const auto& [key, ids] : postings_) {
        w.str(key);
        w.u32(static_cast<std::uint32_t>(ids.size()));
        for (auto id : ids) w.u32(id);
    }
}

inline TmIndex TmIndex::load(std::istream& is) {
    BinReader r(is, "index snapshot");
    expect_magic(r, kIndexMagic, "tmfill index");
    expect_version(r.u32(), kIndexVersion, "index snapshot");
    TmIndex idx;
    idx.side_ = r.u8() == 0 ? Side::Source : Side::Target;
    idx.config_.ngram_order = r.u32();
    idx.config_.length_slack = r.f64();
    idx.memory_fp_ = r.str();
    std::uint32_t n_units = r.u32();
    idx.lengths_.resize(n_units);
    for (auto& len : idx.lengths_) len = r.u32();
    std::uint64_t n_keys = r.u64();
    for (std::uint64_t i = 0; i < n_keys; ++i) {
        std::string key = r.str();
        std::uint32_t n_ids = r.u32();
        std::vector<std::uint32_t> ids(n_ids);
        for (auto& id : ids) id = r.u32();
        idx.postings_.emplace(std::move(key), std::move(ids));
    }
    return idx;
}

} // namespace tmfill
