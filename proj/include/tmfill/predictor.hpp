#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tmfill/align.hpp"
#include "tmfill/cbow.hpp"
#include "tmfill/common.hpp"
#include "tmfill/text.hpp"

namespace tmfill {

// ---------------------------------------------------------------------------
// Predictor contract
// ---------------------------------------------------------------------------

/// One hole posed to a predictor. Anchor and segment tokens are folded.
struct HoleQuery {
    std::uint32_t id = 0;
    std::string left;
    std::string right;
    std::vector<std::string> masked_segment; // exactly one kHoleMarker
    std::uint32_t hole_index = 0;
    std::string tu_source; // raw other-side segment of the matched unit
    FuzzyBand band = FuzzyBand::B60;
};

struct PredictionCandidate {
    std::string token;
    double score = 0.0;
    bool truncated = false; // backend answered multiple tokens; first kept

    bool operator==(const PredictionCandidate& o) const = default;
};

/// Outcome for one query: candidates (possibly empty) or an error.
struct PredictionResult {
    std::vector<PredictionCandidate> candidates;
    std::optional<std::string> error;

    bool ok() const { return !error.has_value(); }
};

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::string name() const = 0;

    /// At most k candidates, best first. Deterministic for built-ins.
    virtual std::vector<PredictionCandidate> predict(const HoleQuery& query, std::size_t k) = 0;

    /// Batch form; a failure in one query never aborts the rest.
    virtual std::vector<PredictionResult> predict_batch(std::span<const HoleQuery> queries,
                                                        std::size_t k) {
        std::vector<PredictionResult> out(queries.size());
        for (std::size_t i = 0; i < queries.size(); ++i) {
            try {
                out[i].candidates = predict(queries[i], k);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Unigram baseline
// ---------------------------------------------------------------------------

/// Ignores the anchors and always answers the corpus's most frequent tokens.
class UnigramPredictor : public Predictor {
public:
    explicit UnigramPredictor(std::span<const std::vector<std::string>> sentences) {
        std::unordered_map<std::string, std::uint64_t> counts;
        for (const auto& sent : sentences)
            for (const auto& tok : sent) ++counts[tok];
        if (counts.empty()) throw Error("unigram predictor: empty corpus");
        ranked_.assign(counts.begin(), counts.end());
        std::sort(ranked_.begin(), ranked_.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
    }

    std::string name() const override { return "unigram"; }

    std::vector<PredictionCandidate> predict(const HoleQuery&, std::size_t k) override {
        std::vector<PredictionCandidate> out;
        for (std::size_t i = 0; i < std::min(k, ranked_.size()); ++i)
            out.push_back({ranked_[i].first, static_cast<double>(ranked_[i].second), false});
        return out;
    }

private:
    std::vector<std::pair<std::string, std::uint64_t>> ranked_;
};

// ---------------------------------------------------------------------------
// Tri-gram count table
// ---------------------------------------------------------------------------

// Counts (left, right) -> center over every interior corpus position. Doubles
// as the brute-force oracle in the acceptance suite: on text where each
// anchor pair has a unique center it predicts that corpus perfectly.
class TrigramTable {
public:
    using AnchorPair = std::pair<std::string, std::string>;

    void add(const std::string& left, const std::string& center, const std::string& right) {
        ++table_[{left, right}][center];
        ++total_;
    }

    std::uint64_t total() const { return total_; }
    std::size_t n_anchor_pairs() const { return table_.size(); }

    std::uint64_t count(const std::string& left, const std::string& right,
                        const std::string& center) const {
        auto it = table_.find({left, right});
        if (it == table_.end()) return 0;
        auto jt = it->second.find(center);
        return jt == it->second.end() ? 0 : jt->second;
    }

    std::uint64_t pair_total(const std::string& left, const std::string& right) const {
        auto it = table_.find({left, right});
        if (it == table_.end()) return 0;
        std::uint64_t sum = 0;
        for (const auto& [center, cnt] : it->second) sum += cnt;
        return sum;
    }

    /// Centers for (left, right) by count descending, ties lexicographic.
    std::vector<PredictionCandidate> predict(const std::string& left, const std::string& right,
                                             std::size_t k) const {
        auto it = table_.find({left, right});
        if (it == table_.end()) return {};
        std::vector<std::pair<std::string, std::uint64_t>> centers(it->second.begin(),
                                                                   it->second.end());
        std::sort(centers.begin(), centers.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::vector<PredictionCandidate> out;
        for (std::size_t i = 0; i < std::min(k, centers.size()); ++i)
            out.push_back({centers[i].first, static_cast<double>(centers[i].second), false});
        return out;
    }

private:
    struct PairHash {
        std::size_t operator()(const AnchorPair& p) const {
            Fnv1a h;
            h.update(p.first);
            h.update("\x1f");
            h.update(p.second);
            return static_cast<std::size_t>(h.digest());
        }
    };
    std::unordered_map<AnchorPair, std::unordered_map<std::string, std::uint64_t>, PairHash> table_;
    std::uint64_t total_ = 0;
};

inline TrigramTable build_trigram_table(std::span<const std::vector<std::string>> sentences) {
    TrigramTable t;
    for (const auto& sent : sentences)
        for (std::size_t i = 1; i + 1 < sent.size(); ++i)
            t.add(sent[i - 1], sent[i], sent[i + 1]);
    return t;
}

inline std::vector<PredictionCandidate> trigram_predict(const TrigramTable& table,
                                                        const std::string& left,
                                                        const std::string& right, std::size_t k) {
    return table.predict(left, right, k);
}

class TrigramPredictor : public Predictor {
public:
    explicit TrigramPredictor(TrigramTable table) : table_(std::move(table)) {}

    std::string name() const override { return "trigram"; }

    std::vector<PredictionCandidate> predict(const HoleQuery& q, std::size_t k) override {
        return table_.predict(q.left, q.right, k);
    }

    const TrigramTable& table() const { return table_; }

private:
    TrigramTable table_;
};

// ---------------------------------------------------------------------------
// CBOW adapter
// ---------------------------------------------------------------------------

class CbowPredictor : public Predictor {
public:
    explicit CbowPredictor(EmbeddingModel model) : model_(std::move(model)) {}

    std::string name() const override { return "cbow"; }

    std::vector<PredictionCandidate> predict(const HoleQuery& q, std::size_t k) override {
        std::vector<PredictionCandidate> out;
        for (auto& st : predict_center(model_, q.left, q.right, k))
            out.push_back({std::move(st.token), st.score, false});
        return out;
    }

    const EmbeddingModel& model() const { return model_; }

private:
    EmbeddingModel model_;
};

// ---------------------------------------------------------------------------
// Candidate sanitation
// ---------------------------------------------------------------------------

// External backends may answer with several words or with junk. Candidates
// are re-tokenized: no tokens -> dropped, several tokens -> first kept and
// flagged, so nothing multi-token reaches scoring.
inline std::optional<PredictionCandidate> sanitize_candidate(const std::string& text,
                                                             double score,
                                                             const TokenizerConfig& tok = {}) {
    auto tokens = tokenize(text, tok);
    if (tokens.empty()) return std::nullopt;
    PredictionCandidate c;
    c.token = tokens.front().surface;
    c.score = score;
    c.truncated = tokens.size() > 1;
    return c;
}

} // namespace tmfill
