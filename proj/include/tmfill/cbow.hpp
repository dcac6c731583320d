#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tmfill/binio.hpp"
#include "tmfill/common.hpp"
#include "tmfill/rng.hpp"

namespace tmfill {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocab {
public:
    static Vocab build(std::span<const std::vector<std::string>> sentences,
                       std::uint64_t min_count) {
        std::unordered_map<std::string, std::uint64_t> counts;
        for (const auto& sent : sentences)
            for (const auto& tok : sent) ++counts[tok];

        std::vector<std::pair<std::string, std::uint64_t>> kept;
        for (auto& [tok, cnt] : counts)
            if (cnt >= min_count) kept.emplace_back(tok, cnt);
        if (kept.empty()) throw Error("empty vocabulary (min_count too high or empty corpus)");

        // ids by descending frequency, ties by folded form
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });

        Vocab v;
        v.min_count_ = min_count;
        v.tokens_.reserve(kept.size());
        v.counts_.reserve(kept.size());
        for (auto& [tok, cnt] : kept) {
            v.index_.emplace(tok, static_cast<std::uint32_t>(v.tokens_.size()));
            v.tokens_.push_back(std::move(tok));
            v.counts_.push_back(cnt);
            v.total_ += cnt;
        }
        return v;
    }

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
    std::uint64_t count(std::uint32_t id) const { return counts_.at(id); }
    std::uint64_t total_count() const { return total_; }
    std::uint64_t min_count() const { return min_count_; }

    std::optional<std::uint32_t> lookup(std::string_view tok) const {
        auto it = index_.find(std::string(tok));
        return it == index_.end() ? std::nullopt : std::make_optional(it->second);
    }

    bool operator==(const Vocab& o) const {
        return tokens_ == o.tokens_ && counts_ == o.counts_ && min_count_ == o.min_count_;
    }

private:
    friend class EmbeddingModel;
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::uint64_t total_ = 0;
    std::uint64_t min_count_ = 1;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct CbowHyperparams {
    std::uint32_t dims = 300;
    std::uint32_t window = 2;      // training context radius; 3 is typical for re-training passes
    std::uint32_t epochs = 5;
    std::uint32_t negatives = 5;
    double learning_rate = 0.025;  // decays linearly to 1e-4 * learning_rate
    double subsample = 0.0;        // frequent-word subsampling threshold, 0 = off
    std::uint64_t seed = 42;

    void validate() const {
        if (dims < 1) throw Error("cbow: dims must be >= 1");
        if (window < 1) throw Error("cbow: window must be >= 1");
        if (negatives < 1) throw Error("cbow: negatives must be >= 1");
        if (!(learning_rate > 0)) throw Error("cbow: learning rate must be positive");
    }

    bool operator==(const CbowHyperparams& o) const = default;
};

struct ScoredToken {
    std::string token;
    double score;

    bool operator==(const ScoredToken& o) const = default;
};

/// CBOW model: input (context) and output (center) embedding matrices, V x D
/// row-major.
class EmbeddingModel {
public:
    EmbeddingModel() = default;

    /// Seeded initial state: input rows uniform in [-0.5/D, 0.5/D) drawn
    /// row-major from PCG32(seed), output rows zero.
    static EmbeddingModel init(Vocab vocab, const CbowHyperparams& hyper) {
        hyper.validate();
        EmbeddingModel m;
        m.vocab_ = std::move(vocab);
        m.hyper_ = hyper;
        const std::size_t v = m.vocab_.size(), d = hyper.dims;
        m.input_.resize(v * d);
        m.output_.assign(v * d, 0.0);
        Pcg32 rng(hyper.seed);
        const double half = 0.5 / static_cast<double>(d);
        for (auto& x : m.input_) x = rng.uniform(-half, half);
        return m;
    }

    const Vocab& vocab() const { return vocab_; }
    const CbowHyperparams& hyper() const { return hyper_; }
    std::size_t dims() const { return hyper_.dims; }

    std::span<double> input_row(std::uint32_t id) {
        return {input_.data() + static_cast<std::size_t>(id) * hyper_.dims, hyper_.dims};
    }
    std::span<const double> input_row(std::uint32_t id) const {
        return {input_.data() + static_cast<std::size_t>(id) * hyper_.dims, hyper_.dims};
    }
    std::span<double> output_row(std::uint32_t id) {
        return {output_.data() + static_cast<std::size_t>(id) * hyper_.dims, hyper_.dims};
    }
    std::span<const double> output_row(std::uint32_t id) const {
        return {output_.data() + static_cast<std::size_t>(id) * hyper_.dims, hyper_.dims};
    }

    const std::vector<double>& input_matrix() const { return input_; }
    const std::vector<double>& output_matrix() const { return output_; }

    bool operator==(const EmbeddingModel& o) const {
        return vocab_ == o.vocab_ && hyper_ == o.hyper_ && input_ == o.input_ &&
               output_ == o.output_;
    }

    void save(std::ostream& os) const;
    static EmbeddingModel load(std::istream& is);

private:
    Vocab vocab_;
    CbowHyperparams hyper_;
    std::vector<double> input_;  // context embeddings
    std::vector<double> output_; // center-word embeddings
};

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

namespace detail {

// sigmoid with the argument clamped to +-30 so exp never overflows; the
// gradient error introduced at the clamp is ~1e-13.
inline double clamped_sigmoid(double x) {
    if (x > 30.0) x = 30.0;
    if (x < -30.0) x = -30.0;
    return 1.0 / (1.0 + std::exp(-x));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace detail

// One negative-sampling SGD step. h is the mean of the context input rows
// (duplicates count twice); loss = -log s(h.o_c) - sum_n log s(-h.o_n).
// All dot products use pre-update values, then the analytic gradients are
// applied to the center row, each negative row, and every context row.
// Returns the pre-update loss.
inline double cbow_step(EmbeddingModel& model, std::span<const std::uint32_t> context_ids,
                        std::uint32_t center_id, std::span<const std::uint32_t> negative_ids,
                        double lr) {
    if (context_ids.empty()) throw Error("cbow_step: empty context");
    const std::size_t d = model.dims();

    std::vector<double> h(d, 0.0);
    for (auto id : context_ids) {
        auto row = model.input_row(id);
        for (std::size_t i = 0; i < d; ++i) h[i] += row[i];
    }
    const double inv_c = 1.0 / static_cast<double>(context_ids.size());
    for (auto& x : h) x *= inv_c;

    double loss = 0.0;
    std::vector<double> h_grad(d, 0.0);

    // (output id, dL/du) pairs; all u computed before any update
    std::vector<std::pair<std::uint32_t, double>> out_grads;
    out_grads.reserve(1 + negative_ids.size());
    {
        double u = detail::dot(h, model.output_row(center_id));
        double sig = detail::clamped_sigmoid(u);
        loss -= std::log(sig);
        out_grads.emplace_back(center_id, sig - 1.0);
    }
    for (auto neg : negative_ids) {
        double u = detail::dot(h, model.output_row(neg));
        double sig = detail::clamped_sigmoid(-u);
        loss -= std::log(sig);
        out_grads.emplace_back(neg, detail::clamped_sigmoid(u));
    }
    if (!std::isfinite(loss)) throw Error("cbow_step: non-finite loss");

    for (auto [id, g] : out_grads) {
        auto row = model.output_row(id);
        for (std::size_t i = 0; i < d; ++i) {
            h_grad[i] += g * row[i];
            row[i] -= lr * g * h[i];
        }
    }
    for (auto id : context_ids) {
        auto row = model.input_row(id);
        for (std::size_t i = 0; i < d; ++i) row[i] -= lr * inv_c * h_grad[i];
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

/// Unigram^(3/4) negative-sampling table, word2vec layout.
class NegativeTable {
public:
    explicit NegativeTable(const Vocab& vocab, std::size_t size = 1'000'000) : table_(size) {
        double z = 0.0;
        const double power = 0.75;
        for (std::uint32_t id = 0; id < vocab.size(); ++id)
            z += std::pow(static_cast<double>(vocab.count(id)), power);
        std::uint32_t id = 0;
        double cum = std::pow(static_cast<double>(vocab.count(0)), power) / z;
        for (std::size_t a = 0; a < size; ++a) {
            table_[a] = id;
            if (static_cast<double>(a + 1) / static_cast<double>(size) > cum &&
                id + 1 < vocab.size()) {
                ++id;
                cum += std::pow(static_cast<double>(vocab.count(id)), power) / z;
            }
        }
    }

    /// Draws until the sample differs from `exclude`.
    std::uint32_t draw(Pcg32& rng, std::uint32_t exclude) const {
        for (;;) {
            std::uint32_t id = table_[rng.bounded(static_cast<std::uint32_t>(table_.size()))];
            if (id != exclude) return id;
        }
    }

private:
    std::vector<std::uint32_t> table_;
};

struct TrainStats {
    std::vector<double> epoch_mean_loss;
    std::size_t positions_per_epoch = 0;
};

// Single-threaded, bit-reproducible for a fixed seed. Per in-vocab center
// position: optional subsample draw, context = in-vocab ids within `window`
// each side (shrinking at boundaries), `negatives` draws from the table
// excluding the center, one SGD step at the linearly decayed rate.
inline EmbeddingModel train_cbow(std::span<const std::vector<std::string>> sentences,
                                 const Vocab& vocab, const CbowHyperparams& hyper,
                                 TrainStats* stats_out = nullptr) {
    hyper.validate();
    if (vocab.size() < 2) throw Error("cbow training needs a vocabulary of at least 2 tokens");

    // encode once; -1 marks out-of-vocab positions (they occupy window slots)
    std::vector<std::vector<std::int32_t>> encoded;
    encoded.reserve(sentences.size());
    std::size_t in_vocab_positions = 0;
    for (const auto& sent : sentences) {
        std::vector<std::int32_t> ids;
        ids.reserve(sent.size());
        for (const auto& tok : sent) {
            auto id = vocab.lookup(tok);
            ids.push_back(id ? static_cast<std::int32_t>(*id) : -1);
            if (id) ++in_vocab_positions;
        }
        encoded.push_back(std::move(ids));
    }
    if (in_vocab_positions == 0) throw Error("cbow training corpus has no in-vocab positions");

    EmbeddingModel model = EmbeddingModel::init(vocab, hyper);
    TrainStats stats;
    stats.positions_per_epoch = in_vocab_positions;
    if (hyper.epochs == 0) {
        if (stats_out) *stats_out = stats;
        return model;
    }

    NegativeTable table(vocab);
    Pcg32 rng(hyper.seed + 1); // distinct stream from the init draws
    const double total_schedule =
        static_cast<double>(hyper.epochs) * static_cast<double>(in_vocab_positions);
    const double lr_floor = 1e-4 * hyper.learning_rate;
    std::size_t step = 0;

    std::vector<std::uint32_t> context;
    std::vector<std::uint32_t> negatives(hyper.negatives);
    for (std::uint32_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_n = 0;
        for (const auto& ids : encoded) {
            const std::size_t len = ids.size();
            for (std::size_t t = 0; t < len; ++t) {
                if (ids[t] < 0) continue;
                const auto center = static_cast<std::uint32_t>(ids[t]);
                double alpha =
                    hyper.learning_rate * (1.0 - static_cast<double>(step) / total_schedule);
                if (alpha < lr_floor) alpha = lr_floor;
                ++step;

                if (hyper.subsample > 0.0) {
                    double freq = static_cast<double>(vocab.count(center));
                    double budget = hyper.subsample * static_cast<double>(vocab.total_count());
                    double keep = (std::sqrt(freq / budget) + 1.0) * budget / freq;
                    if (rng.next_double() > keep) continue;
                }

                context.clear();
                std::size_t lo = t >= hyper.window ? t - hyper.window : 0;
                std::size_t hi = std::min(len, t + hyper.window + 1);
                for (std::size_t c = lo; c < hi; ++c)
                    if (c != t && ids[c] >= 0) context.push_back(static_cast<std::uint32_t>(ids[c]));
                if (context.empty()) continue;

                for (auto& n : negatives) n = table.draw(rng, center);
                loss_sum += cbow_step(model, context, center, negatives, alpha);
                ++loss_n;
            }
        }
        stats.epoch_mean_loss.push_back(loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
    }
    if (stats_out) *stats_out = std::move(stats);
    return model;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// Scores every vocabulary word by h . output_vector(w), where h is the mean
// input vector of the in-vocab anchors (one anchor suffices). Both anchors
// unknown -> empty. Ties broken by ascending id.
inline std::vector<ScoredToken> predict_center(const EmbeddingModel& model, std::string_view left,
                                               std::string_view right, std::size_t k) {
    if (k == 0) throw Error("predict_center requires k >= 1");
    const auto& vocab = model.vocab();
    std::vector<std::uint32_t> anchors;
    if (auto id = vocab.lookup(left)) anchors.push_back(*id);
    if (auto id = vocab.lookup(right)) anchors.push_back(*id);
    if (anchors.empty()) return {};

    const std::size_t d = model.dims();
    std::vector<double> h(d, 0.0);
    for (auto id : anchors) {
        auto row = model.input_row(id);
        for (std::size_t i = 0; i < d; ++i) h[i] += row[i];
    }
    for (auto& x : h) x /= static_cast<double>(anchors.size());

    const std::size_t v = vocab.size();
    std::vector<std::uint32_t> order(v);
    std::vector<double> scores(v);
    for (std::uint32_t id = 0; id < v; ++id) {
        order[id] = id;
        scores[id] = detail::dot(h, model.output_row(id));
    }
    const std::size_t take = std::min(k, v);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                      order.end(), [&](std::uint32_t a, std::uint32_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    std::vector<ScoredToken> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        out.push_back({vocab.token(order[i]), scores[order[i]]});
    return out;
}

// ---------------------------------------------------------------------------
// Model file (versioned, little-endian; see docs/formats.md)
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[8] = {'T', 'M', 'F', 'C', 'B', 'O', 'W', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

inline void EmbeddingModel::save(std::ostream& os) const {
    BinWriter w(os);
    w.bytes(kModelMagic, 8);
    w.u32(kModelVersion);
    w.u64(vocab_.size());
    w.u32(hyper_.dims);
    w.u32(hyper_.window);
    w.u32(hyper_.epochs);
    w.u32(hyper_.negatives);
    w.f64(hyper_.learning_rate);
    w.f64(hyper_.subsample);
    w.u64(hyper_.seed);
    w.u64(vocab_.min_count());
    for (std::uint32_t id = 0; id < vocab_.size(); ++id) {
        w.str(vocab_.token(id));
        w.u64(vocab_.count(id));
    }
    for (double x : input_) w.f64(x);
    for (double x : output_) w.f64(x);
}

inline EmbeddingModel EmbeddingModel::load(std::istream& is) {
    BinReader r(is, "model file");
    expect_magic(r, kModelMagic, "tmfill model");
    expect_version(r.u32(), kModelVersion, "model file");
    EmbeddingModel m;
    std::uint64_t v = r.u64();
    m.hyper_.dims = r.u32();
    m.hyper_.window = r.u32();
    m.hyper_.epochs = r.u32();
    m.hyper_.negatives = r.u32();
    m.hyper_.learning_rate = r.f64();
    m.hyper_.subsample = r.f64();
    m.hyper_.seed = r.u64();
    m.vocab_.min_count_ = r.u64();
    for (std::uint64_t id = 0; id < v; ++id) {
        std::string tok = r.str();
        std::uint64_t cnt = r.u64();
        m.vocab_.index_.emplace(tok, static_cast<std::uint32_t>(id));
        m.vocab_.tokens_.push_back(std::move(tok));
        m.vocab_.counts_.push_back(cnt);
        m.vocab_.total_ += cnt;
    }
    const std::size_t cells = static_cast<std::size_t>(v) * m.hyper_.dims;
    m.input_.resize(cells);
    m.output_.resize(cells);
    for (auto& x : m.input_) x = r.f64();
    for (auto& x : m.output_) x = r.f64();
    return m;
}

} // namespace tmfill
