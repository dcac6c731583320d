#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tmfill/align.hpp"
#include "tmfill/common.hpp"
#include "tmfill/corpus.hpp"
#include "tmfill/predictor.hpp"
#include "tmfill/text.hpp"
#include "tmfill/tm_index.hpp"

namespace tmfill {

// ---------------------------------------------------------------------------
// Character match
// ---------------------------------------------------------------------------

// Normalized longest-common-subsequence length over the folded forms:
// |LCS| / max(|predicted|, |reference|), counted in Unicode scalar values.
inline double char_match(std::string_view predicted, std::string_view reference) {
    auto ref = utf8_decode(fold_text(reference));
    if (ref.empty()) throw Error("char_match: reference must be non-empty");
    auto pred = utf8_decode(fold_text(predicted));
    if (pred.empty()) return 0.0;

    const std::size_t n = pred.size(), m = ref.size();
    std::vector<std::uint32_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = pred[i - 1] == ref[j - 1] ? prev[j - 1] + 1
                                               : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

/// Top-1 scoring: correct iff the best candidate's folded token equals the
/// reference's folded form; empty candidate list scores (false, 0).
inline std::pair<bool, double> score_hole(std::span<const PredictionCandidate> candidates,
                                          const Token& reference) {
    if (candidates.empty()) return {false, 0.0};
    const std::string folded = fold_text(candidates.front().token);
    bool correct = folded == reference.folded;
    return {correct, char_match(candidates.front().token, reference.folded)};
}

// ---------------------------------------------------------------------------
// Hole dataset
// ---------------------------------------------------------------------------

struct HoleDataset {
    std::vector<AnchoredHole> holes;
    std::string tm_fingerprint;
    std::string index_fingerprint;
    nlohmann::json config = nlohmann::json::object();

    /// FNV over the serialized hole records.
    std::string fingerprint() const;
};

namespace detail {

inline nlohmann::json hole_to_json(const AnchoredHole& h) {
    nlohmann::json j;
    j["query_ref"] = h.query_ref;
    j["unit_id"] = h.unit_id;
    j["hole_qpos"] = h.hole_qpos;
    j["left"] = h.left.folded;
    j["right"] = h.right.folded;
    j["reference"] = h.reference.folded;
    j["matched_center"] = h.matched_center.folded;
    j["band"] = band_label(h.band);
    j["fms"] = h.fms;
    j["masked_query"] = h.masked_query;
    j["tu_source"] = h.tu_source.raw;
    j["tu_source_lang"] = h.tu_source.lang;
    return j;
}

inline AnchoredHole hole_from_json(const nlohmann::json& j) {
    AnchoredHole h;
    h.query_ref = j.at("query_ref").get<std::uint32_t>();
    h.unit_id = j.at("unit_id").get<std::uint32_t>();
    h.hole_qpos = j.at("hole_qpos").get<std::uint32_t>();
    auto tok = [](const nlohmann::json& v) {
        std::string s = v.get<std::string>();
        return Token{s, s}; // dataset records carry folded forms only
    };
    h.left = tok(j.at("left"));
    h.right = tok(j.at("right"));
    h.reference = tok(j.at("reference"));
    h.matched_center = tok(j.at("matched_center"));
    auto band = band_from_label(j.at("band").get<std::string>());
    if (!band) throw Error("unknown band label in dataset: " + j.at("band").dump());
    h.band = *band;
    h.fms = j.at("fms").get<double>();
    h.masked_query = j.at("masked_query").get<std::vector<std::string>>();
    h.tu_source = make_segment(j.at("tu_source").get<std::string>(),
                               j.value("tu_source_lang", std::string{}));
    return h;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(jobs, n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

} // namespace detail

inline std::string HoleDataset::fingerprint() const {
    Fnv1a h;
    for (const auto& hole : holes) h.update(detail::hole_to_json(hole).dump());
    return h.hex();
}

// For each test segment, the single best fuzzy match with FMS in
// [min_fms, 100) (exact duplicates skipped when exclude_exact), then anchored
// holes from the canonical script. Sub-60 matches yield nothing because they
// fall outside every band.
inline HoleDataset build_hole_dataset(const TranslationMemory& test, const TmIndex& index,
                                      const TranslationMemory& tm, double min_fms = 60.0,
                                      bool exclude_exact = true, std::size_t jobs = 1) {
    HoleDataset ds;
    ds.tm_fingerprint = tm.fingerprint();
    ds.index_fingerprint = index.fingerprint();
    ds.config = {{"min_fms", min_fms},
                 {"side", side_name(index.side())},
                 {"exclude_exact", exclude_exact}};

    std::vector<std::vector<AnchoredHole>> per_unit(test.size());
    detail::parallel_for(test.size(), jobs, [&](std::size_t i) {
        const auto& unit = test.units[i];
        const Segment& query = unit.side(index.side());
        if (query.tokens.empty()) return;
        auto matches = fuzzy_lookup(index, tm, query, min_fms, 1, {exclude_exact});
        if (matches.empty()) return;
        per_unit[i] = extract_anchored_holes(query, matches[0], tm, index.side(), unit.id);
    });
    for (auto& holes : per_unit)
        for (auto& h : holes) ds.holes.push_back(std::move(h));
    return ds;
}

inline void write_hole_dataset(std::ostream& os, const HoleDataset& ds) {
    nlohmann::json head;
    head["type"] = "tmfill-holes";
    head["version"] = 1;
    head["tm_fingerprint"] = ds.tm_fingerprint;
    head["index_fingerprint"] = ds.index_fingerprint;
    head["config"] = ds.config;
    os << head.dump() << '\n';
    for (const auto& h : ds.holes) os << detail::hole_to_json(h).dump() << '\n';
}

inline HoleDataset read_hole_dataset(std::istream& is) {
    HoleDataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("hole dataset: invalid JSON", line_no);
        if (line_no == 1) {
            if (j.value("type", "") != "tmfill-holes")
                throw ParseError("not a tmfill hole dataset (missing header)", 1);
            if (j.value("version", 0) != 1)
                throw Error("hole dataset version mismatch: file has v" +
                            std::to_string(j.value("version", 0)) + ", this build reads v1");
            ds.tm_fingerprint = j.value("tm_fingerprint", "");
            ds.index_fingerprint = j.value("index_fingerprint", "");
            ds.config = j.value("config", nlohmann::json::object());
            continue;
        }
        try {
            ds.holes.push_back(detail::hole_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("hole dataset: ") + e.what(), line_no);
        }
    }
    if (line_no == 0) throw Error("hole dataset is empty (missing header line)");
    return ds;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct BandStats {
    std::size_t n = 0;
    std::size_t correct = 0;
    double char_sum = 0.0;
    std::size_t empty = 0;    // queries answered with no candidates
    std::size_t flagged = 0;  // queries whose answer was truncated to one token
    std::size_t errors = 0;   // per-query backend errors (scored as wrong)

    double accuracy() const { return n ? 100.0 * static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
    double mean_char() const { return n ? char_sum / static_cast<double>(n) : 0.0; }

    void add(bool is_correct, double char_value, bool is_empty, bool is_flagged, bool is_error) {
        ++n;
        if (is_correct) ++correct;
        char_sum += char_value;
        if (is_empty) ++empty;
        if (is_flagged) ++flagged;
        if (is_error) ++errors;
    }
};

struct EvalReport {
    std::string predictor;
    std::size_t k = 1;
    std::string dataset_fingerprint;
    BandStats bands[4];
    BandStats overall;

    const BandStats& band(FuzzyBand b) const { return bands[static_cast<int>(b)]; }
};

/// Scores a prediction batch against the dataset; optionally tees one raw
/// record per hole into `raw_out`.
inline EvalReport score_batch(const HoleDataset& ds, std::span<const PredictionResult> results,
                              const std::string& predictor_name, std::size_t k,
                              std::ostream* raw_out = nullptr) {
    if (results.size() != ds.holes.size())
        throw Error("score_batch: result count does not match hole count");
    EvalReport report;
    report.predictor = predictor_name;
    report.k = k;
    report.dataset_fingerprint = ds.fingerprint();

    if (raw_out) {
        nlohmann::json head;
        head["type"] = "tmfill-raw";
        head["version"] = 1;
        head["predictor"] = predictor_name;
        head["k"] = k;
        head["dataset_fingerprint"] = report.dataset_fingerprint;
        head["config"] = ds.config;
        *raw_out << head.dump() << '\n';
    }

    for (std::size_t i = 0; i < ds.holes.size(); ++i) {
        const AnchoredHole& hole = ds.holes[i];
        const PredictionResult& r = results[i];
        bool is_error = !r.ok();
        bool is_empty = r.ok() && r.candidates.empty();
        bool is_flagged = false;
        for (const auto& c : r.candidates) is_flagged = is_flagged || c.truncated;
        auto [correct, char_value] =
            is_error ? std::pair<bool, double>{false, 0.0} : score_hole(r.candidates, hole.reference);

        report.bands[static_cast<int>(hole.band)].add(correct, char_value, is_empty, is_flagged,
                                                      is_error);
        report.overall.add(correct, char_value, is_empty, is_flagged, is_error);

        if (raw_out) {
            nlohmann::json j = detail::hole_to_json(hole);
            j["id"] = i;
            if (r.error) j["error"] = *r.error;
            auto arr = nlohmann::json::array();
            for (const auto& c : r.candidates)
                arr.push_back({{"token", c.token}, {"score", c.score}, {"truncated", c.truncated}});
            j["candidates"] = arr;
            j["correct"] = correct;
            j["char_match"] = char_value;
            *raw_out << j.dump() << '\n';
        }
    }
    return report;
}

// Poses every hole to the predictor and aggregates per band. Built-in
// predictors may be fanned out over `jobs` threads; batching predictors
// (external backends) receive the whole batch once and parallelize
// internally. Aggregation runs in hole order either way.
inline EvalReport evaluate(const HoleDataset& ds, Predictor& predictor, std::size_t k,
                           std::size_t jobs = 1, std::ostream* raw_out = nullptr,
                           bool fan_out = true) {
    if (k == 0) throw Error("evaluate requires k >= 1");
    std::vector<HoleQuery> queries;
    queries.reserve(ds.holes.size());
    for (std::size_t i = 0; i < ds.holes.size(); ++i) {
        const auto& h = ds.holes[i];
        HoleQuery q;
        q.id = static_cast<std::uint32_t>(i);
        q.left = h.left.folded;
        q.right = h.right.folded;
        q.masked_segment = h.masked_query;
        q.hole_index = h.hole_qpos;
        q.tu_source = h.tu_source.raw;
        q.band = h.band;
        queries.push_back(std::move(q));
    }

    std::vector<PredictionResult> results;
    if (fan_out && jobs > 1) {
        results.resize(queries.size());
        detail::parallel_for(queries.size(), jobs, [&](std::size_t i) {
            try {
                results[i].candidates = predictor.predict(queries[i], k);
            } catch (const std::exception& e) {
                results[i].error = e.what();
            }
        });
    } else {
        results = predictor.predict_batch(queries, k);
    }
    return score_batch(ds, results, predictor.name(), k, raw_out);
}

// ---------------------------------------------------------------------------
// Raw dump re-scoring
// ---------------------------------------------------------------------------

/// Rebuilds an EvalReport from a raw per-hole dump written by score_batch.
inline EvalReport rescore_raw_dump(std::istream& is) {
    std::string line;
    std::size_t line_no = 0;
    EvalReport report;
    HoleDataset ds; // reassembled holes, for fingerprint-free rescoring
    std::vector<PredictionResult> results;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("raw dump: invalid JSON", line_no);
        if (line_no == 1) {
            if (j.value("type", "") != "tmfill-raw")
                throw ParseError("not a tmfill raw dump (missing header)", 1);
            if (j.value("version", 0) != 1)
                throw Error("raw dump version mismatch: file has v" +
                            std::to_string(j.value("version", 0)) + ", this build reads v1");
            report.predictor = j.value("predictor", "");
            report.k = j.value("k", std::size_t{1});
            report.dataset_fingerprint = j.value("dataset_fingerprint", "");
            continue;
        }
        ds.holes.push_back(detail::hole_from_json(j));
        PredictionResult r;
        if (j.contains("error")) r.error = j.at("error").get<std::string>();
        for (const auto& cj : j.value("candidates", nlohmann::json::array())) {
            PredictionCandidate c;
            c.token = cj.at("token").get<std::string>();
            c.score = cj.value("score", 0.0);
            c.truncated = cj.value("truncated", false);
            r.candidates.push_back(std::move(c));
        }
        results.push_back(std::move(r));
    }
    if (line_no == 0) throw Error("raw dump is empty (missing header line)");
    EvalReport scored = score_batch(ds, results, report.predictor, report.k);
    scored.dataset_fingerprint = report.dataset_fingerprint;
    return scored;
}

// ---------------------------------------------------------------------------
// Report serialization and rendering
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json stats_to_json(const BandStats& s) {
    return {{"n", s.n},           {"correct", s.correct}, {"accuracy", s.accuracy()},
            {"mean_char_match", s.mean_char()}, {"char_sum", s.char_sum},
            {"empty", s.empty},   {"flagged", s.flagged}, {"errors", s.errors}};
}

inline BandStats stats_from_json(const nlohmann::json& j) {
    BandStats s;
    s.n = j.at("n").get<std::size_t>();
    s.correct = j.at("correct").get<std::size_t>();
    s.char_sum = j.at("char_sum").get<double>();
    s.empty = j.at("empty").get<std::size_t>();
    s.flagged = j.at("flagged").get<std::size_t>();
    s.errors = j.at("errors").get<std::size_t>();
    return s;
}

/// Shortest round-trip decimal form of a double.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string fmt_fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["type"] = "tmfill-report";
    j["version"] = 1;
    j["predictor"] = r.predictor;
    j["k"] = r.k;
    j["dataset_fingerprint"] = r.dataset_fingerprint;
    j["overall"] = detail::stats_to_json(r.overall);
    auto bands = nlohmann::json::object();
    for (int b = 0; b < 4; ++b)
        bands[kBandLabels[b]] = detail::stats_to_json(r.bands[b]);
    j["bands"] = bands;
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    if (j.value("type", "") != "tmfill-report") throw Error("not a tmfill report file");
    if (j.value("version", 0) != 1)
        throw Error("report version mismatch: file has v" + std::to_string(j.value("version", 0)) +
                    ", this build reads v1");
    EvalReport r;
    r.predictor = j.value("predictor", "");
    r.k = j.value("k", std::size_t{1});
    r.dataset_fingerprint = j.value("dataset_fingerprint", "");
    r.overall = detail::stats_from_json(j.at("overall"));
    for (int b = 0; b < 4; ++b)
        r.bands[b] = detail::stats_from_json(j.at("bands").at(kBandLabels[b]));
    return r;
}

enum class ReportFormat { Csv, Markdown, PlotData };

inline ReportFormat report_format_from_name(std::string_view name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "markdown") return ReportFormat::Markdown;
    if (name == "plot-data") return ReportFormat::PlotData;
    throw Error("unknown report format '" + std::string(name) + "' (csv|markdown|plot-data)");
}

// csv: one row per non-empty band. markdown: accuracy per band, one row per
// predictor. plot-data: band/mean-char series per predictor with round-trip
// number formatting.
inline std::string render_report(std::span<const EvalReport> reports, ReportFormat format) {
    std::ostringstream os;
    switch (format) {
        case ReportFormat::Csv: {
            os << "predictor,band,n,accuracy,mean_char_match,empty,flagged\n";
            for (const auto& r : reports)
                for (int b = 0; b < 4; ++b) {
                    const BandStats& s = r.bands[b];
                    if (s.n == 0) continue;
                    os << r.predictor << ',' << kBandLabels[b] << ',' << s.n << ','
                       << detail::fmt_double(s.accuracy()) << ','
                       << detail::fmt_double(s.mean_char()) << ',' << s.empty << ',' << s.flagged
                       << '\n';
                }
            break;
        }
        case ReportFormat::Markdown: {
            os << "| predictor |";
            for (int b = 0; b < 4; ++b) os << ' ' << kBandLabels[b] << "% |";
            os << "\n|---|---|---|---|---|\n";
            for (const auto& r : reports) {
                os << "| " << r.predictor << " |";
                for (int b = 0; b < 4; ++b) {
                    const BandStats& s = r.bands[b];
                    if (s.n == 0)
                        os << " - |";
                    else
                        os << ' ' << detail::fmt_fixed2(s.accuracy()) << " |";
                }
                os << '\n';
            }
            break;
        }
        case ReportFormat::PlotData: {
            os << "predictor,band,mean_char_match\n";
            for (const auto& r : reports)
                for (int b = 0; b < 4; ++b) {
                    const BandStats& s = r.bands[b];
                    if (s.n == 0) continue;
                    os << r.predictor << ',' << kBandLabels[b] << ','
                       << detail::fmt_double(s.mean_char()) << '\n';
                }
            break;
        }
    }
    return os.str();
}

} // namespace tmfill
