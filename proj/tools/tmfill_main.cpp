// tmfill: translation-memory fuzzy matching and anchored-word repair.
//
// Pipeline: ingest -> split -> index -> extract -> train-cbow -> predict ->
// eval -> report. Every command writes outputs atomically (temp file +
// rename) and exits nonzero with a one-line `error: ...` on failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tmfill/binio.hpp"
#include "tmfill/cbow.hpp"
#include "tmfill/corpus.hpp"
#include "tmfill/eval.hpp"
#include "tmfill/external.hpp"
#include "tmfill/predictor.hpp"
#include "tmfill/tm_index.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tmfill;

namespace {

struct GlobalOpts {
    std::string src_lang = "fr";
    std::string tgt_lang = "en";
    std::string tok_mode = "default";
    std::string tok_pattern;
    bool tok_case_fold = true;
    bool tok_keep_punct = true;
    std::size_t jobs = 1;

    TokenizerConfig tokenizer() const {
        TokenizerConfig cfg;
        if (tok_mode == "regex")
            cfg.mode = TokenizerConfig::Mode::Regex;
        else if (tok_mode != "default")
            throw Error("unknown tokenizer mode '" + tok_mode + "' (default|regex)");
        cfg.pattern = tok_pattern;
        cfg.case_fold = tok_case_fold;
        cfg.keep_punct = tok_keep_punct;
        return cfg;
    }

    json provenance() const {
        return {{"src_lang", src_lang},
                {"tgt_lang", tgt_lang},
                {"tokenizer",
                 {{"mode", tok_mode},
                  {"pattern", tok_pattern},
                  {"case_fold", tok_case_fold},
                  {"keep_punct", tok_keep_punct}}},
                {"jobs", jobs}};
    }
};

void add_global_options(CLI::App& app, GlobalOpts& g) {
    app.add_option("--src-lang", g.src_lang, "source language tag")->capture_default_str();
    app.add_option("--tgt-lang", g.tgt_lang, "target language tag")->capture_default_str();
    app.add_option("--tokenizer.mode", g.tok_mode, "tokenizer mode: default|regex")
        ->capture_default_str();
    app.add_option("--tokenizer.pattern", g.tok_pattern, "token pattern for regex mode");
    app.add_flag("--tokenizer.case-fold,!--tokenizer.no-case-fold", g.tok_case_fold,
                 "fold case for matching (default on)");
    app.add_flag("--tokenizer.keep-punct,!--tokenizer.no-keep-punct", g.tok_keep_punct,
                 "emit punctuation tokens (default on)");
    app.add_option("--jobs", g.jobs, "worker threads for batch stages")->capture_default_str();
}

void echo_config(const std::string& command, const json& effective) {
    std::cerr << "# " << command << " config " << effective.dump() << "\n";
}

/// Command-specific keys merged over the shared tokenizer/lang/jobs echo.
json with_globals(json base, const GlobalOpts& g) {
    base.update(g.provenance(), true);
    return base;
}

TranslationMemory load_tsv(const fs::path& path, const GlobalOpts& g) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    return parse_bitext_tsv(is, g.src_lang, g.tgt_lang, g.tokenizer());
}

TmIndex load_index(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    return TmIndex::load(is);
}

HoleDataset load_dataset(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    return read_hole_dataset(is);
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string in, out;
    std::string format = "auto"; // tmx|tsv|auto
};

int cmd_ingest(const IngestArgs& a, const GlobalOpts& g) {
    std::string format = a.format;
    if (format == "auto") {
        auto ext = fs::path(a.in).extension().string();
        format = (ext == ".tmx" || ext == ".xml") ? "tmx" : "tsv";
    }
    TranslationMemory tm;
    if (format == "tmx") {
        std::ifstream is(a.in, std::ios::binary);
        if (!is) throw Error("cannot open " + a.in);
        TmxStats stats;
        tm = parse_tmx(is, g.src_lang, g.tgt_lang, g.tokenizer(), &stats);
        if (stats.tus_skipped)
            std::cerr << "warning: skipped " << stats.tus_skipped
                      << " tu(s) without both languages\n";
        if (stats.inline_tags_stripped)
            std::cerr << "warning: stripped " << stats.inline_tags_stripped
                      << " inline tag(s) inside seg elements\n";
    } else if (format == "tsv") {
        tm = load_tsv(a.in, g);
    } else {
        throw Error("unknown ingest format '" + format + "' (tmx|tsv)");
    }

    // canonical TSV forbids tabs and newlines inside fields
    std::size_t cleaned = 0;
    for (auto& u : tm.units) {
        for (auto* seg : {&u.source, &u.target}) {
            bool touched = false;
            std::string raw = seg->raw;
            for (char& c : raw)
                if (c == '\t' || c == '\n' || c == '\r') {
                    c = ' ';
                    touched = true;
                }
            if (touched) {
                *seg = make_segment(raw, seg->lang, g.tokenizer());
                ++cleaned;
            }
        }
    }
    if (cleaned) std::cerr << "warning: replaced tabs/newlines inside " << cleaned << " segment(s)\n";

    atomic_write_file(a.out, [&](std::ostream& os) { write_bitext_tsv(os, tm); });
    std::cerr << "ingested " << tm.size() << " units -> " << a.out << "\n";
    echo_config("ingest",
                with_globals({{"in", a.in}, {"out", a.out}, {"format", format}}, g));
    return 0;
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

struct SplitArgs {
    std::string in;
    std::string ratios = "0.7,0.2,0.1";
    std::uint64_t seed = 42;
    std::string out_prefix;
    bool require_nonempty = false;
};

SplitSpec parse_ratios(const std::string& text, std::uint64_t seed) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    if (parts.size() != 3)
        throw Error("--ratios needs three comma-separated fractions, got '" + text + "'");
    SplitSpec spec{Fraction::parse(parts[0]), Fraction::parse(parts[1]), Fraction::parse(parts[2]),
                   seed};
    spec.validate();
    return spec;
}

int cmd_split(const SplitArgs& a, const GlobalOpts& g) {
    auto tm = load_tsv(a.in, g);
    auto spec = parse_ratios(a.ratios, a.seed);
    auto parts = split_corpus(tm, spec, a.require_nonempty);

    auto emit = [&](const TranslationMemory& part, const std::string& name) {
        fs::path out = a.out_prefix + name + ".tsv";
        atomic_write_file(out, [&](std::ostream& os) { write_bitext_tsv(os, part); });
        std::cerr << name << ": " << part.size() << " units -> " << out.string() << "\n";
    };
    emit(parts.train, "train");
    emit(parts.dev, "dev");
    emit(parts.test, "test");
    echo_config("split", with_globals({{"in", a.in},
                                       {"ratios", a.ratios},
                                       {"seed", a.seed},
                                       {"out_prefix", a.out_prefix}},
                                      g));
    return 0;
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

struct IndexArgs {
    std::string in, out;
    std::string side = "target";
    std::uint32_t ngram = 1;
    double length_slack = 0.0;
};

int cmd_index(const IndexArgs& a, const GlobalOpts& g) {
    auto tm = load_tsv(a.in, g);
    auto idx = TmIndex::build(tm, side_from_name(a.side), {a.ngram, a.length_slack});
    atomic_write_file(
        a.out, [&](std::ostream& os) { idx.save(os); }, true);
    std::cerr << "indexed " << tm.size() << " units (" << idx.postings().size() << " keys) -> "
              << a.out << "\n";
    echo_config("index", with_globals({{"in", a.in},
                                       {"out", a.out},
                                       {"side", a.side},
                                       {"ngram", a.ngram},
                                       {"length_slack", a.length_slack}},
                                      g));
    return 0;
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractArgs {
    std::string tm, index, test, out;
    double min_fms = 60.0;
    bool exclude_exact = true;
};

int cmd_extract(const ExtractArgs& a, const GlobalOpts& g) {
    if (a.min_fms < 0.0 || a.min_fms > 100.0) throw Error("--min-fms must lie in [0,100]");
    auto tm = load_tsv(a.tm, g);
    auto idx = load_index(a.index);
    if (idx.memory_fingerprint() != tm.fingerprint())
        throw Error("index snapshot was built from a different memory than " + a.tm +
                    " (fingerprint mismatch; rebuild with `tmfill index`)");
    auto test = load_tsv(a.test, g);

    auto ds = build_hole_dataset(test, idx, tm, a.min_fms, a.exclude_exact, g.jobs);
    ds.config.update(with_globals({{"command", "extract"},
                                   {"tm", a.tm},
                                   {"index", a.index},
                                   {"test", a.test}},
                                  g),
                     true);
    if (ds.holes.empty()) std::cerr << "warning: extracted zero holes\n";

    atomic_write_file(a.out, [&](std::ostream& os) { write_hole_dataset(os, ds); });
    std::cerr << "extracted " << ds.holes.size() << " holes -> " << a.out << "\n";
    echo_config("extract", ds.config);
    return 0;
}

// ---------------------------------------------------------------------------
// train-cbow
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string in, out;
    std::string side = "target";
    CbowHyperparams hyper;
    std::uint64_t min_count = 1;
};

int cmd_train_cbow(const TrainArgs& a, const GlobalOpts& g) {
    auto tm = load_tsv(a.in, g);
    auto sentences = folded_side(tm, side_from_name(a.side));
    auto vocab = Vocab::build(sentences, a.min_count);
    TrainStats stats;
    auto model = train_cbow(sentences, vocab, a.hyper, &stats);
    atomic_write_file(
        a.out, [&](std::ostream& os) { model.save(os); }, true);
    std::cerr << "trained cbow: V=" << vocab.size() << " D=" << a.hyper.dims << " epochs="
              << a.hyper.epochs << " -> " << a.out << "\n";
    for (std::size_t e = 0; e < stats.epoch_mean_loss.size(); ++e)
        std::cerr << "  epoch " << e << " mean loss " << stats.epoch_mean_loss[e] << "\n";
    echo_config("train-cbow", with_globals({{"in", a.in},
                                            {"out", a.out},
                                            {"side", a.side},
                                            {"dims", a.hyper.dims},
                                            {"window", a.hyper.window},
                                            {"epochs", a.hyper.epochs},
                                            {"negatives", a.hyper.negatives},
                                            {"learning_rate", a.hyper.learning_rate},
                                            {"subsample", a.hyper.subsample},
                                            {"min_count", a.min_count},
                                            {"seed", a.hyper.seed}},
                                           g));
    return 0;
}

// ---------------------------------------------------------------------------
// predict / eval
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string dataset;
    std::string predictor; // unigram|trigram|cbow|external
    std::string corpus;    // unigram/trigram source text
    std::string side;      // defaults to the dataset's side
    std::string model;     // cbow
    std::string endpoint;  // external config json
    std::size_t k = 1;
    std::string out;       // raw dump (predict) or report json (eval)
    std::string raw;       // eval: rescore an existing dump instead
};

std::unique_ptr<Predictor> make_predictor(const PredictArgs& a, const HoleDataset& ds,
                                          const GlobalOpts& g) {
    std::string side_name = !a.side.empty()
                                ? a.side
                                : ds.config.value("side", std::string("target"));
    if (a.predictor == "unigram" || a.predictor == "trigram") {
        if (a.corpus.empty()) throw Error("--corpus is required for the " + a.predictor + " predictor");
        auto tm = load_tsv(a.corpus, g);
        auto sentences = folded_side(tm, side_from_name(side_name));
        if (a.predictor == "unigram") return std::make_unique<UnigramPredictor>(sentences);
        return std::make_unique<TrigramPredictor>(build_trigram_table(sentences));
    }
    if (a.predictor == "cbow") {
        if (a.model.empty()) throw Error("--model is required for the cbow predictor");
        std::ifstream is(a.model, std::ios::binary);
        if (!is) throw Error("cannot open " + a.model);
        return std::make_unique<CbowPredictor>(EmbeddingModel::load(is));
    }
    if (a.predictor == "external") {
        if (a.endpoint.empty()) throw Error("--endpoint is required for the external predictor");
        return std::make_unique<ExternalPredictor>(ExternalConfig::load_file(a.endpoint),
                                                   g.tokenizer());
    }
    throw Error("unknown predictor '" + a.predictor + "' (unigram|trigram|cbow|external)");
}

void print_report_summary(const EvalReport& report) {
    std::cout << "predictor: " << report.predictor << "\n";
    std::cout << "band      n     accuracy  mean_char  empty  flagged  errors\n";
    auto row = [](const char* label, const BandStats& s) {
        std::printf("%-8s %5zu %9.2f %10.4f %6zu %8zu %7zu\n", label, s.n, s.accuracy(),
                    s.mean_char(), s.empty, s.flagged, s.errors);
    };
    for (int b = 0; b < 4; ++b) row(kBandLabels[b], report.bands[b]);
    row("overall", report.overall);
}

int cmd_predict(const PredictArgs& a, const GlobalOpts& g, bool fused_eval) {
    EvalReport report;
    if (fused_eval && !a.raw.empty()) {
        std::ifstream is(a.raw);
        if (!is) throw Error("cannot open " + a.raw);
        report = rescore_raw_dump(is);
    } else {
        auto ds = load_dataset(a.dataset);
        auto predictor = make_predictor(a, ds, g);
        // external predictors parallelize internally; fan out only built-ins
        bool fan_out = a.predictor != "external";
        if (fused_eval) {
            report = evaluate(ds, *predictor, a.k, g.jobs, nullptr, fan_out);
        } else {
            std::ostringstream raw;
            report = evaluate(ds, *predictor, a.k, g.jobs, &raw, fan_out);
            atomic_write_file(a.out, [&](std::ostream& os) { os << raw.str(); });
            std::cerr << "predicted " << ds.holes.size() << " holes -> " << a.out << "\n";
        }
    }
    if (fused_eval) {
        atomic_write_file(a.out,
                          [&](std::ostream& os) { os << report_to_json(report).dump(2) << "\n"; });
        print_report_summary(report);
        std::cerr << "report -> " << a.out << "\n";
    }
    echo_config(fused_eval ? "eval" : "predict", with_globals({{"dataset", a.dataset},
                                                               {"predictor", a.predictor},
                                                               {"k", a.k},
                                                               {"out", a.out}},
                                                              g));
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> in;
    std::string format = "markdown";
    std::string out; // empty -> stdout
};

int cmd_report(const ReportArgs& a) {
    std::vector<EvalReport> reports;
    for (const auto& path : a.in) {
        std::ifstream is(path);
        if (!is) throw Error("cannot open " + path);
        json j = json::parse(is, nullptr, false);
        if (j.is_discarded()) throw Error(path + " is not valid JSON");
        reports.push_back(report_from_json(j));
    }
    auto text = render_report(reports, report_format_from_name(a.format));
    if (a.out.empty()) {
        std::cout << text;
    } else {
        atomic_write_file(a.out, [&](std::ostream& os) { os << text; });
        std::cerr << "report -> " << a.out << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"translation-memory fuzzy matching and anchored-word repair"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "read options from an INI file");

    GlobalOpts g;
    add_global_options(app, g);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "parse TMX or TSV into canonical TSV");
    c_ingest->add_option("--in", ingest.in, "input file")->required();
    c_ingest->add_option("--out", ingest.out, "output TSV")->required();
    c_ingest->add_option("--format", ingest.format, "tmx|tsv|auto")->capture_default_str();

    SplitArgs split;
    auto* c_split = app.add_subcommand("split", "deterministic train/dev/test split");
    c_split->add_option("--in", split.in, "input TSV")->required();
    c_split->add_option("--ratios", split.ratios, "train,dev,test fractions")
        ->capture_default_str();
    c_split->add_option("--seed", split.seed, "shuffle seed")->capture_default_str();
    c_split->add_option("--out-prefix", split.out_prefix, "prefix for train/dev/test.tsv")
        ->required();
    c_split->add_flag("--require-nonempty", split.require_nonempty,
                      "fail if any split would be empty");

    IndexArgs index;
    auto* c_index = app.add_subcommand("index", "build and snapshot a fuzzy-match index");
    c_index->add_option("--in", index.in, "memory TSV")->required();
    c_index->add_option("--out", index.out, "index snapshot path")->required();
    c_index->add_option("--side", index.side, "indexed side: source|target")
        ->capture_default_str();
    c_index->add_option("--ngram", index.ngram, "posting key n-gram order")
        ->capture_default_str();
    c_index->add_option("--length-slack", index.length_slack, "extra length-filter tolerance")
        ->capture_default_str();

    ExtractArgs extract;
    auto* c_extract = app.add_subcommand("extract", "build the anchored-hole dataset");
    c_extract->add_option("--tm", extract.tm, "memory TSV the index was built from")->required();
    c_extract->add_option("--index", extract.index, "index snapshot")->required();
    c_extract->add_option("--test", extract.test, "test split TSV")->required();
    c_extract->add_option("--min-fms", extract.min_fms, "minimum fuzzy-match score")
        ->capture_default_str();
    c_extract->add_flag("--exclude-exact,!--include-exact", extract.exclude_exact,
                        "skip FMS-100 matches (default on)");
    c_extract->add_option("--out", extract.out, "output hole dataset")->required();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train-cbow", "train CBOW embeddings from scratch");
    c_train->add_option("--in", train.in, "corpus TSV")->required();
    c_train->add_option("--out", train.out, "model output path")->required();
    c_train->add_option("--side", train.side, "trained side: source|target")
        ->capture_default_str();
    c_train->add_option("--dims", train.hyper.dims, "embedding width")->capture_default_str();
    c_train->add_option("--window", train.hyper.window, "context radius")->capture_default_str();
    c_train->add_option("--epochs", train.hyper.epochs, "training epochs")->capture_default_str();
    c_train->add_option("--negatives", train.hyper.negatives, "negative samples per step")
        ->capture_default_str();
    c_train->add_option("--lr", train.hyper.learning_rate, "initial learning rate")
        ->capture_default_str();
    c_train->add_option("--subsample", train.hyper.subsample,
                        "frequent-word subsampling threshold (0 = off)")
        ->capture_default_str();
    c_train->add_option("--min-count", train.min_count, "vocabulary frequency cutoff")
        ->capture_default_str();
    c_train->add_option("--seed", train.hyper.seed, "init/negative-sampling seed")
        ->capture_default_str();

    PredictArgs predict;
    auto add_predictor_opts = [&](CLI::App* cmd, bool fused) {
        cmd->add_option("--dataset", predict.dataset, "hole dataset");
        cmd->add_option("--predictor", predict.predictor,
                        "unigram|trigram|cbow|external");
        cmd->add_option("--corpus", predict.corpus, "corpus TSV for unigram/trigram");
        cmd->add_option("--side", predict.side, "corpus side (defaults to dataset side)");
        cmd->add_option("--model", predict.model, "cbow model file");
        cmd->add_option("--endpoint", predict.endpoint, "external endpoint config JSON");
        cmd->add_option("--k", predict.k, "candidates per hole")->capture_default_str();
        cmd->add_option("--out", predict.out, fused ? "report JSON output" : "raw dump output")
            ->required();
        if (fused) cmd->add_option("--raw", predict.raw, "rescore this raw dump instead");
    };
    auto* c_predict = app.add_subcommand("predict", "answer a hole dataset with one predictor");
    add_predictor_opts(c_predict, false);
    auto* c_eval = app.add_subcommand("eval", "score predictions into a per-band report");
    add_predictor_opts(c_eval, true);

    ReportArgs report;
    auto* c_report = app.add_subcommand("report", "render report JSON as csv/markdown/plot-data");
    c_report->add_option("--in", report.in, "report JSON file(s)")->required();
    c_report->add_option("--format", report.format, "csv|markdown|plot-data")
        ->capture_default_str();
    c_report->add_option("--out", report.out, "output path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_ingest->parsed()) return cmd_ingest(ingest, g);
        if (c_split->parsed()) return cmd_split(split, g);
        if (c_index->parsed()) return cmd_index(index, g);
        if (c_extract->parsed()) return cmd_extract(extract, g);
        if (c_train->parsed()) return cmd_train_cbow(train, g);
        if (c_predict->parsed()) return cmd_predict(predict, g, false);
        if (c_eval->parsed()) return cmd_predict(predict, g, true);
        if (c_report->parsed()) return cmd_report(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
